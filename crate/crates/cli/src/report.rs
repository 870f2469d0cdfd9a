//! Versioned JSON reports.

use std::time::Instant;

use conseq::logic::{substitution_pairs, Presentation, Refutation};
use conseq::natext::{derivation_presentation, ExtensionProblem};
use conseq::{Verdict, Witness};
use serde::Serialize;
use serde_json::{json, Value};

pub const SCHEMA: &str = "conseq-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    Unknown,
    Error,
}

impl Status {
    pub fn exit_code(self, strict: bool) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Error => 2,
            Status::Unknown if strict => 3,
            Status::Unknown => 0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: String,
    pub status: Status,
    pub elapsed_ms: u128,
    pub result: Value,
}

impl Report {
    pub fn new(command: &str, status: Status, started: Instant, result: Value) -> Self {
        Report {
            schema: SCHEMA,
            command: command.to_string(),
            status,
            elapsed_ms: started.elapsed().as_millis(),
            result,
        }
    }

    pub fn error(command: &str, started: Instant, message: String) -> Self {
        Report::new(command, Status::Error, started, json!({ "error": message }))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// The verdict as a status: a definite answer passes, a bound hit is
/// unknown.
pub fn verdict_status(v: &Verdict) -> Status {
    match v {
        Verdict::Unknown(_) => Status::Unknown,
        _ => Status::Pass,
    }
}

pub fn verdict_json(l: &Presentation, problem: Option<&ExtensionProblem>, v: &Verdict) -> Value {
    match v {
        Verdict::Yes(w) => json!({ "answer": "yes", "witness": witness_json(l, problem, w) }),
        Verdict::No(Refutation::Exhaustive) => json!({ "answer": "no", "refutation": { "kind": "exhaustive" } }),
        Verdict::No(Refutation::CounterSubstitution(s)) => json!({
            "answer": "no",
            "refutation": { "kind": "counter-substitution", "substitution": substitution_pairs(s, l.sig(), l.vars()) },
        }),
        Verdict::Unknown(hit) => json!({ "answer": "unknown", "bound": hit, "reason": hit.to_string() }),
    }
}

fn witness_json(l: &Presentation, problem: Option<&ExtensionProblem>, w: &Witness) -> Value {
    let derivation = || {
        let (pres, d) = match problem {
            Some(p) => derivation_presentation(p, w)?,
            None => match w {
                Witness::Derivation(d) => (l.clone(), d.clone()),
                _ => return None,
            },
        };
        Some(serde_json::to_value(d.render(&pres)).expect("derivations serialize"))
    };
    let list = |fs: &[conseq::Formula], pres: &Presentation| fs.iter().map(|f| pres.show(f)).collect::<Vec<_>>();
    let base = problem.map_or(l, |p| p.base());
    match w {
        Witness::Derivation(_) => json!({ "kind": "derivation", "derivation": derivation() }),
        Witness::SubPremises { premises, inner } => json!({
            "kind": "sub-premises",
            "premises": list(premises, l),
            "inner": witness_json(l, problem, inner),
        }),
        Witness::Permutation { pi, premises, .. } => json!({
            "kind": "permutation",
            "permutation": substitution_pairs(pi, l.sig(), l.vars()),
            "base_premises": list(premises, base),
            "derivation": derivation(),
        }),
        Witness::Instance { v, premises, goal, .. } => json!({
            "kind": "instance",
            "substitution": substitution_pairs(v, l.sig(), l.vars()),
            "base_premises": list(premises, base),
            "base_goal": base.show(goal),
            "derivation": derivation(),
        }),
        Witness::AllSubstitutions { checked } => json!({ "kind": "all-substitutions", "checked": checked }),
        Witness::Table => json!({ "kind": "table" }),
    }
}
