use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use conseq::closure::{bits, Mask};
use conseq::filters::{
    self, check_galois, check_naturality, compare_extension_filters, filters_equal_theories_with, generated_filter,
    natext_theoryfamily_roundtrip, parse_structures, FilterLattice, Instances,
};
use conseq::logic::{derive as derive_query, kary_part_of_logic, Universe};
use conseq::natext::{
    self, chain_report, enumerate_from_tables, format_witness, is_natural_extension, parse_witness,
    search_counterexample, ExactTables, ExtensionKind, ExtensionProblem, ExtensionRelation, LatticeView, Property,
    SearchConfig,
};
use conseq::term::{FiniteStructure, VarSet};
use conseq::{Arity, Consequence, FiniteRelation, Formula, Presentation};
use serde::Serialize;
use serde_json::{json, Value};

use crate::report::{verdict_json, verdict_status, Report, Status};
use crate::{Method, Suite};

/// Natural extensions keep the base logic's finite arity profile, which
/// stands in for cardinality.
const ARITY_BASIS: &str = "finite arity profile (analog of cardinality)";

fn load(path: &Path) -> Result<Presentation> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    conseq::parse_presentation(&text).with_context(|| format!("parsing {}", path.display()))
}

fn with_bounds(l: Presentation, bounds: Option<&str>) -> Result<Presentation> {
    let Some(spec) = bounds else { return Ok(l) };
    let mut b = l.bounds();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("expected key=value in --bounds, got `{part}`"))?;
        let value: usize = value.parse().with_context(|| format!("bound `{key}`"))?;
        match key {
            "depth" => b.max_depth = value,
            "iters" => b.max_iterations = value,
            _ => bail!("unknown bound `{key}` (expected depth or iters)"),
        }
    }
    Ok(l.with_bounds(b))
}

fn formulas(l: &Presentation, text: &str) -> Result<BTreeSet<Formula>> {
    if text.trim().is_empty() {
        return Ok(BTreeSet::new());
    }
    Ok(l.parse_list(text)?.into_iter().collect())
}

fn problem(l: Presentation, to_vars: Option<&str>) -> Result<ExtensionProblem> {
    Ok(match to_vars {
        Some(names) => {
            let names: Vec<&str> = names
                .split([',', ' '])
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            ExtensionProblem::new(l, VarSet::new(names)?)?
        }
        None => ExtensionProblem::with_fresh_vars(l, 1)?,
    })
}

fn tables(p: &ExtensionProblem) -> Result<ExactTables> {
    if !p.base().is_constants_only() {
        bail!("exhaustive tables need a constants-only signature");
    }
    Ok(ExactTables::compute(p)?)
}

fn kind(method: Method, plus_arity: Arity) -> ExtensionKind {
    match method {
        Method::Ls => ExtensionKind::LosSuszko,
        Method::Ss => ExtensionKind::ShoesmithSmiley,
        Method::Minus => ExtensionKind::Minus,
        Method::Plus => ExtensionKind::Plus(plus_arity),
    }
}

/// The base logic's arity profile when it can be tabulated.
fn base_arity(p: &ExtensionProblem) -> Arity {
    if p.base().is_constants_only() {
        if let Ok(t) = ExactTables::compute(p) {
            return Arity::Finite(t.n);
        }
    }
    Arity::Omega
}

pub fn derive(path: &Path, premises: &str, goal: &str, bounds: Option<&str>, started: Instant) -> Result<Report> {
    let l = with_bounds(load(path)?, bounds)?;
    let gamma = formulas(&l, premises)?;
    let phi = l.parse(goal)?;
    let v = derive_query(&l, &gamma, &phi);
    let result = json!({
        "premises": gamma.iter().map(|f| l.show(f)).collect::<Vec<_>>(),
        "goal": l.show(&phi),
        "bounds": l.bounds(),
        "exact": l.is_exact(),
        "verdict": verdict_json(&l, None, &v),
    });
    Ok(Report::new("derive", verdict_status(&v), started, result))
}

#[allow(clippy::too_many_arguments)]
pub fn extend(
    path: &Path,
    to_vars: Option<&str>,
    method: Method,
    arity: Option<Arity>,
    premises: &str,
    goal: &str,
    bounds: Option<&str>,
    started: Instant,
) -> Result<Report> {
    let p = problem(with_bounds(load(path)?, bounds)?, to_vars)?;
    let l = p.extended().clone();
    let gamma = formulas(&l, premises)?;
    let phi = l.parse(goal)?;
    let (kind, arity) = match method {
        Method::Plus => {
            let n = arity.unwrap_or_else(|| base_arity(&p));
            (kind(method, n), n)
        }
        _ => (kind(method, Arity::Omega), arity.unwrap_or(Arity::Omega)),
    };
    let rel = ExtensionRelation {
        kind,
        problem: Arc::new(p.clone()),
    };
    let v = match (method, arity) {
        (Method::Plus, _) | (_, Arity::Omega) => rel.query(&gamma, &phi),
        _ => kary_part_of_logic(rel, arity).query(&gamma, &phi),
    };
    let result = json!({
        "vars": p.y().names(),
        "method": kind.to_string(),
        "arity": arity.to_string(),
        "arity_basis": ARITY_BASIS,
        "exact": p.is_exact(),
        "premises": gamma.iter().map(|f| l.show(f)).collect::<Vec<_>>(),
        "goal": l.show(&phi),
        "verdict": verdict_json(&l, Some(&p), &v),
    });
    Ok(Report::new("extend", verdict_status(&v), started, result))
}

fn pair_json(u: &Universe, w: Option<conseq::logic::PairWitness>) -> Value {
    match w {
        Some(w) => json!(natext::PairView::of(u, w)),
        None => Value::Null,
    }
}

pub fn compare(path: &Path, to_vars: Option<&str>, left: Method, right: Method, started: Instant) -> Result<Report> {
    let p = problem(load(path)?, to_vars)?;
    let t = tables(&p)?;
    let n = Arity::Finite(t.n);
    let (lk, rk) = (kind(left, n), kind(right, n));
    let (a, b) = (t.relation(lk), t.relation(rk));
    let ab = a.subset_witness(&b)?;
    let ba = b.subset_witness(&a)?;
    let relation = match (ab.is_none(), ba.is_none()) {
        (true, true) => "equal",
        (true, false) => "left-below",
        (false, true) => "right-below",
        (false, false) => "incomparable",
    };
    let result = json!({
        "vars": p.y().names(),
        "left": lk.to_string(),
        "right": rk.to_string(),
        "relation": relation,
        "arity_basis": ARITY_BASIS,
        "left_not_in_right": pair_json(&t.uy, ab),
        "right_not_in_left": pair_json(&t.uy, ba),
    });
    Ok(Report::new("compare", Status::Pass, started, result))
}

#[derive(Serialize)]
struct Line {
    suite: &'static str,
    name: String,
    holds: bool,
    witness: Value,
}

fn masks(u: &Universe, m: Option<Mask>) -> Value {
    m.map_or(Value::Null, |m| json!(u.names(m)))
}

fn naturality_line(name: &str, u: &Universe, base: &FiniteRelation, rel: &FiniteRelation) -> Result<Line> {
    let r = is_natural_extension(base, rel)?;
    let witness = if r.holds() {
        Value::Null
    } else {
        json!({
            "conservativity": r.conservative.map(|w| json!({ "pair": natext::PairView::of(u, w.pair), "failure": w.failure })),
            "base_arity": r.base_arity,
            "arity": r.arity,
            "inflationary": masks(u, r.closure.inflationary),
            "monotone": r.closure.monotone.map(|(s, t)| json!([u.names(s), u.names(t)])),
            "idempotent": masks(u, r.closure.idempotent),
            "structurality": r.structural.as_ref().map(|w| json!({
                "pair": natext::PairView::of(u, w.pair),
                "substitution": conseq::logic::substitution_pairs(&w.sigma, u.sig(), u.vars()),
            })),
        })
    };
    Ok(Line {
        suite: "closure",
        name: name.to_string(),
        holds: r.holds(),
        witness,
    })
}

pub fn check(path: &Path, suite: Suite, to_vars: Option<&str>, perturb: bool, started: Instant) -> Result<Report> {
    let p = problem(load(path)?, to_vars)?;
    let t = tables(&p)?;
    let run = |s: Suite| suite == Suite::All || suite == s;
    let mut lines = Vec::new();
    if run(Suite::Chain) {
        for c in chain_report(&t).checks {
            lines.push(Line {
                suite: "chain",
                name: c.name,
                holds: c.holds,
                witness: json!(c.witness),
            });
        }
    }
    if run(Suite::Closure) {
        let r = t.base.closure_report();
        lines.push(Line {
            suite: "closure",
            name: "base is a closure operator".into(),
            holds: r.is_closure(),
            witness: masks(&t.ux, r.inflationary.or(r.idempotent).or(r.monotone.map(|(s, _)| s))),
        });
        lines.push(naturality_line(
            "minus is a natural extension",
            &t.uy,
            &t.base,
            &t.minus,
        )?);
        lines.push(naturality_line("plus is a natural extension", &t.uy, &t.base, &t.plus)?);
    }
    if run(Suite::Filters) {
        let r = filters_equal_theories_with(p.base(), |ts| {
            if perturb {
                ts.pop();
            }
        })?;
        lines.push(Line {
            suite: "filters",
            name: "filters on Fm(X) = theories".into(),
            holds: r.witness.is_none(),
            witness: json!(r.witness),
        });
        let fm = FiniteStructure::formula_algebra(p.sig(), p.x())?;
        let g = check_galois(&Instances::of_presentation(p.base(), &fm)?, fm.name())?;
        let u = &t.ux;
        lines.push(Line {
            suite: "filters",
            name: "filter generation is a closure adjoint".into(),
            holds: g.holds(),
            witness: if g.holds() {
                Value::Null
            } else {
                json!({
                    "adjunction": g.adjunction.map(|(s, f)| json!([u.names(s), u.names(f)])),
                    "routes": masks(u, g.routes),
                    "fgf": masks(u, g.fgf),
                    "gfg": masks(u, g.gfg),
                })
            },
        });
    }
    if run(Suite::Roundtrip) {
        for (name, rel) in [("minus", &t.minus), ("plus", &t.plus)] {
            let r = natext_theoryfamily_roundtrip(rel, p.x().len())?;
            let bad: Vec<_> = r
                .levels
                .iter()
                .filter(|l| !(l.filters_are_theories && l.induced_matches))
                .collect();
            lines.push(Line {
                suite: "roundtrip",
                name: format!("{name} -> theory family -> logic is the identity"),
                holds: r.identity(),
                witness: if bad.is_empty() { Value::Null } else { json!(bad) },
            });
        }
    }
    let status = if lines.iter().all(|l| l.holds) {
        Status::Pass
    } else {
        Status::Fail
    };
    let result = json!({
        "universe": (0..t.uy.len()).map(|i| t.uy.name(i)).collect::<Vec<_>>(),
        "base_arity": t.n,
        "arity_basis": ARITY_BASIS,
        "checks": lines,
    });
    Ok(Report::new("check", status, started, result))
}

fn elements(s: &FiniteStructure, text: &str) -> Result<Mask> {
    text.split([',', ' '])
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .try_fold(0, |m, e| {
            let i = s
                .element(e)
                .ok_or_else(|| anyhow!("`{e}` is not an element of `{}`", s.name()))?;
            Ok(m | 1 << i)
        })
}

fn names(s: &FiniteStructure, m: Mask) -> Vec<String> {
    bits(m).map(|i| s.carrier()[i].clone()).collect()
}

#[allow(clippy::too_many_arguments)]
pub fn filters(
    path: &Path,
    structures: &Path,
    only: Option<&str>,
    set: Option<&str>,
    generate: Option<&str>,
    extension: Option<Method>,
    to_vars: Option<&str>,
    started: Instant,
) -> Result<Report> {
    let l = load(path)?;
    let text = fs::read_to_string(structures).with_context(|| format!("reading {}", structures.display()))?;
    let file = parse_structures(&text, l.sig()).with_context(|| format!("parsing {}", structures.display()))?;
    let chosen: Vec<&FiniteStructure> = match only {
        Some(name) => vec![file.structure(name)?],
        None => file.structures.iter().collect(),
    };
    let mut status = Status::Pass;
    let mut out = Vec::new();
    for s in &chosen {
        let inst = Instances::of_presentation(&l, s)?;
        let lattice = FilterLattice::enumerate(&inst, s.name())?;
        let galois = check_galois(&inst, s.name())?;
        if !galois.holds() {
            status = Status::Fail;
        }
        out.push(json!({
            "structure": s.name(),
            "filters": lattice.filters.iter().map(|&f| names(s, f)).collect::<Vec<_>>(),
            "galois": galois.holds(),
        }));
    }
    let mut homs = Vec::new();
    for h in &file.homs {
        let (a, b) = (&file.structures[h.from], &file.structures[h.to]);
        if only.is_some_and(|n| n != a.name() && n != b.name()) {
            continue;
        }
        let r = check_naturality(
            l.sig(),
            &Instances::of_presentation(&l, a)?,
            a,
            &Instances::of_presentation(&l, b)?,
            b,
            h,
        )?;
        if r.witness.is_some() {
            status = Status::Fail;
        }
        homs.push(json!({
            "hom": h.name,
            "filters_checked": r.filters_checked,
            "witness": r.witness.map(|(f, pre)| json!({ "filter": names(b, f), "preimage": names(a, pre) })),
        }));
    }
    let target = || -> Result<&FiniteStructure> {
        match chosen.as_slice() {
            [s] => Ok(*s),
            _ => bail!("--set and --generate need --structure when the file has several structures"),
        }
    };
    let mut result = json!({ "structures": out, "homomorphisms": homs });
    if let Some(set) = set {
        let s = target()?;
        let m = elements(s, set)?;
        let w = filters::is_filter(&l, s, m)?;
        if w.is_some() {
            status = Status::Fail;
        }
        result["set"] = json!({
            "elements": names(s, m),
            "is_filter": w.is_none(),
            "witness": w.as_ref().map(|w| json!({ "premises": w.premises, "conclusion": w.conclusion, "source": w.source })),
        });
    }
    if let Some(gen) = generate {
        let s = target()?;
        let m = elements(s, gen)?;
        result["generated"] = json!({ "from": names(s, m), "filter": names(s, generated_filter(&l, s, m)?) });
    }
    if let Some(method) = extension {
        let p = problem(l.clone(), to_vars)?;
        let t = tables(&p)?;
        let kind = kind(method, Arity::Finite(t.n));
        let ext = t.relation(kind);
        let compared = chosen
            .iter()
            .map(|s| compare_extension_filters(&t.base, &ext, s))
            .collect::<Result<Vec<_>, _>>()?;
        result["extension_filters"] = json!({
            "extension": kind.to_string(),
            "vars": p.y().names(),
            "arity_basis": ARITY_BASIS,
            "structures": compared,
        });
    }
    Ok(Report::new("filters", status, started, result))
}

pub fn natext_lattice(path: &Path, to_vars: Option<&str>, started: Instant) -> Result<(Report, String)> {
    let p = problem(load(path)?, to_vars)?;
    let t = tables(&p)?;
    let lattice = enumerate_from_tables(&t)?;
    let defects = lattice.defects();
    let status = if !lattice.complete {
        Status::Unknown
    } else if defects.is_empty() {
        Status::Pass
    } else {
        Status::Fail
    };
    let result = json!({
        "vars": p.y().names(),
        "size": lattice.len(),
        "arity_basis": ARITY_BASIS,
        "defects": defects,
        "lattice": lattice.view(),
    });
    Ok((Report::new("natext-lattice", status, started, result), lattice.to_dot()))
}

pub fn verify_lattice(path: &Path, started: Instant) -> Result<Report> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let view = value.pointer("/result/lattice").cloned().unwrap_or(value);
    let view: LatticeView = serde_json::from_value(view).context("not a lattice report")?;
    let (status, error) = match view.verify() {
        Ok(()) => (Status::Pass, None),
        Err(e) => (Status::Fail, Some(e)),
    };
    let result = json!({ "size": view.members.len(), "verified": error.is_none(), "mismatch": error });
    Ok(Report::new("natext-lattice", status, started, result))
}

pub fn search(property: Property, seed: u64, budget: usize, out: Option<&Path>, started: Instant) -> Result<Report> {
    let mut cfg = SearchConfig::for_property(property, seed);
    cfg.budget = budget;
    let r = search_counterexample(property, &cfg);
    let text = r.witness.as_ref().map(format_witness);
    if let (Some(path), Some(text)) = (out, &text) {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let status = if text.is_some() { Status::Pass } else { Status::Unknown };
    let result = json!({
        "property": property.name(),
        "seed": seed,
        "budget": budget,
        "candidates": r.candidates,
        "found": text.is_some(),
        "candidate": r.witness.as_ref().map(|w| w.candidate),
        "witness": text,
        "witness_file": out.filter(|_| r.witness.is_some()).map(|p| p.display().to_string()),
    });
    Ok(Report::new("search", status, started, result))
}

pub fn replay(path: &Path, started: Instant) -> Result<Report> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let w = parse_witness(&text).with_context(|| format!("parsing {}", path.display()))?;
    let steps = natext::replay(&w);
    let status = if steps.iter().all(|s| s.ok) {
        Status::Pass
    } else {
        Status::Fail
    };
    let result = json!({ "property": w.claim.property().name(), "steps": steps });
    Ok(Report::new("replay", status, started, result))
}
