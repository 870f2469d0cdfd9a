//! Fixtures shared by the benchmarks in `benches/`.

use conseq::logic::builtin;
use conseq::natext::ExtensionProblem;
use conseq::{parse_presentation, Presentation};

/// Constants-only presentations whose extension to one more variable has
/// at most 9 formulas.
pub const INSTANCES: &[(&str, &str)] = &[
    ("running", builtin::RUNNING_EXAMPLE),
    ("cut-gap", "sig a:0 b:0\nvars x\nrule x => a\nrule a => x\n"),
    ("two-vars", "sig a:0\nvars x1 x2\nrule x1, x2 => a\n"),
    ("singular", builtin::SINGULAR_ANALOG),
];

pub fn presentation(text: &str) -> Presentation {
    parse_presentation(text).expect("fixture parses")
}

pub fn problem(text: &str) -> ExtensionProblem {
    ExtensionProblem::with_fresh_vars(presentation(text), 1).expect("fixture extends")
}

/// A chain `c0 ⊢ c1 ⊢ … ⊢ c{len}` with a variable rule at the end, for
/// saturation depth.
pub fn chain_presentation(len: usize) -> Presentation {
    let consts: Vec<String> = (0..=len).map(|i| format!("c{i}:0")).collect();
    let mut text = format!("sig {} f:1\nvars x\n", consts.join(" "));
    for i in 0..len {
        text.push_str(&format!("rule c{i} => c{}\n", i + 1));
    }
    text.push_str(&format!("rule c{len}, x => f(x)\nbounds depth=2 iters={}\n", len + 8));
    presentation(&text)
}
