//! One line per acceptance criterion. Runs without the libtest harness so the
//! lines reach the output even when everything passes; exits non-zero if any
//! criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::ops::ControlFlow;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use conseq::closure::{self, enumerate_closure_operators, is_subset, join_general, meet, FamilySearch, Mask, Operator};
use conseq::filters::{
    check_galois, family_signature, filters_equal_theories, natext_theoryfamily_roundtrip, parse_structures,
    theory_family, Instances,
};
use conseq::logic::{builtin, derive, kary_part_of_logic, parse_presentation, FiniteRelation, Universe};
use conseq::natext::{
    check_chain, enumerate_natural_extensions, replay, search_counterexample, EnumerationMode, ExactTables,
    ExtensionProblem, Property, SearchConfig, DEFAULT_SEARCH_SEED,
};
use conseq::term::{FiniteStructure, Formula, Signature, VarSet};
use conseq::{Arity, Consequence};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(budget: Duration, start: Instant, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    check(t < budget, format!("{what} took {t:.2?}, budget {budget:?}"))
}

/// Constants-only instances; all but the singular one have `|Fm(Y)| <= 8`
/// for one fresh variable.
const SMALL: &[&str] = &[
    builtin::RUNNING_EXAMPLE,
    builtin::SINGULAR_ANALOG,
    "sig a:0 b:0\nvars x\nrule x => a\nrule a => x\n",
    "sig a:0 b:0\nvars x\nrule x, a => b\n",
    "sig a:0\nvars x1 x2\nrule x1, x2 => a\n",
    "sig a:0 b:0 c:0\nvars x\nrule a, b => c\nrule x => a\n",
];

fn problem(text: &str, extra: usize) -> ExtensionProblem {
    ExtensionProblem::with_fresh_vars(parse_presentation(text).unwrap(), extra).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let l = builtin::singular_analog();
    let set = |t: &str| -> BTreeSet<Formula> { l.parse_list(t).unwrap().into_iter().collect() };
    let f = |t: &str| l.parse(t).unwrap();
    let gamma = set("m11, m12, m21, m22");
    check(derive(&l, &gamma, &f("star")).is_yes(), "derive misses Γ ⊢ star")?;
    let k3 = kary_part_of_logic(l.clone(), Arity::Finite(3));
    check(k3.query(&gamma, &f("i1")).is_yes(), "Γ ⊬₃ i1")?;
    check(k3.query(&gamma, &f("i2")).is_yes(), "Γ ⊬₃ i2")?;
    check(k3.query(&set("i1, i2"), &f("star")).is_yes(), "{i1, i2} ⊬₃ star")?;
    check(k3.query(&gamma, &f("star")).is_no(), "Γ ⊢₃ star")?;
    let rel = conseq::GroundSystem::new(&l).unwrap().relation().unwrap();
    let u = rel.universe().clone();
    let w = rel
        .kary_part(Arity::Finite(3))
        .cut_witness()
        .ok_or("3-ary part reported idempotent")?;
    let shown = (u.render(w.premises), u.render(w.lemmas), u.name(w.goal));
    let want = (
        u.render(u.mask(&gamma).unwrap()),
        u.render(u.mask(&set("i1, i2")).unwrap()),
        "star".to_string(),
    );
    check(shown == want, format!("witness {shown:?}, expected {want:?}"))?;
    within(Duration::from_secs(1), start, "criterion")?;
    Ok(format!(
        "witness premises {} lemmas {} goal {}",
        shown.0, shown.1, shown.2
    ))
}

fn criterion_2() -> Outcome {
    let mut done = 0;
    for text in SMALL {
        let start = Instant::now();
        let p = problem(text, 1);
        if ExactTables::compute(&p).unwrap().uy.len() > 8 {
            continue;
        }
        let r = check_chain(&p).map_err(|e| e.to_string())?;
        if let Some(c) = r.checks.iter().find(|c| !c.holds) {
            return Err(format!(
                "{}: `{}` fails at {:?}",
                text.lines().next().unwrap(),
                c.name,
                c.witness
            ));
        }
        within(Duration::from_secs(30), start, "instance")?;
        done += 1;
    }
    check(done >= 3, format!("only {done} instances with |Fm(Y)| <= 8"))?;
    Ok(format!("{done} instances, 5 relations each, exhaustive"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut done = 0;
    for text in SMALL {
        let py = problem(text, 1);
        let pz = problem(text, 2);
        let ty = ExactTables::compute(&py).map_err(|e| e.to_string())?;
        let tz = ExactTables::compute(&pz).map_err(|e| e.to_string())?;
        let to_y = tz.minus.restrict(ty.uy.clone()).map_err(|e| e.to_string())?;
        check(to_y == ty.minus, format!("{text}: Z restricted to Y differs"))?;
        let to_x = tz.minus.restrict(tz.ux.clone()).map_err(|e| e.to_string())?;
        check(
            to_x == tz.base,
            format!("{text}: Z restricted to X differs from the base"),
        )?;
        done += 1;
    }
    within(Duration::from_secs(10), start, "criterion")?;
    Ok(format!("{done} chains X ⊆ Y ⊆ Z"))
}

const FILTER_INSTANCES: &[&str] = &[
    builtin::RUNNING_EXAMPLE,
    builtin::SINGULAR_ANALOG,
    "sig a:0 b:0\nvars x y\nrule x, y => a\nrule a => b\n",
    "sig c0:0 c1:0 c2:0 c3:0 c4:0 c5:0 c6:0 c7:0 c8:0 c9:0\nvars x y\n\
rule c0, c1 => c2\nrule x, c2 => y\nrule c3, c4, c5 => c6\nrule y => c9\nrule c9, c8 => c7\n",
];

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut sizes = Vec::new();
    for text in FILTER_INSTANCES {
        let l = parse_presentation(text).unwrap();
        let r = filters_equal_theories(&l).map_err(|e| e.to_string())?;
        check(r.universe.len() <= 12, "instance too large")?;
        check(
            r.witness.is_none(),
            format!("{}: {:?}", text.lines().next().unwrap(), r.witness),
        )?;
        sizes.push(format!("{}:{}", r.universe.len(), r.filters));
    }
    within(Duration::from_secs(30), start, "criterion")?;
    Ok(format!("|Fm|:filters = {}", sizes.join(" ")))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for text in FILTER_INSTANCES {
        let l = parse_presentation(text).unwrap();
        let fm = FiniteStructure::formula_algebra(l.sig(), l.vars()).unwrap();
        let r = check_galois(&Instances::of_presentation(&l, &fm).unwrap(), fm.name()).map_err(|e| e.to_string())?;
        check(r.holds(), format!("{}: {r:?}", text.lines().next().unwrap()))?;
        checked += 1;
    }
    let l = parse_presentation("sig f:1 a:0\nvars x y\nrule x, f(x) => a\nrule a, y => f(y)\n").unwrap();
    let file = parse_structures(
        "struct z4 carrier 0 1 2 3 ; f 0 -> 1 ; f 1 -> 2 ; f 2 -> 3 ; f 3 -> 0 ; a -> 0\n\
         struct z2 carrier 0 1 ; f 0 -> 1 ; f 1 -> 0 ; a -> 0\n",
        l.sig(),
    )
    .map_err(|e| e.to_string())?;
    for s in &file.structures {
        let r = check_galois(&Instances::of_presentation(&l, s).unwrap(), s.name()).map_err(|e| e.to_string())?;
        check(r.holds(), format!("{}: {r:?}", s.name()))?;
        checked += 1;
    }
    within(Duration::from_secs(10), start, "criterion")?;
    Ok(format!("{checked} structures"))
}

/// Lattice bounds by brute force: `down[i]` and `up[i]` are bitsets of the
/// operators below and above operator `i`.
struct Brute {
    index: HashMap<Vec<Mask>, usize>,
    down: Vec<Vec<u64>>,
    up: Vec<Vec<u64>>,
}

impl Brute {
    fn new(tables: &[Vec<Mask>]) -> Self {
        let k = tables.len();
        let words = k.div_ceil(64);
        let mut down = vec![vec![0u64; words]; k];
        let mut up = vec![vec![0u64; words]; k];
        for i in 0..k {
            for j in 0..k {
                if tables[j].iter().zip(&tables[i]).all(|(a, b)| is_subset(*a, *b)) {
                    down[i][j / 64] |= 1 << (j % 64);
                    up[j][i / 64] |= 1 << (i % 64);
                }
            }
        }
        let index = tables.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Brute { index, down, up }
    }

    fn extreme(set: &[u64], cone: &[Vec<u64>]) -> Option<usize> {
        let mut members = set
            .iter()
            .enumerate()
            .flat_map(|(w, &b)| closure::bits(b).map(move |i| w * 64 + i));
        members.find(|&m| cone[m] == set)
    }

    fn glb(&self, i: usize, j: usize) -> Option<usize> {
        let lower: Vec<u64> = self.down[i].iter().zip(&self.down[j]).map(|(a, b)| a & b).collect();
        Self::extreme(&lower, &self.down)
    }

    fn lub(&self, i: usize, j: usize) -> Option<usize> {
        let upper: Vec<u64> = self.up[i].iter().zip(&self.up[j]).map(|(a, b)| a & b).collect();
        Self::extreme(&upper, &self.up)
    }
}

fn lattice_oracle(len: usize, universe: Option<Arc<Universe>>) -> Result<usize, String> {
    let ops: Vec<Operator> = enumerate_closure_operators(len).map_err(|e| e.to_string())?;
    let tables: Vec<Vec<Mask>> = ops.iter().map(|c| c.tabulate().unwrap()).collect();
    let brute = Brute::new(&tables);
    let rels: Option<Vec<FiniteRelation>> = universe.map(|u| {
        tables
            .iter()
            .map(|t| FiniteRelation::new(u.clone(), t.clone()))
            .collect()
    });
    for i in 0..ops.len() {
        for j in i..ops.len() {
            let pair = [ops[i].clone(), ops[j].clone()];
            let glb = brute.glb(i, j).ok_or("no brute-force glb")?;
            let lub = brute.lub(i, j).ok_or("no brute-force lub")?;
            let m = meet(&pair, Arity::Omega)
                .map_err(|e| e.to_string())?
                .tabulate()
                .unwrap();
            check(
                brute.index.get(&m) == Some(&glb),
                format!("meet of {i} and {j} on {len} points"),
            )?;
            let s = join_general(&pair, Arity::Omega)
                .map_err(|e| e.to_string())?
                .tabulate()
                .unwrap();
            check(
                brute.index.get(&s) == Some(&lub),
                format!("join of {i} and {j} on {len} points"),
            )?;
            if let Some(rels) = &rels {
                let sup = conseq::natext::natext_sup(&[rels[i].clone(), rels[j].clone()], Arity::Omega)
                    .map_err(|e| e.to_string())?;
                check(
                    brute.index.get(sup.table()) == Some(&lub),
                    format!("sup of {i} and {j}"),
                )?;
            }
        }
    }
    Ok(ops.len())
}

fn criterion_6() -> Outcome {
    let sig = Signature::new([("a", 0)]).unwrap();
    let u3 = Arc::new(Universe::new(&sig, &VarSet::new(["x", "y"]).unwrap()).unwrap());
    let n3 = lattice_oracle(3, Some(u3))?;
    let start = Instant::now();
    let n4 = lattice_oracle(4, None)?;
    within(Duration::from_secs(60), start, "4-point carrier")?;
    Ok(format!("{n3} operators on 3 points, {n4} on 4 points, all pairs"))
}

fn criterion_7() -> Outcome {
    let mut found = Vec::new();
    for prop in [Property::SsCutFailure, Property::LsStructuralityFailure] {
        let start = Instant::now();
        let cfg = SearchConfig::for_property(prop, DEFAULT_SEARCH_SEED);
        let result = search_counterexample(prop, &cfg);
        let w = result
            .witness
            .ok_or_else(|| format!("{prop}: no witness in {} candidates", result.candidates))?;
        let steps = replay(&w);
        check(steps.iter().all(|s| s.ok), format!("{prop}: replay failed {steps:?}"))?;
        within(Duration::from_secs(120), start, prop.name())?;
        found.push(format!("{prop} within {} candidates", result.candidates));
    }
    Ok(found.join(", "))
}

/// Every instance whose extension lattice is enumerated exhaustively.
fn exhaustive_problems() -> Vec<(String, ExtensionProblem)> {
    SMALL
        .iter()
        .map(|t| (t.lines().next().unwrap().to_string(), problem(t, 1)))
        .filter(|(_, p)| ExactTables::compute(p).unwrap().uy.len() <= conseq::natext::EXHAUSTIVE_NATEXT_UNIVERSE)
        .collect()
}

fn criterion_8() -> Outcome {
    let mut sizes = Vec::new();
    for (name, p) in exhaustive_problems() {
        let start = Instant::now();
        let lattice = enumerate_natural_extensions(&p).map_err(|e| e.to_string())?;
        check(
            lattice.mode == EnumerationMode::Exhaustive && lattice.complete,
            format!("{name}: not exhaustive"),
        )?;
        let n = Arity::Finite(lattice.n);
        let t = ExactTables::compute(&p).unwrap();
        let bottom = lattice.bottom().ok_or_else(|| format!("{name}: no bottom"))?;
        let top = lattice.top().ok_or_else(|| format!("{name}: no top"))?;
        check(lattice.members[bottom] == t.minus, format!("{name}: bottom is not ⊢⁻"))?;
        check(lattice.members[top] == t.plus, format!("{name}: top is not ⊢⁺"))?;
        for a in &lattice.members {
            for b in &lattice.members {
                let sup = conseq::natext::natext_sup(&[a.clone(), b.clone()], n).map_err(|e| e.to_string())?;
                check(lattice.members.contains(&sup), format!("{name}: sup escapes the set"))?;
                let glb = meet(&[a.operator(), b.operator()], n).map_err(|e| e.to_string())?;
                let glb = FiniteRelation::from_operator(a.universe().clone(), &glb).map_err(|e| e.to_string())?;
                check(lattice.members.contains(&glb), format!("{name}: glb escapes the set"))?;
            }
        }
        check(lattice.defects().is_empty(), format!("{name}: {:?}", lattice.defects()))?;
        within(Duration::from_secs(60), start, &name)?;
        sizes.push(lattice.len().to_string());
    }
    Ok(format!("{} instances, lattice sizes {}", sizes.len(), sizes.join(" ")))
}

fn structural_operators(u: &Arc<Universe>) -> Vec<FiniteRelation> {
    let len = u.len();
    let spec = FamilySearch {
        len,
        required: vec![closure::full_mask(len)],
        allowed: None,
        preimage_maps: u.endomorphisms().into_iter().map(|(_, m)| m).collect(),
    };
    let mut out = Vec::new();
    closure::search_families(&spec, |members| {
        out.push(FiniteRelation::new(u.clone(), closure::family_table(len, members)));
        ControlFlow::Continue(())
    })
    .unwrap();
    out
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut levels = 0;
    let mut separated = 0;
    for (name, p) in exhaustive_problems() {
        let t = ExactTables::compute(&p).unwrap();
        let from = p.x().len();
        for rel in [&t.minus, &t.plus] {
            let r = natext_theoryfamily_roundtrip(rel, from).map_err(|e| e.to_string())?;
            check(r.identity(), format!("{name}: {r:?}"))?;
            levels += r.levels.len();
        }
        let lattice = enumerate_natural_extensions(&p).map_err(|e| e.to_string())?;
        let mut seen = BTreeSet::new();
        for (i, m) in lattice.members.iter().enumerate() {
            let fp = theory_family(m, from).map_err(|e| e.to_string())?;
            check(
                seen.insert(family_signature(&fp)),
                format!("{name}: member {i} shares a theory family"),
            )?;
        }
        // every structural closure operator on Fm(Y), not only the extensions
        let ops = structural_operators(&t.uy);
        let fams: BTreeSet<_> = ops
            .iter()
            .map(|r| theory_family(r, from).map(|fp| family_signature(&fp)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        check(
            fams.len() == ops.len(),
            format!("{name}: two operators share a theory family"),
        )?;
        separated += ops.len();
    }
    within(Duration::from_secs(30), start, "criterion")?;
    Ok(format!(
        "{levels} levels identical, {separated} structural operators separated"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("k-ary part cut failure", criterion_1),
        ("inclusion chain", criterion_2),
        ("conservativity along X ⊆ Y ⊆ Z", criterion_3),
        ("filters = theories", criterion_4),
        ("filter generation adjunction", criterion_5),
        ("closure lattice oracle", criterion_6),
        ("counterexample search", criterion_7),
        ("lattice of natural extensions", criterion_8),
        ("theory family round trip", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({detail}) [{t:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({why}) [{t:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
