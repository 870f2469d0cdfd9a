use std::collections::BTreeSet;

use conseq::closure::{bits, Arity};
use conseq::logic::{
    as_closure_operator, builtin, derive, format_presentation, is_conservative_extension, is_theory,
    kary_part_of_logic, parse_presentation, structural_closure, theory_of, BoundHit, Consequence,
    ConservativityFailure, FiniteRelation, Presentation, Refutation, Verdict, Witness,
};
use conseq::term::Formula;
use proptest::prelude::*;

fn set(l: &Presentation, text: &str) -> BTreeSet<Formula> {
    l.parse_list(text).unwrap().into_iter().collect()
}

const SMALL: &[&str] = &[
    builtin::RUNNING_EXAMPLE,
    builtin::SINGULAR_ANALOG,
    "sig a:0 b:0\nvars x\nrule x => a\nrule a => x\n",
    "sig a:0 b:0 c:0\nvars x y\nrule x, y => a\nrule a, b => c\n",
    "sig p:0 q:0\nvars x\nrule => p\nrule p, x => q\n",
    "sig a:0\nvars x y\n",
];

#[test]
fn derivations_replay_on_the_singular_analog() {
    let l = builtin::singular_analog();
    let gamma = set(&l, "m11, m12, m21, m22");
    let Verdict::Yes(Witness::Derivation(d)) = derive(&l, &gamma, &l.parse("star").unwrap()) else {
        panic!("star follows from the four premises");
    };
    d.verify(l.rules(), &gamma).unwrap();
    assert_eq!(d.leaves(), gamma);
    let view = d.render(&l);
    assert_eq!(view.formula, "star");
    assert_eq!(view.premises.len(), 2);
    assert_eq!(
        derive(&l, &set(&l, "m11, m12"), &l.parse("star").unwrap()),
        Verdict::No(Refutation::Exhaustive)
    );
}

#[test]
fn theories_and_closure_operator() {
    let l = builtin::singular_analog();
    assert!(theory_of(&l, &BTreeSet::new()).unwrap().is_empty());
    let c = as_closure_operator(&l).unwrap();
    let u = c.universe().clone();
    assert_eq!(
        u.members(c.consequences(u.mask(set(&l, "i1, i2").iter()).unwrap())),
        set(&l, "i1, i2, star")
    );
    assert_eq!(c.consequences(u.full()), u.full());
    for g in 0..1u64 << u.len() {
        let t = theory_of(&l, &u.members(g)).unwrap();
        assert_eq!(theory_of(&l, &t).unwrap(), t);
        assert!(is_theory(&l, &t).unwrap());
        assert_eq!(u.mask(t.iter()).unwrap(), c.consequences(g));
    }
}

#[test]
fn exact_presentations_give_structural_closure_operators() {
    for text in SMALL {
        let l = parse_presentation(text).unwrap();
        let c = as_closure_operator(&l).unwrap();
        assert!(c.closure_report().is_closure(), "{text}");
        assert!(c.is_structural(), "{text}");
        assert_eq!(structural_closure(&c), c, "{text}");
    }
}

#[test]
fn omega_part_agrees_with_derive() {
    let l = builtin::singular_analog();
    let omega = kary_part_of_logic(l.clone(), Arity::Omega);
    let u = as_closure_operator(&l).unwrap().universe().clone();
    for g in 0..1u64 << u.len() {
        let gamma = u.members(g);
        for phi in u.formulas() {
            assert_eq!(omega.query(&gamma, phi), derive(&l, &gamma, phi));
        }
    }
}

#[test]
fn kary_yes_has_small_witness_and_matches_table() {
    let l = builtin::singular_analog();
    let c = as_closure_operator(&l).unwrap();
    let u = c.universe().clone();
    for n in 1..=5 {
        let rel = kary_part_of_logic(l.clone(), Arity::Finite(n));
        let table = c.kary_part(Arity::Finite(n));
        for g in (0..1u64 << u.len()).step_by(3) {
            let gamma = u.members(g);
            for (i, phi) in u.formulas().iter().enumerate() {
                let v = rel.query(&gamma, phi);
                assert_eq!(v.is_yes(), table.holds(g, i));
                if let Verdict::Yes(Witness::SubPremises { premises, inner }) = &v {
                    assert!(premises.len() < n);
                    assert!(premises.iter().all(|p| gamma.contains(p)));
                    if let Witness::Derivation(d) = &**inner {
                        d.verify(l.rules(), &premises.iter().cloned().collect()).unwrap();
                    }
                }
            }
        }
        assert!(table.is_structural());
    }
    assert_eq!(c.arity_profile(), Some(5));
}

#[test]
fn derive_is_monotone_in_premises() {
    let l = parse_presentation(SMALL[3]).unwrap();
    let c = as_closure_operator(&l).unwrap();
    let u = c.universe().clone();
    for g in 0..1u64 << u.len() {
        for h in (0..1u64 << u.len()).filter(|h| h & g == g) {
            assert_eq!(c.consequences(g) & !c.consequences(h), 0);
        }
    }
}

#[test]
fn conservativity_against_itself_and_a_strengthening() {
    let l = builtin::running_example();
    let c = as_closure_operator(&l).unwrap();
    assert!(is_conservative_extension(&c, &c).unwrap().is_none());
    // add a => x: everything follows from a
    let strong = parse_presentation("sig a:0\nvars x\nrule x => a\nrule a => x\n").unwrap();
    let s = as_closure_operator(&strong).unwrap();
    let w = is_conservative_extension(&c, &s).unwrap().unwrap();
    assert_eq!(w.failure, ConservativityFailure::Gained);
    assert_eq!(c.universe().names(w.pair.premises), ["a"]);
    assert_eq!(c.universe().name(w.pair.goal), "x");
}

#[test]
fn structural_closure_of_reflexivity_is_itself() {
    let l = parse_presentation("sig a:0 b:0\nvars x y\n").unwrap();
    let c = as_closure_operator(&l).unwrap();
    assert!((0..1u64 << c.universe().len()).all(|g| c.consequences(g) == g));
    assert_eq!(structural_closure(&c), c);
}

#[test]
fn premise_free_axioms_are_unary() {
    let l = parse_presentation("sig a:0 b:0\nvars x\nrule => a\nrule => b\n").unwrap();
    assert_eq!(as_closure_operator(&l).unwrap().arity_profile(), Some(1));
}

#[test]
fn unsafe_rules_report_depth_bound() {
    let l = parse_presentation("sig f:1 a:0 b:0\nvars x\nrule x => f(x)\nbounds depth=3 iters=16\n").unwrap();
    assert!(!l.is_exact());
    assert!(derive(&l, &set(&l, "a"), &l.parse("f(f(a))").unwrap()).is_yes());
    assert!(matches!(
        derive(&l, &set(&l, "a"), &l.parse("b").unwrap()),
        Verdict::Unknown(BoundHit::Depth { .. })
    ));
    let safe = parse_presentation("sig f:1 a:0 b:0\nvars x\nrule f(x) => x\n").unwrap();
    assert!(safe.is_exact());
    assert_eq!(
        derive(&safe, &set(&safe, "f(f(a))"), &safe.parse("b").unwrap()),
        Verdict::No(Refutation::Exhaustive)
    );
    assert!(derive(&safe, &set(&safe, "f(f(a))"), &safe.parse("a").unwrap()).is_yes());
}

#[test]
fn presentation_text_round_trips() {
    for text in SMALL {
        let l = parse_presentation(text).unwrap();
        let again = parse_presentation(&format_presentation(&l)).unwrap();
        assert_eq!(format_presentation(&again), format_presentation(&l));
        assert_eq!(again.rules(), l.rules());
    }
}

fn random_presentation() -> impl Strategy<Value = Presentation> {
    let atom = 0usize..5;
    let rule = (proptest::collection::vec(atom.clone(), 0..3), atom);
    proptest::collection::vec(rule, 0..5).prop_map(|rules| {
        let names = ["a", "b", "c", "x", "y"];
        let mut text = String::from("sig a:0 b:0 c:0\nvars x y\n");
        for (prem, concl) in rules {
            let ps: Vec<&str> = prem.iter().map(|&i| names[i]).collect();
            text.push_str(&format!("rule {} => {}\n", ps.join(", "), names[concl]));
        }
        parse_presentation(&text).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_exact_logics_are_structural_closures(l in random_presentation()) {
        let c = as_closure_operator(&l).unwrap();
        prop_assert!(c.closure_report().is_closure());
        prop_assert!(c.is_structural());
        let n = c.arity_profile().unwrap();
        prop_assert_eq!(c.kary_part(Arity::Finite(n)), c.clone());
        if n > 1 {
            prop_assert_ne!(c.kary_part(Arity::Finite(n - 1)), c.clone());
        }
        let u = c.universe().clone();
        for g in (0..1u64 << u.len()).step_by(5) {
            let gamma = u.members(g);
            for i in 0..u.len() {
                let v = derive(&l, &gamma, u.formula(i));
                prop_assert_eq!(v.is_yes(), c.holds(g, i));
                prop_assert!(!v.is_unknown());
            }
        }
    }

    #[test]
    fn kary_parts_stay_reflexive_monotone_structural(l in random_presentation(), n in 1usize..4) {
        let c = as_closure_operator(&l).unwrap();
        let k: FiniteRelation = c.kary_part(Arity::Finite(n));
        let report = k.closure_report();
        prop_assert!(report.inflationary.is_none());
        prop_assert!(report.monotone.is_none());
        prop_assert!(k.is_structural());
        if let Some(w) = k.cut_witness() {
            prop_assert!(!k.holds(w.premises, w.goal));
            prop_assert!(k.holds(w.premises | w.lemmas, w.goal));
            for d in bits(w.lemmas) {
                prop_assert!(k.holds(w.premises, d));
            }
        }
    }
}
