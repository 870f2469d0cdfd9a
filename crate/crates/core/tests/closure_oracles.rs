use conseq::closure::{
    self, enumerate_closure_operators, enumerate_moore_families, family_from_bits, family_to_operator, full_mask,
    idempotent_hull, is_closure_operator, is_subset, join_directed, join_general, kary_part, meet, operator_to_family,
    Arity, ClosureError, IntersectionFamily, Mask, Operator,
};
use std::collections::HashMap;

use proptest::prelude::*;

/// Moore families on `len` points by filtering every family of subsets.
fn naive_moore_count(len: usize) -> usize {
    let subsets = 1usize << len;
    let full = full_mask(len);
    (0u64..1 << subsets)
        .filter(|fam| {
            let has = |s: Mask| fam >> s & 1 == 1;
            has(full) && (0..subsets as Mask).all(|a| !has(a) || (0..subsets as Mask).all(|b| !has(b) || has(a & b)))
        })
        .count()
}

#[test]
fn moore_counts_match_filtering_oracle() {
    for len in 0..=4 {
        assert_eq!(
            enumerate_moore_families(len).unwrap().len(),
            naive_moore_count(len),
            "len {len}"
        );
    }
}

#[test]
fn moore_count_on_five_points() {
    // the number of Moore families on a 5-element set
    assert_eq!(enumerate_moore_families(5).unwrap().len(), 1_385_552);
    assert!(matches!(
        enumerate_moore_families(6),
        Err(ClosureError::CarrierTooLarge { .. })
    ));
}

#[test]
fn families_and_operators_are_anti_isomorphic() {
    for len in [3, 4] {
        let ops = enumerate_closure_operators(len).unwrap();
        let fams: Vec<IntersectionFamily> = ops.iter().map(|c| operator_to_family(c).unwrap()).collect();
        for (c, f) in ops.iter().zip(&fams) {
            assert!(family_to_operator(f).same_map(c));
        }
        for i in (0..ops.len()).step_by(7) {
            for j in 0..ops.len() {
                assert_eq!(ops[i].le(&ops[j]), fams[j].is_subfamily_of(&fams[i]));
            }
        }
    }
}

/// Brute-force lattice of all closure operators on a carrier: `down[i]` is
/// the bitset of operators below operator `i`.
struct Brute {
    index: HashMap<Vec<Mask>, usize>,
    down: Vec<Vec<u64>>,
    up: Vec<Vec<u64>>,
}

impl Brute {
    fn new(ops: &[Operator]) -> Self {
        let k = ops.len();
        let words = k.div_ceil(64);
        let tables: Vec<Vec<Mask>> = ops.iter().map(|c| c.tabulate().unwrap()).collect();
        let le = |a: usize, b: usize| tables[a].iter().zip(&tables[b]).all(|(x, y)| is_subset(*x, *y));
        let mut down = vec![vec![0u64; words]; k];
        let mut up = vec![vec![0u64; words]; k];
        for i in 0..k {
            for j in 0..k {
                if le(j, i) {
                    down[i][j / 64] |= 1 << (j % 64);
                    up[j][i / 64] |= 1 << (i % 64);
                }
            }
        }
        let index = tables.into_iter().enumerate().map(|(i, t)| (t, i)).collect();
        Brute { index, down, up }
    }

    fn extreme(&self, set: &[u64], cone: &[Vec<u64>]) -> Option<usize> {
        let mut members = set
            .iter()
            .enumerate()
            .flat_map(|(w, &b)| closure::bits(b).map(move |i| w * 64 + i));
        members.find(|&m| cone[m] == set)
    }

    fn glb(&self, i: usize, j: usize) -> Option<usize> {
        let lower: Vec<u64> = self.down[i].iter().zip(&self.down[j]).map(|(a, b)| a & b).collect();
        self.extreme(&lower, &self.down)
    }

    fn lub(&self, i: usize, j: usize) -> Option<usize> {
        let upper: Vec<u64> = self.up[i].iter().zip(&self.up[j]).map(|(a, b)| a & b).collect();
        self.extreme(&upper, &self.up)
    }

    fn index_of(&self, table: &[Mask]) -> Option<usize> {
        self.index.get(table).copied()
    }
}

fn lattice_operations_match(len: usize) {
    let ops = enumerate_closure_operators(len).unwrap();
    let brute = Brute::new(&ops);
    let k = ops.len();
    for i in 0..k {
        for j in i..k {
            let pair = [ops[i].clone(), ops[j].clone()];
            let m = meet(&pair, Arity::Omega).unwrap().tabulate().unwrap();
            let glb = brute.glb(i, j).expect("closure operators form a lattice");
            assert_eq!(brute.index_of(&m), Some(glb), "meet of {i} and {j}");
            let s = join_general(&pair, Arity::Omega).unwrap().tabulate().unwrap();
            let lub = brute.lub(i, j).expect("closure operators form a lattice");
            assert_eq!(brute.index_of(&s), Some(lub), "join of {i} and {j}");
            let comparable = ops[i].le(&ops[j]) || ops[j].le(&ops[i]);
            match join_directed(&pair, Arity::Omega) {
                Ok(d) => {
                    assert!(comparable);
                    assert_eq!(brute.index_of(&d.tabulate().unwrap()), Some(lub));
                }
                Err(ClosureError::NotDirected(..)) => assert!(!comparable),
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn meet_and_joins_are_lattice_bounds_on_three_points() {
    lattice_operations_match(3);
}

#[test]
fn meet_and_joins_are_lattice_bounds_on_four_points() {
    lattice_operations_match(4);
}

#[test]
fn finite_arity_meet_and_join_among_nary_operators() {
    // among n-ary closure operators on three points; GLB/LUB are asserted
    // whenever the formula result is itself idempotent
    let ops = enumerate_closure_operators(3).unwrap();
    for n in [2usize, 3] {
        let nary: Vec<Operator> = ops
            .iter()
            .filter(|c| kary_part(c, Arity::Finite(n)).same_map(c))
            .cloned()
            .collect();
        let brute = Brute::new(&nary);
        let mut non_idempotent = 0;
        for i in 0..nary.len() {
            for j in 0..nary.len() {
                let pair = [nary[i].clone(), nary[j].clone()];
                let m = meet(&pair, Arity::Finite(n)).unwrap();
                if closure::is_idempotent(&m) {
                    assert_eq!(brute.index_of(&m.tabulate().unwrap()), brute.glb(i, j));
                } else {
                    non_idempotent += 1;
                }
                let s = join_general(&pair, Arity::Finite(n)).unwrap();
                if closure::is_idempotent(&s) {
                    assert_eq!(brute.index_of(&s.tabulate().unwrap()), brute.lub(i, j));
                } else {
                    non_idempotent += 1;
                }
            }
        }
        eprintln!(
            "n = {n}: {} operators, {non_idempotent} non-idempotent meets/joins",
            nary.len()
        );
    }
}

#[test]
fn hull_is_least_closure_above() {
    let ops = enumerate_closure_operators(4).unwrap();
    // inflationary monotone operators: unions of two closure operators
    for (i, j) in [(3, 900), (17, 2000), (101, 1500), (640, 641)] {
        let (a, b) = (ops[i].clone(), ops[j].clone());
        let step = Operator::from_fn(4, Arity::Omega, move |s| a.apply(s) | b.apply(s));
        let hull = idempotent_hull(&step);
        assert!(is_closure_operator(&hull).is_closure());
        assert!(step.le(&hull));
        for c in ops.iter().filter(|c| step.le(c)) {
            assert!(hull.le(c));
        }
    }
}

#[test]
fn moore_family_bits_round_trip() {
    let fams = enumerate_moore_families(3).unwrap();
    for &bits in &fams {
        let fam = family_from_bits(3, bits);
        let back = fam.sets().iter().fold(0u64, |acc, &s| acc | 1 << s);
        assert_eq!(back, bits);
    }
}

fn family() -> impl Strategy<Value = (usize, Vec<Mask>)> {
    (1usize..=6).prop_flat_map(|len| (Just(len), proptest::collection::vec(0..1u64 << len, 0..6)))
}

proptest! {
    #[test]
    fn generated_families_give_closure_operators((len, sets) in family()) {
        let fam = IntersectionFamily::generated_by(len, sets.iter().copied()).unwrap();
        let c = family_to_operator(&fam);
        prop_assert!(is_closure_operator(&c).is_closure());
        prop_assert_eq!(closure::fixed_points(&c).unwrap(), fam.sets().to_vec());
        for &s in &sets {
            prop_assert_eq!(c.apply(s), s);
        }
    }

    #[test]
    fn kary_part_is_below_and_nary((len, sets) in family(), n in 1usize..5) {
        let fam = IntersectionFamily::generated_by(len, sets.iter().copied()).unwrap();
        let c = family_to_operator(&fam);
        let k = kary_part(&c, Arity::Finite(n));
        prop_assert!(k.le(&c));
        let report = is_closure_operator(&k);
        prop_assert!(report.inflationary.is_none());
        prop_assert!(report.monotone.is_none());
        // brute-force definition
        for s in 0..1u64 << len {
            let expected = closure::submasks(s)
                .filter(|t| (t.count_ones() as usize) < n)
                .fold(s, |acc, t| acc | c.apply(t));
            prop_assert_eq!(k.apply(s), expected);
        }
        prop_assert!(kary_part(&k, Arity::Finite(n)).same_map(&k));
    }
}
