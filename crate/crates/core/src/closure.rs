//! Closure operators and intersection families on finite carriers.
//!
//! A carrier is `{0, …, len-1}` and a subset is a [`Mask`] bit set, so
//! carriers have at most 64 elements. Operators are either tabulated or lazy
//! with a shared memo table; both are cheap to clone and safe to share
//! between threads.

use std::collections::HashMap;
use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Mask = u64;

/// Largest carrier representable with [`Mask`].
pub const MAX_CARRIER: usize = 64;
/// Carriers up to this size are checked on every subset.
pub const EXHAUSTIVE_THRESHOLD: usize = 16;
/// Number of sampled subsets on larger carriers.
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Fixed seed for sampled checks.
pub const SAMPLE_SEED: u64 = 0x5eed;
/// Largest carrier an operator may be tabulated on.
pub const MAX_TABULATED: usize = 24;
/// Largest carrier for Moore-family enumeration.
pub const MAX_MOORE_CARRIER: usize = 5;
/// Largest carrier for the constrained family search.
pub const MAX_FAMILY_SEARCH_CARRIER: usize = 10;
/// Carriers below this size are scanned sequentially.
const PARALLEL_MIN_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClosureError {
    #[error("carrier of size {len} exceeds the limit of {limit}")]
    CarrierTooLarge { len: usize, limit: usize },
    #[error("operators act on carriers of different sizes ({0} and {1})")]
    MismatchedCarriers(usize, usize),
    #[error("an empty family has no bound in this position")]
    EmptyFamily,
    #[error("family does not contain the full carrier")]
    MissingTop,
    #[error("intersection of {a:#x} and {b:#x} is missing")]
    NotIntersectionClosed { a: Mask, b: Mask },
    #[error("set {0:#x} is not a subset of the carrier")]
    OutOfCarrier(Mask),
    #[error("family is not directed: members {0} and {1} have no common upper bound in it")]
    NotDirected(usize, usize),
    #[error("arity bound must be at least 1")]
    ZeroArity,
    #[error("table has {found} entries, expected {expected}")]
    TableSize { expected: usize, found: usize },
}

pub fn full_mask(len: usize) -> Mask {
    if len >= 64 {
        Mask::MAX
    } else {
        (1 << len) - 1
    }
}

pub fn is_subset(a: Mask, b: Mask) -> bool {
    a & !b == 0
}

/// Indices of the set bits, ascending.
pub fn bits(mut mask: Mask) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let i = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(i)
        }
    })
}

pub fn mask_of<I: IntoIterator<Item = usize>>(elems: I) -> Mask {
    elems.into_iter().fold(0, |m, i| m | 1 << i)
}

/// All submasks of `mask`, including `0` and `mask`.
pub fn submasks(mask: Mask) -> impl Iterator<Item = Mask> {
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & mask) };
        Some(cur)
    })
}

/// Bound on premise-set sizes: `Finite(n)` admits premise sets of fewer than
/// `n` elements, `Omega` admits every finite set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arity {
    Finite(usize),
    Omega,
}

impl Arity {
    /// True when a premise set of `size` elements is admitted.
    pub fn admits(self, size: usize) -> bool {
        match self {
            Arity::Finite(n) => size < n,
            Arity::Omega => true,
        }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arity::Finite(n) => write!(f, "{n}"),
            Arity::Omega => f.write_str("omega"),
        }
    }
}

impl FromStr for Arity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "omega" | "w" | "ω" => Ok(Arity::Omega),
            _ => match s.parse::<usize>() {
                Ok(0) => Err("arity bound must be at least 1".into()),
                Ok(n) => Ok(Arity::Finite(n)),
                Err(_) => Err(format!("expected a positive integer or `omega`, got `{s}`")),
            },
        }
    }
}

type LazyEval = Arc<dyn Fn(&Operator, Mask) -> Mask + Send + Sync>;

enum Body {
    Table(Vec<Mask>),
    Lazy {
        eval: LazyEval,
        memo: Arc<RwLock<HashMap<Mask, Mask>>>,
    },
}

struct Inner {
    len: usize,
    arity: Arity,
    body: Body,
}

/// A map on the subsets of a finite carrier, tagged with an arity bound.
#[derive(Clone)]
pub struct Operator(Arc<Inner>);

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.0.body {
            Body::Table(_) => "table",
            Body::Lazy { .. } => "lazy",
        };
        f.debug_struct("Operator")
            .field("len", &self.0.len)
            .field("arity", &self.0.arity)
            .field("kind", &kind)
            .finish()
    }
}

impl Operator {
    pub fn from_fn<F>(len: usize, arity: Arity, f: F) -> Self
    where
        F: Fn(Mask) -> Mask + Send + Sync + 'static,
    {
        Self::recursive(len, arity, move |_, s| f(s))
    }

    /// A lazy operator whose evaluation may call back into itself; recursive
    /// calls share the memo table.
    fn recursive<F>(len: usize, arity: Arity, f: F) -> Self
    where
        F: Fn(&Operator, Mask) -> Mask + Send + Sync + 'static,
    {
        assert!(len <= MAX_CARRIER, "carrier of size {len} exceeds {MAX_CARRIER}");
        Operator(Arc::new(Inner {
            len,
            arity,
            body: Body::Lazy {
                eval: Arc::new(f),
                memo: Arc::new(RwLock::new(HashMap::new())),
            },
        }))
    }

    pub fn from_table(len: usize, table: Vec<Mask>, arity: Arity) -> Result<Self, ClosureError> {
        if len > MAX_TABULATED {
            return Err(ClosureError::CarrierTooLarge {
                len,
                limit: MAX_TABULATED,
            });
        }
        if table.len() != 1 << len {
            return Err(ClosureError::TableSize {
                expected: 1 << len,
                found: table.len(),
            });
        }
        let full = full_mask(len);
        if let Some(bad) = table.iter().find(|&&t| !is_subset(t, full)) {
            return Err(ClosureError::OutOfCarrier(*bad));
        }
        Ok(Operator(Arc::new(Inner {
            len,
            arity,
            body: Body::Table(table),
        })))
    }

    pub fn len(&self) -> usize {
        self.0.len
    }

    pub fn is_empty(&self) -> bool {
        self.0.len == 0
    }

    pub fn arity(&self) -> Arity {
        self.0.arity
    }

    pub fn full(&self) -> Mask {
        full_mask(self.0.len)
    }

    pub fn apply(&self, s: Mask) -> Mask {
        debug_assert!(is_subset(s, self.full()), "subset {s:#x} outside the carrier");
        match &self.0.body {
            Body::Table(t) => t[s as usize],
            Body::Lazy { eval, memo } => {
                if let Some(&r) = memo.read().expect("memo lock").get(&s) {
                    return r;
                }
                let r = eval(self, s);
                memo.write().expect("memo lock").insert(s, r);
                r
            }
        }
    }

    /// Same map, different arity tag.
    pub fn with_arity(&self, arity: Arity) -> Operator {
        if arity == self.0.arity {
            return self.clone();
        }
        let body = match &self.0.body {
            Body::Table(t) => Body::Table(t.clone()),
            Body::Lazy { eval, memo } => Body::Lazy {
                eval: eval.clone(),
                memo: memo.clone(),
            },
        };
        Operator(Arc::new(Inner {
            len: self.0.len,
            arity,
            body,
        }))
    }

    /// The full value table, indexed by subset mask.
    pub fn tabulate(&self) -> Result<Vec<Mask>, ClosureError> {
        if let Body::Table(t) = &self.0.body {
            return Ok(t.clone());
        }
        if self.0.len > MAX_TABULATED {
            return Err(ClosureError::CarrierTooLarge {
                len: self.0.len,
                limit: MAX_TABULATED,
            });
        }
        let all = 0..1u64 << self.0.len;
        if self.0.len < PARALLEL_MIN_LEN {
            return Ok(all.map(|s| self.apply(s)).collect());
        }
        Ok(all.into_par_iter().map(|s| self.apply(s)).collect())
    }

    /// A tabulated copy; evaluation becomes a lookup.
    pub fn tabulated(&self) -> Result<Operator, ClosureError> {
        match &self.0.body {
            Body::Table(_) => Ok(self.clone()),
            Body::Lazy { .. } => Operator::from_table(self.0.len, self.tabulate()?, self.0.arity),
        }
    }

    /// First subset `S` (in check order) with `self(S) ⊄ other(S)`.
    pub fn le_witness(&self, other: &Operator) -> Result<Option<Mask>, ClosureError> {
        same_carrier(self, other)?;
        Ok(CheckDomain::new(self.0.len).find(|s| !is_subset(self.apply(s), other.apply(s))))
    }

    /// Pointwise inclusion, exhaustive up to [`EXHAUSTIVE_THRESHOLD`].
    pub fn le(&self, other: &Operator) -> bool {
        matches!(self.le_witness(other), Ok(None))
    }

    /// First subset on which the two operators differ.
    pub fn diff_witness(&self, other: &Operator) -> Result<Option<Mask>, ClosureError> {
        same_carrier(self, other)?;
        Ok(CheckDomain::new(self.0.len).find(|s| self.apply(s) != other.apply(s)))
    }

    pub fn same_map(&self, other: &Operator) -> bool {
        matches!(self.diff_witness(other), Ok(None))
    }
}

fn same_carrier(a: &Operator, b: &Operator) -> Result<(), ClosureError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(ClosureError::MismatchedCarriers(a.len(), b.len()))
    }
}

/// The subsets a check visits: all of them up to the exhaustive threshold,
/// otherwise a fixed seeded sample.
#[derive(Debug, Clone)]
pub struct CheckDomain {
    len: usize,
    samples: Option<Vec<Mask>>,
}

impl CheckDomain {
    pub fn new(len: usize) -> Self {
        Self::with_samples(len, DEFAULT_SAMPLES, SAMPLE_SEED)
    }

    pub fn with_samples(len: usize, count: usize, seed: u64) -> Self {
        if len <= EXHAUSTIVE_THRESHOLD {
            return CheckDomain { len, samples: None };
        }
        let full = full_mask(len);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..count).map(|_| rng.gen::<Mask>() & full).collect();
        CheckDomain {
            len,
            samples: Some(samples),
        }
    }

    pub fn is_exhaustive(&self) -> bool {
        self.samples.is_none()
    }

    pub fn size(&self) -> usize {
        match &self.samples {
            None => 1 << self.len,
            Some(s) => s.len(),
        }
    }

    /// The first subset, in check order, satisfying `pred`; evaluated in
    /// parallel but independent of scheduling.
    pub fn find<P>(&self, pred: P) -> Option<Mask>
    where
        P: Fn(Mask) -> bool + Sync + Send,
    {
        match &self.samples {
            None if self.len < PARALLEL_MIN_LEN => (0..1u64 << self.len).find(|&s| pred(s)),
            None => (0..1u64 << self.len).into_par_iter().find_first(|&s| pred(s)),
            Some(samples) => samples.par_iter().copied().find_first(|&s| pred(s)),
        }
    }

    pub fn find_map<T, F>(&self, f: F) -> Option<T>
    where
        T: Send,
        F: Fn(Mask) -> Option<T> + Sync + Send,
    {
        match &self.samples {
            None if self.len < PARALLEL_MIN_LEN => (0..1u64 << self.len).find_map(&f),
            None => (0..1u64 << self.len).into_par_iter().find_map_first(&f),
            Some(samples) => samples.par_iter().copied().find_map_first(&f),
        }
    }
}

/// Outcome of checking the three closure-operator laws. Each field holds the
/// first violating subset found, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub exhaustive: bool,
    pub subsets_checked: usize,
    /// `S` with `S ⊄ c(S)`.
    pub inflationary: Option<Mask>,
    /// `(S, T)` with `S ⊆ T` and `c(S) ⊄ c(T)`.
    pub monotone: Option<(Mask, Mask)>,
    /// `S` with `c(c(S)) ≠ c(S)`.
    pub idempotent: Option<Mask>,
}

impl ClosureReport {
    pub fn is_closure(&self) -> bool {
        self.inflationary.is_none() && self.monotone.is_none() && self.idempotent.is_none()
    }

    /// Inflationary and monotone, idempotence aside.
    pub fn is_monotone_operator(&self) -> bool {
        self.inflationary.is_none() && self.monotone.is_none()
    }
}

pub fn is_closure_operator(c: &Operator) -> ClosureReport {
    let domain = CheckDomain::new(c.len());
    let full = c.full();
    let inflationary = domain.find(|s| !is_subset(s, c.apply(s)));
    // Monotonicity follows from the one-element steps S ⊆ S ∪ {e}.
    let monotone = domain.find_map(|s| {
        let cs = c.apply(s);
        bits(full & !s).find_map(|e| {
            let t = s | 1 << e;
            (!is_subset(cs, c.apply(t))).then_some((s, t))
        })
    });
    let idempotent = domain.find(|s| {
        let cs = c.apply(s);
        c.apply(cs) != cs
    });
    ClosureReport {
        exhaustive: domain.is_exhaustive(),
        subsets_checked: domain.size(),
        inflationary,
        monotone,
        idempotent,
    }
}

/// First subset `S` with `c(c(S)) ≠ c(S)`.
pub fn idempotence_witness(c: &Operator) -> Option<Mask> {
    CheckDomain::new(c.len()).find(|s| {
        let cs = c.apply(s);
        c.apply(cs) != cs
    })
}

pub fn is_idempotent(c: &Operator) -> bool {
    idempotence_witness(c).is_none()
}

/// A family of subsets closed under intersection and containing the carrier.
/// Members are kept sorted by mask value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntersectionFamily {
    len: usize,
    sets: Vec<Mask>,
}

impl IntersectionFamily {
    pub fn new(len: usize, sets: impl IntoIterator<Item = Mask>) -> Result<Self, ClosureError> {
        if len > MAX_CARRIER {
            return Err(ClosureError::CarrierTooLarge {
                len,
                limit: MAX_CARRIER,
            });
        }
        let full = full_mask(len);
        let mut sets: Vec<Mask> = sets.into_iter().collect();
        sets.sort_unstable();
        sets.dedup();
        if let Some(&bad) = sets.iter().find(|&&s| !is_subset(s, full)) {
            return Err(ClosureError::OutOfCarrier(bad));
        }
        if sets.binary_search(&full).is_err() {
            return Err(ClosureError::MissingTop);
        }
        for (i, &a) in sets.iter().enumerate() {
            for &b in &sets[i + 1..] {
                if sets.binary_search(&(a & b)).is_err() {
                    return Err(ClosureError::NotIntersectionClosed { a, b });
                }
            }
        }
        Ok(IntersectionFamily { len, sets })
    }

    /// The least intersection family containing `sets`.
    pub fn generated_by(len: usize, sets: impl IntoIterator<Item = Mask>) -> Result<Self, ClosureError> {
        let full = full_mask(len);
        let mut out: Vec<Mask> = vec![full];
        for s in sets {
            if !is_subset(s, full) {
                return Err(ClosureError::OutOfCarrier(s));
            }
            let mut work = vec![s];
            while let Some(t) = work.pop() {
                if out.contains(&t) {
                    continue;
                }
                work.extend(out.iter().map(|&u| u & t));
                out.push(t);
            }
        }
        IntersectionFamily::new(len, out)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn sets(&self) -> &[Mask] {
        &self.sets
    }

    pub fn contains(&self, s: Mask) -> bool {
        self.sets.binary_search(&s).is_ok()
    }

    /// Number of member sets.
    pub fn size(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Least member containing `s`.
    pub fn closure_of(&self, s: Mask) -> Mask {
        self.sets
            .iter()
            .filter(|&&c| is_subset(s, c))
            .fold(full_mask(self.len), |acc, &c| acc & c)
    }

    /// `self ⊆ other` as families of sets.
    pub fn is_subfamily_of(&self, other: &IntersectionFamily) -> bool {
        self.len == other.len && self.sets.iter().all(|&s| other.contains(s))
    }
}

/// Value table of `A ↦ ⋂{C ∈ sets : A ⊆ C}`.
pub fn family_table(len: usize, sets: &[Mask]) -> Vec<Mask> {
    let full = full_mask(len);
    let mut table = vec![full; 1 << len];
    for &c in sets {
        for a in submasks(c) {
            table[a as usize] &= c;
        }
    }
    table
}

/// `c_I(A) = ⋂{C ∈ I : A ⊆ C}`.
pub fn family_to_operator(family: &IntersectionFamily) -> Operator {
    if family.len <= EXHAUSTIVE_THRESHOLD {
        let table = family_table(family.len, &family.sets);
        return Operator::from_table(family.len, table, Arity::Omega).expect("table of the right size");
    }
    let fam = family.clone();
    Operator::from_fn(family.len, Arity::Omega, move |s| fam.closure_of(s))
}

/// The fixed points of `c`.
pub fn operator_to_family(c: &Operator) -> Result<IntersectionFamily, ClosureError> {
    let sets = fixed_points(c)?;
    IntersectionFamily::new(c.len(), sets)
}

/// All `S` with `c(S) = S`, ascending.
pub fn fixed_points(c: &Operator) -> Result<Vec<Mask>, ClosureError> {
    if c.len() > MAX_TABULATED {
        return Err(ClosureError::CarrierTooLarge {
            len: c.len(),
            limit: MAX_TABULATED,
        });
    }
    Ok((0..1u64 << c.len())
        .into_par_iter()
        .filter(|&s| c.apply(s) == s)
        .collect())
}

/// `c_⊤(A) = carrier`.
pub fn top(len: usize) -> Operator {
    let full = full_mask(len);
    Operator::from_fn(len, Arity::Finite(1), move |_| full)
}

/// `c_⊥(A) = A`.
pub fn bottom(len: usize) -> Operator {
    Operator::from_fn(len, Arity::Finite(2), |s| s)
}

/// `S ↦ S ∪ ⋃{c(S') : S' ⊆ S, |S'| < n}`.
///
/// The union with `S` keeps the 1-ary part inflationary; for `n ≥ 2` and
/// inflationary `c` it changes nothing. `c` must be monotone: the union is
/// then attained on the subsets of size exactly `min(n-1, |S|)`, which the
/// evaluation recurses down to.
pub fn kary_part(c: &Operator, n: Arity) -> Operator {
    let k = match n {
        Arity::Omega => return c.with_arity(Arity::Omega),
        Arity::Finite(n) => n.max(1) - 1,
    };
    let base = c.clone();
    Operator::recursive(c.len(), Arity::Finite(k + 1), move |me, s| {
        if (s.count_ones() as usize) <= k {
            s | base.apply(s)
        } else {
            bits(s).fold(s, |acc, e| acc | me.apply(s & !(1 << e)))
        }
    })
}

fn check_family(family: &[Operator]) -> Result<usize, ClosureError> {
    let first = family.first().ok_or(ClosureError::EmptyFamily)?;
    for c in &family[1..] {
        same_carrier(first, c)?;
    }
    Ok(first.len())
}

fn check_arity(n: Arity) -> Result<(), ClosureError> {
    if n == Arity::Finite(0) {
        Err(ClosureError::ZeroArity)
    } else {
        Ok(())
    }
}

/// n-ary part of the pointwise intersection.
pub fn meet(family: &[Operator], n: Arity) -> Result<Operator, ClosureError> {
    check_arity(n)?;
    let len = check_family(family)?;
    let members = family.to_vec();
    let pointwise = Operator::from_fn(len, Arity::Omega, move |s| {
        members.iter().fold(full_mask(len), |acc, c| acc & c.apply(s))
    });
    Ok(kary_part(&pointwise, n))
}

/// n-ary part of the pointwise union of a directed family. The empty family
/// joins to the identity on a carrier that must be given separately, so it
/// is rejected here.
pub fn join_directed(family: &[Operator], n: Arity) -> Result<Operator, ClosureError> {
    check_arity(n)?;
    let len = check_family(family)?;
    for i in 0..family.len() {
        for j in i + 1..family.len() {
            let bounded = family.iter().any(|u| family[i].le(u) && family[j].le(u));
            if !bounded {
                return Err(ClosureError::NotDirected(i, j));
            }
        }
    }
    let members = family.to_vec();
    let pointwise = Operator::from_fn(len, Arity::Omega, move |s| {
        members.iter().fold(s, |acc, c| acc | c.apply(s))
    });
    Ok(kary_part(&pointwise, n))
}

/// n-ary part of the operator whose closed sets are the sets closed under
/// every member: `S ↦ ⋃_{S' ⊆ S, |S'| < n} ⋂{T ⊇ S' : c(T) = T for all c}`.
pub fn join_general(family: &[Operator], n: Arity) -> Result<Operator, ClosureError> {
    check_arity(n)?;
    let len = check_family(family)?;
    let members = family.to_vec();
    let step = Operator::from_fn(len, Arity::Omega, move |s| {
        members.iter().fold(s, |acc, c| acc | c.apply(s))
    });
    Ok(kary_part(&idempotent_hull(&step), n))
}

/// Least closure operator above an inflationary monotone `e`: iterate `e`
/// until the set stops growing.
pub fn idempotent_hull(e: &Operator) -> Operator {
    let base = e.clone();
    Operator::from_fn(e.len(), Arity::Omega, move |s| hull_iterate(&base, s).0)
}

/// The fixpoint reached from `s` and the number of growing steps taken.
pub fn hull_iterate(e: &Operator, s: Mask) -> (Mask, usize) {
    let mut cur = s;
    let mut steps = 0;
    loop {
        let next = cur | e.apply(cur);
        if next == cur {
            return (cur, steps);
        }
        cur = next;
        steps += 1;
    }
}

/// Constraints for [`search_families`]: every reported family contains
/// `required` and the carrier, avoids sets rejected by `allowed`, is closed
/// under intersection and, for each map `m` in `preimage_maps`, under
/// `S ↦ {u : m[u] ∈ S}`.
pub struct FamilySearch<'a> {
    pub len: usize,
    pub required: Vec<Mask>,
    pub allowed: Option<&'a (dyn Fn(Mask) -> bool + Sync)>,
    pub preimage_maps: Vec<Vec<usize>>,
}

impl<'a> FamilySearch<'a> {
    pub fn all(len: usize) -> Self {
        FamilySearch {
            len,
            required: Vec::new(),
            allowed: None,
            preimage_maps: Vec::new(),
        }
    }
}

/// Summary of a family search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOutcome {
    pub visited: usize,
    /// False when the visitor stopped the search early.
    pub complete: bool,
}

struct FamilyState<'s, 'a> {
    spec: &'s FamilySearch<'a>,
    included: Vec<bool>,
    excluded: Vec<bool>,
    members: Vec<Mask>,
}

impl FamilyState<'_, '_> {
    fn preimage(map: &[usize], s: Mask) -> Mask {
        map.iter()
            .enumerate()
            .filter(|(_, &img)| s >> img & 1 == 1)
            .fold(0, |acc, (u, _)| acc | 1 << u)
    }

    /// Adds `s` and everything it forces; on conflict rolls back and returns
    /// `None`, otherwise returns how many members were added.
    fn include(&mut self, s: Mask) -> Option<usize> {
        let start = self.members.len();
        let mut work = vec![s];
        while let Some(t) = work.pop() {
            if self.included[t as usize] {
                continue;
            }
            if self.excluded[t as usize] {
                self.rollback(start);
                return None;
            }
            self.included[t as usize] = true;
            for &u in &self.members {
                let m = u & t;
                if !self.included[m as usize] {
                    work.push(m);
                }
            }
            for map in &self.spec.preimage_maps {
                let p = Self::preimage(map, t);
                if !self.included[p as usize] {
                    work.push(p);
                }
            }
            self.members.push(t);
        }
        Some(self.members.len() - start)
    }

    fn rollback(&mut self, start: usize) {
        for t in self.members.drain(start..) {
            self.included[t as usize] = false;
        }
    }
}

/// Depth-first enumeration of all intersection families satisfying `spec`.
/// Candidates are decided in order of decreasing size, so every forced set
/// that is larger than the current candidate has already been decided and
/// conflicts are detected immediately. The visitor sees member lists in
/// insertion order and may stop the search.
pub fn search_families<V>(spec: &FamilySearch<'_>, mut visit: V) -> Result<SearchOutcome, ClosureError>
where
    V: FnMut(&[Mask]) -> ControlFlow<()>,
{
    if spec.len > MAX_FAMILY_SEARCH_CARRIER {
        return Err(ClosureError::CarrierTooLarge {
            len: spec.len,
            limit: MAX_FAMILY_SEARCH_CARRIER,
        });
    }
    let size = 1usize << spec.len;
    let full = full_mask(spec.len);
    let mut candidates: Vec<Mask> = (0..size as Mask).collect();
    candidates.sort_by_key(|&s| (std::cmp::Reverse(s.count_ones()), s));
    let mut state = FamilyState {
        spec,
        included: vec![false; size],
        excluded: vec![false; size],
        members: Vec::new(),
    };
    if let Some(allowed) = spec.allowed {
        for s in 0..size as Mask {
            state.excluded[s as usize] = !allowed(s);
        }
    }
    let mut outcome = SearchOutcome {
        visited: 0,
        complete: true,
    };
    for &s in std::iter::once(&full).chain(&spec.required) {
        if !is_subset(s, full) {
            return Err(ClosureError::OutOfCarrier(s));
        }
        if state.include(s).is_none() {
            return Ok(outcome);
        }
    }

    fn go<V: FnMut(&[Mask]) -> ControlFlow<()>>(
        state: &mut FamilyState<'_, '_>,
        candidates: &[Mask],
        idx: usize,
        visit: &mut V,
        outcome: &mut SearchOutcome,
    ) -> ControlFlow<()> {
        let Some(&s) = candidates.get(idx) else {
            outcome.visited += 1;
            return visit(&state.members);
        };
        if state.included[s as usize] || state.excluded[s as usize] {
            return go(state, candidates, idx + 1, visit, outcome);
        }
        state.excluded[s as usize] = true;
        let r = go(state, candidates, idx + 1, visit, outcome);
        state.excluded[s as usize] = false;
        r?;
        let start = state.members.len();
        if state.include(s).is_some() {
            let r = go(state, candidates, idx + 1, visit, outcome);
            state.rollback(start);
            r?;
        }
        ControlFlow::Continue(())
    }

    if go(&mut state, &candidates, 0, &mut visit, &mut outcome).is_break() {
        outcome.complete = false;
    }
    Ok(outcome)
}

/// Every Moore family on a carrier of `len ≤ 5` elements, each encoded as a
/// bit set over the `2^len` subsets (bit `S` set iff `S` is closed).
pub fn enumerate_moore_families(len: usize) -> Result<Vec<u64>, ClosureError> {
    if len > MAX_MOORE_CARRIER {
        return Err(ClosureError::CarrierTooLarge {
            len,
            limit: MAX_MOORE_CARRIER,
        });
    }
    let mut out = Vec::new();
    search_families(&FamilySearch::all(len), |members| {
        out.push(members.iter().fold(0u64, |acc, &s| acc | 1 << s));
        ControlFlow::Continue(())
    })?;
    out.sort_unstable();
    Ok(out)
}

/// Decodes one entry of [`enumerate_moore_families`].
pub fn family_from_bits(len: usize, bits_of_family: u64) -> IntersectionFamily {
    let sets = (0..1u64 << len).filter(|&s| bits_of_family >> s & 1 == 1);
    IntersectionFamily::new(len, sets).expect("enumerated families are intersection closed")
}

/// Every closure operator on a carrier of `len ≤ 5` elements, tabulated, in
/// the order of [`enumerate_moore_families`].
pub fn enumerate_closure_operators(len: usize) -> Result<Vec<Operator>, ClosureError> {
    let families = enumerate_moore_families(len)?;
    Ok(families
        .into_par_iter()
        .map(|f| {
            let sets: Vec<Mask> = (0..1u64 << len).filter(|&s| f >> s & 1 == 1).collect();
            Operator::from_table(len, family_table(len, &sets), Arity::Omega).expect("table of the right size")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(len: usize, sets: &[Mask]) -> IntersectionFamily {
        IntersectionFamily::new(len, sets.iter().copied()).unwrap()
    }

    #[test]
    fn top_and_bottom_families() {
        let c = family_to_operator(&family(3, &[0b111]));
        assert!((0..8).all(|s| c.apply(s) == 0b111));
        let all: Vec<Mask> = (0..8).collect();
        let c = family_to_operator(&family(3, &all));
        assert!((0..8).all(|s| c.apply(s) == s));
        assert_eq!(operator_to_family(&top(3)).unwrap().sets(), &[0b111]);
        assert_eq!(operator_to_family(&bottom(3)).unwrap().size(), 8);
    }

    #[test]
    fn least_member_above() {
        // carrier {1,2,3} as bits 0,1,2; closed sets {3},{1,3},{2,3},{1,2,3}
        let f = family(3, &[0b100, 0b101, 0b110, 0b111]);
        assert_eq!(family_to_operator(&f).apply(0b001), 0b101);
        assert_eq!(family_to_operator(&f).apply(0), 0b100);
    }

    #[test]
    fn family_validation() {
        assert_eq!(IntersectionFamily::new(2, [0b01]), Err(ClosureError::MissingTop));
        assert!(matches!(
            IntersectionFamily::new(2, [0b01, 0b10, 0b11]),
            Err(ClosureError::NotIntersectionClosed { .. })
        ));
        assert_eq!(
            IntersectionFamily::new(2, [0b111]),
            Err(ClosureError::OutOfCarrier(0b111))
        );
        let g = IntersectionFamily::generated_by(2, [0b01, 0b10]).unwrap();
        assert_eq!(g.sets(), &[0, 1, 2, 3]);
    }

    #[test]
    fn small_moore_counts() {
        assert_eq!(enumerate_moore_families(0).unwrap().len(), 1);
        let one = enumerate_moore_families(1).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(enumerate_moore_families(2).unwrap().len(), 7);
        assert!(enumerate_moore_families(6).is_err());
    }

    #[test]
    fn hull_of_a_chain_step() {
        // E(S) = S ∪ {2 if 1 ∈ S} ∪ {3 if 2 ∈ S} on {1,2,3}
        let e = Operator::from_fn(3, Arity::Omega, |s| {
            let mut t = s;
            if s & 1 != 0 {
                t |= 2;
            }
            if s & 2 != 0 {
                t |= 4;
            }
            t
        });
        assert!(!is_idempotent(&e));
        let h = idempotent_hull(&e);
        assert_eq!(h.apply(0b001), 0b111);
        assert_eq!(hull_iterate(&e, 0b001), (0b111, 2));
        assert!(is_closure_operator(&h).is_closure());
    }

    #[test]
    fn kary_part_small_cases() {
        let c = family_to_operator(&family(3, &[0b011, 0b111]));
        let omega = kary_part(&c, Arity::Omega);
        assert!(omega.same_map(&c));
        let one = kary_part(&c, Arity::Finite(1));
        assert_eq!(one.apply(0), 0b011);
        assert_eq!(one.apply(0b100), 0b111);
        // every element alone is closed under the 1-ary part of c_⊥
        let b = kary_part(&bottom(3), Arity::Finite(1));
        assert!((0..8).all(|s| b.apply(s) == s));
    }

    #[test]
    fn lattice_units() {
        let c = family_to_operator(&family(3, &[0b001, 0b011, 0b111]));
        let bot = bottom(3);
        let t = top(3);
        assert!(meet(&[t.clone(), bot.clone()], Arity::Omega).unwrap().same_map(&bot));
        assert!(meet(&[c.clone(), c.clone()], Arity::Omega).unwrap().same_map(&c));
        assert!(join_general(&[c.clone(), bot.clone()], Arity::Omega)
            .unwrap()
            .same_map(&c));
        assert!(join_general(&[t.clone(), c.clone()], Arity::Omega)
            .unwrap()
            .same_map(&t));
        assert!(join_directed(&[c.clone(), bot], Arity::Omega).unwrap().same_map(&c));
        assert_eq!(meet(&[], Arity::Omega).unwrap_err(), ClosureError::EmptyFamily);
        assert!(matches!(
            meet(&[top(2), top(3)], Arity::Omega),
            Err(ClosureError::MismatchedCarriers(2, 3))
        ));
    }

    #[test]
    fn join_directed_rejects_incomparable_pairs() {
        let a = family_to_operator(&family(2, &[0b01, 0b11]));
        let b = family_to_operator(&family(2, &[0b10, 0b11]));
        assert_eq!(
            join_directed(&[a, b], Arity::Omega).unwrap_err(),
            ClosureError::NotDirected(0, 1)
        );
    }

    #[test]
    fn closure_report_witnesses() {
        let not_inflationary = Operator::from_fn(2, Arity::Omega, |_| 0);
        let r = is_closure_operator(&not_inflationary);
        assert_eq!(r.inflationary, Some(0b01));
        let not_monotone = Operator::from_fn(3, Arity::Omega, |s| if s == 0b001 { 0b011 } else { s });
        let r = is_closure_operator(&not_monotone);
        assert_eq!(r.inflationary, None);
        assert_eq!(r.monotone, Some((0b001, 0b101)));
        assert!(is_closure_operator(&bottom(4)).is_closure());
    }

    #[test]
    fn sampled_checks_on_large_carriers() {
        let c = bottom(40);
        let r = is_closure_operator(&c);
        assert!(!r.exhaustive);
        assert_eq!(r.subsets_checked, DEFAULT_SAMPLES);
        assert!(r.is_closure());
    }

    #[test]
    fn arity_parsing() {
        assert_eq!("omega".parse::<Arity>(), Ok(Arity::Omega));
        assert_eq!("3".parse::<Arity>(), Ok(Arity::Finite(3)));
        assert!("0".parse::<Arity>().is_err());
        assert!(Arity::Finite(3).admits(2));
        assert!(!Arity::Finite(3).admits(3));
    }

    #[test]
    fn submask_enumeration() {
        let mut subs: Vec<Mask> = submasks(0b101).collect();
        subs.sort_unstable();
        assert_eq!(subs, [0, 1, 4, 5]);
    }
}
