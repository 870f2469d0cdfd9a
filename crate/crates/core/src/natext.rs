//! Extensions of a logic over variables `X` to a larger variable set `Y`.
//!
//! Four relations on `Fm(Y)` are built from a base logic on `Fm(X)`:
//!
//! * [`ExtensionKind::LosSuszko`]: move `Γ' ∪ {φ}` into `Fm(X)` by a
//!   permutation of `Y` and ask the base logic;
//! * [`ExtensionKind::ShoesmithSmiley`]: `φ` and part of `Γ` are a
//!   substitution instance of a base consequence;
//! * [`ExtensionKind::Minus`]: the rule schemes read over `Y`;
//! * [`ExtensionKind::Plus`]: every substitution into `Fm(X)` yields a base
//!   consequence, followed by the n-ary part.
//!
//! Each has a per-query decision procedure that works for any signature and,
//! for constants-only signatures, an exact table on `Fm(Y)`.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;
use std::sync::Arc;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closure::{self, bits, full_mask, Arity, ClosureError, ClosureReport, FamilySearch, Mask, Operator};
use crate::logic::{
    derive, format_presentation, image, is_conservative_extension, kary_part_of_logic, parse_presentation, preimage,
    saturate, structural_closure, BoundHit, Consequence, ConservativityWitness, CutWitness, Derivation, FiniteRelation,
    GroundSystem, LogicError, PairWitness, Presentation, Refutation, Rule, SearchBounds, StructuralityWitness,
    Universe, Verdict, Witness,
};
use crate::term::{
    enumerate_formulas, enumerate_substitutions, parse_formula, Formula, Odometer, Op, Signature, Substitution, Var,
    VarSet,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NatextError {
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Closure(#[from] ClosureError),
    #[error("the two computations of the minimal extension disagree at premises {premises:?}, goal {goal}")]
    RouteDisagreement { premises: Vec<String>, goal: String },
    #[error("{0}")]
    Unsupported(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl From<crate::term::TermError> for NatextError {
    fn from(e: crate::term::TermError) -> Self {
        NatextError::Logic(e.into())
    }
}

/// A base logic over `X` and a target variable set `Y` extending `X`.
#[derive(Debug, Clone)]
pub struct ExtensionProblem {
    base: Presentation,
    extended: Presentation,
}

impl ExtensionProblem {
    pub fn new(base: Presentation, target: VarSet) -> Result<Self, NatextError> {
        let extended = base.with_vars(&target)?;
        Ok(ExtensionProblem { base, extended })
    }

    /// Extends the base variables by `extra` fresh variables named `y`, `z`,
    /// `y1`, `y2`, … (skipping names already in use).
    pub fn with_fresh_vars(base: Presentation, extra: usize) -> Result<Self, NatextError> {
        let mut names = Vec::new();
        let taken = |n: &str| base.vars().lookup(n).is_some() || base.sig().lookup(n).is_some();
        let candidates = ["y".to_string(), "z".to_string()]
            .into_iter()
            .chain((1..).map(|i| format!("y{i}")));
        for c in candidates {
            if names.len() == extra {
                break;
            }
            if !taken(&c) {
                names.push(c);
            }
        }
        let target = base.vars().extend(names)?;
        ExtensionProblem::new(base, target)
    }

    pub fn base(&self) -> &Presentation {
        &self.base
    }

    /// The base rule schemes over `Y`.
    pub fn extended(&self) -> &Presentation {
        &self.extended
    }

    pub fn x(&self) -> &VarSet {
        self.base.vars()
    }

    pub fn y(&self) -> &VarSet {
        self.extended.vars()
    }

    pub fn sig(&self) -> &Signature {
        self.base.sig()
    }

    pub fn is_exact(&self) -> bool {
        self.base.is_constants_only()
    }
}

fn collect_verdict(unknown: Option<BoundHit>) -> Verdict {
    match unknown {
        Some(b) => Verdict::Unknown(b),
        None => Verdict::No(Refutation::Exhaustive),
    }
}

/// Permutations of `Y` as substitutions, identity first.
pub fn permutations(y: &VarSet) -> Vec<Substitution> {
    let vars: Vec<Var> = y.vars().collect();
    vars.iter()
        .copied()
        .permutations(vars.len())
        .map(|p| Substitution::from_pairs(vars.iter().zip(p).map(|(v, w)| (*v, Formula::Var(w)))))
        .collect()
}

/// `Γ ⊢^ŁS φ`: some permutation `π` of `Y` and `Γ' ⊆ Γ` have
/// `π(Γ' ∪ {φ}) ⊆ Fm(X)` and `π(Γ') ⊢ π(φ)` in the base logic. By
/// monotonicity `Γ'` is taken as large as possible.
pub fn los_suszko(p: &ExtensionProblem, gamma: &BTreeSet<Formula>, phi: &Formula) -> Verdict {
    let x = p.x();
    let mut unknown = None;
    for pi in permutations(p.y()) {
        let goal = pi.apply(phi);
        if !goal.is_over(x) {
            continue;
        }
        let kept: Vec<Formula> = gamma.iter().filter(|g| pi.apply(g).is_over(x)).cloned().collect();
        let moved: BTreeSet<Formula> = kept.iter().map(|g| pi.apply(g)).collect();
        match derive(&p.base, &moved, &goal) {
            Verdict::Yes(Witness::Derivation(d)) => {
                let used = d.leaves();
                let premises = kept.into_iter().filter(|g| used.contains(&pi.apply(g))).collect();
                return Verdict::Yes(Witness::Permutation {
                    pi,
                    premises,
                    derivation: d,
                });
            }
            Verdict::Yes(_) => unreachable!("derive answers with derivations"),
            Verdict::Unknown(b) => {
                unknown.get_or_insert(b);
            }
            Verdict::No(_) => {}
        }
    }
    collect_verdict(unknown)
}

/// All `s ∈ Fm(X)` with `v(s) = t`, where `v` is given on `X` by
/// `images`.
fn anti_instances(t: &Formula, x: &[Var], images: &[&Formula]) -> Vec<Formula> {
    let mut out: Vec<Formula> = x
        .iter()
        .zip(images)
        .filter(|(_, img)| **img == t)
        .map(|(v, _)| Formula::Var(*v))
        .collect();
    if let Formula::App(op, args) = t {
        let parts: Vec<Vec<Formula>> = args.iter().map(|a| anti_instances(a, x, images)).collect();
        if parts.iter().all(|p| !p.is_empty()) {
            for combo in parts.into_iter().multi_cartesian_product() {
                out.push(Formula::app(*op, combo));
            }
            if args.is_empty() {
                out.push(Formula::constant(*op));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// `Γ ⊢^SS φ`: some `v: X → Fm(Y)` and base consequence `Γ' ⊢ φ'` have
/// `v(Γ') ⊆ Γ` and `v(φ') = φ`.
///
/// Only subterms of `Γ ∪ {φ}` are useful values for `v`: a variable mapped
/// elsewhere occurs in no candidate `Γ'` or `φ'`, and sending it to a
/// subterm instead only adds candidates. For each `v` the largest `Γ'` is
/// the set of anti-instances of members of `Γ`.
pub fn shoesmith_smiley(p: &ExtensionProblem, gamma: &BTreeSet<Formula>, phi: &Formula) -> Verdict {
    let x: Vec<Var> = p.x().vars().collect();
    let mut subterms: BTreeSet<Formula> = phi.subterms();
    gamma.iter().for_each(|g| subterms.extend(g.subterms()));
    let subterms: Vec<Formula> = subterms.into_iter().collect();
    let mut unknown = None;
    for digits in Odometer::new(x.len(), subterms.len()) {
        let images: Vec<&Formula> = digits.iter().map(|&d| &subterms[d]).collect();
        let goals = anti_instances(phi, &x, &images);
        if goals.is_empty() {
            continue;
        }
        let premises: BTreeSet<Formula> = gamma.iter().flat_map(|g| anti_instances(g, &x, &images)).collect();
        let v = Substitution::from_pairs(x.iter().zip(&images).map(|(v, f)| (*v, (*f).clone())));
        let sat = saturate(&p.base, &premises, None);
        if let Some(goal) = goals.iter().find(|g| sat.contains(g)) {
            let derivation = sat.derivation(goal).expect("contained");
            return Verdict::Yes(Witness::Instance {
                v,
                premises: derivation.leaves().into_iter().collect(),
                goal: goal.clone(),
                derivation,
            });
        }
        if let Some(b) = sat.bound {
            unknown.get_or_insert(b);
        }
    }
    collect_verdict(unknown)
}

/// `Γ ⊢⁻ φ`: saturation of the rule schemes over `Y`.
pub fn minus_query(p: &ExtensionProblem, gamma: &BTreeSet<Formula>, phi: &Formula) -> Verdict {
    derive(&p.extended, gamma, phi)
}

/// `Γ ⊢⁺ φ` before taking the n-ary part: `σΓ ⊢ σφ` in the base logic for
/// every `σ: Y → Fm(X)`. The substitution space is finite, and enumerated
/// completely, only for constants-only signatures; otherwise images range
/// over formulas up to the search depth and success is only "likely".
pub fn plus_query(p: &ExtensionProblem, gamma: &BTreeSet<Formula>, phi: &Formula) -> Verdict {
    let exact = p.is_exact();
    let depth = if exact { 0 } else { p.base.bounds().max_depth };
    let codomain = enumerate_formulas(p.sig(), p.x(), depth);
    let y: Vec<Var> = p.y().vars().collect();
    let mut unknown = None;
    let mut checked = 0;
    for sigma in enumerate_substitutions(&y, &codomain) {
        let moved: BTreeSet<Formula> = gamma.iter().map(|g| sigma.apply(g)).collect();
        checked += 1;
        match derive(&p.base, &moved, &sigma.apply(phi)) {
            Verdict::No(_) => return Verdict::No(Refutation::CounterSubstitution(sigma)),
            Verdict::Unknown(b) => {
                unknown.get_or_insert(b);
            }
            Verdict::Yes(_) => {}
        }
    }
    match (unknown, exact) {
        (None, true) => Verdict::Yes(Witness::AllSubstitutions { checked }),
        (None, false) => Verdict::Unknown(BoundHit::SubstitutionSpace {
            limit: depth,
            checked,
            all_yes: true,
        }),
        (Some(_), true) => unreachable!("constants-only saturation is exact"),
        (Some(_), false) => Verdict::Unknown(BoundHit::SubstitutionSpace {
            limit: depth,
            checked,
            all_yes: false,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtensionKind {
    LosSuszko,
    ShoesmithSmiley,
    Minus,
    Plus(Arity),
}

impl fmt::Display for ExtensionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtensionKind::LosSuszko => f.write_str("ls"),
            ExtensionKind::ShoesmithSmiley => f.write_str("ss"),
            ExtensionKind::Minus => f.write_str("minus"),
            ExtensionKind::Plus(n) => write!(f, "plus[{n}]"),
        }
    }
}

/// One of the four relations as a query interface on `Fm(Y)`.
#[derive(Debug, Clone)]
pub struct ExtensionRelation {
    pub kind: ExtensionKind,
    pub problem: Arc<ExtensionProblem>,
}

struct PlusOmega<'a>(&'a ExtensionProblem);

impl Consequence for PlusOmega<'_> {
    fn query(&self, gamma: &BTreeSet<Formula>, phi: &Formula) -> Verdict {
        plus_query(self.0, gamma, phi)
    }

    fn arity(&self) -> Arity {
        Arity::Omega
    }
}

impl Consequence for ExtensionRelation {
    fn query(&self, gamma: &BTreeSet<Formula>, phi: &Formula) -> Verdict {
        let p = &*self.problem;
        match self.kind {
            ExtensionKind::LosSuszko => los_suszko(p, gamma, phi),
            ExtensionKind::ShoesmithSmiley => shoesmith_smiley(p, gamma, phi),
            ExtensionKind::Minus => minus_query(p, gamma, phi),
            ExtensionKind::Plus(n) => kary_part_of_logic(PlusOmega(p), n).query(gamma, phi),
        }
    }

    fn arity(&self) -> Arity {
        match self.kind {
            ExtensionKind::Plus(n) => n,
            _ => Arity::Omega,
        }
    }
}

/// Every relation of a constants-only problem, tabulated.
#[derive(Debug, Clone)]
pub struct ExactTables {
    pub ux: Arc<Universe>,
    pub uy: Arc<Universe>,
    /// The base logic on `Fm(X)`.
    pub base: FiniteRelation,
    /// Arity profile of the base logic, used as `n` for `⊢⁺_n`.
    pub n: usize,
    pub ls: FiniteRelation,
    pub ss: FiniteRelation,
    /// `⊢⁻` by saturating the rule schemes over `Y`.
    pub minus: FiniteRelation,
    /// `⊢⁻` as the idempotent hull of `⊢^SS`.
    pub minus_hull: FiniteRelation,
    /// `⊢⁺` before the n-ary part.
    pub plus_omega: FiniteRelation,
    pub plus: FiniteRelation,
}

impl ExactTables {
    pub fn compute(p: &ExtensionProblem) -> Result<Self, NatextError> {
        if !p.is_exact() {
            return Err(LogicError::NotConstantsOnly.into());
        }
        let ux = Arc::new(Universe::new(p.sig(), p.x())?);
        let uy = Arc::new(Universe::new(p.sig(), p.y())?);
        // Constants come first and X is a prefix of Y, so Fm(X) occupies the
        // low bits of Fm(Y).
        let x_mask = uy.embed_mask(&ux)?;
        assert_eq!(x_mask, full_mask(ux.len()));
        let base = GroundSystem::on(&p.base, ux.clone()).relation()?;
        let n = base.arity_profile().expect("closure operators are reflexive");
        let ls = ls_table(&base, &uy);
        let ss = ss_table(&base, &ux, &uy);
        let minus = GroundSystem::on(&p.extended, uy.clone()).relation()?;
        let minus_hull = FiniteRelation::from_operator(uy.clone(), &closure::idempotent_hull(&ss.operator()))?;
        let plus_omega = plus_table(&base, &ux, &uy);
        let plus = plus_omega.kary_part(Arity::Finite(n));
        Ok(ExactTables {
            ux,
            uy,
            base,
            n,
            ls,
            ss,
            minus,
            minus_hull,
            plus_omega,
            plus,
        })
    }

    pub fn relation(&self, kind: ExtensionKind) -> FiniteRelation {
        match kind {
            ExtensionKind::LosSuszko => self.ls.clone(),
            ExtensionKind::ShoesmithSmiley => self.ss.clone(),
            ExtensionKind::Minus => self.minus.clone(),
            ExtensionKind::Plus(Arity::Finite(n)) if n == self.n => self.plus.clone(),
            ExtensionKind::Plus(n) => self.plus_omega.kary_part(n),
        }
    }
}

/// Element maps of the permutations of `Y` on `Fm(Y)`.
fn permutation_maps(uy: &Universe) -> Vec<Vec<usize>> {
    permutations(uy.vars())
        .into_iter()
        .map(|pi| {
            uy.formulas()
                .iter()
                .map(|f| uy.index_of(&pi.apply(f)).expect("permutations stay inside"))
                .collect()
        })
        .collect()
}

/// `Γ ↦ ⋃_π π⁻¹(C(π(Γ) ∩ Fm(X)))`.
fn ls_table(base: &FiniteRelation, uy: &Arc<Universe>) -> FiniteRelation {
    let x_mask = full_mask(base.universe().len());
    let perms = permutation_maps(uy);
    let table = (0..1u64 << uy.len())
        .into_par_iter()
        .map(|g| {
            perms.iter().fold(0, |acc, pi| {
                let moved = image(pi, g) & x_mask;
                acc | preimage(pi, base.consequences(moved))
            })
        })
        .collect();
    FiniteRelation::new(uy.clone(), table)
}

/// `Γ ↦ ⋃_v v(C(v⁻¹(Γ)))` over `v: X → Fm(Y)`.
fn ss_table(base: &FiniteRelation, ux: &Universe, uy: &Arc<Universe>) -> FiniteRelation {
    let maps: Vec<Vec<usize>> = ux.maps_into(uy).into_iter().map(|(_, m)| m).collect();
    let table = (0..1u64 << uy.len())
        .into_par_iter()
        .map(|g| {
            maps.iter()
                .fold(0, |acc, v| acc | image(v, base.consequences(preimage(v, g))))
        })
        .collect();
    FiniteRelation::new(uy.clone(), table)
}

/// `Γ ↦ ⋂_σ σ⁻¹(C(σ(Γ)))` over `σ: Y → Fm(X)`.
fn plus_table(base: &FiniteRelation, ux: &Arc<Universe>, uy: &Arc<Universe>) -> FiniteRelation {
    let maps: Vec<Vec<usize>> = uy.maps_into(ux).into_iter().map(|(_, m)| m).collect();
    let full = uy.full();
    let table = (0..1u64 << uy.len())
        .into_par_iter()
        .map(|g| {
            maps.iter()
                .fold(full, |acc, s| acc & preimage(s, base.consequences(image(s, g))))
        })
        .collect();
    FiniteRelation::new(uy.clone(), table)
}

/// `⊢^SS` as a monotone operator on `Fm(Y)`, for hull computations.
pub fn ss_operator(p: &ExtensionProblem) -> Result<Operator, NatextError> {
    Ok(ExactTables::compute(p)?.ss.operator())
}

fn render_pair(rel: &FiniteRelation, w: PairWitness) -> (Vec<String>, String) {
    rel.render_pair(w)
}

/// `⊢⁻`, computed by saturation over `Y` and as the idempotent hull of
/// `⊢^SS`; the two must agree.
pub fn minus_extension(p: &ExtensionProblem) -> Result<FiniteRelation, NatextError> {
    let t = ExactTables::compute(p)?;
    if let Some(w) = t.minus.diff_witness(&t.minus_hull)? {
        let (premises, goal) = render_pair(&t.minus, w);
        return Err(NatextError::RouteDisagreement { premises, goal });
    }
    Ok(t.minus)
}

/// `⊢⁺_n` with `n` the arity profile of the base logic.
pub fn plus_extension(p: &ExtensionProblem) -> Result<FiniteRelation, NatextError> {
    Ok(ExactTables::compute(p)?.plus)
}

/// A named comparison with its first counterexample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub holds: bool,
    pub witness: Option<PairView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairView {
    pub premises: Vec<String>,
    pub goal: String,
}

impl PairView {
    pub fn of(u: &Universe, w: PairWitness) -> Self {
        PairView {
            premises: u.names(w.premises),
            goal: u.name(w.goal),
        }
    }
}

fn line(name: &str, u: &Universe, w: Option<PairWitness>) -> CheckLine {
    CheckLine {
        name: name.to_string(),
        holds: w.is_none(),
        witness: w.map(|w| PairView::of(u, w)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainReport {
    pub universe: Vec<String>,
    /// Arity profile of the base logic; `⊢⁺` is cut to this arity.
    pub n: usize,
    pub pairs_checked: usize,
    pub checks: Vec<CheckLine>,
}

impl ChainReport {
    pub fn holds(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Compares the four relations on every `(Γ, φ)` over `Fm(Y)`.
pub fn check_chain(p: &ExtensionProblem) -> Result<ChainReport, NatextError> {
    let t = ExactTables::compute(p)?;
    Ok(chain_report(&t))
}

pub fn chain_report(t: &ExactTables) -> ChainReport {
    let u = &t.uy;
    let sub = |a: &FiniteRelation, b: &FiniteRelation| a.subset_witness(b).expect("same universe");
    let eq = |a: &FiniteRelation, b: &FiniteRelation| a.diff_witness(b).expect("same universe");
    let checks = vec![
        line("ls <= ss", u, sub(&t.ls, &t.ss)),
        line("ss <= minus", u, sub(&t.ss, &t.minus)),
        line("minus <= plus", u, sub(&t.minus, &t.plus)),
        line("ss = structural_closure(ls)", u, eq(&t.ss, &structural_closure(&t.ls))),
        line("minus = idempotent_hull(ss)", u, eq(&t.minus, &t.minus_hull)),
    ];
    ChainReport {
        universe: (0..u.len()).map(|i| u.name(i)).collect(),
        n: t.n,
        pairs_checked: (1usize << u.len()) * u.len(),
        checks,
    }
}

/// Conservativity, arity profile, closure laws and structurality of a
/// candidate extension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaturalityReport {
    pub conservative: Option<ConservativityWitness>,
    pub base_arity: usize,
    pub arity: Option<usize>,
    pub closure: ClosureReport,
    pub structural: Option<StructuralityWitness>,
}

impl NaturalityReport {
    pub fn holds(&self) -> bool {
        self.conservative.is_none()
            && self.arity == Some(self.base_arity)
            && self.closure.is_closure()
            && self.structural.is_none()
    }
}

pub fn is_natural_extension(base: &FiniteRelation, rel: &FiniteRelation) -> Result<NaturalityReport, NatextError> {
    Ok(NaturalityReport {
        conservative: is_conservative_extension(base, rel)?,
        base_arity: base.arity_profile().expect("closure operators are reflexive"),
        arity: rel.arity_profile(),
        closure: rel.closure_report(),
        structural: rel.structurality_witness(),
    })
}

/// `⋃_{S' ⊆ S, |S'| < n} ⋂{T ⊇ S' : T closed under every member}`.
pub fn natext_sup(family: &[FiniteRelation], n: Arity) -> Result<FiniteRelation, NatextError> {
    let first = family.first().ok_or(ClosureError::EmptyFamily)?;
    let ops: Vec<Operator> = family.iter().map(FiniteRelation::operator).collect();
    let op = closure::join_general(&ops, n)?;
    Ok(FiniteRelation::from_operator(first.universe().clone(), &op)?)
}

/// Largest `Fm(Y)` enumerated over all Moore families.
pub const EXHAUSTIVE_NATEXT_UNIVERSE: usize = 5;
/// Largest `Fm(Y)` for the interval search.
pub const INTERVAL_NATEXT_UNIVERSE: usize = closure::MAX_FAMILY_SEARCH_CARRIER;
/// Candidate families examined before the interval search gives up.
pub const INTERVAL_FAMILY_LIMIT: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnumerationMode {
    /// Every structural closure system on `Fm(Y)` was examined.
    Exhaustive,
    /// Only closure systems between those of `⊢⁺_n` and `⊢⁻` were examined.
    Interval,
}

/// The natural extensions found on an instance, ordered by strength.
#[derive(Debug, Clone)]
pub struct NatextLattice {
    pub universe: Arc<Universe>,
    pub n: usize,
    pub mode: EnumerationMode,
    /// False when the search stopped at its limit.
    pub complete: bool,
    /// Members, weakest first.
    pub members: Vec<FiniteRelation>,
    /// `leq[i][j]`: member `i` is contained in member `j`.
    pub leq: Vec<Vec<bool>>,
    pub meet: Vec<Vec<Option<usize>>>,
    pub join: Vec<Vec<Option<usize>>>,
    /// `sup_matches[i][j]`: the sup formula applied to `{i, j}` gives `join[i][j]`.
    pub sup_matches: Vec<Vec<bool>>,
    pub minus: Option<usize>,
    pub plus: Option<usize>,
}

fn greatest(candidates: &[usize], leq: &[Vec<bool>]) -> Option<usize> {
    candidates
        .iter()
        .copied()
        .find(|&c| candidates.iter().all(|&d| leq[d][c]))
}

fn least(candidates: &[usize], leq: &[Vec<bool>]) -> Option<usize> {
    candidates
        .iter()
        .copied()
        .find(|&c| candidates.iter().all(|&d| leq[c][d]))
}

impl NatextLattice {
    fn build(
        universe: Arc<Universe>,
        n: usize,
        mode: EnumerationMode,
        complete: bool,
        mut members: Vec<FiniteRelation>,
        minus: &FiniteRelation,
        plus: &FiniteRelation,
    ) -> Result<Self, NatextError> {
        members.sort_by(|a, b| {
            b.theories()
                .len()
                .cmp(&a.theories().len())
                .then_with(|| a.table().cmp(b.table()))
        });
        let k = members.len();
        let leq: Vec<Vec<bool>> = (0..k)
            .map(|i| (0..k).map(|j| members[i].is_subrelation_of(&members[j])).collect())
            .collect();
        let mut meet = vec![vec![None; k]; k];
        let mut join = vec![vec![None; k]; k];
        let mut sup_matches = vec![vec![false; k]; k];
        for i in 0..k {
            for j in 0..k {
                let lower: Vec<usize> = (0..k).filter(|&c| leq[c][i] && leq[c][j]).collect();
                let upper: Vec<usize> = (0..k).filter(|&c| leq[i][c] && leq[j][c]).collect();
                meet[i][j] = greatest(&lower, &leq);
                join[i][j] = least(&upper, &leq);
                let sup = natext_sup(&[members[i].clone(), members[j].clone()], Arity::Finite(n))?;
                sup_matches[i][j] = join[i][j].is_some_and(|m| members[m] == sup);
            }
        }
        let find = |r: &FiniteRelation| members.iter().position(|m| m == r);
        let minus = find(minus);
        let plus = find(plus);
        Ok(NatextLattice {
            universe,
            n,
            mode,
            complete,
            members,
            leq,
            meet,
            join,
            sup_matches,
            minus,
            plus,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn bottom(&self) -> Option<usize> {
        least(&(0..self.len()).collect::<Vec<_>>(), &self.leq)
    }

    pub fn top(&self) -> Option<usize> {
        greatest(&(0..self.len()).collect::<Vec<_>>(), &self.leq)
    }

    /// Covering pairs `(i, j)`: `i < j` with nothing strictly between.
    pub fn hasse_edges(&self) -> Vec<(usize, usize)> {
        let k = self.len();
        let lt = |i: usize, j: usize| i != j && self.leq[i][j];
        let mut out = Vec::new();
        for i in 0..k {
            for j in 0..k {
                if lt(i, j) && !(0..k).any(|m| lt(i, m) && lt(m, j)) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Every pair has a meet and a join in the set, joins agree with the sup
    /// formula, and `⊢⁻`/`⊢⁺_n` are the bottom and top.
    pub fn defects(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            for j in 0..self.len() {
                if self.meet[i][j].is_none() {
                    out.push(format!("members {i} and {j} have no meet"));
                }
                if self.join[i][j].is_none() {
                    out.push(format!("members {i} and {j} have no join"));
                } else if !self.sup_matches[i][j] {
                    out.push(format!("sup formula for members {i} and {j} differs from their join"));
                }
            }
        }
        if self.minus.is_none() || self.minus != self.bottom() {
            out.push("minimal extension is not the bottom".into());
        }
        if self.plus.is_none() || self.plus != self.top() {
            out.push("maximal extension is not the top".into());
        }
        out
    }

    pub fn label(&self, i: usize) -> String {
        let mut tags = Vec::new();
        if self.minus == Some(i) {
            tags.push("⊢⁻");
        }
        if self.plus == Some(i) {
            tags.push("⊢⁺");
        }
        if tags.is_empty() {
            format!("E{i}")
        } else {
            format!("E{i} {}", tags.join(" = "))
        }
    }

    /// Graphviz rendering of the Hasse diagram, weakest at the bottom.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph natural_extensions {\n  rankdir=BT;\n  node [shape=box];\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "  n{i} [label=\"{}\\n{} theories\"];\n",
                self.label(i),
                self.members[i].theories().len()
            ));
        }
        for (i, j) in self.hasse_edges() {
            out.push_str(&format!("  n{i} -> n{j};\n"));
        }
        out.push_str("}\n");
        out
    }

    pub fn view(&self) -> LatticeView {
        LatticeView {
            universe: (0..self.universe.len()).map(|i| self.universe.name(i)).collect(),
            n: self.n,
            mode: self.mode,
            complete: self.complete,
            members: (0..self.len())
                .map(|i| MemberView {
                    label: self.label(i),
                    theories: self.members[i].theories(),
                })
                .collect(),
            minus: self.minus,
            plus: self.plus,
            leq: self.leq.clone(),
            meet: self.meet.clone(),
            join: self.join.clone(),
            hasse: self.hasse_edges(),
        }
    }
}

/// Serializable form of a [`NatextLattice`]: each member is given by its
/// theories (as bit masks over `universe`), and the order and lattice
/// tables are stored alongside for re-verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeView {
    pub universe: Vec<String>,
    pub n: usize,
    pub mode: EnumerationMode,
    pub complete: bool,
    pub members: Vec<MemberView>,
    pub minus: Option<usize>,
    pub plus: Option<usize>,
    pub leq: Vec<Vec<bool>>,
    pub meet: Vec<Vec<Option<usize>>>,
    pub join: Vec<Vec<Option<usize>>>,
    pub hasse: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberView {
    pub label: String,
    pub theories: Vec<Mask>,
}

impl LatticeView {
    /// Rebuilds every member from its theories and recomputes the order,
    /// meet and join tables; returns the first mismatch.
    pub fn verify(&self) -> Result<(), String> {
        let len = self.universe.len();
        if len > closure::MAX_TABULATED {
            return Err(format!("universe of {len} elements is too large"));
        }
        let ops: Vec<Vec<Mask>> = self
            .members
            .iter()
            .enumerate()
            .map(|(i, m)| {
                closure::IntersectionFamily::new(len, m.theories.iter().copied())
                    .map(|f| closure::family_table(len, f.sets()))
                    .map_err(|e| format!("member {i}: {e}"))
            })
            .collect::<Result<_, _>>()?;
        let k = ops.len();
        let leq: Vec<Vec<bool>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| ops[i].iter().zip(&ops[j]).all(|(a, b)| a & !b == 0))
                    .collect()
            })
            .collect();
        if leq != self.leq {
            return Err("order table does not match the members".into());
        }
        for i in 0..k {
            for j in 0..k {
                let lower: Vec<usize> = (0..k).filter(|&c| leq[c][i] && leq[c][j]).collect();
                let upper: Vec<usize> = (0..k).filter(|&c| leq[i][c] && leq[j][c]).collect();
                if greatest(&lower, &leq) != self.meet[i][j] {
                    return Err(format!("meet of {i} and {j} does not match"));
                }
                if least(&upper, &leq) != self.join[i][j] {
                    return Err(format!("join of {i} and {j} does not match"));
                }
            }
        }
        Ok(())
    }
}

/// All natural extensions of a constants-only base logic to `Y`, up to the
/// size limits: exhaustively over structural closure systems when `Fm(Y)`
/// has at most [`EXHAUSTIVE_NATEXT_UNIVERSE`] elements, otherwise over the
/// interval between `⊢⁺_n` and `⊢⁻`.
pub fn enumerate_natural_extensions(p: &ExtensionProblem) -> Result<NatextLattice, NatextError> {
    let t = ExactTables::compute(p)?;
    enumerate_from_tables(&t)
}

pub fn enumerate_from_tables(t: &ExactTables) -> Result<NatextLattice, NatextError> {
    let len = t.uy.len();
    let endo_maps: Vec<Vec<usize>> = t.uy.endomorphisms().into_iter().map(|(_, m)| m).collect();
    let (mode, required, allowed) = if len <= EXHAUSTIVE_NATEXT_UNIVERSE {
        (EnumerationMode::Exhaustive, Vec::new(), None)
    } else if len <= INTERVAL_NATEXT_UNIVERSE {
        let allowed: BTreeSet<Mask> = t.minus.theories().into_iter().collect();
        (EnumerationMode::Interval, t.plus.theories(), Some(allowed))
    } else {
        return Err(NatextError::Unsupported(format!(
            "Fm(Y) has {len} elements; natural extensions are enumerated up to {INTERVAL_NATEXT_UNIVERSE}"
        )));
    };
    let allowed_fn = allowed.map(|set| move |s: Mask| set.contains(&s));
    let allowed_ref: Option<&(dyn Fn(Mask) -> bool + Sync)> =
        allowed_fn.as_ref().map(|f| f as &(dyn Fn(Mask) -> bool + Sync));
    let spec = FamilySearch {
        len,
        required,
        allowed: allowed_ref,
        preimage_maps: endo_maps,
    };
    let mut families: Vec<Vec<Mask>> = Vec::new();
    let outcome = closure::search_families(&spec, |members| {
        families.push(members.to_vec());
        if families.len() >= INTERVAL_FAMILY_LIMIT {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    let members: Vec<FiniteRelation> = families
        .par_iter()
        .map(|sets| FiniteRelation::new(t.uy.clone(), closure::family_table(len, sets)))
        .filter(|rel| matches!(is_conservative_extension(&t.base, rel), Ok(None)) && rel.arity_profile() == Some(t.n))
        .collect();
    NatextLattice::build(t.uy.clone(), t.n, mode, outcome.complete, members, &t.minus, &t.plus)
}

/// The properties [`search_counterexample`] looks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    SsCutFailure,
    LsStructuralityFailure,
    MultipleNatexts,
}

impl Property {
    pub const ALL: [Property; 3] = [
        Property::SsCutFailure,
        Property::LsStructuralityFailure,
        Property::MultipleNatexts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::SsCutFailure => "ss-cut-failure",
            Property::LsStructuralityFailure => "ls-structurality-failure",
            Property::MultipleNatexts => "multiple-natexts",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Property::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown property `{s}`"))
    }
}

/// Bounds on the randomly generated presentations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub seed: u64,
    /// Number of candidate presentations examined.
    pub budget: usize,
    pub max_constants: usize,
    pub max_rules: usize,
    pub max_premises: usize,
    pub x_vars: usize,
    pub extra_vars: usize,
}

pub const DEFAULT_SEARCH_BUDGET: usize = 200;
pub const DEFAULT_SEARCH_SEED: u64 = 1;

impl SearchConfig {
    pub fn for_property(property: Property, seed: u64) -> Self {
        let base = SearchConfig {
            seed,
            budget: DEFAULT_SEARCH_BUDGET,
            max_constants: 2,
            max_rules: 3,
            max_premises: 2,
            x_vars: 1,
            extra_vars: 1,
        };
        match property {
            Property::SsCutFailure | Property::LsStructuralityFailure => base,
            // keeps Fm(Y) within the exhaustive enumeration limit
            Property::MultipleNatexts => SearchConfig {
                max_constants: 3,
                ..base
            },
        }
    }
}

/// The checkable content of a counterexample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Claim {
    /// `Γ ⊢^SS δ` for each lemma and `Γ ∪ lemmas ⊢^SS goal`, yet `Γ ⊬^SS goal`.
    SsCutFailure {
        premises: Vec<Formula>,
        lemmas: Vec<Formula>,
        goal: Formula,
    },
    /// `Γ ⊢^ŁS φ` but `σΓ ⊬^ŁS σφ`.
    LsStructurality {
        premises: Vec<Formula>,
        goal: Formula,
        sigma: Substitution,
    },
    /// The instance has exactly `count ≥ 2` natural extensions.
    MultipleNatexts { count: usize },
}

impl Claim {
    pub fn property(&self) -> Property {
        match self {
            Claim::SsCutFailure { .. } => Property::SsCutFailure,
            Claim::LsStructurality { .. } => Property::LsStructuralityFailure,
            Claim::MultipleNatexts { .. } => Property::MultipleNatexts,
        }
    }
}

/// A self-contained, replayable counterexample.
#[derive(Debug, Clone)]
pub struct CounterexampleWitness {
    pub problem: ExtensionProblem,
    pub claim: Claim,
    /// Position of the instance in the candidate sequence.
    pub candidate: usize,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub witness: Option<CounterexampleWitness>,
    pub candidates: usize,
}

fn constant_names(k: usize) -> Vec<String> {
    ["a", "b", "c", "d", "e"]
        .iter()
        .take(k)
        .map(|s| s.to_string())
        .collect()
}

fn var_names(prefix: &str, k: usize) -> Vec<String> {
    if k == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=k).map(|i| format!("{prefix}{i}")).collect()
    }
}

fn random_rules(
    rng: &mut ChaCha8Rng,
    pool: &[Formula],
    cfg: &SearchConfig,
    conclusions: &dyn Fn(&[Formula]) -> Vec<Formula>,
) -> Vec<Rule> {
    let count = rng.gen_range(1..=cfg.max_rules.max(1));
    (0..count)
        .filter_map(|_| {
            let k = rng.gen_range(0..=cfg.max_premises);
            let premises: Vec<Formula> = pool.choose_multiple(rng, k.min(pool.len())).cloned().collect();
            let options = conclusions(&premises);
            options.choose(rng).map(|c| Rule::new(premises, c.clone()))
        })
        .collect()
}

fn constants_only_candidate(rng: &mut ChaCha8Rng, cfg: &SearchConfig) -> Option<ExtensionProblem> {
    let k = rng.gen_range(1..=cfg.max_constants.max(1));
    let sig = Signature::new(constant_names(k).into_iter().map(|n| (n, 0))).ok()?;
    let x = VarSet::new(var_names("x", cfg.x_vars.max(1))).ok()?;
    let pool = enumerate_formulas(&sig, &x, 0);
    let rules = random_rules(rng, &pool, cfg, &|_| pool.clone());
    let base = Presentation::new(sig, x.clone(), rules, SearchBounds::default()).ok()?;
    let y = x.extend(var_names("y", cfg.extra_vars.max(1))).ok()?;
    ExtensionProblem::new(base, y).ok()
}

/// Constants plus one unary or binary connective `f`; rules are safe so
/// that base verdicts are exact.
fn connective_candidate(rng: &mut ChaCha8Rng, cfg: &SearchConfig) -> Option<ExtensionProblem> {
    let k = rng.gen_range(1..=cfg.max_constants.max(1));
    let arity = rng.gen_range(1..=2);
    let mut entries: Vec<(String, usize)> = constant_names(k).into_iter().map(|n| (n, 0)).collect();
    entries.push(("f".into(), arity));
    let sig = Signature::new(entries).ok()?;
    let x = VarSet::new(var_names("x", cfg.x_vars.max(1))).ok()?;
    let pool = enumerate_formulas(&sig, &x, 1);
    let atoms = enumerate_formulas(&sig, &x, 0);
    let conclusions = |premises: &[Formula]| -> Vec<Formula> {
        let mut bound = BTreeSet::new();
        premises.iter().for_each(|p| p.collect_vars(&mut bound));
        atoms.iter().filter(|a| a.vars().is_subset(&bound)).cloned().collect()
    };
    let rules = random_rules(rng, &pool, cfg, &conclusions);
    let base = Presentation::new(sig, x.clone(), rules, SearchBounds::default()).ok()?;
    if !base.rules_are_safe() {
        return None;
    }
    let y = x.extend(var_names("y", cfg.extra_vars.max(1))).ok()?;
    ExtensionProblem::new(base, y).ok()
}

fn find_ss_cut_failure(p: &ExtensionProblem) -> Option<Claim> {
    let t = ExactTables::compute(p).ok()?;
    let CutWitness { premises, lemmas, goal } = t.ss.cut_witness()?;
    let members = |m: Mask| bits(m).map(|i| t.uy.formula(i).clone()).collect();
    Some(Claim::SsCutFailure {
        premises: members(premises),
        lemmas: members(lemmas),
        goal: t.uy.formula(goal).clone(),
    })
}

fn find_ls_structurality_failure(p: &ExtensionProblem) -> Option<Claim> {
    let small = enumerate_formulas(p.sig(), p.y(), 1);
    let atoms = enumerate_formulas(p.sig(), p.y(), 0);
    let y: Vec<Var> = p.y().vars().collect();
    let substitutions = enumerate_substitutions(&y, &small);
    let premise_sets = std::iter::once(Vec::new()).chain(small.iter().map(|f| vec![f.clone()]));
    for premises in premise_sets {
        let gamma: BTreeSet<Formula> = premises.iter().cloned().collect();
        for goal in atoms.iter().filter(|a| !gamma.contains(*a)) {
            if !los_suszko(p, &gamma, goal).is_yes() {
                continue;
            }
            for sigma in &substitutions {
                let moved: BTreeSet<Formula> = gamma.iter().map(|g| sigma.apply(g)).collect();
                if los_suszko(p, &moved, &sigma.apply(goal)) == Verdict::No(Refutation::Exhaustive) {
                    return Some(Claim::LsStructurality {
                        premises,
                        goal: goal.clone(),
                        sigma: sigma.clone(),
                    });
                }
            }
        }
    }
    None
}

fn find_multiple_natexts(p: &ExtensionProblem) -> Option<Claim> {
    let t = ExactTables::compute(p).ok()?;
    if t.plus == t.minus {
        return None;
    }
    let lattice = enumerate_from_tables(&t).ok()?;
    (lattice.complete && lattice.len() >= 2).then_some(Claim::MultipleNatexts { count: lattice.len() })
}

/// Seeded search over small random presentations. Candidates are generated
/// sequentially from the seed and examined in parallel; the reported
/// witness is the first in candidate order.
pub fn search_counterexample(property: Property, cfg: &SearchConfig) -> SearchResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let candidates: Vec<Option<ExtensionProblem>> = (0..cfg.budget)
        .map(|_| match property {
            Property::LsStructuralityFailure => connective_candidate(&mut rng, cfg),
            _ => constants_only_candidate(&mut rng, cfg),
        })
        .collect();
    let witness = candidates.par_iter().enumerate().find_map_first(|(i, cand)| {
        let p = cand.as_ref()?;
        let claim = match property {
            Property::SsCutFailure => find_ss_cut_failure(p),
            Property::LsStructuralityFailure => find_ls_structurality_failure(p),
            Property::MultipleNatexts => find_multiple_natexts(p),
        }?;
        Some(CounterexampleWitness {
            problem: p.clone(),
            claim,
            candidate: i,
        })
    });
    SearchResult {
        witness,
        candidates: cfg.budget,
    }
}

/// Writes a witness as a presentation followed by `tovars`, `claim` and
/// claim-specific lines.
pub fn format_witness(w: &CounterexampleWitness) -> String {
    let p = &w.problem;
    let big = p.extended();
    let list = |fs: &[Formula]| fs.iter().map(|f| big.show(f)).join(", ");
    let mut out = format_presentation(p.base());
    out.push_str(&format!("tovars {}\n", p.y().names().join(" ")));
    out.push_str(&format!("claim {}\n", w.claim.property()));
    match &w.claim {
        Claim::SsCutFailure { premises, lemmas, goal } => {
            out.push_str(&format!("premises {}\n", list(premises)));
            out.push_str(&format!("lemmas {}\n", list(lemmas)));
            out.push_str(&format!("goal {}\n", big.show(goal)));
        }
        Claim::LsStructurality { premises, goal, sigma } => {
            out.push_str(&format!("premises {}\n", list(premises)));
            out.push_str(&format!("goal {}\n", big.show(goal)));
            for (v, f) in sigma.iter() {
                out.push_str(&format!("subst {} := {}\n", p.y().name(v), big.show(f)));
            }
        }
        Claim::MultipleNatexts { count } => out.push_str(&format!("count {count}\n")),
    }
    out
}

const WITNESS_DIRECTIVES: [&str; 7] = ["tovars", "claim", "premises", "lemmas", "goal", "subst", "count"];

/// Reads the format written by [`format_witness`].
pub fn parse_witness(text: &str) -> Result<CounterexampleWitness, NatextError> {
    let mut presentation_text = String::new();
    let mut extra: Vec<(usize, &str, &str)> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let head = line.split_whitespace().next().unwrap_or("");
        if WITNESS_DIRECTIVES.contains(&head) {
            let rest = line[head.len()..].trim();
            extra.push((no + 1, head, rest));
            presentation_text.push('\n');
        } else {
            presentation_text.push_str(raw);
            presentation_text.push('\n');
        }
    }
    let base = parse_presentation(&presentation_text)?;
    let err = |line: usize, msg: String| NatextError::Parse { line, msg };
    fn find<'a, 'b>(
        extra: &'a [(usize, &'b str, &'b str)],
        key: &'a str,
    ) -> impl Iterator<Item = &'a (usize, &'b str, &'b str)> {
        extra.iter().filter(move |(_, h, _)| *h == key)
    }
    let single = |key: &str| -> Result<Option<(usize, &str)>, NatextError> {
        let mut it = find(&extra, key);
        let first = it.next().map(|(l, _, r)| (*l, *r));
        if let Some((l, _, _)) = it.next() {
            return Err(err(*l, format!("duplicate `{key}` line")));
        }
        Ok(first)
    };
    let y = match single("tovars")? {
        Some((_, rest)) => VarSet::new(rest.split_whitespace())?,
        None => return Err(err(0, "missing `tovars` line".into())),
    };
    let problem = ExtensionProblem::new(base, y)?;
    let big = problem.extended().clone();
    let (claim_line, claim_name) = single("claim")?.ok_or_else(|| err(0, "missing `claim` line".into()))?;
    let property: Property = claim_name.parse().map_err(|e| err(claim_line, e))?;
    let formulas = |key: &str| -> Result<Vec<Formula>, NatextError> {
        match single(key)? {
            Some((line, rest)) => big.parse_list(rest).map_err(|e| err(line, e.to_string())),
            None => Err(err(claim_line, format!("claim needs a `{key}` line"))),
        }
    };
    let formula = |key: &str| -> Result<Formula, NatextError> {
        match single(key)? {
            Some((line, rest)) => big.parse(rest).map_err(|e| err(line, e.to_string())),
            None => Err(err(claim_line, format!("claim needs a `{key}` line"))),
        }
    };
    let claim = match property {
        Property::SsCutFailure => Claim::SsCutFailure {
            premises: formulas("premises")?,
            lemmas: formulas("lemmas")?,
            goal: formula("goal")?,
        },
        Property::LsStructuralityFailure => {
            let mut sigma = Substitution::new();
            for (line, _, rest) in find(&extra, "subst") {
                let (v, f) = rest
                    .split_once(":=")
                    .ok_or_else(|| err(*line, "expected `subst <var> := <formula>`".into()))?;
                let var = problem
                    .y()
                    .lookup(v.trim())
                    .ok_or_else(|| err(*line, format!("unknown variable `{}`", v.trim())))?;
                let f = parse_formula(f, problem.sig(), problem.y()).map_err(|e| err(*line, e.to_string()))?;
                sigma.bind(var, f);
            }
            Claim::LsStructurality {
                premises: formulas("premises")?,
                goal: formula("goal")?,
                sigma,
            }
        }
        Property::MultipleNatexts => {
            let (line, rest) = single("count")?.ok_or_else(|| err(claim_line, "claim needs a `count` line".into()))?;
            Claim::MultipleNatexts {
                count: rest.parse().map_err(|_| err(line, format!("bad count `{rest}`")))?,
            }
        }
    };
    Ok(CounterexampleWitness {
        problem,
        claim,
        candidate: 0,
    })
}

/// One re-checked fact of a replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayStep {
    pub statement: String,
    pub expected: String,
    pub verdict: String,
    pub ok: bool,
}

/// Re-verifies a witness with the per-query procedures (no tables, no
/// search).
pub fn replay(w: &CounterexampleWitness) -> Vec<ReplayStep> {
    let p = &w.problem;
    let big = p.extended();
    let set = |fs: &[Formula]| fs.iter().cloned().collect::<BTreeSet<_>>();
    let step = |statement: String, expected: &str, v: &Verdict| ReplayStep {
        statement,
        expected: expected.to_string(),
        verdict: v.label().to_string(),
        ok: v.label() == expected,
    };
    match &w.claim {
        Claim::SsCutFailure { premises, lemmas, goal } => {
            let gamma = set(premises);
            let mut steps: Vec<ReplayStep> = lemmas
                .iter()
                .map(|d| {
                    let v = shoesmith_smiley(p, &gamma, d);
                    step(format!("{} ⊢SS {}", big.show_set(&gamma), big.show(d)), "yes", &v)
                })
                .collect();
            let mut extended = gamma.clone();
            extended.extend(lemmas.iter().cloned());
            let v = shoesmith_smiley(p, &extended, goal);
            steps.push(step(
                format!("{} ⊢SS {}", big.show_set(&extended), big.show(goal)),
                "yes",
                &v,
            ));
            let v = shoesmith_smiley(p, &gamma, goal);
            steps.push(step(
                format!("{} ⊢SS {}", big.show_set(&gamma), big.show(goal)),
                "no",
                &v,
            ));
            steps
        }
        Claim::LsStructurality { premises, goal, sigma } => {
            let gamma = set(premises);
            let moved: BTreeSet<Formula> = gamma.iter().map(|g| sigma.apply(g)).collect();
            let v1 = los_suszko(p, &gamma, goal);
            let v2 = los_suszko(p, &moved, &sigma.apply(goal));
            vec![
                step(format!("{} ⊢ŁS {}", big.show_set(&gamma), big.show(goal)), "yes", &v1),
                step(
                    format!("{} ⊢ŁS {}", big.show_set(&moved), big.show(&sigma.apply(goal))),
                    "no",
                    &v2,
                ),
            ]
        }
        Claim::MultipleNatexts { count } => {
            let found = enumerate_natural_extensions(p).map(|l| (l.len(), l.mode, l.complete));
            let (ok, verdict) = match found {
                Ok((k, EnumerationMode::Exhaustive, true)) => (k == *count && k >= 2, format!("{k}")),
                Ok((k, mode, complete)) => (false, format!("{k} ({mode:?}, complete: {complete})")),
                Err(e) => (false, e.to_string()),
            };
            vec![ReplayStep {
                statement: "number of natural extensions".into(),
                expected: count.to_string(),
                verdict,
                ok,
            }]
        }
    }
}

/// Looks up a connective by name, for callers building formulas by hand.
pub fn op(sig: &Signature, name: &str) -> Option<Op> {
    sig.lookup(name)
}

/// Renders a derivation produced by any of the per-query procedures against
/// the presentation it lives in.
pub fn derivation_presentation(p: &ExtensionProblem, w: &Witness) -> Option<(Presentation, Derivation)> {
    match w {
        Witness::Derivation(d) => Some((p.extended().clone(), d.clone())),
        Witness::Permutation { derivation, .. } | Witness::Instance { derivation, .. } => {
            Some((p.base().clone(), derivation.clone()))
        }
        Witness::SubPremises { inner, .. } => derivation_presentation(p, inner),
        Witness::AllSubstitutions { .. } | Witness::Table => None,
    }
}
