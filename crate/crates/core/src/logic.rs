//! Logics presented by finitely many rule schemes.
//!
//! [`derive`] decides `Γ ⊢ φ` by forward chaining with one-sided matching.
//! Over a constants-only signature the formula algebra is finite and every
//! relation can also be tabulated as a [`FiniteRelation`] on a [`Universe`],
//! which is what the exhaustive checks run on.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closure::{
    self, bits, full_mask, is_subset, Arity, ClosureError, ClosureReport, Mask, Operator, MAX_TABULATED,
};
use crate::term::{
    check_disjoint, enumerate_formulas, format_formula, match_into, parse_formula, parse_formula_list, Formula,
    Odometer, Signature, Substitution, TermError, Var, VarSet,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogicError {
    #[error(transparent)]
    Term(#[from] TermError),
    #[error(transparent)]
    Closure(#[from] ClosureError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("a presentation needs at least one variable")]
    NoVariables,
    #[error("formula `{0}` uses a variable outside the declared set")]
    ForeignVariable(String),
    #[error("this operation needs a constants-only signature")]
    NotConstantsOnly,
    #[error("this operation needs an exact presentation (constants-only signature or safe rules)")]
    NotExact,
    #[error("variables {small:?} are not an ordered prefix of {big:?}")]
    NotPrefix { small: Vec<String>, big: Vec<String> },
    #[error("universe of {len} formulas exceeds the limit of {limit}")]
    UniverseTooLarge { len: usize, limit: usize },
    #[error("formula `{0}` is outside the universe")]
    OutsideUniverse(String),
    #[error("relations live on different universes")]
    UniverseMismatch,
}

/// A rule scheme `premises ⊢ conclusion`; premises are kept sorted and
/// duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    premises: Vec<Formula>,
    conclusion: Formula,
}

impl Rule {
    pub fn new(premises: impl IntoIterator<Item = Formula>, conclusion: Formula) -> Self {
        let premises: BTreeSet<Formula> = premises.into_iter().collect();
        Rule {
            premises: premises.into_iter().collect(),
            conclusion,
        }
    }

    pub fn premises(&self) -> &[Formula] {
        &self.premises
    }

    pub fn conclusion(&self) -> &Formula {
        &self.conclusion
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = self.conclusion.vars();
        self.premises.iter().for_each(|p| p.collect_vars(&mut out));
        out
    }

    /// Variables of the conclusion that no premise mentions.
    pub fn extra_vars(&self) -> Vec<Var> {
        let mut bound = BTreeSet::new();
        self.premises.iter().for_each(|p| p.collect_vars(&mut bound));
        self.conclusion
            .vars()
            .into_iter()
            .filter(|v| !bound.contains(v))
            .collect()
    }

    /// A rule whose instances never produce formulas deeper than the current
    /// set (or than its own conclusion): every conclusion variable occurs in
    /// some premise at least as deep as anywhere in the conclusion.
    pub fn is_safe(&self) -> bool {
        self.conclusion.vars().into_iter().all(|v| {
            let deepest_in_premises = self.premises.iter().filter_map(|p| max_var_depth(p, v)).max();
            match (deepest_in_premises, max_var_depth(&self.conclusion, v)) {
                (Some(p), Some(c)) => c <= p,
                _ => false,
            }
        })
    }

    pub fn display(&self, sig: &Signature, vars: &VarSet) -> String {
        let prem = self.premises.iter().map(|p| format_formula(p, sig, vars)).join(", ");
        let concl = format_formula(&self.conclusion, sig, vars);
        if prem.is_empty() {
            format!("=> {concl}")
        } else {
            format!("{prem} => {concl}")
        }
    }
}

fn max_var_depth(f: &Formula, v: Var) -> Option<usize> {
    match f {
        Formula::Var(w) => (*w == v).then_some(0),
        Formula::App(_, args) => args.iter().filter_map(|a| max_var_depth(a, v)).max().map(|d| d + 1),
    }
}

/// Limits on saturation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBounds {
    /// Deepest formula an unsafe rule may introduce.
    pub max_depth: usize,
    /// Saturation rounds before giving up.
    pub max_iterations: usize,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds {
            max_depth: 3,
            max_iterations: 64,
        }
    }
}

/// A signature, a variable set and a list of rule schemes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Presentation {
    sig: Signature,
    vars: VarSet,
    rules: Vec<Rule>,
    bounds: SearchBounds,
}

impl Presentation {
    pub fn new(sig: Signature, vars: VarSet, rules: Vec<Rule>, bounds: SearchBounds) -> Result<Self, LogicError> {
        check_disjoint(&sig, &vars)?;
        if vars.is_empty() {
            return Err(LogicError::NoVariables);
        }
        for rule in &rules {
            for f in rule.premises.iter().chain(std::iter::once(&rule.conclusion)) {
                if !f.is_over(&vars) {
                    return Err(LogicError::ForeignVariable(format!("{f:?}")));
                }
            }
        }
        Ok(Presentation {
            sig,
            vars,
            rules,
            bounds,
        })
    }

    pub fn sig(&self) -> &Signature {
        &self.sig
    }

    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn bounds(&self) -> SearchBounds {
        self.bounds
    }

    pub fn with_bounds(&self, bounds: SearchBounds) -> Presentation {
        Presentation { bounds, ..self.clone() }
    }

    /// The same rule schemes over a larger variable set that has the current
    /// one as ordered prefix.
    pub fn with_vars(&self, vars: &VarSet) -> Result<Presentation, LogicError> {
        if !self.vars.is_prefix_of(vars) {
            return Err(LogicError::NotPrefix {
                small: self.vars.names().to_vec(),
                big: vars.names().to_vec(),
            });
        }
        Presentation::new(self.sig.clone(), vars.clone(), self.rules.clone(), self.bounds)
    }

    pub fn is_constants_only(&self) -> bool {
        self.sig.is_constants_only()
    }

    pub fn rules_are_safe(&self) -> bool {
        self.rules.iter().all(Rule::is_safe)
    }

    /// True when saturation provably terminates without truncation, so that
    /// `No` answers are exhaustive.
    pub fn is_exact(&self) -> bool {
        self.is_constants_only() || self.rules_are_safe()
    }

    pub fn parse(&self, text: &str) -> Result<Formula, LogicError> {
        Ok(parse_formula(text, &self.sig, &self.vars)?)
    }

    pub fn parse_list(&self, text: &str) -> Result<Vec<Formula>, LogicError> {
        Ok(parse_formula_list(text, &self.sig, &self.vars)?)
    }

    pub fn show(&self, f: &Formula) -> String {
        format_formula(f, &self.sig, &self.vars)
    }

    pub fn show_set<'a>(&self, fs: impl IntoIterator<Item = &'a Formula>) -> String {
        format!("{{{}}}", fs.into_iter().map(|f| self.show(f)).join(", "))
    }
}

/// Why a query stopped without an answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "bound", rename_all = "kebab-case")]
pub enum BoundHit {
    /// Saturation was still growing after this many rounds.
    Iterations { limit: usize },
    /// Formulas deeper than the limit were discarded.
    Depth { limit: usize },
    /// A universally quantified substitution space was only enumerated up to
    /// formula depth `limit`; `all_yes` records whether every checked case
    /// succeeded.
    SubstitutionSpace {
        limit: usize,
        checked: usize,
        all_yes: bool,
    },
}

impl fmt::Display for BoundHit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundHit::Iterations { limit } => write!(f, "saturation rounds exhausted (limit {limit})"),
            BoundHit::Depth { limit } => write!(f, "formula depth bound reached (limit {limit})"),
            BoundHit::SubstitutionSpace {
                limit,
                checked,
                all_yes,
            } => write!(
                f,
                "substitution space truncated at depth {limit} after {checked} cases{}",
                if *all_yes { ", all succeeded (likely yes)" } else { "" }
            ),
        }
    }
}

/// A saturation step tree. Every inner node is an instance of a rule under
/// an explicit substitution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub formula: Formula,
    pub step: Step,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Premise,
    Rule {
        rule: usize,
        subst: Substitution,
        premises: Vec<Derivation>,
    },
}

impl Derivation {
    /// Re-checks every step against `rules` and the premise set `gamma`.
    pub fn verify(&self, rules: &[Rule], gamma: &BTreeSet<Formula>) -> Result<(), String> {
        match &self.step {
            Step::Premise => {
                if gamma.contains(&self.formula) {
                    Ok(())
                } else {
                    Err(format!("leaf {:?} is not a premise", self.formula))
                }
            }
            Step::Rule { rule, subst, premises } => {
                let r = rules.get(*rule).ok_or_else(|| format!("no rule #{rule}"))?;
                if subst.apply(&r.conclusion) != self.formula {
                    return Err(format!("rule #{rule} does not conclude {:?}", self.formula));
                }
                let needed: BTreeSet<Formula> = r.premises.iter().map(|p| subst.apply(p)).collect();
                let given: BTreeSet<Formula> = premises.iter().map(|d| d.formula.clone()).collect();
                if needed != given {
                    return Err(format!("rule #{rule} premises do not match their subderivations"));
                }
                premises.iter().try_for_each(|d| d.verify(rules, gamma))
            }
        }
    }

    /// Premises actually used.
    pub fn leaves(&self) -> BTreeSet<Formula> {
        let mut out = BTreeSet::new();
        fn walk(d: &Derivation, out: &mut BTreeSet<Formula>) {
            match &d.step {
                Step::Premise => {
                    out.insert(d.formula.clone());
                }
                Step::Rule { premises, .. } => premises.iter().for_each(|p| walk(p, out)),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Number of rule applications.
    pub fn steps(&self) -> usize {
        match &self.step {
            Step::Premise => 0,
            Step::Rule { premises, .. } => 1 + premises.iter().map(Derivation::steps).sum::<usize>(),
        }
    }

    /// A plain-data rendering for reports.
    pub fn render(&self, l: &Presentation) -> DerivationView {
        match &self.step {
            Step::Premise => DerivationView {
                formula: l.show(&self.formula),
                rule: None,
                substitution: String::new(),
                premises: Vec::new(),
            },
            Step::Rule { rule, subst, premises } => DerivationView {
                formula: l.show(&self.formula),
                rule: Some(*rule),
                substitution: subst.display(&l.sig, &l.vars),
                premises: premises.iter().map(|p| p.render(l)).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationView {
    pub formula: String,
    /// Index of the rule applied; absent for premises.
    pub rule: Option<usize>,
    pub substitution: String,
    pub premises: Vec<DerivationView>,
}

/// Evidence for a positive answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Witness {
    /// `Γ ⊢ φ` in the presentation itself.
    Derivation(Derivation),
    /// A premise subset of admissible size and a witness for it.
    SubPremises {
        premises: Vec<Formula>,
        inner: Box<Witness>,
    },
    /// A variable permutation `pi` moving `premises ∪ {goal}` into the base
    /// variables, and a base derivation of the permuted pair.
    Permutation {
        pi: Substitution,
        premises: Vec<Formula>,
        derivation: Derivation,
    },
    /// A base derivation `premises ⊢ goal` and a substitution `v` mapping it
    /// onto the query.
    Instance {
        v: Substitution,
        premises: Vec<Formula>,
        goal: Formula,
        derivation: Derivation,
    },
    /// Every one of `checked` substitutions was verified.
    AllSubstitutions { checked: usize },
    /// Membership in an exhaustively computed table.
    Table,
}

/// Evidence for a negative answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Refutation {
    /// The search space was finite and fully explored.
    Exhaustive,
    /// A substitution under which the base relation fails exhaustively.
    CounterSubstitution(Substitution),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Yes(Witness),
    No(Refutation),
    Unknown(BoundHit),
}

impl Verdict {
    pub fn is_yes(&self) -> bool {
        matches!(self, Verdict::Yes(_))
    }

    pub fn is_no(&self) -> bool {
        matches!(self, Verdict::No(_))
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, Verdict::Unknown(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Yes(_) => "yes",
            Verdict::No(_) => "no",
            Verdict::Unknown(_) => "unknown",
        }
    }
}

/// A three-valued consequence relation.
pub trait Consequence: Send + Sync {
    fn query(&self, gamma: &BTreeSet<Formula>, phi: &Formula) -> Verdict;
    fn arity(&self) -> Arity;
}

#[derive(Debug, Clone)]
enum Just {
    Premise,
    Rule {
        rule: usize,
        subst: Substitution,
        premises: Vec<usize>,
    },
}

/// The outcome of saturating a premise set.
#[derive(Debug, Clone)]
pub struct Saturation {
    formulas: Vec<Formula>,
    index: HashMap<Formula, usize>,
    just: Vec<Just>,
    /// Set when saturation stopped before reaching a provable fixpoint.
    pub bound: Option<BoundHit>,
    /// Index of the goal if it was reached.
    pub goal: Option<usize>,
}

impl Saturation {
    pub fn formulas(&self) -> &[Formula] {
        &self.formulas
    }

    pub fn contains(&self, f: &Formula) -> bool {
        self.index.contains_key(f)
    }

    pub fn derivation(&self, f: &Formula) -> Option<Derivation> {
        self.index.get(f).map(|&i| self.tree(i))
    }

    fn tree(&self, i: usize) -> Derivation {
        let formula = self.formulas[i].clone();
        match &self.just[i] {
            Just::Premise => Derivation {
                formula,
                step: Step::Premise,
            },
            Just::Rule { rule, subst, premises } => Derivation {
                formula,
                step: Step::Rule {
                    rule: *rule,
                    subst: subst.clone(),
                    premises: premises.iter().map(|&p| self.tree(p)).collect(),
                },
            },
        }
    }

    fn add(&mut self, f: Formula, just: Just) -> usize {
        let i = self.formulas.len();
        self.index.insert(f.clone(), i);
        self.formulas.push(f);
        self.just.push(just);
        i
    }
}

/// All substitutions `σ` (on the premise variables) with `σ(premises)`
/// inside `known`, in lexicographic order of the matched formula indices.
fn premise_matches(
    premises: &[Formula],
    known: &[Formula],
    index: &HashMap<Formula, usize>,
) -> Vec<(Substitution, Vec<usize>)> {
    let mut out = Vec::new();
    fn go(
        premises: &[Formula],
        known: &[Formula],
        index: &HashMap<Formula, usize>,
        binding: Substitution,
        used: &mut Vec<usize>,
        out: &mut Vec<(Substitution, Vec<usize>)>,
    ) {
        let Some((p, rest)) = premises.split_first() else {
            out.push((binding, used.clone()));
            return;
        };
        if p.is_ground() {
            if let Some(&i) = index.get(p).filter(|&&i| i < known.len()) {
                used.push(i);
                go(rest, known, index, binding, used, out);
                used.pop();
            }
            return;
        }
        for (i, k) in known.iter().enumerate() {
            let mut b = binding.clone();
            if match_into(p, k, &mut b) {
                used.push(i);
                go(rest, known, index, b, used, out);
                used.pop();
            }
        }
    }
    go(premises, known, index, Substitution::new(), &mut Vec::new(), &mut out);
    out
}

/// Forward-chaining saturation of `gamma`, stopping early once `goal` is
/// reached. Rules fire in declaration order, matches in the order of the
/// formulas they use; each round only sees formulas from earlier rounds.
pub fn saturate(l: &Presentation, gamma: &BTreeSet<Formula>, goal: Option<&Formula>) -> Saturation {
    let mut sat = Saturation {
        formulas: Vec::new(),
        index: HashMap::new(),
        just: Vec::new(),
        bound: None,
        goal: None,
    };
    for g in gamma {
        sat.add(g.clone(), Just::Premise);
    }
    if let Some(g) = goal {
        if let Some(&i) = sat.index.get(g) {
            sat.goal = Some(i);
            return sat;
        }
    }
    let constants_only = l.is_constants_only();
    let safe = l.rules_are_safe();
    let extra_universe: Vec<Formula> = if l.rules.iter().any(|r| !r.extra_vars().is_empty()) {
        enumerate_formulas(&l.sig, &l.vars, if constants_only { 0 } else { l.bounds.max_depth })
    } else {
        Vec::new()
    };
    let mut truncated = false;
    for _round in 0..l.bounds.max_iterations {
        let snapshot = sat.formulas.len();
        let mut grew = false;
        for (ri, rule) in l.rules.iter().enumerate() {
            let extra = rule.extra_vars();
            if !extra.is_empty() && !constants_only {
                truncated = true;
            }
            let known: Vec<Formula> = sat.formulas[..snapshot].to_vec();
            for (sigma, used) in premise_matches(&rule.premises, &known, &sat.index) {
                let mut fire = |subst: Substitution, sat: &mut Saturation| -> bool {
                    let c = subst.apply(&rule.conclusion);
                    if sat.index.contains_key(&c) {
                        return false;
                    }
                    if !safe && !constants_only && c.depth() > l.bounds.max_depth {
                        truncated = true;
                        return false;
                    }
                    let i = sat.add(
                        c.clone(),
                        Just::Rule {
                            rule: ri,
                            subst,
                            premises: used.clone(),
                        },
                    );
                    grew = true;
                    if goal == Some(&c) {
                        sat.goal = Some(i);
                        return true;
                    }
                    false
                };
                if extra.is_empty() {
                    if fire(sigma, &mut sat) {
                        return sat;
                    }
                } else {
                    for digits in Odometer::new(extra.len(), extra_universe.len()) {
                        let mut s = sigma.clone();
                        for (v, d) in extra.iter().zip(digits) {
                            s.bind(*v, extra_universe[d].clone());
                        }
                        if fire(s, &mut sat) {
                            return sat;
                        }
                    }
                }
            }
        }
        if !grew {
            sat.bound = truncated.then_some(BoundHit::Depth {
                limit: l.bounds.max_depth,
            });
            return sat;
        }
    }
    sat.bound = Some(BoundHit::Iterations {
        limit: l.bounds.max_iterations,
    });
    sat
}

/// `Γ ⊢ φ` in the presentation.
pub fn derive(l: &Presentation, gamma: &BTreeSet<Formula>, phi: &Formula) -> Verdict {
    let sat = saturate(l, gamma, Some(phi));
    if let Some(i) = sat.goal {
        return Verdict::Yes(Witness::Derivation(sat.tree(i)));
    }
    match sat.bound {
        Some(b) => Verdict::Unknown(b),
        None => Verdict::No(Refutation::Exhaustive),
    }
}

impl Consequence for Presentation {
    fn query(&self, gamma: &BTreeSet<Formula>, phi: &Formula) -> Verdict {
        derive(self, gamma, phi)
    }

    fn arity(&self) -> Arity {
        Arity::Omega
    }
}

/// The least theory containing `gamma`; refused when saturation cannot be
/// shown complete.
pub fn theory_of(l: &Presentation, gamma: &BTreeSet<Formula>) -> Result<BTreeSet<Formula>, LogicError> {
    if !l.is_exact() {
        return Err(LogicError::NotExact);
    }
    let sat = saturate(l, gamma, None);
    if sat.bound.is_some() {
        return Err(LogicError::NotExact);
    }
    Ok(sat.formulas.into_iter().collect())
}

/// Closure of `t` under every instance of every generating rule.
pub fn is_theory(l: &Presentation, t: &BTreeSet<Formula>) -> Result<bool, LogicError> {
    if !l.is_exact() {
        return Err(LogicError::NotExact);
    }
    let known: Vec<Formula> = t.iter().cloned().collect();
    let index: HashMap<Formula, usize> = known.iter().cloned().enumerate().map(|(i, f)| (f, i)).collect();
    let atoms = enumerate_formulas(&l.sig, &l.vars, 0);
    for rule in &l.rules {
        let extra = rule.extra_vars();
        for (sigma, _) in premise_matches(&rule.premises, &known, &index) {
            // Only constants-only presentations may have extra variables here.
            for digits in Odometer::new(extra.len(), atoms.len()) {
                let mut s = sigma.clone();
                for (v, d) in extra.iter().zip(digits) {
                    s.bind(*v, atoms[d].clone());
                }
                if !t.contains(&s.apply(&rule.conclusion)) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// `Γ ⊢_n φ` iff some `Γ' ⊆ Γ` with `|Γ'| < n` has `Γ' ⊢ φ`.
pub struct KaryPart<C> {
    inner: C,
    n: Arity,
}

pub fn kary_part_of_logic<C: Consequence>(inner: C, n: Arity) -> KaryPart<C> {
    KaryPart { inner, n }
}

impl<C: Consequence> KaryPart<C> {
    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: Consequence> Consequence for KaryPart<C> {
    fn query(&self, gamma: &BTreeSet<Formula>, phi: &Formula) -> Verdict {
        let size = match self.n {
            Arity::Omega => gamma.len(),
            Arity::Finite(n) => gamma.len().min(n.saturating_sub(1)),
        };
        if size == gamma.len() {
            return self.inner.query(gamma, phi);
        }
        // reflexivity is part of every n-ary part, including n = 1
        if gamma.contains(phi) {
            return Verdict::Yes(Witness::Derivation(Derivation {
                formula: phi.clone(),
                step: Step::Premise,
            }));
        }
        // The inner relation is monotone, so subsets of the largest admitted
        // size suffice.
        let mut unknown = None;
        for subset in gamma.iter().cloned().combinations(size) {
            let sub: BTreeSet<Formula> = subset.iter().cloned().collect();
            match self.inner.query(&sub, phi) {
                Verdict::Yes(w) => {
                    return Verdict::Yes(Witness::SubPremises {
                        premises: subset,
                        inner: Box::new(w),
                    })
                }
                Verdict::Unknown(b) => {
                    unknown.get_or_insert(b);
                }
                Verdict::No(_) => {}
            }
        }
        match unknown {
            Some(b) => Verdict::Unknown(b),
            None => Verdict::No(Refutation::Exhaustive),
        }
    }

    fn arity(&self) -> Arity {
        self.n
    }
}

/// The finite formula algebra `Fm(X) = Σ₀ ∪ X` of a constants-only
/// signature, in canonical order: constants, then variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Universe {
    sig: Signature,
    vars: VarSet,
    formulas: Vec<Formula>,
    index: HashMap<Formula, usize>,
}

impl Universe {
    pub fn new(sig: &Signature, vars: &VarSet) -> Result<Self, LogicError> {
        if !sig.is_constants_only() {
            return Err(LogicError::NotConstantsOnly);
        }
        check_disjoint(sig, vars)?;
        let formulas = enumerate_formulas(sig, vars, 0);
        if formulas.len() > closure::MAX_CARRIER {
            return Err(LogicError::UniverseTooLarge {
                len: formulas.len(),
                limit: closure::MAX_CARRIER,
            });
        }
        let index = formulas.iter().cloned().enumerate().map(|(i, f)| (f, i)).collect();
        Ok(Universe {
            sig: sig.clone(),
            vars: vars.clone(),
            formulas,
            index,
        })
    }

    pub fn of(l: &Presentation) -> Result<Self, LogicError> {
        Universe::new(&l.sig, &l.vars)
    }

    pub fn sig(&self) -> &Signature {
        &self.sig
    }

    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }

    pub fn full(&self) -> Mask {
        full_mask(self.len())
    }

    pub fn formulas(&self) -> &[Formula] {
        &self.formulas
    }

    pub fn formula(&self, i: usize) -> &Formula {
        &self.formulas[i]
    }

    pub fn index_of(&self, f: &Formula) -> Option<usize> {
        self.index.get(f).copied()
    }

    pub fn mask<'a>(&self, fs: impl IntoIterator<Item = &'a Formula>) -> Result<Mask, LogicError> {
        fs.into_iter().try_fold(0, |m, f| {
            self.index_of(f)
                .map(|i| m | 1 << i)
                .ok_or_else(|| LogicError::OutsideUniverse(self.show(f)))
        })
    }

    pub fn members(&self, mask: Mask) -> BTreeSet<Formula> {
        bits(mask).map(|i| self.formulas[i].clone()).collect()
    }

    pub fn show(&self, f: &Formula) -> String {
        format_formula(f, &self.sig, &self.vars)
    }

    pub fn name(&self, i: usize) -> String {
        self.show(&self.formulas[i])
    }

    pub fn names(&self, mask: Mask) -> Vec<String> {
        bits(mask).map(|i| self.name(i)).collect()
    }

    pub fn render(&self, mask: Mask) -> String {
        format!("{{{}}}", self.names(mask).join(", "))
    }

    /// Mask of the formulas of `sub`, which must have a prefix of our
    /// variables.
    pub fn embed_mask(&self, sub: &Universe) -> Result<Mask, LogicError> {
        if sub.sig != self.sig || !sub.vars.is_prefix_of(&self.vars) {
            return Err(LogicError::UniverseMismatch);
        }
        self.mask(sub.formulas.iter())
    }

    /// Every substitution of our variables into `target`, with the induced
    /// map from our elements to target elements, in odometer order.
    pub fn maps_into(&self, target: &Universe) -> Vec<(Substitution, Vec<usize>)> {
        let vars: Vec<Var> = self.vars.vars().collect();
        Odometer::new(vars.len(), target.len())
            .map(|digits| {
                let sigma =
                    Substitution::from_pairs(vars.iter().zip(&digits).map(|(v, &d)| (*v, target.formulas[d].clone())));
                let map = self
                    .formulas
                    .iter()
                    .map(|f| {
                        target
                            .index_of(&sigma.apply(f))
                            .expect("constants-only images stay inside")
                    })
                    .collect();
                (sigma, map)
            })
            .collect()
    }

    /// Substitutions of our variables into our own elements.
    pub fn endomorphisms(&self) -> Vec<(Substitution, Vec<usize>)> {
        self.maps_into(self)
    }
}

/// Direct image of a set under an element map.
pub fn image(map: &[usize], s: Mask) -> Mask {
    bits(s).fold(0, |m, i| m | 1 << map[i])
}

/// Preimage of a set under an element map.
pub fn preimage(map: &[usize], s: Mask) -> Mask {
    map.iter()
        .enumerate()
        .filter(|(_, &j)| s >> j & 1 == 1)
        .fold(0, |m, (i, _)| m | 1 << i)
}

/// All ground instances of a constants-only presentation's rules, as
/// `(premise mask, conclusion index)` pairs over its universe.
#[derive(Debug, Clone)]
pub struct GroundSystem {
    universe: Arc<Universe>,
    instances: Vec<(Mask, usize)>,
}

impl GroundSystem {
    pub fn new(l: &Presentation) -> Result<Self, LogicError> {
        let universe = Arc::new(Universe::of(l)?);
        Ok(Self::on(l, universe))
    }

    /// Instances over `universe`, whose variables must extend the
    /// presentation's (the rules are read as schemes over the larger set).
    pub fn on(l: &Presentation, universe: Arc<Universe>) -> Self {
        let mut instances = BTreeSet::new();
        for rule in &l.rules {
            let vars: Vec<Var> = rule.vars().into_iter().collect();
            for digits in Odometer::new(vars.len(), universe.len()) {
                let sigma = Substitution::from_pairs(
                    vars.iter()
                        .zip(&digits)
                        .map(|(v, &d)| (*v, universe.formulas[d].clone())),
                );
                let prem = universe
                    .mask(rule.premises.iter().map(|p| sigma.apply(p)).collect::<Vec<_>>().iter())
                    .expect("instances stay inside the universe");
                let concl = universe
                    .index_of(&sigma.apply(&rule.conclusion))
                    .expect("inside the universe");
                instances.insert((prem, concl));
            }
        }
        GroundSystem {
            universe,
            instances: instances.into_iter().collect(),
        }
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn instances(&self) -> &[(Mask, usize)] {
        &self.instances
    }

    /// Least superset of `s` closed under every instance.
    pub fn close(&self, s: Mask) -> Mask {
        let mut cur = s;
        loop {
            let next = self
                .instances
                .iter()
                .filter(|(p, _)| is_subset(*p, cur))
                .fold(cur, |m, &(_, c)| m | 1 << c);
            if next == cur {
                return cur;
            }
            cur = next;
        }
    }

    pub fn relation(&self) -> Result<FiniteRelation, LogicError> {
        let len = self.universe.len();
        if len > MAX_TABULATED {
            return Err(LogicError::UniverseTooLarge {
                len,
                limit: MAX_TABULATED,
            });
        }
        let table = (0..1u64 << len).into_par_iter().map(|s| self.close(s)).collect();
        Ok(FiniteRelation::new(self.universe.clone(), table))
    }
}

/// The closure operator `C_⊢` of a constants-only presentation, tabulated
/// on `Fm(X)`.
pub fn as_closure_operator(l: &Presentation) -> Result<FiniteRelation, LogicError> {
    GroundSystem::new(l)?.relation()
}

/// A relation `Γ ⊢ φ` on a finite universe given by the table
/// `Γ ↦ {φ : Γ ⊢ φ}`.
#[derive(Debug, Clone)]
pub struct FiniteRelation {
    universe: Arc<Universe>,
    table: Arc<Vec<Mask>>,
}

/// A pair `(Γ, φ)` by universe indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairWitness {
    pub premises: Mask,
    pub goal: usize,
}

/// A substitution under which a derivable pair stops being derivable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralityWitness {
    pub pair: PairWitness,
    pub sigma: Substitution,
}

/// `Γ ⊢ δ` for each lemma, `Γ ∪ lemmas ⊢ goal`, but not `Γ ⊢ goal`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutWitness {
    pub premises: Mask,
    pub lemmas: Mask,
    pub goal: usize,
}

impl PartialEq for FiniteRelation {
    fn eq(&self, other: &Self) -> bool {
        self.universe == other.universe && self.table == other.table
    }
}

impl Eq for FiniteRelation {}

impl FiniteRelation {
    pub fn new(universe: Arc<Universe>, table: Vec<Mask>) -> Self {
        assert_eq!(table.len(), 1 << universe.len(), "table size must match the universe");
        FiniteRelation {
            universe,
            table: Arc::new(table),
        }
    }

    pub fn from_operator(universe: Arc<Universe>, op: &Operator) -> Result<Self, LogicError> {
        if op.len() != universe.len() {
            return Err(LogicError::UniverseMismatch);
        }
        Ok(FiniteRelation::new(universe, op.tabulate()?))
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn table(&self) -> &[Mask] {
        &self.table
    }

    pub fn consequences(&self, gamma: Mask) -> Mask {
        self.table[gamma as usize]
    }

    pub fn holds(&self, gamma: Mask, phi: usize) -> bool {
        self.table[gamma as usize] >> phi & 1 == 1
    }

    pub fn operator(&self) -> Operator {
        Operator::from_table(self.universe.len(), self.table.to_vec(), Arity::Omega).expect("valid table")
    }

    fn same_universe(&self, other: &FiniteRelation) -> Result<(), LogicError> {
        if self.universe == other.universe {
            Ok(())
        } else {
            Err(LogicError::UniverseMismatch)
        }
    }

    /// First pair derivable here but not in `other`, by premise mask then goal.
    pub fn subset_witness(&self, other: &FiniteRelation) -> Result<Option<PairWitness>, LogicError> {
        self.same_universe(other)?;
        Ok((0..self.table.len()).into_par_iter().find_map_first(|g| {
            let extra = self.table[g] & !other.table[g];
            (extra != 0).then(|| PairWitness {
                premises: g as Mask,
                goal: extra.trailing_zeros() as usize,
            })
        }))
    }

    pub fn is_subrelation_of(&self, other: &FiniteRelation) -> bool {
        matches!(self.subset_witness(other), Ok(None))
    }

    /// First pair on which the relations differ.
    pub fn diff_witness(&self, other: &FiniteRelation) -> Result<Option<PairWitness>, LogicError> {
        self.same_universe(other)?;
        Ok((0..self.table.len()).into_par_iter().find_map_first(|g| {
            let d = self.table[g] ^ other.table[g];
            (d != 0).then(|| PairWitness {
                premises: g as Mask,
                goal: d.trailing_zeros() as usize,
            })
        }))
    }

    /// `S ↦ S ∪ ⋃_{S' ⊆ S, |S'| < n} C(S')`; the relation must be monotone.
    pub fn kary_part(&self, n: Arity) -> FiniteRelation {
        let op = closure::kary_part(&self.operator(), n);
        FiniteRelation::new(
            self.universe.clone(),
            op.tabulate().expect("universe already tabulated"),
        )
    }

    /// Least `n` in `1..=|U|+1` whose n-ary part is the relation itself, or
    /// `None` for relations that are not reflexive.
    pub fn arity_profile(&self) -> Option<usize> {
        (1..=self.universe.len() + 1).find(|&n| self.kary_part(Arity::Finite(n)) == *self)
    }

    pub fn closure_report(&self) -> ClosureReport {
        closure::is_closure_operator(&self.operator())
    }

    /// A cut failure, when the relation is not idempotent. Lemmas are the
    /// consequences of the premises; the goal is the first formula that
    /// only follows once they are added.
    pub fn cut_witness(&self) -> Option<CutWitness> {
        let g = closure::idempotence_witness(&self.operator())?;
        let once = self.consequences(g);
        let twice = self.consequences(once);
        Some(CutWitness {
            premises: g,
            lemmas: once & !g,
            goal: (twice & !once).trailing_zeros() as usize,
        })
    }

    /// First substitution `σ` and pair `Γ ⊢ φ` with `σΓ ⊬ σφ`.
    pub fn structurality_witness(&self) -> Option<StructuralityWitness> {
        let endos = self.universe.endomorphisms();
        endos.par_iter().find_map_first(|(sigma, map)| {
            (0..self.table.len()).find_map(|g| {
                let img = image(map, self.table[g]);
                let target = self.table[image(map, g as Mask) as usize];
                let missing_image = img & !target;
                (missing_image != 0).then(|| {
                    let goal = bits(self.table[g])
                        .find(|&phi| target >> map[phi] & 1 == 0)
                        .expect("some consequence maps outside");
                    StructuralityWitness {
                        pair: PairWitness {
                            premises: g as Mask,
                            goal,
                        },
                        sigma: sigma.clone(),
                    }
                })
            })
        })
    }

    pub fn is_structural(&self) -> bool {
        self.structurality_witness().is_none()
    }

    /// Fixed points (the theories when the relation is a closure operator).
    pub fn theories(&self) -> Vec<Mask> {
        (0..self.table.len() as Mask)
            .filter(|&s| self.table[s as usize] == s)
            .collect()
    }

    /// The relation on a smaller universe whose variables are a prefix of
    /// ours: `Γ ↦ C(Γ) ∩ Fm(sub)`.
    pub fn restrict(&self, sub: Arc<Universe>) -> Result<FiniteRelation, LogicError> {
        let embed = self.universe.embed_mask(&sub)?;
        let map: Vec<usize> = sub
            .formulas
            .iter()
            .map(|f| self.universe.index_of(f).expect("embedded"))
            .collect();
        let table = (0..1u64 << sub.len())
            .map(|g| preimage(&map, self.table[image(&map, g) as usize] & embed))
            .collect();
        Ok(FiniteRelation::new(sub, table))
    }

    pub fn render_pair(&self, w: PairWitness) -> (Vec<String>, String) {
        (self.universe.names(w.premises), self.universe.name(w.goal))
    }
}

/// Least reflexive, monotone and structural relation containing `r`:
/// `Δ ↦ Δ ∪ {σφ : Γ ⊢_r φ, σΓ ⊆ Δ}`.
pub fn structural_closure(r: &FiniteRelation) -> FiniteRelation {
    let u = r.universe();
    let len = u.len();
    let endos = u.endomorphisms();
    let mut seed = vec![0 as Mask; 1 << len];
    for (_, map) in &endos {
        for g in 0..1usize << len {
            let c = r.table[g];
            if c != 0 {
                seed[image(map, g as Mask) as usize] |= image(map, c);
            }
        }
    }
    // Superset propagation: seed[Δ] collects every seed[D] with D ⊆ Δ.
    for bit in 0..len {
        for m in 0..1usize << len {
            if m >> bit & 1 == 1 {
                seed[m] |= seed[m ^ 1 << bit];
            }
        }
    }
    for (m, s) in seed.iter_mut().enumerate() {
        *s |= m as Mask;
    }
    FiniteRelation::new(u.clone(), seed)
}

/// Which way a conservativity check failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConservativityFailure {
    /// Derivable in the small logic, not in the extension.
    Lost,
    /// Derivable in the extension only.
    Gained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservativityWitness {
    pub pair: PairWitness,
    pub failure: ConservativityFailure,
}

/// Compares `small` with `big` on every `Γ ∪ {φ} ⊆ Fm(X)`.
pub fn is_conservative_extension(
    small: &FiniteRelation,
    big: &FiniteRelation,
) -> Result<Option<ConservativityWitness>, LogicError> {
    let embed = big.universe.embed_mask(&small.universe)?;
    let map: Vec<usize> = small
        .universe
        .formulas
        .iter()
        .map(|f| big.universe.index_of(f).expect("embedded"))
        .collect();
    Ok((0..small.table.len()).into_par_iter().find_map_first(|g| {
        let lhs = small.table[g];
        let rhs = preimage(&map, big.table[image(&map, g as Mask) as usize] & embed);
        if lhs == rhs {
            return None;
        }
        let lost = lhs & !rhs;
        let (goal, failure) = if lost != 0 {
            (lost.trailing_zeros() as usize, ConservativityFailure::Lost)
        } else {
            ((rhs & !lhs).trailing_zeros() as usize, ConservativityFailure::Gained)
        };
        Some(ConservativityWitness {
            pair: PairWitness {
                premises: g as Mask,
                goal,
            },
            failure,
        })
    }))
}

/// Parses the line-based presentation format:
///
/// ```text
/// sig a:0 f:2
/// vars x y
/// rule x, f(x, y) => a
/// rule => a
/// bounds depth=3 iters=64
/// ```
///
/// `#` starts a comment. `sig` and `vars` must precede the first rule.
pub fn parse_presentation(text: &str) -> Result<Presentation, LogicError> {
    let mut sig = None;
    let mut vars = None;
    let mut bounds = SearchBounds::default();
    let mut raw_rules: Vec<(usize, &str)> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let err = |msg: String| LogicError::Parse { line: line_no, msg };
        match head {
            "sig" => {
                if sig.is_some() {
                    return Err(err("duplicate `sig` line".into()));
                }
                let mut entries = Vec::new();
                for item in rest.split_whitespace() {
                    let (name, arity) = item
                        .split_once(':')
                        .ok_or_else(|| err(format!("expected name:arity, got `{item}`")))?;
                    let arity: usize = arity.parse().map_err(|_| err(format!("bad arity in `{item}`")))?;
                    entries.push((name.to_string(), arity));
                }
                sig = Some(Signature::new(entries).map_err(|e| err(e.to_string()))?);
            }
            "vars" => {
                if vars.is_some() {
                    return Err(err("duplicate `vars` line".into()));
                }
                vars = Some(VarSet::new(rest.split_whitespace()).map_err(|e| err(e.to_string()))?);
            }
            "rule" => raw_rules.push((line_no, rest)),
            "bounds" => {
                for item in rest.split_whitespace() {
                    let (key, value) = item
                        .split_once('=')
                        .ok_or_else(|| err(format!("expected key=value, got `{item}`")))?;
                    let value: usize = value.parse().map_err(|_| err(format!("bad number in `{item}`")))?;
                    match key {
                        "depth" => bounds.max_depth = value,
                        "iters" => bounds.max_iterations = value,
                        _ => return Err(err(format!("unknown bound `{key}`"))),
                    }
                }
            }
            _ => return Err(err(format!("unknown directive `{head}`"))),
        }
    }
    let sig = sig.ok_or(LogicError::Parse {
        line: 0,
        msg: "missing `sig` line".into(),
    })?;
    let vars = vars.ok_or(LogicError::Parse {
        line: 0,
        msg: "missing `vars` line".into(),
    })?;
    check_disjoint(&sig, &vars)?;
    let mut rules = Vec::new();
    for (line, rest) in raw_rules {
        let err = |msg: String| LogicError::Parse { line, msg };
        let (prem, concl) = rest.split_once("=>").ok_or_else(|| err("expected `=>`".into()))?;
        let premises = parse_formula_list(prem, &sig, &vars).map_err(|e| err(e.to_string()))?;
        let conclusion = parse_formula(concl, &sig, &vars).map_err(|e| err(e.to_string()))?;
        rules.push(Rule::new(premises, conclusion));
    }
    Presentation::new(sig, vars, rules, bounds)
}

/// Writes a presentation in the format read by [`parse_presentation`].
pub fn format_presentation(l: &Presentation) -> String {
    let mut out = String::new();
    let sig = l
        .sig
        .ops()
        .map(|op| format!("{}:{}", l.sig.name(op), l.sig.arity(op)))
        .join(" ");
    out.push_str(&format!("sig {sig}\n"));
    out.push_str(&format!("vars {}\n", l.vars.names().join(" ")));
    for r in &l.rules {
        out.push_str(&format!("rule {}\n", r.display(&l.sig, &l.vars)));
    }
    out.push_str(&format!(
        "bounds depth={} iters={}\n",
        l.bounds.max_depth, l.bounds.max_iterations
    ));
    out
}

/// Presentations used throughout the tests, benches and documentation.
pub mod builtin {
    use super::*;

    /// Constants `m11 m12 m21 m22 i1 i2 star`, variable `x`, and the rules
    /// `{m11, m12} ⊢ i1`, `{m21, m22} ⊢ i2`, `{i1, i2} ⊢ star`: `star`
    /// needs all four `m`s, while each rule needs only two premises.
    pub const SINGULAR_ANALOG: &str = "\
sig m11:0 m12:0 m21:0 m22:0 i1:0 i2:0 star:0
vars x
rule m11, m12 => i1
rule m21, m22 => i2
rule i1, i2 => star
";

    /// One constant `a`, variable `x`, and the rule `x ⊢ a`.
    pub const RUNNING_EXAMPLE: &str = "\
sig a:0
vars x
rule x => a
";

    pub fn singular_analog() -> Presentation {
        parse_presentation(SINGULAR_ANALOG).expect("built-in presentation parses")
    }

    pub fn running_example() -> Presentation {
        parse_presentation(RUNNING_EXAMPLE).expect("built-in presentation parses")
    }
}

/// A substitution as `name -> formula` pairs, for reports.
pub fn substitution_pairs(sigma: &Substitution, sig: &Signature, vars: &VarSet) -> BTreeMap<String, String> {
    sigma
        .iter()
        .map(|(v, f)| (vars.name(v).to_string(), format_formula(f, sig, vars)))
        .collect()
}
