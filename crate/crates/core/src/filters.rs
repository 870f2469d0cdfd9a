//! Logical filters on finite Σ-structures, filter pairs given as
//! intersection families per structure, and the checks relating them to
//! theories and natural extensions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closure::{
    self, bits, full_mask, is_subset, ClosureError, ClosureReport, IntersectionFamily, Mask, Operator,
};
use crate::logic::{image, FiniteRelation, GroundSystem, LogicError, Presentation, Universe};
use crate::term::{FiniteStructure, Odometer, Signature, TermError, Var};

/// Largest carrier whose filters are enumerated.
pub const MAX_FILTER_CARRIER: usize = 16;
/// Largest carrier on which intersection closure is verified pairwise.
pub const MAX_CLOSURE_VERIFY: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error(transparent)]
    Term(#[from] TermError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Closure(#[from] ClosureError),
    #[error("structure `{name}` has {len} elements; the limit is {limit}")]
    TooLarge { name: String, len: usize, limit: usize },
    #[error("`{hom}` is not a homomorphism: {detail}")]
    NotHomomorphism { hom: String, detail: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown structure `{0}`")]
    UnknownStructure(String),
    #[error("generated filter of {set} differs between saturation and intersection")]
    RouteDisagreement { set: String },
    #[error("{0}")]
    Invalid(String),
}

/// Where a ground instance came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    /// Rule `rule` under a valuation of its variables.
    Rule { rule: usize, valuation: Vec<(Var, usize)> },
    /// A pair `Γ ⊢ φ` of a tabulated relation under an element map of its
    /// universe into the structure.
    Pair {
        premises: Mask,
        goal: usize,
        map: Vec<usize>,
    },
}

/// `(premises, conclusion)` pairs on a structure: a subset is a filter iff
/// it contains the conclusion of every instance whose premises it contains.
#[derive(Debug, Clone)]
pub struct Instances {
    len: usize,
    items: Vec<(Mask, usize)>,
    origins: Vec<Origin>,
}

impl Instances {
    /// Every rule of `l` under every valuation into `a`.
    pub fn of_presentation(l: &Presentation, a: &FiniteStructure) -> Result<Self, FilterError> {
        check_size(a, closure::MAX_CARRIER)?;
        let mut items = Vec::new();
        let mut origins = Vec::new();
        for (ri, rule) in l.rules().iter().enumerate() {
            let vars: Vec<Var> = rule.vars().into_iter().collect();
            for digits in Odometer::new(vars.len(), a.len()) {
                let v: BTreeMap<Var, usize> = vars.iter().copied().zip(digits.iter().copied()).collect();
                let mut prem = 0;
                for p in rule.premises() {
                    prem |= 1 << a.evaluate(&v, p, l.vars())?;
                }
                let concl = a.evaluate(&v, rule.conclusion(), l.vars())?;
                items.push((prem, concl));
                origins.push(Origin::Rule {
                    rule: ri,
                    valuation: v.into_iter().collect(),
                });
            }
        }
        Ok(Instances {
            len: a.len(),
            items,
            origins,
        })
    }

    /// Every pair of `rel` under every element map of its universe into `a`
    /// that fixes the constants.
    pub fn of_relation(rel: &FiniteRelation, a: &FiniteStructure) -> Result<Self, FilterError> {
        check_size(a, closure::MAX_CARRIER)?;
        let u = rel.universe();
        let vars: Vec<Var> = u.vars().vars().collect();
        let mut items = Vec::new();
        let mut origins = Vec::new();
        for digits in Odometer::new(vars.len(), a.len()) {
            let v: BTreeMap<Var, usize> = vars.iter().copied().zip(digits.iter().copied()).collect();
            let map = u
                .formulas()
                .iter()
                .map(|f| a.evaluate(&v, f, u.vars()))
                .collect::<Result<Vec<_>, _>>()?;
            for g in 0..1u64 << u.len() {
                let prem = image(&map, g);
                for phi in bits(rel.consequences(g) & !g) {
                    items.push((prem, map[phi]));
                    origins.push(Origin::Pair {
                        premises: g,
                        goal: phi,
                        map: map.clone(),
                    });
                }
            }
        }
        Ok(Instances {
            len: a.len(),
            items,
            origins,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[(Mask, usize)] {
        &self.items
    }

    /// First instance violated by `f`.
    pub fn violation(&self, f: Mask) -> Option<usize> {
        self.items
            .iter()
            .position(|&(p, c)| is_subset(p, f) && f & (1 << c) == 0)
    }

    pub fn is_filter(&self, f: Mask) -> bool {
        self.violation(f).is_none()
    }

    /// Least filter containing `s`, by saturation.
    pub fn saturate(&self, s: Mask) -> Mask {
        let mut cur = s;
        loop {
            let next = self
                .items
                .iter()
                .filter(|(p, _)| is_subset(*p, cur))
                .fold(cur, |m, &(_, c)| m | 1 << c);
            if next == cur {
                return cur;
            }
            cur = next;
        }
    }

    pub fn origin(&self, i: usize) -> &Origin {
        &self.origins[i]
    }
}

fn check_size(a: &FiniteStructure, limit: usize) -> Result<(), FilterError> {
    if a.len() > limit {
        return Err(FilterError::TooLarge {
            name: a.name().to_string(),
            len: a.len(),
            limit,
        });
    }
    Ok(())
}

/// A violated instance, rendered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterWitness {
    pub premises: Vec<String>,
    pub conclusion: String,
    /// The rule or pair and the valuation that produced the instance.
    pub source: String,
}

fn element_names(a: &FiniteStructure, m: Mask) -> Vec<String> {
    bits(m).map(|i| a.carrier()[i].clone()).collect()
}

/// Renders instance `i` of `inst` for a presentation.
pub fn describe_rule_instance(l: &Presentation, a: &FiniteStructure, inst: &Instances, i: usize) -> FilterWitness {
    let (p, c) = inst.items[i];
    let source = match inst.origin(i) {
        Origin::Rule { rule, valuation } => {
            let vals: Vec<String> = valuation
                .iter()
                .map(|(v, e)| format!("{} ↦ {}", l.vars().name(*v), a.carrier()[*e]))
                .collect();
            format!(
                "rule `{}` under {{{}}}",
                l.rules()[*rule].display(l.sig(), l.vars()),
                vals.join(", ")
            )
        }
        Origin::Pair { .. } => "relation pair".to_string(),
    };
    FilterWitness {
        premises: element_names(a, p),
        conclusion: a.carrier()[c].clone(),
        source,
    }
}

/// Renders instance `i` of `inst` for a tabulated relation.
pub fn describe_pair_instance(rel: &FiniteRelation, a: &FiniteStructure, inst: &Instances, i: usize) -> FilterWitness {
    let (p, c) = inst.items[i];
    let source = match inst.origin(i) {
        Origin::Pair { premises, goal, map } => {
            let u = rel.universe();
            let vals: Vec<String> = u
                .vars()
                .vars()
                .map(|v| {
                    let idx = u.index_of(&crate::term::Formula::Var(v)).expect("variable in universe");
                    format!("{} ↦ {}", u.vars().name(v), a.carrier()[map[idx]])
                })
                .collect();
            format!(
                "pair {} ⊢ {} under {{{}}}",
                u.render(*premises),
                u.name(*goal),
                vals.join(", ")
            )
        }
        Origin::Rule { rule, .. } => format!("rule {rule}"),
    };
    FilterWitness {
        premises: element_names(a, p),
        conclusion: a.carrier()[c].clone(),
        source,
    }
}

/// `F` is an l-filter on `a`; otherwise the first violated rule instance.
pub fn is_filter(l: &Presentation, a: &FiniteStructure, f: Mask) -> Result<Option<FilterWitness>, FilterError> {
    let inst = Instances::of_presentation(l, a)?;
    Ok(inst.violation(f).map(|i| describe_rule_instance(l, a, &inst, i)))
}

/// All filters of a structure, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterLattice {
    pub structure: String,
    pub len: usize,
    pub filters: Vec<Mask>,
}

impl FilterLattice {
    pub fn enumerate(inst: &Instances, name: &str) -> Result<Self, FilterError> {
        if inst.len > MAX_FILTER_CARRIER {
            return Err(FilterError::TooLarge {
                name: name.to_string(),
                len: inst.len,
                limit: MAX_FILTER_CARRIER,
            });
        }
        let filters: Vec<Mask> = (0..1u64 << inst.len)
            .into_par_iter()
            .filter(|&f| inst.is_filter(f))
            .collect();
        Ok(FilterLattice {
            structure: name.to_string(),
            len: inst.len,
            filters,
        })
    }

    pub fn contains(&self, f: Mask) -> bool {
        self.filters.binary_search(&f).is_ok()
    }

    /// Intersection of the filters containing `s`.
    pub fn generated(&self, s: Mask) -> Mask {
        self.filters
            .iter()
            .filter(|&&f| is_subset(s, f))
            .fold(full_mask(self.len), |acc, &f| acc & f)
    }

    /// Two filters whose intersection is missing; `None` when closed. Only
    /// run pairwise up to [`MAX_CLOSURE_VERIFY`] elements, since closure
    /// under binary intersections and the presence of the full carrier
    /// give closure under all intersections.
    pub fn intersection_witness(&self) -> Option<(Mask, Mask)> {
        if !self.contains(full_mask(self.len)) {
            return Some((full_mask(self.len), full_mask(self.len)));
        }
        self.filters
            .par_iter()
            .find_map_first(|&f| self.filters.iter().find(|&&g| !self.contains(f & g)).map(|&g| (f, g)))
    }

    /// Two comparable filters whose union is missing.
    pub fn chain_union_witness(&self) -> Option<(Mask, Mask)> {
        self.filters.iter().find_map(|&f| {
            self.filters
                .iter()
                .find(|&&g| is_subset(f, g) && !self.contains(f | g))
                .map(|&g| (f, g))
        })
    }

    pub fn as_family(&self) -> Result<IntersectionFamily, FilterError> {
        Ok(IntersectionFamily::new(self.len, self.filters.iter().copied())?)
    }
}

pub fn all_filters(l: &Presentation, a: &FiniteStructure) -> Result<FilterLattice, FilterError> {
    check_size(a, MAX_FILTER_CARRIER)?;
    FilterLattice::enumerate(&Instances::of_presentation(l, a)?, a.name())
}

/// Least filter containing `s`, by saturation and by intersecting all
/// filters; the two must agree.
pub fn generated_filter(l: &Presentation, a: &FiniteStructure, s: Mask) -> Result<Mask, FilterError> {
    let inst = Instances::of_presentation(l, a)?;
    let by_saturation = inst.saturate(s);
    if a.len() <= MAX_FILTER_CARRIER {
        let lattice = FilterLattice::enumerate(&inst, a.name())?;
        if lattice.generated(s) != by_saturation {
            return Err(FilterError::RouteDisagreement {
                set: format!("{{{}}}", element_names(a, s).join(", ")),
            });
        }
    }
    Ok(by_saturation)
}

/// The adjunction between filters and subsets on one structure: `g` is
/// generation, `f` the inclusion of filters into subsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaloisReport {
    pub structure: String,
    pub subsets: usize,
    pub filters: usize,
    /// `(S, F)` with `g(S) ⊆ F` and `S ⊆ F` disagreeing.
    pub adjunction: Option<(Mask, Mask)>,
    /// A subset on which saturation and intersection disagree.
    pub routes: Option<Mask>,
    /// A filter `F` with `f(g(f(F))) ≠ F`.
    pub fgf: Option<Mask>,
    /// A subset `S` with `g(f(g(S))) ≠ g(S)`.
    pub gfg: Option<Mask>,
    pub closure: ClosureReport,
}

impl GaloisReport {
    pub fn holds(&self) -> bool {
        self.adjunction.is_none()
            && self.routes.is_none()
            && self.fgf.is_none()
            && self.gfg.is_none()
            && self.closure.is_closure()
    }
}

pub fn check_galois(inst: &Instances, name: &str) -> Result<GaloisReport, FilterError> {
    let lattice = FilterLattice::enumerate(inst, name)?;
    let len = inst.len;
    let table: Vec<Mask> = (0..1u64 << len).into_par_iter().map(|s| inst.saturate(s)).collect();
    let routes = (0..1u64 << len)
        .into_par_iter()
        .find_first(|&s| lattice.generated(s) != table[s as usize]);
    let adjunction = (0..1u64 << len).into_par_iter().find_map_first(|s| {
        lattice
            .filters
            .iter()
            .find(|&&f| is_subset(table[s as usize], f) != is_subset(s, f))
            .map(|&f| (s, f))
    });
    let fgf = lattice.filters.iter().copied().find(|&f| table[f as usize] != f);
    let gfg = (0..1u64 << len).find(|&s| {
        let g = table[s as usize];
        table[g as usize] != g
    });
    let op = Operator::from_table(len, table, closure::Arity::Omega)?;
    Ok(GaloisReport {
        structure: name.to_string(),
        subsets: 1 << len,
        filters: lattice.filters.len(),
        adjunction,
        routes,
        fgf,
        gfg,
        closure: closure::is_closure_operator(&op),
    })
}

/// A map between carriers, checked against the operation tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Homomorphism {
    pub name: String,
    pub from: usize,
    pub to: usize,
    pub map: Vec<usize>,
}

/// First operation and arguments where `map` fails to commute.
pub fn homomorphism_defect(sig: &Signature, a: &FiniteStructure, b: &FiniteStructure, map: &[usize]) -> Option<String> {
    if map.len() != a.len() {
        return Some(format!("map has {} entries for {} elements", map.len(), a.len()));
    }
    if let Some(&e) = map.iter().find(|&&e| e >= b.len()) {
        return Some(format!("image {e} outside the target"));
    }
    for op in sig.ops() {
        for args in Odometer::new(sig.arity(op), a.len()) {
            let lhs = map[a.interp(op, &args)];
            let mapped: Vec<usize> = args.iter().map(|&x| map[x]).collect();
            let rhs = b.interp(op, &mapped);
            if lhs != rhs {
                let shown: Vec<&str> = args.iter().map(|&x| a.carrier()[x].as_str()).collect();
                return Some(format!(
                    "h({}({})) = {} but {}(h(..)) = {}",
                    sig.name(op),
                    shown.join(", "),
                    b.carrier()[lhs],
                    sig.name(op),
                    b.carrier()[rhs]
                ));
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NaturalityReport {
    pub hom: String,
    pub filters_checked: usize,
    /// A filter on the target whose preimage is not a filter.
    pub witness: Option<(Mask, Mask)>,
    /// Preimage of every target filter, in order.
    pub preimages: Vec<(Mask, Mask)>,
}

/// For every filter `F` on the target of `h`, `h⁻¹(F)` is a filter on the
/// source.
pub fn check_naturality(
    sig: &Signature,
    inst_a: &Instances,
    a: &FiniteStructure,
    inst_b: &Instances,
    b: &FiniteStructure,
    h: &Homomorphism,
) -> Result<NaturalityReport, FilterError> {
    if let Some(detail) = homomorphism_defect(sig, a, b, &h.map) {
        return Err(FilterError::NotHomomorphism {
            hom: h.name.clone(),
            detail,
        });
    }
    let lb = FilterLattice::enumerate(inst_b, b.name())?;
    let preimages: Vec<(Mask, Mask)> = lb
        .filters
        .iter()
        .map(|&f| (f, crate::logic::preimage(&h.map, f)))
        .collect();
    let witness = preimages.iter().copied().find(|&(_, pre)| !inst_a.is_filter(pre));
    Ok(NaturalityReport {
        hom: h.name.clone(),
        filters_checked: lb.filters.len(),
        witness,
        preimages,
    })
}

/// Theories of a constants-only presentation against its filters on
/// `Fm(X)` read as a structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterTheoryReport {
    pub universe: Vec<String>,
    pub filters: usize,
    pub theories: usize,
    /// A set that is a filter but not a theory, or the reverse.
    pub witness: Option<FilterTheoryWitness>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterTheoryWitness {
    pub set: Vec<String>,
    pub is_filter: bool,
    pub is_theory: bool,
}

pub fn filters_equal_theories(l: &Presentation) -> Result<FilterTheoryReport, FilterError> {
    filters_equal_theories_with(l, |_| {})
}

/// As [`filters_equal_theories`], with `perturb` applied to the theory list
/// before comparison (negative control).
pub fn filters_equal_theories_with(
    l: &Presentation,
    perturb: impl FnOnce(&mut Vec<Mask>),
) -> Result<FilterTheoryReport, FilterError> {
    let u = Universe::of(l)?;
    let fm = FiniteStructure::formula_algebra(l.sig(), l.vars())?;
    let filters = all_filters(l, &fm)?.filters;
    let mut theories = GroundSystem::new(l)?.relation()?.theories();
    perturb(&mut theories);
    theories.sort_unstable();
    theories.dedup();
    let witness = first_difference(&filters, &theories).map(|(set, is_filter)| FilterTheoryWitness {
        set: u.names(set),
        is_filter,
        is_theory: !is_filter,
    });
    Ok(FilterTheoryReport {
        universe: (0..u.len()).map(|i| u.name(i)).collect(),
        filters: filters.len(),
        theories: theories.len(),
        witness,
    })
}

/// Filters of a logic and of one of its extensions on the same structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterComparison {
    pub structure: String,
    pub base_filters: usize,
    pub extension_filters: usize,
    /// A set that is a filter of exactly one side, with `true` when it is a
    /// filter of the base.
    pub witness: Option<(Vec<String>, bool)>,
}

/// Compares the filters of `base` and `ext` on `a`, both read through their
/// derivable pairs. Used to report, not assert, agreement.
pub fn compare_extension_filters(
    base: &FiniteRelation,
    ext: &FiniteRelation,
    a: &FiniteStructure,
) -> Result<FilterComparison, FilterError> {
    let fb = FilterLattice::enumerate(&Instances::of_relation(base, a)?, a.name())?.filters;
    let fe = FilterLattice::enumerate(&Instances::of_relation(ext, a)?, a.name())?.filters;
    Ok(FilterComparison {
        structure: a.name().to_string(),
        base_filters: fb.len(),
        extension_filters: fe.len(),
        witness: first_difference(&fb, &fe).map(|(m, in_base)| (element_names(a, m), in_base)),
    })
}

/// First element of the symmetric difference of two sorted lists, with
/// `true` when it comes from `a`.
fn first_difference(a: &[Mask], b: &[Mask]) -> Option<(Mask, bool)> {
    let only_a = a.iter().find(|x| b.binary_search(x).is_err()).map(|&x| (x, true));
    let only_b = b.iter().find(|x| a.binary_search(x).is_err()).map(|&x| (x, false));
    match (only_a, only_b) {
        (Some(x), Some(y)) => Some(if x.0 <= y.0 { x } else { y }),
        (x, y) => x.or(y),
    }
}

/// A mono filter pair restricted to a declared family: one intersection
/// family per structure, and the homomorphisms along which naturality is
/// required.
#[derive(Debug, Clone)]
pub struct AbstractFilterPair {
    pub sig: Signature,
    pub structures: Vec<FiniteStructure>,
    pub families: Vec<IntersectionFamily>,
    pub homs: Vec<Homomorphism>,
}

impl AbstractFilterPair {
    /// Validates the homomorphisms and naturality: preimages of members are
    /// members.
    pub fn new(
        sig: Signature,
        structures: Vec<FiniteStructure>,
        families: Vec<IntersectionFamily>,
        homs: Vec<Homomorphism>,
    ) -> Result<Self, FilterError> {
        if structures.len() != families.len() {
            return Err(FilterError::Invalid(format!(
                "{} structures but {} families",
                structures.len(),
                families.len()
            )));
        }
        for (s, f) in structures.iter().zip(&families) {
            if s.len() != f.len() {
                return Err(FilterError::Invalid(format!(
                    "family for `{}` has the wrong carrier",
                    s.name()
                )));
            }
        }
        for h in &homs {
            let (a, b) = (&structures[h.from], &structures[h.to]);
            if let Some(detail) = homomorphism_defect(&sig, a, b, &h.map) {
                return Err(FilterError::NotHomomorphism {
                    hom: h.name.clone(),
                    detail,
                });
            }
            for &m in families[h.to].sets() {
                let pre = crate::logic::preimage(&h.map, m);
                if !families[h.from].contains(pre) {
                    return Err(FilterError::Invalid(format!(
                        "naturality fails along `{}`: preimage of {{{}}} is not a member",
                        h.name,
                        element_names(b, m).join(", ")
                    )));
                }
            }
        }
        Ok(AbstractFilterPair {
            sig,
            structures,
            families,
            homs,
        })
    }

    /// The filters of a logic on every structure.
    pub fn canonical(
        sig: Signature,
        structures: Vec<FiniteStructure>,
        homs: Vec<Homomorphism>,
        instances: impl Fn(&FiniteStructure) -> Result<Instances, FilterError>,
    ) -> Result<Self, FilterError> {
        let families = structures
            .iter()
            .map(|s| FilterLattice::enumerate(&instances(s)?, s.name())?.as_family())
            .collect::<Result<Vec<_>, _>>()?;
        AbstractFilterPair::new(sig, structures, families, homs)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.structures.iter().position(|s| s.name() == name)
    }
}

/// `Γ ↦` least member of the family on `fm` containing `Γ`, read as a
/// relation on `universe` (whose element order must match `fm`).
pub fn induced_logic(
    fp: &AbstractFilterPair,
    fm: usize,
    universe: Arc<Universe>,
) -> Result<FiniteRelation, FilterError> {
    let s = &fp.structures[fm];
    let names: Vec<String> = (0..universe.len()).map(|i| universe.name(i)).collect();
    if names != s.carrier() {
        return Err(FilterError::Invalid(format!(
            "structure `{}` is not the formula algebra of the universe",
            s.name()
        )));
    }
    let table = closure::family_table(universe.len(), fp.families[fm].sets());
    Ok(FiniteRelation::new(universe, table))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialityReport {
    /// A member of some family that is not a filter of the logic.
    pub witness: Option<(String, Vec<String>)>,
    /// Some structure has strictly fewer members than filters.
    pub strict: bool,
}

/// Every member of the pair's family on each structure is a filter of the
/// logic whose instances are given by `instances`.
pub fn check_initiality(
    fp: &AbstractFilterPair,
    instances: impl Fn(&FiniteStructure) -> Result<Instances, FilterError>,
) -> Result<InitialityReport, FilterError> {
    let mut strict = false;
    for (s, fam) in fp.structures.iter().zip(&fp.families) {
        let inst = instances(s)?;
        if let Some(&m) = fam.sets().iter().find(|&&m| !inst.is_filter(m)) {
            return Ok(InitialityReport {
                witness: Some((s.name().to_string(), element_names(s, m))),
                strict,
            });
        }
        if s.len() <= MAX_FILTER_CARRIER {
            strict |= FilterLattice::enumerate(&inst, s.name())?.filters.len() > fam.size();
        }
    }
    Ok(InitialityReport { witness: None, strict })
}

/// `Fm(W)` for every prefix `W` of the relation's variables that contains
/// the first `from` of them, as universes and structures.
pub fn prefix_family(rel: &FiniteRelation, from: usize) -> Result<Vec<(Arc<Universe>, FiniteStructure)>, FilterError> {
    let u = rel.universe();
    let all = u.vars();
    (from..=all.len())
        .map(|k| {
            let w = all.prefix(k);
            let uw = Arc::new(Universe::new(u.sig(), &w)?);
            let mut s = FiniteStructure::formula_algebra(u.sig(), &w)?;
            s = rename(s, u.sig(), format!("Fm({})", w.names().join(",")))?;
            Ok((uw, s))
        })
        .collect()
}

fn rename(s: FiniteStructure, sig: &Signature, name: String) -> Result<FiniteStructure, FilterError> {
    let tables = sig
        .ops()
        .map(|op| {
            let arity = sig.arity(op);
            Odometer::new(arity, s.len()).map(|args| s.interp(op, &args)).collect()
        })
        .collect();
    Ok(FiniteStructure::new(name, sig, s.carrier().to_vec(), tables)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundtripLevel {
    pub vars: Vec<String>,
    pub members: usize,
    /// The family on `Fm(W)` equals the theories of the restriction.
    pub filters_are_theories: bool,
    /// The logic induced on `Fm(W)` equals the restriction.
    pub induced_matches: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub levels: Vec<RoundtripLevel>,
    pub homs: usize,
}

impl RoundtripReport {
    pub fn identity(&self) -> bool {
        self.levels.iter().all(|l| l.filters_are_theories && l.induced_matches)
    }
}

/// The filter pair of `rel` on `Fm(W)` for the prefixes `W` of its
/// variables from `from` upward, with every substitution-induced map
/// between them declared.
pub fn theory_family(rel: &FiniteRelation, from: usize) -> Result<AbstractFilterPair, FilterError> {
    let family = prefix_family(rel, from)?;
    let mut homs = Vec::new();
    for (i, (ui, _)) in family.iter().enumerate() {
        for (j, (uj, _)) in family.iter().enumerate() {
            for (k, (_, map)) in ui.maps_into(uj).into_iter().enumerate() {
                homs.push(Homomorphism {
                    name: format!("h{i}.{j}.{k}"),
                    from: i,
                    to: j,
                    map,
                });
            }
        }
    }
    let sig = rel.universe().sig().clone();
    let (_, structures): (Vec<_>, Vec<_>) = family.into_iter().unzip();
    AbstractFilterPair::canonical(sig, structures, homs, |s| Instances::of_relation(rel, s))
}

/// Relation → its filter pair on the prefixes of its variables → the
/// induced logic on each prefix; compares with the restrictions of the
/// relation.
pub fn natext_theoryfamily_roundtrip(rel: &FiniteRelation, from: usize) -> Result<RoundtripReport, FilterError> {
    let fp = theory_family(rel, from)?;
    let family = prefix_family(rel, from)?;
    let levels = family
        .iter()
        .enumerate()
        .map(|(i, (uw, _))| {
            let restricted = rel.restrict(uw.clone())?;
            let induced = induced_logic(&fp, i, uw.clone())?;
            let mut theories = restricted.theories();
            theories.sort_unstable();
            Ok(RoundtripLevel {
                vars: uw.vars().names().to_vec(),
                members: fp.families[i].size(),
                filters_are_theories: fp.families[i].sets() == theories.as_slice(),
                induced_matches: induced == restricted,
            })
        })
        .collect::<Result<Vec<_>, FilterError>>()?;
    Ok(RoundtripReport {
        levels,
        homs: fp.homs.len(),
    })
}

/// The families of a filter pair, for injectivity comparisons.
pub fn family_signature(fp: &AbstractFilterPair) -> Vec<Vec<Mask>> {
    fp.families.iter().map(|f| f.sets().to_vec()).collect()
}

/// Structures and homomorphisms read from a structure file.
#[derive(Debug, Clone)]
pub struct StructureFile {
    pub structures: Vec<FiniteStructure>,
    pub homs: Vec<Homomorphism>,
}

impl StructureFile {
    pub fn structure(&self, name: &str) -> Result<&FiniteStructure, FilterError> {
        self.structures
            .iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| FilterError::UnknownStructure(name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    text: String,
    line: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let spaced = line.replace("->", " -> ").replace(';', " ; ").replace(':', " : ");
        out.extend(spaced.split_whitespace().map(|t| Token {
            text: t.to_string(),
            line: no + 1,
        }));
    }
    out
}

/// Reads
///
/// ```text
/// struct <name> carrier <e> ... ; <connective> <args...> -> <e> ; ...
/// hom <name>? <A> -> <B> : <e> -> <e> ...
/// ```
///
/// Every operation table must be total.
pub fn parse_structures(text: &str, sig: &Signature) -> Result<StructureFile, FilterError> {
    let tokens = tokenize(text);
    let mut pos = 0;
    let mut structures: Vec<FiniteStructure> = Vec::new();
    let mut homs = Vec::new();
    let err = |line: usize, msg: String| FilterError::Parse { line, msg };
    let last_line = tokens.last().map_or(0, |t| t.line);
    let at = |pos: usize| tokens.get(pos).map(|t| t.text.as_str());
    let line_of = |pos: usize| tokens.get(pos).map_or(last_line, |t| t.line);
    let is_keyword = |t: Option<&str>| matches!(t, Some("struct") | Some("hom") | None);
    while pos < tokens.len() {
        match at(pos) {
            Some("struct") => {
                let start = line_of(pos);
                let name = at(pos + 1)
                    .ok_or_else(|| err(start, "missing structure name".into()))?
                    .to_string();
                if at(pos + 2) != Some("carrier") {
                    return Err(err(start, "expected `carrier` after the structure name".into()));
                }
                pos += 3;
                let mut carrier = Vec::new();
                while !matches!(at(pos), Some(";")) && !is_keyword(at(pos)) && line_of(pos) == start {
                    carrier.push(at(pos).unwrap().to_string());
                    pos += 1;
                }
                if at(pos) == Some(";") {
                    pos += 1;
                }
                let mut tables: Vec<Vec<Option<usize>>> = sig
                    .ops()
                    .map(|op| vec![None; carrier.len().pow(sig.arity(op) as u32)])
                    .collect();
                let elem = |t: &str, line: usize| {
                    carrier
                        .iter()
                        .position(|c| c == t)
                        .ok_or_else(|| err(line, format!("`{t}` is not in the carrier of `{name}`")))
                };
                while !is_keyword(at(pos)) {
                    let line = line_of(pos);
                    let mut entry = Vec::new();
                    while !matches!(at(pos), Some(";")) && !is_keyword(at(pos)) {
                        entry.push(at(pos).unwrap());
                        pos += 1;
                    }
                    if at(pos) == Some(";") {
                        pos += 1;
                    }
                    if entry.is_empty() {
                        continue;
                    }
                    let arrow = entry
                        .iter()
                        .position(|t| *t == "->")
                        .ok_or_else(|| err(line, "expected `<connective> <args> -> <element>`".into()))?;
                    if arrow + 2 != entry.len() || arrow == 0 {
                        return Err(err(line, "expected `<connective> <args> -> <element>`".into()));
                    }
                    let op = sig
                        .lookup(entry[0])
                        .ok_or_else(|| err(line, format!("unknown connective `{}`", entry[0])))?;
                    let args = &entry[1..arrow];
                    if args.len() != sig.arity(op) {
                        return Err(err(
                            line,
                            format!("`{}` takes {} arguments, got {}", entry[0], sig.arity(op), args.len()),
                        ));
                    }
                    let mut index = 0;
                    for a in args {
                        index = index * carrier.len() + elem(a, line)?;
                    }
                    let value = elem(entry[arrow + 1], line)?;
                    let slot = &mut tables[op.0 as usize][index];
                    if slot.is_some_and(|v| v != value) {
                        return Err(err(line, format!("conflicting entries for `{}`", entry[0])));
                    }
                    *slot = Some(value);
                }
                let tables = sig
                    .ops()
                    .map(|op| {
                        tables[op.0 as usize]
                            .iter()
                            .map(|v| {
                                v.ok_or_else(|| err(start, format!("`{}` is not total on `{name}`", sig.name(op))))
                            })
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if structures.iter().any(|s| s.name() == name) {
                    return Err(err(start, format!("duplicate structure `{name}`")));
                }
                structures
                    .push(FiniteStructure::new(name, sig, carrier, tables).map_err(|e| err(start, e.to_string()))?);
            }
            Some("hom") => {
                let start = line_of(pos);
                pos += 1;
                let mut head = Vec::new();
                while !matches!(at(pos), Some(":")) && !is_keyword(at(pos)) {
                    head.push(at(pos).unwrap());
                    pos += 1;
                }
                if at(pos) != Some(":") {
                    return Err(err(start, "expected `hom <A> -> <B> : ...`".into()));
                }
                pos += 1;
                let (name, from, to) = match head.as_slice() {
                    [a, "->", b] => (format!("{a}->{b}"), *a, *b),
                    [n, a, "->", b] => (n.to_string(), *a, *b),
                    _ => return Err(err(start, "expected `hom <A> -> <B> : ...`".into())),
                };
                let find = |n: &str| {
                    structures
                        .iter()
                        .position(|s| s.name() == n)
                        .ok_or_else(|| err(start, format!("unknown structure `{n}`")))
                };
                let (fi, ti) = (find(from)?, find(to)?);
                let mut map: Vec<Option<usize>> = vec![None; structures[fi].len()];
                while !is_keyword(at(pos)) {
                    if at(pos) == Some(";") {
                        pos += 1;
                        continue;
                    }
                    let line = line_of(pos);
                    let (Some(x), Some("->"), Some(y)) = (at(pos), at(pos + 1), at(pos + 2)) else {
                        return Err(err(line, "expected `<element> -> <element>`".into()));
                    };
                    let xi = structures[fi]
                        .element(x)
                        .ok_or_else(|| err(line, format!("`{x}` is not in `{from}`")))?;
                    let yi = structures[ti]
                        .element(y)
                        .ok_or_else(|| err(line, format!("`{y}` is not in `{to}`")))?;
                    map[xi] = Some(yi);
                    pos += 3;
                }
                let map = map
                    .into_iter()
                    .enumerate()
                    .map(|(i, m)| {
                        m.ok_or_else(|| err(start, format!("`{}` has no image", structures[fi].carrier()[i])))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                homs.push(Homomorphism {
                    name,
                    from: fi,
                    to: ti,
                    map,
                });
            }
            Some(other) => {
                return Err(err(
                    line_of(pos),
                    format!("expected `struct` or `hom`, found `{other}`"),
                ))
            }
            None => break,
        }
    }
    Ok(StructureFile { structures, homs })
}

impl fmt::Display for FilterWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{{}}} ⊆ F but {} ∉ F ({})",
            self.premises.join(", "),
            self.conclusion,
            self.source
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> (Presentation, StructureFile) {
        let l = crate::logic::parse_presentation("sig a:0 b:0\nvars x\nrule a => b\n").unwrap();
        let text = "struct two carrier 0 1 ; a -> 0 ; b -> 1\nstruct one carrier u ; a -> u ; b -> u\nhom two -> one : 0 -> u 1 -> u\n";
        let file = parse_structures(text, l.sig()).unwrap();
        (l, file)
    }

    #[test]
    fn filters_on_two_element_structure() {
        let (l, file) = ab();
        let two = file.structure("two").unwrap();
        assert!(is_filter(&l, two, 0b11).unwrap().is_none());
        assert!(is_filter(&l, two, 0b10).unwrap().is_none());
        let w = is_filter(&l, two, 0b01).unwrap().unwrap();
        assert_eq!(w.conclusion, "1");
        assert_eq!(all_filters(&l, two).unwrap().filters, vec![0b00, 0b10, 0b11]);
        assert_eq!(generated_filter(&l, two, 0b01).unwrap(), 0b11);
    }

    #[test]
    fn collapsing_hom_is_natural() {
        let (l, file) = ab();
        let h = &file.homs[0];
        let (a, b) = (&file.structures[h.from], &file.structures[h.to]);
        let ia = Instances::of_presentation(&l, a).unwrap();
        let ib = Instances::of_presentation(&l, b).unwrap();
        let r = check_naturality(l.sig(), &ia, a, &ib, b, h).unwrap();
        assert!(r.witness.is_none());
        assert_eq!(r.preimages, vec![(0b0, 0b00), (0b1, 0b11)]);
    }

    #[test]
    fn non_homomorphism_is_rejected() {
        let (l, file) = ab();
        let two = file.structure("two").unwrap();
        let swap = Homomorphism {
            name: "swap".into(),
            from: 0,
            to: 0,
            map: vec![1, 0],
        };
        let inst = Instances::of_presentation(&l, two).unwrap();
        assert!(matches!(
            check_naturality(l.sig(), &inst, two, &inst, two, &swap),
            Err(FilterError::NotHomomorphism { .. })
        ));
    }

    #[test]
    fn parse_errors_carry_lines() {
        let sig = Signature::new([("a", 0)]).unwrap();
        let e = parse_structures("struct s carrier 0\n  a -> 7\n", &sig).unwrap_err();
        assert!(matches!(e, FilterError::Parse { line: 2, .. }));
        let e = parse_structures("struct s carrier 0 1\n", &sig).unwrap_err();
        assert!(matches!(e, FilterError::Parse { line: 1, .. }));
    }
}
