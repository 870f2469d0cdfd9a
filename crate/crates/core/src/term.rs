//! Signatures, formulas, substitutions, one-sided matching and finite
//! Σ-structures.
//!
//! Connectives and variables are interned: an [`Op`] indexes into its
//! [`Signature`], a [`Var`] indexes into a [`VarSet`]. Extending a variable
//! set only ever appends, so a formula over `X` is also a formula over every
//! extension of `X` without renumbering.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("symbol `{0}` is both a connective and a variable")]
    SymbolClash(String),
    #[error("invalid symbol `{0}`")]
    InvalidSymbol(String),
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown symbol `{name}` at byte {pos}")]
    UnknownSymbol { name: String, pos: usize },
    #[error("`{name}` expects {expected} argument(s), got {found} (at byte {pos})")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
        pos: usize,
    },
    #[error("variable `{0}` is unbound")]
    UnboundVariable(String),
    #[error("structure `{structure}`: {msg}")]
    Structure { structure: String, msg: String },
}

/// A connective of some signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Op(pub u32);

/// A variable of some variable set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

fn is_symbol(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A ranked alphabet. Declaration order is the symbol order used everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    names: Vec<String>,
    arities: Vec<usize>,
    index: HashMap<String, Op>,
}

impl Signature {
    pub fn new<I, S>(entries: I) -> Result<Self, TermError>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let mut sig = Signature {
            names: Vec::new(),
            arities: Vec::new(),
            index: HashMap::new(),
        };
        for (name, arity) in entries {
            let name = name.into();
            if !is_symbol(&name) {
                return Err(TermError::InvalidSymbol(name));
            }
            if sig.index.contains_key(&name) {
                return Err(TermError::DuplicateSymbol(name));
            }
            sig.index.insert(name.clone(), Op(sig.names.len() as u32));
            sig.names.push(name);
            sig.arities.push(arity);
        }
        Ok(sig)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ops(&self) -> impl Iterator<Item = Op> + '_ {
        (0..self.names.len() as u32).map(Op)
    }

    pub fn arity(&self, op: Op) -> usize {
        self.arities[op.0 as usize]
    }

    pub fn name(&self, op: Op) -> &str {
        &self.names[op.0 as usize]
    }

    pub fn lookup(&self, name: &str) -> Option<Op> {
        self.index.get(name).copied()
    }

    /// The arity-0 connectives, in declaration order.
    pub fn constants(&self) -> impl Iterator<Item = Op> + '_ {
        self.ops().filter(|&op| self.arity(op) == 0)
    }

    /// True when every connective is a constant, so `Fm(X)` is `Σ₀ ∪ X`.
    pub fn is_constants_only(&self) -> bool {
        self.arities.iter().all(|&a| a == 0)
    }
}

/// An ordered, finite set of variable names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarSet {
    names: Vec<String>,
    index: HashMap<String, Var>,
}

impl VarSet {
    pub fn new<I, S>(names: I) -> Result<Self, TermError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vars = VarSet {
            names: Vec::new(),
            index: HashMap::new(),
        };
        vars.push_all(names)?;
        Ok(vars)
    }

    fn push_all<I, S>(&mut self, names: I) -> Result<(), TermError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for name in names {
            let name = name.into();
            if !is_symbol(&name) {
                return Err(TermError::InvalidSymbol(name));
            }
            if self.index.contains_key(&name) {
                return Err(TermError::DuplicateSymbol(name));
            }
            self.index.insert(name.clone(), Var(self.names.len() as u32));
            self.names.push(name);
        }
        Ok(())
    }

    /// A superset that keeps `self` as its prefix; names already present are
    /// skipped so that `X.extend(Y)` is `X ∪ Y` in `X`-first order.
    pub fn extend<I, S>(&self, more: I) -> Result<VarSet, TermError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = self.clone();
        let fresh: Vec<String> = more
            .into_iter()
            .map(Into::into)
            .filter(|n| !self.index.contains_key(n))
            .collect();
        out.push_all(fresh)?;
        Ok(out)
    }

    /// The first `len` variables.
    pub fn prefix(&self, len: usize) -> VarSet {
        VarSet::new(self.names[..len].iter().cloned()).expect("prefix of a valid VarSet")
    }

    /// True when `self` is an ordered prefix of `other`.
    pub fn is_prefix_of(&self, other: &VarSet) -> bool {
        self.names.len() <= other.names.len() && self.names[..] == other.names[..self.names.len()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        (0..self.names.len() as u32).map(Var)
    }

    pub fn contains(&self, v: Var) -> bool {
        (v.0 as usize) < self.names.len()
    }

    pub fn name(&self, v: Var) -> &str {
        &self.names[v.0 as usize]
    }

    pub fn lookup(&self, name: &str) -> Option<Var> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Rejects variable names that are also connective names.
pub fn check_disjoint(sig: &Signature, vars: &VarSet) -> Result<(), TermError> {
    for name in vars.names() {
        if sig.lookup(name).is_some() {
            return Err(TermError::SymbolClash(name.clone()));
        }
    }
    Ok(())
}

/// A term of the absolutely free algebra.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Var(Var),
    App(Op, Arc<[Formula]>),
}

impl Formula {
    pub fn var(v: Var) -> Self {
        Formula::Var(v)
    }

    pub fn constant(op: Op) -> Self {
        Formula::App(op, Arc::from(Vec::new()))
    }

    pub fn app(op: Op, args: Vec<Formula>) -> Self {
        Formula::App(op, Arc::from(args))
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Var(_) => 0,
            Formula::App(_, args) => args.iter().map(|a| a.depth() + 1).max().unwrap_or(0),
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Formula::Var(_))
    }

    pub fn as_var(&self) -> Option<Var> {
        match self {
            Formula::Var(v) => Some(*v),
            Formula::App(..) => None,
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Formula::Var(_) => false,
            Formula::App(_, args) => args.iter().all(Formula::is_ground),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Formula::Var(v) => {
                out.insert(*v);
            }
            Formula::App(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// `var(φ)`.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    /// True when every variable of `self` lies in `vars`.
    pub fn is_over(&self, vars: &VarSet) -> bool {
        match self {
            Formula::Var(v) => vars.contains(*v),
            Formula::App(_, args) => args.iter().all(|a| a.is_over(vars)),
        }
    }

    /// All subterms, `self` included, without duplicates.
    pub fn subterms(&self) -> BTreeSet<Formula> {
        fn walk(f: &Formula, out: &mut BTreeSet<Formula>) {
            if out.insert(f.clone()) {
                if let Formula::App(_, args) = f {
                    args.iter().for_each(|a| walk(a, out));
                }
            }
        }
        let mut out = BTreeSet::new();
        walk(self, &mut out);
        out
    }

    /// Depth of the shallowest occurrence of `v`, if it occurs at all.
    pub fn var_depth(&self, v: Var) -> Option<usize> {
        match self {
            Formula::Var(w) => (*w == v).then_some(0),
            Formula::App(_, args) => args.iter().filter_map(|a| a.var_depth(v)).min().map(|d| d + 1),
        }
    }

    pub fn display<'a>(&'a self, sig: &'a Signature, vars: &'a VarSet) -> FormulaDisplay<'a> {
        FormulaDisplay {
            formula: self,
            sig,
            vars,
        }
    }
}

/// Depth first, then variables after connectives, then symbol index, then
/// arguments lexicographically.
impl Ord for Formula {
    fn cmp(&self, other: &Self) -> Ordering {
        fn structural(a: &Formula, b: &Formula) -> Ordering {
            match (a, b) {
                (Formula::App(f, xs), Formula::App(g, ys)) => f.cmp(g).then_with(|| {
                    for (x, y) in xs.iter().zip(ys.iter()) {
                        let o = x.cmp(y);
                        if o != Ordering::Equal {
                            return o;
                        }
                    }
                    xs.len().cmp(&ys.len())
                }),
                (Formula::App(..), Formula::Var(_)) => Ordering::Less,
                (Formula::Var(_), Formula::App(..)) => Ordering::Greater,
                (Formula::Var(v), Formula::Var(w)) => v.cmp(w),
            }
        }
        self.depth().cmp(&other.depth()).then_with(|| structural(self, other))
    }
}

impl PartialOrd for Formula {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct FormulaDisplay<'a> {
    formula: &'a Formula,
    sig: &'a Signature,
    vars: &'a VarSet,
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.formula {
            Formula::Var(v) if self.vars.contains(*v) => f.write_str(self.vars.name(*v)),
            Formula::Var(v) => write!(f, "?{}", v.0),
            Formula::App(op, args) => {
                f.write_str(self.sig.name(*op))?;
                if !args.is_empty() {
                    f.write_str("(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{}", a.display(self.sig, self.vars))?;
                    }
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

pub fn format_formula(phi: &Formula, sig: &Signature, vars: &VarSet) -> String {
    phi.display(sig, vars).to_string()
}

/// Parses `formula := var | const | name '(' formula (',' formula)* ')'`.
pub fn parse_formula(text: &str, sig: &Signature, vars: &VarSet) -> Result<Formula, TermError> {
    let mut p = Parser {
        src: text,
        pos: 0,
        sig,
        vars,
    };
    let f = p.formula()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.syntax("trailing input"));
    }
    Ok(f)
}

/// Parses a comma separated list of formulas; the empty string is the empty list.
pub fn parse_formula_list(text: &str, sig: &Signature, vars: &VarSet) -> Result<Vec<Formula>, TermError> {
    let mut p = Parser {
        src: text,
        pos: 0,
        sig,
        vars,
    };
    let mut out = Vec::new();
    p.skip_ws();
    if p.pos == text.len() {
        return Ok(out);
    }
    loop {
        out.push(p.formula()?);
        p.skip_ws();
        match p.peek() {
            Some(',') => p.pos += 1,
            None => return Ok(out),
            Some(_) => return Err(p.syntax("expected `,` or end of input")),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    sig: &'a Signature,
    vars: &'a VarSet,
}

impl Parser<'_> {
    fn syntax(&self, msg: &str) -> TermError {
        TermError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn ident(&mut self) -> Result<(usize, &str), TermError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
            end += 1;
        }
        if end == start || bytes[start].is_ascii_digit() {
            return Err(self.syntax("expected a symbol"));
        }
        self.pos = end;
        Ok((start, &self.src[start..end]))
    }

    fn formula(&mut self) -> Result<Formula, TermError> {
        let (start, name) = self.ident()?;
        let name = name.to_string();
        self.skip_ws();
        let mut args = Vec::new();
        if self.peek() == Some('(') {
            self.pos += 1;
            loop {
                args.push(self.formula()?);
                self.skip_ws();
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.syntax("expected `,` or `)`")),
                }
            }
        }
        if let Some(v) = self.vars.lookup(&name) {
            if !args.is_empty() {
                return Err(TermError::ArityMismatch {
                    name,
                    expected: 0,
                    found: args.len(),
                    pos: start,
                });
            }
            return Ok(Formula::Var(v));
        }
        let op = self.sig.lookup(&name).ok_or(TermError::UnknownSymbol {
            name: name.clone(),
            pos: start,
        })?;
        let expected = self.sig.arity(op);
        if expected != args.len() {
            return Err(TermError::ArityMismatch {
                name,
                expected,
                found: args.len(),
                pos: start,
            });
        }
        Ok(Formula::app(op, args))
    }
}

/// A finite map from variables to formulas; every other variable is fixed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution {
    map: BTreeMap<Var, Formula>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (Var, Formula)>>(pairs: I) -> Self {
        let mut s = Self::new();
        for (v, f) in pairs {
            s.bind(v, f);
        }
        s
    }

    /// Sets `v ↦ f`; identity bindings are dropped so equality is extensional.
    pub fn bind(&mut self, v: Var, f: Formula) {
        if f == Formula::Var(v) {
            self.map.remove(&v);
        } else {
            self.map.insert(v, f);
        }
    }

    pub fn get(&self, v: Var) -> Option<&Formula> {
        self.map.get(&v)
    }

    pub fn image(&self, v: Var) -> Formula {
        self.map.get(&v).cloned().unwrap_or(Formula::Var(v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Formula)> {
        self.map.iter().map(|(v, f)| (*v, f))
    }

    pub fn is_identity(&self) -> bool {
        self.map.is_empty()
    }

    pub fn apply(&self, phi: &Formula) -> Formula {
        substitute(self, phi)
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &Substitution) -> Substitution {
        let mut out = Substitution::new();
        for (v, f) in &inner.map {
            out.bind(*v, self.apply(f));
        }
        for (v, f) in &self.map {
            if !inner.map.contains_key(v) {
                out.bind(*v, f.clone());
            }
        }
        out
    }

    pub fn display<'a>(&'a self, sig: &'a Signature, vars: &'a VarSet) -> String {
        let parts: Vec<String> = self
            .map
            .iter()
            .map(|(v, f)| format!("{}->{}", vars.name(*v), f.display(sig, vars)))
            .collect();
        parts.join(" ")
    }
}

pub fn substitute(sigma: &Substitution, phi: &Formula) -> Formula {
    if sigma.is_identity() {
        return phi.clone();
    }
    match phi {
        Formula::Var(v) => sigma.image(*v),
        Formula::App(op, args) => {
            if args.is_empty() {
                phi.clone()
            } else {
                Formula::app(*op, args.iter().map(|a| substitute(sigma, a)).collect())
            }
        }
    }
}

/// Extends `binding` so that `binding(pattern) = target`; on failure
/// `binding` may hold partial bindings and should be discarded.
pub fn match_into(pattern: &Formula, target: &Formula, binding: &mut Substitution) -> bool {
    match pattern {
        Formula::Var(v) => match binding.map.get(v) {
            Some(bound) => bound == target,
            None => {
                binding.map.insert(*v, target.clone());
                true
            }
        },
        Formula::App(op, args) => match target {
            Formula::App(op2, args2) if op == op2 && args.len() == args2.len() => {
                args.iter().zip(args2.iter()).all(|(p, t)| match_into(p, t, binding))
            }
            _ => false,
        },
    }
}

/// First-order one-sided matching.
pub fn match_formula(pattern: &Formula, target: &Formula) -> Option<Substitution> {
    let mut raw = Substitution::new();
    if !match_into(pattern, target, &mut raw) {
        return None;
    }
    Some(Substitution::from_pairs(raw.map))
}

/// All formulas of depth at most `max_depth`, sorted in the canonical order.
pub fn enumerate_formulas(sig: &Signature, vars: &VarSet, max_depth: usize) -> Vec<Formula> {
    let mut level: BTreeSet<Formula> = sig
        .constants()
        .map(Formula::constant)
        .chain(vars.vars().map(Formula::Var))
        .collect();
    for _ in 0..max_depth {
        let prev: Vec<Formula> = level.iter().cloned().collect();
        let mut next = level.clone();
        for op in sig.ops() {
            let k = sig.arity(op);
            if k == 0 || prev.is_empty() {
                continue;
            }
            for args in itertools::Itertools::multi_cartesian_product((0..k).map(|_| prev.iter().cloned())) {
                next.insert(Formula::app(op, args));
            }
        }
        if next.len() == level.len() {
            break;
        }
        level = next;
    }
    level.into_iter().collect()
}

/// Every map `domain → codomain`, odometer order with the last variable
/// varying fastest.
pub fn enumerate_substitutions(domain: &[Var], codomain: &[Formula]) -> Vec<Substitution> {
    if domain.is_empty() {
        return vec![Substitution::new()];
    }
    if codomain.is_empty() {
        return Vec::new();
    }
    Odometer::new(domain.len(), codomain.len())
        .map(|digits| Substitution::from_pairs(domain.iter().zip(digits).map(|(v, d)| (*v, codomain[d].clone()))))
        .collect()
}

/// Iterates all `base^len` digit vectors, last digit fastest.
#[derive(Debug, Clone)]
pub struct Odometer {
    digits: Vec<usize>,
    base: usize,
    done: bool,
}

impl Odometer {
    pub fn new(len: usize, base: usize) -> Self {
        Odometer {
            digits: vec![0; len],
            base,
            done: base == 0 && len > 0,
        }
    }
}

impl Iterator for Odometer {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.digits.clone();
        let mut i = self.digits.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.digits[i] += 1;
            if self.digits[i] < self.base {
                break;
            }
            self.digits[i] = 0;
        }
        Some(out)
    }
}

/// A finite Σ-algebra. Operation tables are indexed in mixed radix with the
/// first argument most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteStructure {
    name: String,
    carrier: Vec<String>,
    tables: Vec<Vec<usize>>,
}

impl FiniteStructure {
    /// `tables[op]` must have `|carrier|^arity(op)` entries.
    pub fn new(
        name: impl Into<String>,
        sig: &Signature,
        carrier: Vec<String>,
        tables: Vec<Vec<usize>>,
    ) -> Result<Self, TermError> {
        let name = name.into();
        let err = |msg: String| TermError::Structure {
            structure: name.clone(),
            msg,
        };
        let mut seen = BTreeSet::new();
        for e in &carrier {
            if !seen.insert(e) {
                return Err(err(format!("duplicate carrier element `{e}`")));
            }
        }
        if tables.len() != sig.len() {
            return Err(err(format!("{} tables for {} connectives", tables.len(), sig.len())));
        }
        for op in sig.ops() {
            let want = carrier.len().pow(sig.arity(op) as u32);
            let table = &tables[op.0 as usize];
            if table.len() != want {
                return Err(err(format!(
                    "`{}` needs {want} table entries, got {}",
                    sig.name(op),
                    table.len()
                )));
            }
            if table.iter().any(|&e| e >= carrier.len()) {
                return Err(err(format!("`{}` maps outside the carrier", sig.name(op))));
            }
        }
        Ok(FiniteStructure { name, carrier, tables })
    }

    /// `Fm(X)` of a constants-only signature as a structure; element order is
    /// the canonical formula order, so constants come first.
    pub fn formula_algebra(sig: &Signature, vars: &VarSet) -> Result<Self, TermError> {
        if !sig.is_constants_only() {
            return Err(TermError::Structure {
                structure: "Fm".into(),
                msg: "the formula algebra is finite only for constants-only signatures".into(),
            });
        }
        let atoms = enumerate_formulas(sig, vars, 0);
        let carrier = atoms.iter().map(|f| format_formula(f, sig, vars)).collect();
        let tables = sig
            .ops()
            .map(|op| vec![atoms.iter().position(|a| *a == Formula::constant(op)).unwrap()])
            .collect();
        FiniteStructure::new("Fm", sig, carrier, tables)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.carrier.len()
    }

    pub fn is_empty(&self) -> bool {
        self.carrier.is_empty()
    }

    pub fn carrier(&self) -> &[String] {
        &self.carrier
    }

    pub fn element(&self, name: &str) -> Option<usize> {
        self.carrier.iter().position(|e| e == name)
    }

    pub fn interp(&self, op: Op, args: &[usize]) -> usize {
        let n = self.carrier.len();
        let idx = args.iter().fold(0, |acc, &a| acc * n + a);
        self.tables[op.0 as usize][idx]
    }

    /// Homomorphic evaluation of `phi` under the valuation `v`.
    pub fn evaluate(&self, v: &BTreeMap<Var, usize>, phi: &Formula, vars: &VarSet) -> Result<usize, TermError> {
        match phi {
            Formula::Var(x) => v.get(x).copied().ok_or_else(|| {
                TermError::UnboundVariable(if vars.contains(*x) {
                    vars.name(*x).to_string()
                } else {
                    format!("?{}", x.0)
                })
            }),
            Formula::App(op, args) => {
                let vals = args
                    .iter()
                    .map(|a| self.evaluate(v, a, vars))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(self.interp(*op, &vals))
            }
        }
    }
}

pub fn evaluate(
    v: &BTreeMap<Var, usize>,
    phi: &Formula,
    structure: &FiniteStructure,
    vars: &VarSet,
) -> Result<usize, TermError> {
    structure.evaluate(v, phi, vars)
}
