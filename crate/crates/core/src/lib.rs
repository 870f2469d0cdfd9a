//! Finite consequence relations: terms and substitutions, closure operators
//! on small carriers, rule-presented logics with forward-chaining
//! derivation, extensions of a logic to more variables, and logical filters
//! on finite structures.
//!
//! Subsets of a carrier with at most 64 elements are bit masks ([`Mask`]).
//! Constants-only signatures have finite formula algebras, so every relation
//! over them can be tabulated and checked exhaustively; other signatures are
//! handled per query with explicit search bounds.

pub mod closure;
pub mod filters;
pub mod logic;
pub mod natext;
pub mod term;

pub use closure::{Arity, ClosureError, ClosureReport, IntersectionFamily, Mask, Operator};
pub use filters::{
    AbstractFilterPair, FilterComparison, FilterError, FilterLattice, FilterWitness, Homomorphism, Instances,
    StructureFile,
};
pub use logic::{
    derive, parse_presentation, BoundHit, Consequence, Derivation, FiniteRelation, GroundSystem, LogicError,
    Presentation, Refutation, Rule, SearchBounds, Universe, Verdict, Witness,
};
pub use natext::{
    ChainReport, CounterexampleWitness, ExactTables, ExtensionKind, ExtensionProblem, ExtensionRelation, NatextError,
    NatextLattice, Property, SearchConfig,
};
pub use term::{FiniteStructure, Formula, Op, Signature, Substitution, TermError, Var, VarSet};
