//! Array capabilities over index-translated views.
//!
//! The crate has three layers:
//!
//! - [`sigma`]: the pure algebra of index translation functions.
//! - [`kernel`]: a runtime store of physical arrays plus the capability
//!   API (split, merge, align, borrow, element access) over generic
//!   payloads, with dynamic enforcement of exclusivity.
//! - the calculus: [`lang`] (syntax), [`typecheck`] (static semantics),
//!   [`eval`] (small-step dynamics) and [`meta`] (machine-checked
//!   progress, preservation and array-disjointness probes over generated
//!   programs).
//!
//! [`algorithms`] encodes parallel array algorithms (sorting, stencils,
//! reductions, matrix rotation) directly against the kernel, runnable on
//! a simulated task pool or on real threads.

pub mod eval;
pub mod kernel;
pub mod lang;
pub mod meta;
pub mod typecheck;
pub mod sigma;
