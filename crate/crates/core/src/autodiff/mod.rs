//! Reverse-mode differentiation over a define-by-run tape.
//!
//! A [`Tape`] is rebuilt for every loss evaluation. Leaves created with
//! [`Tape::var`] receive gradients; [`Tape::constant`] leaves do not.
//! Operations on [`Var`] handles append nodes in evaluation order and
//! [`Tape::backward`] sweeps them once in reverse.

mod check;
mod ops;
mod tape;

pub use check::{grad_check, grad_check_single};
pub use ops::stack_rows;
pub use tape::{Gradients, NodeId, Tape, Var};
