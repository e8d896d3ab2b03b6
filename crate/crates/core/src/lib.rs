// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod profiles;
pub mod radial;
pub mod regimes;
pub mod solver;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
mod book_experiments {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/library.md")]
mod book_library {}
