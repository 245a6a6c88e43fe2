//! Adaptive readout of a hidden Markov state.
//!
//! A measurement is modelled as a hidden Markov model whose initial state is
//! to be inferred from `n` outputs. Between steps the controller may apply a
//! permutation of the physical states, chosen from the outputs seen so far.
//! This crate builds such models, solves for optimal and heuristic
//! permutation policies, evaluates their infidelity exactly or by sampling,
//! and exports the problem as a POMDP.
//!
//! ```
//! use adaptive_readout::builders::three_state_model;
//! use adaptive_readout::eval::{exact_infidelity, EvalOptions};
//! use adaptive_readout::hmm::ExpandedHmm;
//! use adaptive_readout::policy::{solve_optimal, ActionSet, Policy, SolveOptions};
//!
//! let model = ExpandedHmm::trivial(three_state_model(0.01, 0.01)?);
//! let actions = ActionSet::transpositions(3);
//! let best = solve_optimal(&model, &actions, 2, &SolveOptions::default())?;
//! let plain = exact_infidelity(&model, &Policy::NoPerms, &actions, 2, &EvalOptions::default())?;
//! assert!(1.0 - best.fidelity < plain.infidelity);
//! # Ok::<(), adaptive_readout::Error>(())
//! ```

pub mod builders;
mod error;
pub mod eval;
pub mod hmm;
pub mod linalg;
pub mod policy;
pub mod pomdp;

pub use error::{Error, Result};
pub use hmm::{ExpandedHmm, Hmm};
pub use policy::{ActionSet, Permutation, Policy};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pomdp.md")]
    mod pomdp {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
