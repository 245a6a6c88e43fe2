//! Concrete models: the three-state toy, rate-equation fluorescence models,
//! and output binning.

mod binning;
mod rates;
mod three_state;

pub use binning::{bin_model, optimize_binning, BinningSearch, Partition, DEFAULT_BINNING_CAP};
pub use rates::{
    expand, matrix_exp, photon_distribution, step_kernel, truncated_poisson, validate_rate_matrix,
    RateModel, StepKernel, DEFAULT_N_MAX, DEFAULT_QUAD_POINTS,
};
pub use three_state::three_state_model;

use crate::policy::{ActionSet, Permutation};

const BE9_MODEL: &str = include_str!("../../data/be9_synthetic.json");
const BE9_ACTIONS: &str = include_str!("../../data/be9_actions.json");

/// The bundled synthetic 8-level fluorescence model.
///
/// Level 0 is dark and level 7 is the cycling bright level; the other levels
/// fluoresce at the background rate and leak upward toward level 7. The
/// numbers are illustrative and not taken from any measurement.
pub fn synthetic_be9() -> RateModel {
    serde_json::from_str(BE9_MODEL).expect("bundled model parses")
}

/// Actions for [`synthetic_be9`]: identity, `tau` and `tau_inv`, where `tau`
/// cycles 0 -> 7 -> 2 -> 5 -> 0.
pub fn synthetic_be9_actions() -> ActionSet {
    let perms: Vec<Permutation> = serde_json::from_str(BE9_ACTIONS).expect("bundled actions parse");
    ActionSet::new(8, perms).expect("bundled actions are permutations of 8 levels")
}
