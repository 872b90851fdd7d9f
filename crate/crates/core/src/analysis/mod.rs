//! Spectral, conductance and mixing-time analysis of lumped chains.

mod conductance;
mod decomposition;
mod fit;
pub mod lemmas;
mod mixing;
mod spectral;

pub use conductance::{
    conductance, exhaustive_conductance, min_threshold_conductance, no_majority_from_ladder,
    tempering_no_majority_conductance, ConductanceReport, StreamingConductance, ThresholdFamily, EXHAUSTIVE_MAX_STATES,
};
pub use decomposition::{decomposition_check, projection, restriction, DecompositionReport};
pub use fit::{fit_decay, FitKind, ScalingFit};
pub use mixing::{
    conductance_mixing_bounds, gap_mixing_bounds, log_conductance_lower_bound, tv_mixing_time, tv_mixing_time_with,
    MixingBounds, MixingTime, TvOptions,
};
pub use spectral::{spectral_gap, spectral_gap_with, SpectralMethod, SpectralOptions, SpectralReport};

use crate::error::{Error, Result};
use crate::lumped::LumpedChain;

/// Normalized stationary distribution, checked against `πP = π`.
pub fn stationary(chain: &LumpedChain) -> Result<Vec<f64>> {
    let pi = chain.pi();
    let mut next = vec![0.0; pi.len()];
    chain.matrix.left_mul_vec(&pi, &mut next);
    let err = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if err > 1e-10 {
        return Err(Error::InconsistentChain(format!("stationary check failed: max |πP − π| = {err:e}")));
    }
    Ok(pi)
}
