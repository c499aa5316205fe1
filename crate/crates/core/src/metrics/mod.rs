//! Objective evaluation of enhanced speech and impulse responses.
//!
//! Speech metrics work on 25 ms segments every 10 ms and return the mean
//! over active segments plus a [`MetricTrack`] for time-resolved plots.

mod edc;
mod fwsnr;
mod llr;
mod residual;
mod track;

pub use edc::{edc_after_peak, peak_index, rt60_from_edc, rt60_from_edc_range, schroeder_edc};
pub use fwsnr::{active_segments, fwsnr, mel_bank, FWSNR_BANDS, FWSNR_MAX_DB, FWSNR_MIN_DB};
pub use llr::{llr, LLR_NOISE_CORRECTION, LLR_ORDER};
pub use residual::{effective_rir, interferer_residual, residual_energy_db, tail_energy_db};
pub use track::{segment_count, smooth_triangular, MetricTrack, SMOOTHING_HALF_WIDTH, TRACK_HOP, TRACK_WINDOW};

use crate::{Error, Result};

/// Segments quieter than the loudest reference segment by more than this
/// are excluded from means.
pub const ACTIVE_RANGE_DB: f64 = 40.0;

fn check_pair(reference: &[f64], test: &[f64]) -> Result<()> {
    if reference.len() != test.len() {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} samples, test has {}",
            reference.len(),
            test.len()
        )));
    }
    Ok(())
}
