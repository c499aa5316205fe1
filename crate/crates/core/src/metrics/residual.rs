use crate::filters::{BinFilter, FilterLog};
use crate::stft::{analyze, synthesize, StftConfig, StftTensor};
use crate::{Error, Result};

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `10 log10(E_output / E_reference)`.
pub fn residual_energy_db(output: &[f64], reference: &[f64]) -> Result<f64> {
    let er = energy(reference);
    if !(er > 0.0) {
        return Err(Error::ZeroResponse);
    }
    Ok(10.0 * (energy(output).max(f64::MIN_POSITIVE) / er).log10())
}

/// Energy left after passing the interferer-only mic signals through the
/// logged filters, relative to the interferer at the reference mic, in dB.
pub fn interferer_residual(interferer: &StftTensor, filters: &FilterLog) -> Result<f64> {
    let out = filters.apply(interferer)?;
    let reference = interferer.channel(filters.shape().reference_mic);
    let y = synthesize(&out).remove(0);
    let x = synthesize(&reference).remove(0);
    residual_energy_db(&y, &x)
}

/// Response of the logged filters to the multichannel RIR itself.
///
/// The RIRs are zero padded by one window on both sides, analysed, filtered
/// with `G` (and `w` when `spatial` is set, otherwise the reference channel
/// is taken) and resynthesised at the original length.
pub fn effective_rir(rirs: &[Vec<f64>], filters: &FilterLog, config: &StftConfig, spatial: bool) -> Result<Vec<f64>> {
    let FilterLog::Batch { shape, bins } = filters else {
        return Err(Error::FilterLog("effective RIRs need time-invariant filters".into()));
    };
    let len = rirs.first().map(Vec::len).unwrap_or(0);
    if rirs.len() != shape.mics || rirs.iter().any(|h| h.len() != len) {
        return Err(Error::ShapeMismatch("RIR set does not match the filters".into()));
    }
    let pad = config.window_len;
    let padded: Vec<Vec<f64>> = rirs
        .iter()
        .map(|h| {
            let mut p = vec![0.0; len + 2 * pad];
            p[pad..pad + len].copy_from_slice(h);
            p
        })
        .collect();
    let x = analyze(&padded, config)?;
    let log = if spatial {
        filters.clone()
    } else {
        FilterLog::Batch {
            shape: *shape,
            bins: bins.iter().map(|f| BinFilter { g: f.g.clone(), w: None }).collect(),
        }
    };
    let y = synthesize(&log.apply(&x)?).remove(0);
    Ok(y[pad..pad + len].to_vec())
}

/// Energy of `h` from sample `start` on, in dB.
pub fn tail_energy_db(h: &[f64], start: usize) -> f64 {
    10.0 * energy(&h[start.min(h.len())..]).max(f64::MIN_POSITIVE).log10()
}
