//! 32-bit float WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::CliError;

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> CliError + '_ {
    move |source| CliError::Wav {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `channels` (channels × samples) as interleaved 32-bit float.
pub fn write(path: &Path, channels: &[Vec<f64>], sample_rate: u32) -> Result<(), CliError> {
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let len = channels.first().map(Vec::len).unwrap_or(0);
    let mut w = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for t in 0..len {
        for c in channels {
            w.write_sample(c[t] as f32).map_err(wav_err(path))?;
        }
    }
    w.finalize().map_err(wav_err(path))
}

pub fn write_mono(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), CliError> {
    write(path, std::slice::from_ref(&samples.to_vec()), sample_rate)
}

/// Reads any integer or float WAV as channels × samples in [-1, 1].
pub fn read(path: &Path) -> Result<(Vec<Vec<f64>>, u32), CliError> {
    let mut r = WavReader::open(path).map_err(wav_err(path))?;
    let spec = r.spec();
    let n = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err(path))?
        }
    };
    let channels = (0..n).map(|c| interleaved.iter().skip(c).step_by(n).copied().collect()).collect();
    Ok((channels, spec.sample_rate))
}
