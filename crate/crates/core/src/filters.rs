//! Estimated dereverberation filters, their application to arbitrary
//! multichannel STFTs, and a versioned little-endian binary log format.
//!
//! Layout: the 8-byte magic `RTFMCLPF`, a `u32` version, a `u8` kind
//! (0 batch, 1 online), then `u32` fields `mics, taps, delay, bins,
//! reference_mic, has_spatial, frames` followed by complex values as
//! interleaved `f64` real/imag pairs. Each filter set stores `G` (row-major
//! `ML × M`) and, when `has_spatial` is 1, `w` (`M`). Batch logs hold one set
//! per bin; online logs hold one set per frame and bin.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::numerics::{dot_conj, CMatrix};
use crate::stft::StftTensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RTFMCLPF";
pub const VERSION: u32 = 1;

/// Prediction and spatial filter of one bin.
#[derive(Clone, Debug, PartialEq)]
pub struct BinFilter {
    /// `ML × M` prediction matrix.
    pub g: CMatrix,
    /// Spatial filter; `None` selects the reference channel.
    pub w: Option<Vec<Complex64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterShape {
    pub mics: usize,
    pub taps: usize,
    pub delay: usize,
    pub bins: usize,
    pub reference_mic: usize,
}

impl FilterShape {
    pub fn predictor_len(&self) -> usize {
        self.mics * self.taps
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FilterLog {
    /// One filter per bin, fixed over time.
    Batch { shape: FilterShape, bins: Vec<BinFilter> },
    /// One filter per frame and bin, indexed `[frame][bin]`.
    Online { shape: FilterShape, frames: Vec<Vec<BinFilter>> },
}

/// Stacks `x_m[n-D-1 .. n-D-L, k]` for every mic, mic-major, into `out`.
/// History before frame 0 reads as zero.
#[inline]
pub fn fill_predictor(tensor: &StftTensor, n: usize, k: usize, taps: usize, delay: usize, out: &mut [Complex64]) {
    let mics = tensor.mics();
    debug_assert_eq!(out.len(), mics * taps);
    for l in 0..taps {
        let lag = delay + 1 + l;
        if n >= lag {
            let x = tensor.vector(n - lag, k);
            for m in 0..mics {
                out[m * taps + l] = x[m];
            }
        } else {
            for m in 0..mics {
                out[m * taps + l] = Complex64::new(0.0, 0.0);
            }
        }
    }
}

/// `y = x − Gᴴφ` for one frame and bin; returns the spatial output.
#[inline]
pub fn apply_bin(filter: &BinFilter, x: &[Complex64], phi: &[Complex64], reference: usize, residual: &mut [Complex64]) -> Complex64 {
    let g = &filter.g;
    let mics = x.len();
    residual.copy_from_slice(x);
    for (i, p) in phi.iter().enumerate() {
        if p.re == 0.0 && p.im == 0.0 {
            continue;
        }
        let row = g.row(i);
        for m in 0..mics {
            residual[m] -= row[m].conj() * p;
        }
    }
    match &filter.w {
        Some(w) => dot_conj(w, residual),
        None => residual[reference],
    }
}

impl FilterLog {
    pub fn shape(&self) -> &FilterShape {
        match self {
            FilterLog::Batch { shape, .. } | FilterLog::Online { shape, .. } => shape,
        }
    }

    fn check(&self, tensor: &StftTensor) -> Result<()> {
        let s = self.shape();
        if tensor.mics() != s.mics || tensor.bins() != s.bins {
            return Err(Error::ShapeMismatch(format!(
                "filters expect {} mics × {} bins, tensor has {} × {}",
                s.mics,
                s.bins,
                tensor.mics(),
                tensor.bins()
            )));
        }
        if let FilterLog::Online { frames, .. } = self {
            if frames.len() != tensor.frames() {
                return Err(Error::ShapeMismatch(format!(
                    "filter log covers {} frames, tensor has {}",
                    frames.len(),
                    tensor.frames()
                )));
            }
        }
        Ok(())
    }

    /// Filters `tensor` and returns the single-channel output.
    pub fn apply(&self, tensor: &StftTensor) -> Result<StftTensor> {
        self.check(tensor)?;
        let s = *self.shape();
        let mut out = tensor.zeros_like(1);
        let mut phi = vec![Complex64::new(0.0, 0.0); s.predictor_len()];
        let mut res = vec![Complex64::new(0.0, 0.0); s.mics];
        for n in 0..tensor.frames() {
            for k in 0..tensor.bins() {
                let f = match self {
                    FilterLog::Batch { bins, .. } => &bins[k],
                    FilterLog::Online { frames, .. } => &frames[n][k],
                };
                fill_predictor(tensor, n, k, s.taps, s.delay, &mut phi);
                let y = apply_bin(f, tensor.vector(n, k), &phi, s.reference_mic, &mut res);
                out.set(n, k, 0, y);
            }
        }
        Ok(out)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let s = self.shape();
        let (kind, sets): (u8, Vec<&BinFilter>) = match self {
            FilterLog::Batch { bins, .. } => (0, bins.iter().collect()),
            FilterLog::Online { frames, .. } => (1, frames.iter().flatten().collect()),
        };
        let frames = match self {
            FilterLog::Batch { .. } => 1,
            FilterLog::Online { frames, .. } => frames.len(),
        };
        let has_w = sets.first().is_some_and(|f| f.w.is_some());
        if sets.iter().any(|f| f.w.is_some() != has_w) {
            return Err(Error::FilterLog("mixed presence of spatial filters".into()));
        }
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[kind])?;
        for v in [s.mics, s.taps, s.delay, s.bins, s.reference_mic, has_w as usize, frames] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(16 * (s.predictor_len() * s.mics + s.mics));
        for f in sets {
            buf.clear();
            let vals = f.g.as_slice().iter().chain(f.w.iter().flatten());
            for z in vals {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::FilterLog("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::FilterLog(format!("unsupported version {version}")));
        }
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let mut f = [0usize; 7];
        for v in &mut f {
            *v = read_u32(&mut r)? as usize;
        }
        let [mics, taps, delay, bins, reference_mic, has_w, frames] = f;
        let shape = FilterShape {
            mics,
            taps,
            delay,
            bins,
            reference_mic,
        };
        if mics == 0 || reference_mic >= mics || has_w > 1 {
            return Err(Error::FilterLog("inconsistent header".into()));
        }
        let read_set = |r: &mut dyn Read| -> Result<BinFilter> {
            let mut g = CMatrix::zeros(mics * taps, mics);
            for z in g.as_mut_slice() {
                *z = read_c64(r)?;
            }
            let w = if has_w == 1 {
                Some((0..mics).map(|_| read_c64(r)).collect::<Result<Vec<_>>>()?)
            } else {
                None
            };
            Ok(BinFilter { g, w })
        };
        match kind[0] {
            0 => {
                let sets = (0..bins).map(|_| read_set(&mut r)).collect::<Result<_>>()?;
                Ok(FilterLog::Batch { shape, bins: sets })
            }
            1 => {
                let frames = (0..frames)
                    .map(|_| (0..bins).map(|_| read_set(&mut r)).collect::<Result<Vec<_>>>())
                    .collect::<Result<_>>()?;
                Ok(FilterLog::Online { shape, frames })
            }
            other => Err(Error::FilterLog(format!("unknown kind {other}"))),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_c64(r: &mut dyn Read) -> Result<Complex64> {
    let mut b = [0u8; 16];
    r.read_exact(&mut b).map_err(truncated)?;
    let re = f64::from_le_bytes(b[..8].try_into().expect("8 bytes"));
    let im = f64::from_le_bytes(b[8..].try_into().expect("8 bytes"));
    Ok(Complex64::new(re, im))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::FilterLog("truncated log".into())
    } else {
        Error::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::{analyze, StftConfig};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample_log(online: bool) -> FilterLog {
        let shape = FilterShape {
            mics: 2,
            taps: 2,
            delay: 1,
            bins: 3,
            reference_mic: 0,
        };
        let set = |s: f64| BinFilter {
            g: CMatrix::from_fn(4, 2, |i, j| c(s + i as f64, -(j as f64) * s)),
            w: Some(vec![c(0.5, s), c(-0.25, 1.0)]),
        };
        if online {
            FilterLog::Online {
                shape,
                frames: (0..4).map(|n| (0..3).map(|k| set((n * 3 + k) as f64)).collect()).collect(),
            }
        } else {
            FilterLog::Batch {
                shape,
                bins: (0..3).map(|k| set(k as f64 * 0.1)).collect(),
            }
        }
    }

    #[test]
    fn binary_round_trip() {
        for online in [false, true] {
            let log = sample_log(online);
            let mut buf = Vec::new();
            log.write_to(&mut buf).unwrap();
            assert_eq!(&buf[..8], MAGIC);
            assert_eq!(FilterLog::read_from(buf.as_slice()).unwrap(), log);
            assert!(matches!(
                FilterLog::read_from(&buf[..buf.len() - 3]),
                Err(Error::FilterLog(_))
            ));
        }
        assert!(FilterLog::read_from(&b"NOTALOG!xxxx"[..]).is_err());
    }

    #[test]
    fn predictor_layout() {
        let cfg = StftConfig::default();
        let sig: Vec<Vec<f64>> = (0..2).map(|m| (0..2000).map(|t| ((t * (m + 3)) % 17) as f64).collect()).collect();
        let x = analyze(&sig, &cfg).unwrap();
        let mut phi = vec![c(0.0, 0.0); 6];
        fill_predictor(&x, 5, 7, 3, 1, &mut phi);
        for m in 0..2 {
            for l in 0..3 {
                assert_eq!(phi[m * 3 + l], x.get(5 - 2 - l, 7, m));
            }
        }
        fill_predictor(&x, 2, 7, 3, 1, &mut phi);
        assert_eq!(phi[0], x.get(0, 7, 0));
        assert_eq!(phi[1], c(0.0, 0.0));
    }

    #[test]
    fn identity_filter_passes_reference() {
        let cfg = StftConfig::default();
        let sig = vec![vec![1.0; 1024], (0..1024).map(|t| (t as f64 * 0.1).sin()).collect()];
        let x = analyze(&sig, &cfg).unwrap();
        let shape = FilterShape {
            mics: 2,
            taps: 2,
            delay: 2,
            bins: x.bins(),
            reference_mic: 1,
        };
        let log = FilterLog::Batch {
            shape,
            bins: vec![
                BinFilter {
                    g: CMatrix::zeros(4, 2),
                    w: None,
                };
                x.bins()
            ],
        };
        assert_eq!(log.apply(&x).unwrap(), x.channel(1));
    }
}
