use std::fmt::Write;

/// Segment hop of metric tracks, seconds.
pub const TRACK_HOP: f64 = 0.010;
/// Segment length of metric tracks, seconds.
pub const TRACK_WINDOW: f64 = 0.025;
/// Half-width of the triangular smoothing kernel, in segments (1 s span).
pub const SMOOTHING_HALF_WIDTH: usize = 50;

/// Per-segment metric values with their triangular-smoothed version.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricTrack {
    pub hop: f64,
    pub window: f64,
    /// Segment centre times in seconds.
    pub times: Vec<f64>,
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    /// Segments that count toward means and smoothing.
    pub active: Vec<bool>,
}

/// Number of `window`-sample segments at `hop` that fit in `len` samples.
pub fn segment_count(len: usize, window: usize, hop: usize) -> usize {
    if len < window {
        0
    } else {
        (len - window) / hop + 1
    }
}

/// Triangular smoothing restricted to active segments; segments with no
/// active neighbour keep their raw value.
pub fn smooth_triangular(raw: &[f64], active: &[bool], half_width: usize) -> Vec<f64> {
    let n = raw.len();
    let h = half_width as isize;
    (0..n)
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for j in (i as isize - h).max(0)..=(i as isize + h).min(n as isize - 1) {
                let ju = j as usize;
                if !active[ju] {
                    continue;
                }
                let k = (h + 1 - (j - i as isize).abs()) as f64;
                num += k * raw[ju];
                den += k;
            }
            if den > 0.0 {
                num / den
            } else {
                raw[i]
            }
        })
        .collect()
}

impl MetricTrack {
    pub fn new(raw: Vec<f64>, active: Vec<bool>, sample_rate: u32, hop: usize, window: usize) -> Self {
        let fs = sample_rate as f64;
        let times = (0..raw.len()).map(|i| (i * hop) as f64 / fs + 0.5 * window as f64 / fs).collect();
        let smoothed = smooth_triangular(&raw, &active, SMOOTHING_HALF_WIDTH);
        Self {
            hop: hop as f64 / fs,
            window: window as f64 / fs,
            times,
            raw,
            smoothed,
            active,
        }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Mean of the raw values over active segments.
    pub fn active_mean(&self) -> Option<f64> {
        let (s, c) = self
            .raw
            .iter()
            .zip(&self.active)
            .filter(|(_, a)| **a)
            .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        (c > 0).then(|| s / c as f64)
    }

    /// CSV with header `time_s,raw,smoothed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,raw,smoothed\n");
        for ((t, r), s) in self.times.iter().zip(&self.raw).zip(&self.smoothed) {
            let _ = writeln!(out, "{t:.4},{r:.6},{s:.6}");
        }
        out
    }
}
