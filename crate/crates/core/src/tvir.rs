use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Default snapshot period: 20 Hz along the time axis.
pub const DEFAULT_TIME_STEP: f64 = 0.05;
/// Default tap period: 12 kHz along the delay axis.
pub const DEFAULT_DELAY_STEP: f64 = 1.0 / 12_000.0;

/// A time-varying impulse response: `num_snapshots` rows of `num_taps`
/// complex gains, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tvir {
    data: Vec<Complex64>,
    num_snapshots: usize,
    num_taps: usize,
    time_step: f64,
    delay_step: f64,
}

impl Tvir {
    /// Builds a TVIR from a flat row-major buffer, validating every invariant.
    pub fn from_flat(
        data: Vec<Complex64>,
        num_snapshots: usize,
        num_taps: usize,
        time_step: f64,
        delay_step: f64,
    ) -> Result<Self> {
        if num_snapshots == 0 || num_taps == 0 {
            return Err(invalid(format!(
                "TVIR needs at least one snapshot and one tap, got {num_snapshots}x{num_taps}"
            )));
        }
        if data.len() != num_snapshots * num_taps {
            return Err(invalid(format!(
                "buffer holds {} elements, expected {}x{}",
                data.len(),
                num_snapshots,
                num_taps
            )));
        }
        if !(time_step > 0.0 && time_step.is_finite()) {
            return Err(invalid(format!("time_step must be positive, got {time_step}")));
        }
        if !(delay_step > 0.0 && delay_step.is_finite()) {
            return Err(invalid(format!("delay_step must be positive, got {delay_step}")));
        }
        if let Some(i) = data.iter().position(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(invalid(format!(
                "non-finite element at snapshot {}, tap {}",
                i / num_taps,
                i % num_taps
            )));
        }
        Ok(Self { data, num_snapshots, num_taps, time_step, delay_step })
    }

    /// Builds a TVIR from a list of equally long snapshots.
    pub fn from_snapshots(
        snapshots: Vec<Vec<Complex64>>,
        time_step: f64,
        delay_step: f64,
    ) -> Result<Self> {
        let num_snapshots = snapshots.len();
        let num_taps = snapshots.first().map_or(0, Vec::len);
        if snapshots.iter().any(|s| s.len() != num_taps) {
            return Err(invalid("snapshots have different lengths"));
        }
        let data = snapshots.into_iter().flatten().collect();
        Self::from_flat(data, num_snapshots, num_taps, time_step, delay_step)
    }

    /// An all-zero TVIR of the given shape.
    pub fn zeros(num_snapshots: usize, num_taps: usize, time_step: f64, delay_step: f64) -> Result<Self> {
        Self::from_flat(
            vec![Complex64::new(0.0, 0.0); num_snapshots * num_taps],
            num_snapshots,
            num_taps,
            time_step,
            delay_step,
        )
    }

    pub fn num_snapshots(&self) -> usize {
        self.num_snapshots
    }

    pub fn num_taps(&self) -> usize {
        self.num_taps
    }

    pub fn time_step(&self) -> f64 {
        self.time_step
    }

    pub fn delay_step(&self) -> f64 {
        self.delay_step
    }

    /// Snapshot rate in Hz.
    pub fn time_rate(&self) -> f64 {
        1.0 / self.time_step
    }

    /// Window length along the time axis.
    pub fn duration(&self) -> f64 {
        self.num_snapshots as f64 * self.time_step
    }

    pub fn snapshot(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.num_taps..(t + 1) * self.num_taps]
    }

    pub fn snapshot_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.data[t * self.num_taps..(t + 1) * self.num_taps]
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.num_taps)
    }

    pub fn get(&self, t: usize, j: usize) -> Complex64 {
        self.data[t * self.num_taps + j]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<Complex64> {
        self.data
    }

    /// Applies `f` to every element, keeping the shape and sampling metadata.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        Self::from_flat(
            self.data.iter().map(|&x| f(x)).collect(),
            self.num_snapshots,
            self.num_taps,
            self.time_step,
            self.delay_step,
        )
    }

    /// Copies snapshots `start..start + len` into a new TVIR.
    pub fn slice_time(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.num_snapshots {
            return Err(invalid(format!(
                "snapshot range {start}..{} outside 0..{}",
                start + len,
                self.num_snapshots
            )));
        }
        Self::from_flat(
            self.data[start * self.num_taps..(start + len) * self.num_taps].to_vec(),
            len,
            self.num_taps,
            self.time_step,
            self.delay_step,
        )
    }

    /// Keeps only the first `taps` delay taps of every snapshot.
    pub fn truncate_taps(&self, taps: usize) -> Result<Self> {
        if taps == 0 || taps > self.num_taps {
            return Err(invalid(format!("cannot truncate {} taps to {taps}", self.num_taps)));
        }
        let data = self.snapshots().flat_map(|s| s[..taps].iter().copied()).collect();
        Self::from_flat(data, self.num_snapshots, taps, self.time_step, self.delay_step)
    }

    /// Total energy `sum |x|^2`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }
}
