//! Shared FFT plumbing: cached plans, wavenumber grids, and lane transforms.
//!
//! All spectral operations in the crate treat an `n`-point uniform mesh with
//! spacing `h` as one period of length `n * h`, so the discrete wavenumbers
//! are `k_j = 2π j / (n h)` for `j = 0..n/2` and the negative frequencies
//! `j - n` above that. Transforms from `rustfft` are unnormalized; the
//! round-trip factor `1/n` is folded in by the callers (usually into a phase
//! table so it costs nothing).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

struct PlanCache {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

fn cache() -> &'static Mutex<PlanCache> {
    static CACHE: OnceLock<Mutex<PlanCache>> = OnceLock::new();
    CACHE.get_or_init(|| {
        Mutex::new(PlanCache {
            planner: FftPlanner::new(),
            forward: HashMap::new(),
            inverse: HashMap::new(),
        })
    })
}

/// Cached forward-FFT plan of size `n`.
pub fn plan_forward(n: usize) -> Arc<dyn Fft<f64>> {
    let mut c = cache().lock().unwrap();
    if let Some(p) = c.forward.get(&n) {
        return Arc::clone(p);
    }
    let p = c.planner.plan_fft_forward(n);
    c.forward.insert(n, Arc::clone(&p));
    p
}

/// Cached inverse-FFT plan of size `n` (unnormalized).
pub fn plan_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    let mut c = cache().lock().unwrap();
    if let Some(p) = c.inverse.get(&n) {
        return Arc::clone(p);
    }
    let p = c.planner.plan_fft_inverse(n);
    c.inverse.insert(n, Arc::clone(&p));
    p
}

/// Unnormalized in-place forward FFT of a 1D buffer.
pub fn forward_in_place(buf: &mut [Complex64]) {
    plan_forward(buf.len()).process(buf);
}

/// Unnormalized in-place inverse FFT of a 1D buffer (caller divides by `n`).
pub fn inverse_in_place(buf: &mut [Complex64]) {
    plan_inverse(buf.len()).process(buf);
}

/// Discrete wavenumbers for an `n`-point mesh of spacing `h`, in FFT output
/// order (non-negative frequencies first, then negative).
pub fn wavenumbers(n: usize, h: f64) -> Vec<f64> {
    let dk = 2.0 * std::f64::consts::PI / (n as f64 * h);
    (0..n)
        .map(|j| {
            let f = if j <= n / 2 { j as isize } else { j as isize - n as isize };
            f as f64 * dk
        })
        .collect()
}

/// A reusable forward+inverse plan pair for one transform size, with the
/// scratch sizes needed by `process_with_scratch`.
pub struct LanePlan {
    pub n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl LanePlan {
    pub fn new(n: usize) -> Self {
        let forward = plan_forward(n);
        let inverse = plan_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        LanePlan { n, forward, inverse, scratch_len }
    }

    /// Allocate a scratch buffer usable with both directions.
    pub fn make_scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.scratch_len]
    }

    pub fn forward(&self, lane: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(lane, scratch);
    }

    /// Forward transform, multiply by `phase` (which should embed the `1/n`
    /// round-trip normalization), inverse transform — the complete
    /// application of one diagonal-in-k operator to one lane.
    pub fn sandwich(&self, lane: &mut [Complex64], phase: &[Complex64], scratch: &mut [Complex64]) {
        debug_assert_eq!(lane.len(), self.n);
        debug_assert_eq!(phase.len(), self.n);
        self.forward.process_with_scratch(lane, scratch);
        for (v, &p) in lane.iter_mut().zip(phase) {
            *v *= p;
        }
        self.inverse.process_with_scratch(lane, scratch);
    }
}
