//! Uniform grids, quadrature, and derivative operators.
//!
//! Every coordinate axis in this crate is an endpoint-inclusive uniform mesh:
//! `x_k = min + k * spacing` for `k = 0..n-1` with
//! `spacing = (max - min) / (n - 1)`. Two derivative discretizations are
//! provided and used deliberately in different places:
//!
//! * [`spectral_derivative`] — Fourier collocation, exact for band-limited
//!   fields. The transform treats the mesh as one period of length
//!   `n * spacing` (the point after `max` wraps to `min`), so it is only
//!   valid for fields that decay to ~0 at the grid edges (wavefunctions on a
//!   sufficiently large box).
//! * [`fd_derivative`] — centered 4th-order finite differences with
//!   one-sided stencils at the ends. Used for fields that do *not* decay at
//!   their domain edges, such as potential-surface segments restricted to a
//!   density-validity mask.
//!
//! Quadrature is the composite trapezoid rule ([`trapezoid_integral`]),
//! exact for affine integrands; [`cumulative_integral`] is its running form
//! with a selectable zero point, used for phase reconstruction
//! `S(R) = ∫^R v(R') dR'`.

use num_complex::Complex64;

use crate::fft;
use crate::{Error, Result};

/// An endpoint-inclusive uniform 1D mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    min: f64,
    max: f64,
    n: usize,
}

impl Grid1D {
    /// Build a uniform grid over `[min, max]` with `n` points.
    ///
    /// Requires `n >= 8` (coarser meshes cannot support any of the stencils
    /// used here) and `max > min`.
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::contract(format!("grid needs n >= 8 points, got {n}")));
        }
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::contract(format!(
                "grid bounds must be finite with max > min, got [{min}, {max}]"
            )));
        }
        Ok(Grid1D { min, max, n })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh spacing `(max - min) / (n - 1)`.
    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    /// Coordinate of point `k`, exactly `min + k * spacing`.
    pub fn point(&self, k: usize) -> f64 {
        debug_assert!(k < self.n);
        self.min + k as f64 * self.spacing()
    }

    /// All mesh coordinates.
    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.point(k)).collect()
    }

    /// Index of the mesh point nearest to `x` (clamped to the grid).
    pub fn nearest_index(&self, x: f64) -> usize {
        let fr = (x - self.min) / self.spacing();
        let k = fr.round();
        (k.max(0.0) as usize).min(self.n - 1)
    }

    /// True when `x` lies within `[min, max]`.
    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

/// Linear interpolation of `values` (sampled on `grid`) at coordinate `x`.
///
/// Errors when `x` lies outside the grid.
pub fn linear_interp(values: &[f64], grid: &Grid1D, x: f64) -> Result<f64> {
    check_len(values.len(), grid)?;
    if !grid.contains(x) {
        return Err(Error::contract(format!(
            "interpolation point {x} outside grid [{}, {}]",
            grid.min, grid.max
        )));
    }
    let h = grid.spacing();
    let fr = (x - grid.min) / h;
    let k = (fr.floor() as usize).min(grid.n - 2);
    let w = fr - k as f64;
    Ok(values[k] * (1.0 - w) + values[k + 1] * w)
}

/// Sample values that can be integrated: real or complex amplitudes.
pub trait Sample:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<f64, Output = Self>
{
    fn zero() -> Self;
}

impl Sample for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Sample for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

fn check_len(len: usize, grid: &Grid1D) -> Result<()> {
    if len != grid.n {
        return Err(Error::contract(format!(
            "sample length {len} does not match grid size {}",
            grid.n
        )));
    }
    Ok(())
}

/// Composite trapezoid quadrature of `values` over the grid.
///
/// Exact (to round-off) for affine integrands; linear in `values`.
pub fn trapezoid_integral<T: Sample>(values: &[T], grid: &Grid1D) -> Result<T> {
    check_len(values.len(), grid)?;
    let mut acc = T::zero();
    for &v in &values[1..values.len() - 1] {
        acc = acc + v;
    }
    acc = acc + (values[0] + values[values.len() - 1]) * 0.5;
    Ok(acc * grid.spacing())
}

/// Running trapezoid integral, zero at `start_index`.
///
/// `out[k]` is the signed trapezoid integral from `x_start` to `x_k`, so
/// entries below the start are the negative of the reversed integral.
pub fn cumulative_integral<T: Sample>(
    values: &[T],
    grid: &Grid1D,
    start_index: usize,
) -> Result<Vec<T>> {
    check_len(values.len(), grid)?;
    if start_index >= grid.n {
        return Err(Error::contract(format!(
            "start index {start_index} out of range for grid of {} points",
            grid.n
        )));
    }
    let half_h = 0.5 * grid.spacing();
    let mut out = vec![T::zero(); values.len()];
    for k in start_index + 1..values.len() {
        out[k] = out[k - 1] + (values[k - 1] + values[k]) * half_h;
    }
    for k in (0..start_index).rev() {
        out[k] = out[k + 1] - (values[k] + values[k + 1]) * half_h;
    }
    Ok(out)
}

/// Derivative order selector for [`spectral_derivative`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivOrder {
    First,
    Second,
}

/// Fourier-collocation derivative of a complex field.
///
/// The field is treated as one period of length `n * spacing`; callers own
/// the precondition that it decays to ~0 at the grid boundaries (otherwise
/// the implied periodic wrap contaminates the result). For the first
/// derivative the Nyquist mode (even `n`) is zeroed, keeping real fields
/// real.
pub fn spectral_derivative(
    values: &[Complex64],
    grid: &Grid1D,
    order: DerivOrder,
) -> Result<Vec<Complex64>> {
    check_len(values.len(), grid)?;
    let n = grid.n;
    let mut spectrum = values.to_vec();
    fft::forward_in_place(&mut spectrum);
    let ks = fft::wavenumbers(n, grid.spacing());
    match order {
        DerivOrder::First => {
            for (c, &k) in spectrum.iter_mut().zip(&ks) {
                *c *= Complex64::new(0.0, k);
            }
            if n % 2 == 0 {
                // Nyquist mode: i*k_nyq has ambiguous sign; drop it.
                spectrum[n / 2] = Complex64::new(0.0, 0.0);
            }
        }
        DerivOrder::Second => {
            for (c, &k) in spectrum.iter_mut().zip(&ks) {
                *c *= -k * k;
            }
        }
    }
    fft::inverse_in_place(&mut spectrum);
    let scale = 1.0 / n as f64;
    for c in &mut spectrum {
        *c *= scale;
    }
    Ok(spectrum)
}

/// [`spectral_derivative`] for a real field; returns the real part.
pub fn spectral_derivative_real(
    values: &[f64],
    grid: &Grid1D,
    order: DerivOrder,
) -> Result<Vec<f64>> {
    let complex: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let out = spectral_derivative(&complex, grid, order)?;
    Ok(out.into_iter().map(|c| c.re).collect())
}

/// First derivative by finite differences on a (possibly short) segment.
///
/// Interior points use the centered 4th-order stencil; the two points at
/// each end use one-sided 4th-order 5-point stencils. Segments shorter than
/// 5 points degrade gracefully to 2nd- or 1st-order formulas. Unlike
/// [`spectral_derivative`] this never assumes periodicity, so it is safe for
/// fields restricted to a validity mask.
pub fn fd_derivative(values: &[f64], spacing: f64) -> Vec<f64> {
    let n = values.len();
    let h = spacing;
    let mut out = vec![0.0; n];
    match n {
        0 => {}
        1 => out[0] = 0.0,
        2 => {
            let d = (values[1] - values[0]) / h;
            out[0] = d;
            out[1] = d;
        }
        3 | 4 => {
            out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
            for k in 1..n - 1 {
                out[k] = (values[k + 1] - values[k - 1]) / (2.0 * h);
            }
            out[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
        }
        _ => {
            let c = 1.0 / (12.0 * h);
            out[0] = c
                * (-25.0 * values[0] + 48.0 * values[1] - 36.0 * values[2] + 16.0 * values[3]
                    - 3.0 * values[4]);
            out[1] = c
                * (-3.0 * values[0] - 10.0 * values[1] + 18.0 * values[2] - 6.0 * values[3]
                    + values[4]);
            for k in 2..n - 2 {
                out[k] = c
                    * (values[k - 2] - 8.0 * values[k - 1] + 8.0 * values[k + 1] - values[k + 2]);
            }
            out[n - 2] = -c
                * (-3.0 * values[n - 1] - 10.0 * values[n - 2] + 18.0 * values[n - 3]
                    - 6.0 * values[n - 4]
                    + values[n - 5]);
            out[n - 1] = -c
                * (-25.0 * values[n - 1] + 48.0 * values[n - 2] - 36.0 * values[n - 3]
                    + 16.0 * values[n - 4]
                    - 3.0 * values[n - 5]);
        }
    }
    out
}

/// The 3D product mesh for the electron (`r`), nuclear (`nuc`), and photon
/// (`q`) coordinates.
///
/// Fields are stored row-major in the fixed axis order `(r, nuc, q)`: the
/// electron index varies slowest and the photon index fastest. This ordering
/// is part of the on-disk snapshot format and must not change.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3D {
    pub r: Grid1D,
    pub nuc: Grid1D,
    pub q: Grid1D,
}

impl Grid3D {
    pub fn new(r: Grid1D, nuc: Grid1D, q: Grid1D) -> Self {
        Grid3D { r, nuc, q }
    }

    /// Total number of mesh points.
    pub fn len(&self) -> usize {
        self.r.n * self.nuc.n * self.q.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of `(i_r, i_nuc, i_q)` in the documented row-major order.
    #[inline]
    pub fn index(&self, i_r: usize, i_nuc: usize, i_q: usize) -> usize {
        (i_r * self.nuc.n + i_nuc) * self.q.n + i_q
    }

    /// Volume element `dr * dR * dq` of one mesh cell.
    pub fn cell_volume(&self) -> f64 {
        self.r.spacing() * self.nuc.spacing() * self.q.spacing()
    }
}

/// The 2D product mesh `(r, nuc)` used by cavity-free reference propagation.
///
/// Row-major with the nuclear index fastest, matching the first two axes of
/// [`Grid3D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub r: Grid1D,
    pub nuc: Grid1D,
}

impl Grid2D {
    pub fn new(r: Grid1D, nuc: Grid1D) -> Self {
        Grid2D { r, nuc }
    }

    pub fn len(&self) -> usize {
        self.r.n * self.nuc.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i_r: usize, i_nuc: usize) -> usize {
        i_r * self.nuc.n + i_nuc
    }

    pub fn cell_volume(&self) -> f64 {
        self.r.spacing() * self.nuc.spacing()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_points_are_exact() {
        let g = Grid1D::new(-2.0, 2.0, 9).unwrap();
        assert_relative_eq!(g.spacing(), 0.5);
        assert_eq!(g.point(0), -2.0);
        assert_eq!(g.point(8), 2.0);
        assert_eq!(g.point(4), 0.0);
        assert_eq!(g.nearest_index(0.24), 4);
        assert_eq!(g.nearest_index(0.26), 5);
        assert_eq!(g.nearest_index(100.0), 8);
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(Grid1D::new(0.0, 1.0, 7).is_err());
        assert!(Grid1D::new(1.0, 1.0, 16).is_err());
        assert!(Grid1D::new(2.0, -1.0, 16).is_err());
    }

    #[test]
    fn trapezoid_constant_is_exact() {
        let g = Grid1D::new(0.0, 1.0, 11).unwrap();
        let ones = vec![1.0; 11];
        assert_relative_eq!(trapezoid_integral(&ones, &g).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn trapezoid_linear_is_exact() {
        let g = Grid1D::new(0.0, 2.0, 21).unwrap();
        let f: Vec<f64> = g.points();
        assert_relative_eq!(trapezoid_integral(&f, &g).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn trapezoid_sine_matches_antiderivative() {
        // ∫_0^π sin = [-cos]_0^π = 2
        let g = Grid1D::new(0.0, PI, 2001).unwrap();
        let f: Vec<f64> = g.points().iter().map(|&x| x.sin()).collect();
        assert_relative_eq!(trapezoid_integral(&f, &g).unwrap(), 2.0, epsilon = 1e-6);
    }

    #[test]
    fn trapezoid_complex_affine_is_exact() {
        let g = Grid1D::new(-1.0, 3.0, 33).unwrap();
        let a = Complex64::new(0.25, -1.5);
        let b = Complex64::new(2.0, 0.75);
        let f: Vec<Complex64> = g.points().iter().map(|&x| a * x + b).collect();
        // ∫ (a x + b) over [-1, 3]: a*(9-1)/2 + b*4
        let expected = a * 4.0 + b * 4.0;
        let got = trapezoid_integral(&f, &g).unwrap();
        assert!((got - expected).norm() < 1e-13);
    }

    #[test]
    fn trapezoid_rejects_length_mismatch() {
        let g = Grid1D::new(0.0, 1.0, 11).unwrap();
        assert!(trapezoid_integral(&vec![1.0; 10], &g).is_err());
    }

    #[test]
    fn cumulative_of_unit_field_is_the_coordinate() {
        let g = Grid1D::new(0.0, 1.0, 11).unwrap();
        let ones = vec![1.0; 11];
        let out = cumulative_integral(&ones, &g, 0).unwrap();
        for (k, &v) in out.iter().enumerate() {
            assert_relative_eq!(v, k as f64 * g.spacing(), epsilon = 1e-14);
        }
    }

    #[test]
    fn cumulative_of_zero_field_is_zero() {
        let g = Grid1D::new(-4.0, 4.0, 17).unwrap();
        let out = cumulative_integral(&vec![0.0; 17], &g, 9).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cumulative_of_linear_field_recovers_square() {
        // ∫_0^x 2t dt = x²
        let g = Grid1D::new(0.0, 1.0, 1001).unwrap();
        let f: Vec<f64> = g.points().iter().map(|&x| 2.0 * x).collect();
        let out = cumulative_integral(&f, &g, 0).unwrap();
        for (k, &v) in out.iter().enumerate() {
            let x = g.point(k);
            assert_relative_eq!(v, x * x, epsilon = 1e-8);
        }
    }

    #[test]
    fn cumulative_below_start_is_negated_reverse() {
        let g = Grid1D::new(0.0, 1.0, 11).unwrap();
        let ones = vec![1.0; 11];
        let out = cumulative_integral(&ones, &g, 5).unwrap();
        assert_eq!(out[5], 0.0);
        for (k, &v) in out.iter().enumerate() {
            assert_relative_eq!(v, (k as f64 - 5.0) * g.spacing(), epsilon = 1e-14);
        }
    }

    #[test]
    fn cumulative_rejects_bad_start() {
        let g = Grid1D::new(0.0, 1.0, 11).unwrap();
        assert!(cumulative_integral(&vec![0.0; 11], &g, 11).is_err());
    }

    /// Periodic-commensurate grid over one period of length `span`.
    fn periodic_grid(span: f64, n: usize) -> Grid1D {
        let h = span / n as f64;
        Grid1D::new(0.0, span - h, n).unwrap()
    }

    #[test]
    fn spectral_first_derivative_of_sine() {
        let g = periodic_grid(2.0 * PI, 64);
        let k = 3.0;
        let f: Vec<Complex64> = g
            .points()
            .iter()
            .map(|&x| Complex64::new((k * x).sin(), 0.0))
            .collect();
        let df = spectral_derivative(&f, &g, DerivOrder::First).unwrap();
        for (j, d) in df.iter().enumerate() {
            let x = g.point(j);
            assert_relative_eq!(d.re, k * (k * x).cos(), epsilon = 1e-10);
            assert!(d.im.abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_second_derivative_of_constant_is_zero() {
        let g = Grid1D::new(-5.0, 5.0, 32).unwrap();
        let f = vec![Complex64::new(4.2, 0.0); 32];
        let ddf = spectral_derivative(&f, &g, DerivOrder::Second).unwrap();
        assert!(ddf.iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn spectral_second_derivative_of_gaussian() {
        // d²/dx² e^{-x²} = (4x² - 2) e^{-x²}
        let g = Grid1D::new(-10.0, 10.0, 256).unwrap();
        let f: Vec<f64> = g.points().iter().map(|&x| (-x * x).exp()).collect();
        let ddf = spectral_derivative_real(&f, &g, DerivOrder::Second).unwrap();
        for (j, &d) in ddf.iter().enumerate() {
            let x = g.point(j);
            let expected = (4.0 * x * x - 2.0) * (-x * x).exp();
            assert!((d - expected).abs() < 1e-8, "x={x}: {d} vs {expected}");
        }
    }

    #[test]
    fn spectral_first_twice_matches_second() {
        let g = Grid1D::new(-10.0, 10.0, 256).unwrap();
        let f: Vec<Complex64> = g
            .points()
            .iter()
            .map(|&x| Complex64::new((-0.5 * x * x).exp() * (1.3 * x).cos(), 0.0))
            .collect();
        let once = spectral_derivative(&f, &g, DerivOrder::First).unwrap();
        let twice = spectral_derivative(&once, &g, DerivOrder::First).unwrap();
        let second = spectral_derivative(&f, &g, DerivOrder::Second).unwrap();
        let norm: f64 = second.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let diff: f64 = twice
            .iter()
            .zip(&second)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff / norm < 1e-8, "relative deviation {}", diff / norm);
    }

    #[test]
    fn fd_derivative_exact_for_quartics() {
        // Both the centered and one-sided 4th-order stencils are exact for
        // polynomials up to degree 4.
        let g = Grid1D::new(-1.0, 1.0, 41).unwrap();
        let f: Vec<f64> = g.points().iter().map(|&x| x.powi(4)).collect();
        let df = fd_derivative(&f, g.spacing());
        for (k, &d) in df.iter().enumerate() {
            let x = g.point(k);
            assert!((d - 4.0 * x.powi(3)).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn fd_derivative_short_segments() {
        assert_eq!(fd_derivative(&[3.0], 1.0), vec![0.0]);
        let two = fd_derivative(&[0.0, 1.0], 0.5);
        assert_relative_eq!(two[0], 2.0);
        assert_relative_eq!(two[1], 2.0);
        // Quadratic on 3 points: 2nd-order stencils are exact.
        let f = [1.0, 0.0, 1.0]; // x² on {-1, 0, 1}
        let df = fd_derivative(&f, 1.0);
        assert_relative_eq!(df[0], -2.0, epsilon = 1e-14);
        assert_relative_eq!(df[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(df[2], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn fd_derivative_of_sine_is_fourth_order() {
        let g = Grid1D::new(0.0, 1.0, 101).unwrap();
        let f: Vec<f64> = g.points().iter().map(|&x| (2.0 * x).sin()).collect();
        let df = fd_derivative(&f, g.spacing());
        let h4 = g.spacing().powi(4);
        for (k, &d) in df.iter().enumerate() {
            let x = g.point(k);
            assert!(
                (d - 2.0 * (2.0 * x).cos()).abs() < 60.0 * h4,
                "k={k}: err {}",
                (d - 2.0 * (2.0 * x).cos()).abs()
            );
        }
    }

    #[test]
    fn linear_interp_recovers_line_and_rejects_outside() {
        let g = Grid1D::new(0.0, 2.0, 21).unwrap();
        let f: Vec<f64> = g.points().iter().map(|&x| 3.0 * x - 1.0).collect();
        assert_relative_eq!(linear_interp(&f, &g, 0.77).unwrap(), 3.0 * 0.77 - 1.0, epsilon = 1e-14);
        assert!(linear_interp(&f, &g, 2.01).is_err());
    }

    #[test]
    fn grid3_index_order_is_q_fastest() {
        let g3 = Grid3D::new(
            Grid1D::new(-1.0, 1.0, 8).unwrap(),
            Grid1D::new(-2.0, 2.0, 9).unwrap(),
            Grid1D::new(-3.0, 3.0, 10).unwrap(),
        );
        assert_eq!(g3.len(), 8 * 9 * 10);
        assert_eq!(g3.index(0, 0, 1), g3.index(0, 0, 0) + 1);
        assert_eq!(g3.index(0, 1, 0), g3.index(0, 0, 0) + 10);
        assert_eq!(g3.index(1, 0, 0), g3.index(0, 0, 0) + 90);
        assert_relative_eq!(
            g3.cell_volume(),
            g3.r.spacing() * g3.nuc.spacing() * g3.q.spacing()
        );
    }

    proptest! {
        /// The trapezoid rule integrates a*x + b exactly on any grid.
        #[test]
        fn trapezoid_affine_exactness(
            a in -10.0_f64..10.0,
            b in -10.0_f64..10.0,
            lo in -5.0_f64..0.0,
            span in 0.5_f64..10.0,
            n in 8_usize..200,
        ) {
            let g = Grid1D::new(lo, lo + span, n).unwrap();
            let f: Vec<f64> = g.points().iter().map(|&x| a * x + b).collect();
            let exact = 0.5 * a * ((lo + span).powi(2) - lo.powi(2)) + b * span;
            let got = trapezoid_integral(&f, &g).unwrap();
            prop_assert!((got - exact).abs() < 1e-10 * (1.0 + exact.abs()));
        }

        /// Integrating from a to b is the negative of integrating from b to a,
        /// for arbitrary sample data.
        #[test]
        fn cumulative_is_antisymmetric_in_endpoints(
            values in proptest::collection::vec(-3.0_f64..3.0, 16),
            a in 0_usize..16,
            b in 0_usize..16,
        ) {
            let g = Grid1D::new(0.0, 1.5, 16).unwrap();
            let from_a = cumulative_integral(&values, &g, a).unwrap();
            let from_b = cumulative_integral(&values, &g, b).unwrap();
            prop_assert!((from_a[b] + from_b[a]).abs() < 1e-12);
        }

        /// Quadrature is linear in its samples.
        #[test]
        fn trapezoid_linearity(
            f in proptest::collection::vec(-2.0_f64..2.0, 24),
            gvals in proptest::collection::vec(-2.0_f64..2.0, 24),
            alpha in -3.0_f64..3.0,
        ) {
            let g = Grid1D::new(-1.0, 1.0, 24).unwrap();
            let combo: Vec<f64> = f.iter().zip(&gvals).map(|(&x, &y)| alpha * x + y).collect();
            let lhs = trapezoid_integral(&combo, &g).unwrap();
            let rhs = alpha * trapezoid_integral(&f, &g).unwrap()
                + trapezoid_integral(&gvals, &g).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
