//! Left quantization `p(x, hD)` on the periodic grid.
//!
//! A symbol term `c x^beta xi^alpha` acts on a grid function as pointwise
//! multiplication by `c x^beta` (on the fundamental domain) after the Fourier
//! multiplier `(h k)^alpha`. For lattice frequencies this realizes the left
//! (Kohn-Nirenberg) ordering exactly: coefficients of `x` always act after
//! the derivatives.
//!
//! Conventions. Grid points are `x_j = -pi + 2 pi i_j / N`; the plane-wave
//! coefficient array is kept in FFT bin order, bin `i` standing for the
//! integer frequency `k = i` for `i < N/2` and `k = i - N` otherwise. The
//! semiclassical transform stores `(2 pi)^{n/2} / N^n` times the phase-fixed
//! DFT, which makes its plain l2 norm equal the grid L2 norm.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fft;
use crate::mathfn;
use crate::symbols::{MultiIndex, Symbol};
use crate::Complex64;

/// Relative amplitude below which a spectral bin counts as unoccupied.
const OCCUPANCY_REL: f64 = 1e-10;

/// Periodic grid `[-pi, pi)^n` with `N` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    dim: usize,
    points_per_axis: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, points_per_axis: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(String::from(
                "grid dimension must be at least 1",
            )));
        }
        if points_per_axis < 4 || !points_per_axis.is_power_of_two() {
            return Err(Error::BadGridSize {
                n: points_per_axis,
            });
        }
        // Reject grids whose flat length overflows usize.
        points_per_axis
            .checked_pow(dim as u32)
            .ok_or(Error::BadGridSize { n: points_per_axis })?;
        Ok(TorusGrid {
            dim,
            points_per_axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * core::f64::consts::PI / self.points_per_axis as f64
    }

    /// Volume of one quadrature cell, `(2 pi / N)^n`.
    pub fn cell_volume(&self) -> f64 {
        mathfn::powi(self.spacing(), self.dim as u32)
    }

    pub fn axis_coordinate(&self, index: usize) -> f64 {
        -core::f64::consts::PI + self.spacing() * index as f64
    }

    /// Integer frequency represented by an FFT bin index along one axis.
    pub fn bin_to_k(&self, bin: usize) -> i64 {
        let n = self.points_per_axis as i64;
        let b = bin as i64;
        if b < n / 2 {
            b
        } else {
            b - n
        }
    }

    /// FFT bin index for an integer frequency in `[-N/2, N/2)`.
    pub fn k_to_bin(&self, k: i64) -> Result<usize> {
        let n = self.points_per_axis as i64;
        if k < -n / 2 || k >= n / 2 {
            return Err(Error::InvalidParameter(alloc::format!(
                "frequency {k} outside the lattice range [{}, {})",
                -n / 2,
                n / 2
            )));
        }
        Ok(if k >= 0 { k as usize } else { (k + n) as usize })
    }

    /// Decode a flat index into per-axis indices (row-major, last axis fastest).
    pub fn decode(&self, mut flat: usize, out: &mut [usize]) {
        let n = self.points_per_axis;
        for axis in (0..self.dim).rev() {
            out[axis] = flat % n;
            flat /= n;
        }
    }

    /// Call `f(axis_indices)` for every grid point in flat order.
    pub fn for_each_point(&self, mut f: impl FnMut(usize, &[usize])) {
        let n = self.points_per_axis;
        let total = self.total_points();
        let mut digits = vec![0usize; self.dim];
        for flat in 0..total {
            f(flat, &digits);
            for axis in (0..self.dim).rev() {
                digits[axis] += 1;
                if digits[axis] == n {
                    digits[axis] = 0;
                } else {
                    break;
                }
            }
        }
    }
}

/// Complex values on a [`TorusGrid`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TorusGrid,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn zeros(grid: TorusGrid) -> Self {
        GridFunction {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.total_points()],
        }
    }

    pub fn from_values(grid: TorusGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(Error::DimensionMismatch {
                expected: grid.total_points(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParameter(String::from(
                "grid values must be finite",
            )));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Riemann-sum L2 norm on the torus.
    pub fn norm_l2(&self) -> f64 {
        let sum: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        mathfn::sqrt(sum * self.grid.cell_volume())
    }

    pub fn add_scaled(&mut self, other: &GridFunction, factor: Complex64) {
        assert_eq!(self.grid, other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        GridFunction {
            grid: self.grid,
            values,
        }
    }
}

/// Semiclassical Fourier coefficients on the frequency lattice.
///
/// Coefficients are stored in FFT bin order; entry `k` is the coefficient of
/// the normalized character at semiclassical frequency `xi = h k`. The plain
/// l2 norm of the coefficients equals the grid L2 norm of the function.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyFunction {
    grid: TorusGrid,
    h: f64,
    coeffs: Vec<Complex64>,
}

impl FrequencyFunction {
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn norm(&self) -> f64 {
        mathfn::sqrt(self.coeffs.iter().map(|c| c.norm_sqr()).sum())
    }

    /// Call `f(lattice_k, coefficient)` for every bin.
    pub fn for_each_lattice(&self, mut f: impl FnMut(&[i64], Complex64)) {
        let grid = self.grid;
        let mut k = vec![0i64; grid.dim()];
        grid.for_each_point(|flat, digits| {
            for (axis, d) in digits.iter().enumerate() {
                k[axis] = grid.bin_to_k(*d);
            }
            f(&k, self.coeffs[flat]);
        });
    }
}

/// Discrete semiclassical Fourier transform; norm-preserving by construction.
pub fn semiclassical_fourier(u: &GridFunction, h: f64) -> Result<FrequencyFunction> {
    check_h(h)?;
    let grid = u.grid();
    let n = grid.points_per_axis();
    let mut coeffs = u.values().to_vec();
    fft::transform_hypercube(&mut coeffs, grid.dim(), n, true);
    let gamma = mathfn::powf(2.0 * core::f64::consts::PI, grid.dim() as f64 / 2.0)
        / grid.total_points() as f64;
    apply_alternating_sign(grid, &mut coeffs, gamma);
    Ok(FrequencyFunction { grid, h, coeffs })
}

/// Inverse of [`semiclassical_fourier`].
pub fn inverse_semiclassical_fourier(f: &FrequencyFunction) -> GridFunction {
    let grid = f.grid;
    let n = grid.points_per_axis();
    let mut values = f.coeffs.clone();
    let gamma = mathfn::powf(2.0 * core::f64::consts::PI, grid.dim() as f64 / 2.0)
        / grid.total_points() as f64;
    apply_alternating_sign(grid, &mut values, 1.0 / gamma);
    fft::transform_hypercube(&mut values, grid.dim(), n, false);
    GridFunction { grid, values }
}

/// Multiply bin `i` by `scale * (-1)^(sum of axis indices)`: the phase fixing
/// the grid offset `x = -pi`, shared by both transform directions.
fn apply_alternating_sign(grid: TorusGrid, coeffs: &mut [Complex64], scale: f64) {
    grid.for_each_point(|flat, digits| {
        let parity: usize = digits.iter().map(|d| d & 1).sum();
        let s = if parity.is_multiple_of(2) { scale } else { -scale };
        coeffs[flat] *= s;
    });
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "h must lie in (0, 1], got {h}"
        )));
    }
    Ok(())
}

/// Exact synthesis `u(x) = sum c_k e^{i<k, x>}` from integer-lattice
/// coefficients, via one inverse FFT.
pub fn synthesize_plane_waves(
    grid: TorusGrid,
    coefficients: &[(Vec<i64>, Complex64)],
) -> Result<GridFunction> {
    let n = grid.points_per_axis();
    let mut bins = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    for (k, c) in coefficients {
        if k.len() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: k.len(),
            });
        }
        let mut flat = 0usize;
        let mut parity = 0i64;
        for kj in k {
            flat = flat * n + grid.k_to_bin(*kj)?;
            parity += kj & 1;
        }
        let sign = if parity % 2 == 0 { 1.0 } else { -1.0 };
        bins[flat] += c * sign * grid.total_points() as f64;
    }
    let mut values = bins;
    fft::transform_hypercube(&mut values, grid.dim(), n, false);
    Ok(GridFunction { grid, values })
}

/// Reject spectra with meaningful energy on the unpaired Nyquist row of any
/// axis; those frequencies alias under the multiplier calculus.
fn check_nyquist(grid: TorusGrid, spectrum: &[Complex64]) -> Result<()> {
    let total_energy: f64 = spectrum.iter().map(|c| c.norm_sqr()).sum();
    if total_energy == 0.0 {
        return Ok(());
    }
    let nyquist_bin = grid.points_per_axis() / 2;
    let mut slab_energy = vec![0.0f64; grid.dim()];
    grid.for_each_point(|flat, digits| {
        for (axis, d) in digits.iter().enumerate() {
            if *d == nyquist_bin {
                slab_energy[axis] += spectrum[flat].norm_sqr();
            }
        }
    });
    for (axis, e) in slab_energy.iter().enumerate() {
        let rel = e / total_energy;
        if rel > OCCUPANCY_REL * OCCUPANCY_REL {
            return Err(Error::Aliasing { axis, energy: rel });
        }
    }
    Ok(())
}

/// Apply the left quantization of a polynomial symbol:
/// `sum_terms c x^beta ((hD)^alpha u)`.
pub fn apply_operator(sym: &Symbol, u: &GridFunction, h: f64) -> Result<GridFunction> {
    check_h(h)?;
    let grid = u.grid();
    if sym.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: sym.dim(),
        });
    }
    let n = grid.points_per_axis();

    let mut spectrum = u.values().to_vec();
    fft::transform_hypercube(&mut spectrum, grid.dim(), n, true);
    check_nyquist(grid, &spectrum)?;

    // Group terms by their xi exponent so each Fourier multiplier is applied
    // once.
    let mut groups: BTreeMap<MultiIndex, Vec<(f64, MultiIndex)>> = BTreeMap::new();
    for (c, x_exp, xi_exp) in sym.terms() {
        groups
            .entry(xi_exp.clone())
            .or_default()
            .push((c, x_exp.clone()));
    }

    let mut out = GridFunction::zeros(grid);
    let mut work = vec![Complex64::new(0.0, 0.0); grid.total_points()];
    for (xi_exp, x_terms) in groups {
        work.copy_from_slice(&spectrum);
        if xi_exp.total_degree() > 0 {
            grid.for_each_point(|flat, digits| {
                let mut m = 1.0;
                for (axis, e) in xi_exp.0.iter().enumerate() {
                    if *e > 0 {
                        m *= mathfn::powi(h * grid.bin_to_k(digits[axis]) as f64, *e);
                    }
                }
                work[flat] *= m;
            });
        }
        fft::transform_hypercube(&mut work, grid.dim(), n, false);

        let x_independent =
            x_terms.len() == 1 && x_terms[0].1.total_degree() == 0;
        if x_independent {
            let c = x_terms[0].0;
            for (o, w) in out.values_mut().iter_mut().zip(&work) {
                *o += c * w;
            }
        } else {
            let values = out.values_mut();
            grid.for_each_point(|flat, digits| {
                let mut weight = 0.0;
                for (c, x_exp) in &x_terms {
                    let mut m = *c;
                    for (axis, e) in x_exp.0.iter().enumerate() {
                        if *e > 0 {
                            m *= mathfn::powi(grid.axis_coordinate(digits[axis]), *e);
                        }
                    }
                    weight += m;
                }
                values[flat] += weight * work[flat];
            });
        }
    }
    Ok(out)
}

/// Apply a scalar multiplier `f(k)` on the frequency lattice.
pub fn apply_frequency_multiplier(
    u: &GridFunction,
    mut f: impl FnMut(&[i64]) -> f64,
) -> GridFunction {
    let grid = u.grid();
    let n = grid.points_per_axis();
    let mut spectrum = u.values().to_vec();
    fft::transform_hypercube(&mut spectrum, grid.dim(), n, true);
    let mut k = vec![0i64; grid.dim()];
    grid.for_each_point(|flat, digits| {
        for (axis, d) in digits.iter().enumerate() {
            k[axis] = grid.bin_to_k(*d);
        }
        spectrum[flat] *= f(&k);
    });
    fft::transform_hypercube(&mut spectrum, grid.dim(), n, false);
    GridFunction {
        grid,
        values: spectrum,
    }
}

/// One order of the composition expansion, with complex coefficients carried
/// as a `(real, imaginary)` pair of symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSymbol {
    pub re: Symbol,
    pub im: Symbol,
}

impl ComplexSymbol {
    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

/// Finite composition expansion `p # q = sum_k h^k s_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoyalExpansion {
    pub terms: Vec<(u32, ComplexSymbol)>,
    /// Set when the requested cap cut the series short of its natural
    /// termination degree.
    pub truncated: bool,
}

/// Composition of left quantizations for polynomial symbols: the symbol of
/// `p(x,hD) q(x,hD)` is `sum_k (h^k / k!) <D_xi, D_y>^k p(x,xi) q(y,eta)` at
/// `y = x`, `eta = xi`, i.e. order `k` collects
/// `(-i)^k sum_{|alpha|=k} (1/alpha!) (d_xi^alpha p)(d_x^alpha q)`.
/// The series terminates at `min(deg_xi p, deg_x q)`.
pub fn moyal_compose(p: &Symbol, q: &Symbol, h_degree_cap: u32) -> MoyalExpansion {
    assert_eq!(p.dim(), q.dim());
    let dim = p.dim();
    let termination = p.degree_xi().min(q.degree_x());
    let kmax = termination.min(h_degree_cap);
    let mut terms = Vec::new();
    for k in 0..=kmax {
        let mut order = Symbol::zero(dim);
        for alpha in multi_indices_of_weight(dim, k) {
            let mut dp = p.clone();
            let mut dq = q.clone();
            let mut factorial = 1.0;
            for (axis, e) in alpha.iter().enumerate() {
                for step in 0..*e {
                    dp = dp.deriv_xi(axis);
                    dq = dq.deriv_x(axis);
                    factorial *= (step + 1) as f64;
                }
            }
            if dp.is_zero() || dq.is_zero() {
                continue;
            }
            order = order.add(&dp.mul(&dq).scale(1.0 / factorial));
        }
        // (-i)^k cycles through 1, -i, -1, i.
        let cs = match k % 4 {
            0 => ComplexSymbol {
                re: order,
                im: Symbol::zero(dim),
            },
            1 => ComplexSymbol {
                re: Symbol::zero(dim),
                im: order.scale(-1.0),
            },
            2 => ComplexSymbol {
                re: order.scale(-1.0),
                im: Symbol::zero(dim),
            },
            _ => ComplexSymbol {
                re: Symbol::zero(dim),
                im: order,
            },
        };
        if !cs.is_zero() {
            terms.push((k, cs));
        }
    }
    MoyalExpansion {
        terms,
        truncated: h_degree_cap < termination,
    }
}

fn multi_indices_of_weight(dim: usize, weight: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; dim];
    fn recurse(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, axis: usize, remaining: u32) {
        if axis + 1 == current.len() {
            current[axis] = remaining;
            out.push(current.clone());
            return;
        }
        for e in 0..=remaining {
            current[axis] = e;
            recurse(out, current, axis + 1, remaining - e);
        }
    }
    recurse(&mut out, &mut current, 0, weight);
    out
}

/// Realize `sum_k h^k s_k(x, hD) u` for a composition expansion.
pub fn apply_expansion(
    expansion: &MoyalExpansion,
    u: &GridFunction,
    h: f64,
) -> Result<GridFunction> {
    let mut out = GridFunction::zeros(u.grid());
    for (k, cs) in &expansion.terms {
        let hk = mathfn::powi(h, *k);
        if !cs.re.is_zero() {
            let v = apply_operator(&cs.re, u, h)?;
            out.add_scaled(&v, Complex64::new(hk, 0.0));
        }
        if !cs.im.is_zero() {
            let v = apply_operator(&cs.im, u, h)?;
            out.add_scaled(&v, Complex64::new(0.0, hk));
        }
    }
    Ok(out)
}

/// Exact expansion of the commutator symbol `p # q - q # p`; the zeroth
/// order cancels identically, so every term carries at least one power of h.
pub fn commutator_expansion(p: &Symbol, q: &Symbol) -> MoyalExpansion {
    let cap = p.degree_xi().max(q.degree_xi()).max(1);
    let pq = moyal_compose(p, q, cap);
    let qp = moyal_compose(q, p, cap);
    let mut orders: BTreeMap<u32, ComplexSymbol> = BTreeMap::new();
    for (k, cs) in &pq.terms {
        orders
            .entry(*k)
            .and_modify(|acc| {
                acc.re = acc.re.add(&cs.re);
                acc.im = acc.im.add(&cs.im);
            })
            .or_insert_with(|| cs.clone());
    }
    for (k, cs) in &qp.terms {
        orders
            .entry(*k)
            .and_modify(|acc| {
                acc.re = acc.re.sub(&cs.re);
                acc.im = acc.im.sub(&cs.im);
            })
            .or_insert_with(|| ComplexSymbol {
                re: cs.re.scale(-1.0),
                im: cs.im.scale(-1.0),
            });
    }
    MoyalExpansion {
        terms: orders
            .into_iter()
            .filter(|(_, cs)| !cs.is_zero())
            .collect(),
        truncated: pq.truncated || qp.truncated,
    }
}

/// `|| p(x,hD) q(x,hD) u - q(x,hD) p(x,hD) u || / ||u||`.
///
/// The products are realized through their exact composition symbols (the
/// expansion terminates for polynomial symbols), so each side is a single
/// quantization. Iterating `apply_operator` instead would fold the boundary
/// sawtooth of odd coordinate factors back through the FFT and pollute the
/// O(h) measurement.
pub fn commutator_defect(p: &Symbol, q: &Symbol, u: &GridFunction, h: f64) -> Result<f64> {
    let expansion = commutator_expansion(p, q);
    let v = apply_expansion(&expansion, u, h)?;
    Ok(v.norm_l2() / u.norm_l2())
}

/// Residual `|| (1/p)(x,hD) p(x,hD) u - u || / ||u||` of the zeroth-order
/// parametrix built from the reciprocal symbol.
///
/// Ellipticity `|p(x, hk)| > c` is sampled over the occupied frequencies of
/// `u` and a coarse subgrid of the fundamental domain before anything is
/// applied. For x-independent symbols the parametrix is the exact reciprocal
/// multiplier; otherwise the reciprocal is evaluated jointly in frequency and
/// space over the occupied spectrum of `p(x,hD) u`.
pub fn parametrix_residual(
    p: &Symbol,
    u: &GridFunction,
    h: f64,
    lower_bound: f64,
) -> Result<f64> {
    check_h(h)?;
    let grid = u.grid();
    if p.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: p.dim(),
        });
    }
    if lower_bound <= 0.0 {
        return Err(Error::InvalidParameter(String::from(
            "ellipticity bound must be positive",
        )));
    }

    // Occupied frequencies of u.
    let spectrum_u = semiclassical_fourier(u, h)?;
    let max_amp = spectrum_u
        .coeffs()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    if max_amp == 0.0 {
        return Err(Error::InvalidParameter(String::from("u vanishes")));
    }
    let mut occupied: Vec<Vec<i64>> = Vec::new();
    spectrum_u.for_each_lattice(|k, c| {
        if c.norm() > OCCUPANCY_REL * max_amp {
            occupied.push(k.to_vec());
        }
    });

    let x_dependent = p.depends_on_x();
    let sample_points = ellipticity_sample_points(grid, x_dependent);
    let mut point = crate::symbols::PhasePoint::new(
        vec![0.0; grid.dim()],
        vec![0.0; grid.dim()],
    );
    for k in &occupied {
        for (axis, kj) in k.iter().enumerate() {
            point.xi[axis] = h * *kj as f64;
        }
        for x in &sample_points {
            point.x.copy_from_slice(x);
            let v = mathfn::abs(p.eval(&point)?);
            if v <= lower_bound {
                return Err(Error::NotElliptic {
                    sampled: v,
                    bound: lower_bound,
                });
            }
        }
    }

    let pu = apply_operator(p, u, h)?;

    let approx = if !x_dependent {
        // Exact reciprocal multiplier.
        let mut xi = vec![0.0; grid.dim()];
        let origin = vec![0.0; grid.dim()];
        apply_frequency_multiplier(&pu, |k| {
            for (axis, kj) in k.iter().enumerate() {
                xi[axis] = h * *kj as f64;
            }
            let pt = crate::symbols::PhasePoint::new(origin.clone(), xi.clone());
            1.0 / p.eval(&pt).unwrap_or(f64::INFINITY)
        })
    } else {
        apply_reciprocal_symbol(p, &pu, h)?
    };

    Ok(approx.sub(u).norm_l2() / u.norm_l2())
}

fn ellipticity_sample_points(grid: TorusGrid, x_dependent: bool) -> Vec<Vec<f64>> {
    if !x_dependent {
        return vec![vec![0.0; grid.dim()]];
    }
    // Coarse subgrid: at most 16 samples per axis.
    let n = grid.points_per_axis();
    let stride = (n / 16).max(1);
    let per_axis: Vec<f64> = (0..n)
        .step_by(stride)
        .map(|i| grid.axis_coordinate(i))
        .collect();
    let mut points = vec![Vec::new()];
    for _axis in 0..grid.dim() {
        let mut next = Vec::with_capacity(points.len() * per_axis.len());
        for p in &points {
            for v in &per_axis {
                let mut q = p.clone();
                q.push(*v);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

/// `(1/p)(x, hD) v` by direct frequency-and-space evaluation over the
/// occupied spectrum of `v`. Cost is grid size times occupancy.
fn apply_reciprocal_symbol(p: &Symbol, v: &GridFunction, h: f64) -> Result<GridFunction> {
    let grid = v.grid();
    let n = grid.points_per_axis();
    let dim = grid.dim();
    let total = grid.total_points();

    // Plane-wave coefficients of v.
    let mut spectrum = v.values().to_vec();
    fft::transform_hypercube(&mut spectrum, dim, n, true);
    let scale = 1.0 / total as f64;
    let max_amp = spectrum.iter().map(|c| c.norm()).fold(0.0, f64::max) * scale;

    struct Mode {
        k: Vec<i64>,
        coeff: Complex64,
    }
    let mut modes: Vec<Mode> = Vec::new();
    // Relative cutoff for the reciprocal sum; dropped tails bound the extra
    // residual by roughly the cutoff itself, far below the O(h) signal.
    let cutoff = 1e-8 * max_amp;
    grid.for_each_point(|flat, digits| {
        let c = spectrum[flat] * scale;
        if c.norm() > cutoff {
            let mut parity = 0usize;
            let mut k = Vec::with_capacity(dim);
            for d in digits {
                parity += d & 1;
                k.push(grid.bin_to_k(*d));
            }
            let sign = if parity.is_multiple_of(2) { 1.0 } else { -1.0 };
            modes.push(Mode {
                k,
                coeff: c * sign,
            });
        }
    });

    // Per-axis phase tables e^{i k x} for each mode.
    let coords: Vec<f64> = (0..n).map(|i| grid.axis_coordinate(i)).collect();
    let mut out = GridFunction::zeros(grid);
    let values = out.values_mut();
    let mut phases: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); n]; dim];
    let mut pt = crate::symbols::PhasePoint::new(vec![0.0; dim], vec![0.0; dim]);
    for mode in &modes {
        for axis in 0..dim {
            let kj = mode.k[axis] as f64;
            pt.xi[axis] = h * kj;
            for (i, x) in coords.iter().enumerate() {
                let (s, c) = mathfn::sin_cos(kj * x);
                phases[axis][i] = Complex64::new(c, s);
            }
        }
        grid.for_each_point(|flat, digits| {
            let mut phase = Complex64::new(1.0, 0.0);
            for (axis, d) in digits.iter().enumerate() {
                pt.x[axis] = coords[*d];
                phase *= phases[axis][*d];
            }
            let denom = p.eval(&pt).expect("dimension checked above");
            values[flat] += mode.coeff * phase / denom;
        });
    }
    Ok(out)
}
