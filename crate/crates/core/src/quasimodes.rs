//! Quasimode families on the torus and their defect measurements.
//!
//! All constructors tie the semiclassical parameter to the frequency scale by
//! `h = 1/lambda` and center mass at `x = 0`, where the coordinate factors of
//! x-dependent operators are well behaved. Frequency selections keep a factor
//! two of Nyquist headroom (`|k_i| <= N/4`).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mathfn;
use crate::quantization::{
    apply_operator, semiclassical_fourier, synthesize_plane_waves, GridFunction, TorusGrid,
};
use crate::symbols::Symbol;
use crate::Complex64;

/// How a frequency window was selected.
#[derive(Debug, Clone, PartialEq)]
pub enum WindowRule {
    /// `lambda - width <= |k| <= lambda`.
    Annulus { lambda: f64, width: f64 },
    /// Knapp-type cap: `k_1 in [lambda - 1, lambda]`, `|k_j| <= sqrt(lambda)`,
    /// `|k| in [lambda - 1, lambda + 1]`.
    Cap { lambda: f64 },
    Explicit,
}

/// A nonempty set of integer lattice frequencies within the headroom bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeWindow {
    pub rule: WindowRule,
    points: Vec<Vec<i64>>,
}

impl LatticeWindow {
    pub fn points(&self) -> &[Vec<i64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn validate(rule: WindowRule, points: Vec<Vec<i64>>, grid: TorusGrid) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyWindow(alloc::format!("{rule:?}")));
        }
        let headroom = (grid.points_per_axis() / 4) as i64;
        for k in &points {
            if k.iter().any(|kj| kj.abs() > headroom) {
                return Err(Error::InvalidParameter(alloc::format!(
                    "frequency {k:?} exceeds the headroom bound N/4 = {headroom}"
                )));
            }
        }
        Ok(LatticeWindow { rule, points })
    }
}

/// Lattice points in the closed annulus `lambda - width <= |k| <= lambda`.
pub fn annulus_window(grid: TorusGrid, lambda: f64, width: f64) -> Result<LatticeWindow> {
    if lambda < 1.0 || width <= 0.0 {
        return Err(Error::InvalidParameter(String::from(
            "annulus needs lambda >= 1 and width > 0",
        )));
    }
    let inner = (lambda - width).max(0.0);
    let lo = inner * inner;
    let hi = lambda * lambda;
    let bound = mathfn::floor(lambda) as i64;
    let dim = grid.dim();
    let mut points = Vec::new();
    let mut k = vec![-bound; dim];
    'outer: loop {
        let norm2: f64 = k.iter().map(|kj| (kj * kj) as f64).sum();
        if norm2 >= lo - 1e-9 && norm2 <= hi + 1e-9 {
            points.push(k.clone());
        }
        for axis in (0..dim).rev() {
            k[axis] += 1;
            if k[axis] <= bound {
                continue 'outer;
            }
            k[axis] = -bound;
        }
        break;
    }
    LatticeWindow::validate(WindowRule::Annulus { lambda, width }, points, grid)
}

/// Knapp-type cap on the sphere of radius `lambda`, aspect `1 x sqrt(lambda)`.
pub fn cap_window(grid: TorusGrid, lambda: f64) -> Result<LatticeWindow> {
    if lambda < 2.0 {
        return Err(Error::InvalidParameter(String::from(
            "cap needs lambda >= 2",
        )));
    }
    let dim = grid.dim();
    let k1_lo = mathfn::ceil(lambda - 1.0) as i64;
    let k1_hi = mathfn::floor(lambda) as i64;
    let side = mathfn::floor(mathfn::sqrt(lambda)) as i64;
    let lo = (lambda - 1.0) * (lambda - 1.0);
    let hi = (lambda + 1.0) * (lambda + 1.0);
    let mut points = Vec::new();
    let mut rest = vec![-side; dim - 1];
    for k1 in k1_lo..=k1_hi {
        if dim == 1 {
            let n2 = (k1 * k1) as f64;
            if n2 >= lo - 1e-9 && n2 <= hi + 1e-9 {
                points.push(vec![k1]);
            }
            continue;
        }
        for v in rest.iter_mut() {
            *v = -side;
        }
        'grid: loop {
            let norm2 = (k1 * k1) as f64
                + rest.iter().map(|kj| (kj * kj) as f64).sum::<f64>();
            if norm2 >= lo - 1e-9 && norm2 <= hi + 1e-9 {
                let mut k = Vec::with_capacity(dim);
                k.push(k1);
                k.extend_from_slice(&rest);
                points.push(k);
            }
            for axis in (0..dim - 1).rev() {
                rest[axis] += 1;
                if rest[axis] <= side {
                    continue 'grid;
                }
                rest[axis] = -side;
            }
            break;
        }
    }
    LatticeWindow::validate(WindowRule::Cap { lambda }, points, grid)
}

/// `u(x) = e^{i<k, x>}`: unit-amplitude exact eigenfunction of the Fourier
/// multipliers, and of `-h^2 Delta - 1` when `h = 1/|k|`.
pub fn make_plane_wave(grid: TorusGrid, k: &[i64]) -> Result<GridFunction> {
    if k.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: k.len(),
        });
    }
    let headroom = (grid.points_per_axis() / 4) as i64;
    if k.iter().any(|kj| kj.abs() > headroom) {
        return Err(Error::InvalidParameter(alloc::format!(
            "plane wave frequency {k:?} exceeds the headroom bound N/4 = {headroom}"
        )));
    }
    synthesize_plane_waves(grid, &[(k.to_vec(), Complex64::new(1.0, 0.0))])
}

/// Spectral-cluster analogue: all characters in the annulus
/// `lambda - width <= |k| <= lambda`, phases aligned at `phase_center`.
pub fn make_cluster(
    grid: TorusGrid,
    lambda: f64,
    width: f64,
    phase_center: &[f64],
) -> Result<GridFunction> {
    if phase_center.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: phase_center.len(),
        });
    }
    let window = annulus_window(grid, lambda, width)?;
    let coeffs: Vec<(Vec<i64>, Complex64)> = window
        .points()
        .iter()
        .map(|k| {
            let phase: f64 = k
                .iter()
                .zip(phase_center)
                .map(|(kj, xj)| *kj as f64 * xj)
                .sum();
            let (s, c) = mathfn::sin_cos(-phase);
            (k.clone(), Complex64::new(c, s))
        })
        .collect();
    synthesize_plane_waves(grid, &coeffs)
}

/// Knapp-type packet: unit coefficients over the cap window.
pub fn make_knapp(grid: TorusGrid, lambda: f64) -> Result<GridFunction> {
    let window = cap_window(grid, lambda)?;
    let coeffs: Vec<(Vec<i64>, Complex64)> = window
        .points()
        .iter()
        .map(|k| (k.clone(), Complex64::new(1.0, 0.0)))
        .collect();
    synthesize_plane_waves(grid, &coeffs)
}

/// Inner profile of a tensor-product joint quasimode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerKind {
    Cluster,
    Knapp,
}

/// Joint quasimode depending only on `(x_1, x_{r+1}, ..., x_n)`: an
/// `(n - r + 1)`-dimensional cluster or Knapp packet embedded with zero
/// frequency along axes `2..r`. Exact in the kernel of `xi_i`, `i = 2..r`,
/// and an order-`width * h` quasimode of `|xi|^2 - 1`.
pub fn make_tensor_joint(
    grid: TorusGrid,
    rank: usize,
    lambda: f64,
    inner: InnerKind,
    width: f64,
) -> Result<GridFunction> {
    let n = grid.dim();
    if rank < 2 || rank > n {
        return Err(Error::RankOutOfRange { r: rank, n });
    }
    let inner_dim = n - rank + 1;
    let inner_grid = TorusGrid::new(inner_dim, grid.points_per_axis())?;
    let inner_window = match inner {
        InnerKind::Cluster => annulus_window(inner_grid, lambda, width)?,
        InnerKind::Knapp => cap_window(inner_grid, lambda)?,
    };
    let coeffs: Vec<(Vec<i64>, Complex64)> = inner_window
        .points()
        .iter()
        .map(|kappa| {
            let mut k = vec![0i64; n];
            k[0] = kappa[0];
            for (offset, kj) in kappa[1..].iter().enumerate() {
                k[rank + offset] = *kj;
            }
            (k, Complex64::new(1.0, 0.0))
        })
        .collect();
    synthesize_plane_waves(grid, &coeffs)
}

/// Coherent-state-style packet: Gaussian frequency weights of spread
/// `1/sigma` about `carrier`, concentrated at `x = 0` with spatial width
/// `sigma`. Boundary amplitude is `~ e^{-(pi/sigma)^2/2}`, so iterated
/// x-dependent operators act cleanly on it.
pub fn make_wave_packet(grid: TorusGrid, carrier: &[i64], sigma: f64) -> Result<GridFunction> {
    if carrier.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: carrier.len(),
        });
    }
    if sigma <= 0.0 {
        return Err(Error::InvalidParameter(String::from(
            "packet width must be positive",
        )));
    }
    let quarter = (grid.points_per_axis() / 4) as i64;
    if carrier.iter().any(|kj| kj.abs() > quarter) {
        return Err(Error::InvalidParameter(String::from(
            "carrier exceeds the headroom bound N/4",
        )));
    }
    let mut coeffs = Vec::new();
    let mut k = vec![-quarter; grid.dim()];
    'outer: loop {
        let dist2: f64 = k
            .iter()
            .zip(carrier)
            .map(|(kj, cj)| {
                let d = (kj - cj) as f64;
                d * d
            })
            .sum();
        let w = mathfn::exp(-sigma * sigma * dist2 / 2.0);
        if w > 1e-300 {
            coeffs.push((k.clone(), Complex64::new(w, 0.0)));
        }
        for axis in (0..grid.dim()).rev() {
            k[axis] += 1;
            if k[axis] <= quarter {
                continue 'outer;
            }
            k[axis] = -quarter;
        }
        break;
    }
    synthesize_plane_waves(grid, &coeffs)
}

/// Defects of iterated applications `P_1^{k_1} ... P_r^{k_r} u`.
///
/// `entries` holds the L2 ratios `||P^k u|| / ||u||` of the strong-quasimode
/// definition. For x-independent symbols the report also carries
/// `multiplier_bounds`: the maximum of `prod_j |p_j(h k)|^{k_j}` over the
/// occupied frequencies, the sharp single-shell bound the L2 ratio never
/// exceeds.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectReport {
    pub kmax: u32,
    pub h: f64,
    pub entries: BTreeMap<Vec<u32>, f64>,
    /// `entries` divided by `h^{k_1 + ... + k_r}`.
    pub normalized: BTreeMap<Vec<u32>, f64>,
    pub multiplier_bounds: Option<BTreeMap<Vec<u32>, f64>>,
}

impl DefectReport {
    pub fn entry(&self, index: &[u32]) -> Option<f64> {
        self.entries.get(index).copied()
    }
}

fn multi_indices_up_to(r: usize, kmax: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; r];
    fn recurse(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, axis: usize, budget: u32) {
        if axis == current.len() {
            out.push(current.clone());
            return;
        }
        for e in 0..=budget {
            current[axis] = e;
            recurse(out, current, axis + 1, budget - e);
        }
        current[axis] = 0;
    }
    recurse(&mut out, &mut current, 0, kmax);
    out.sort();
    out
}

/// Measure `||P_1^{k_1} ... P_r^{k_r} u|| / ||u||` for all multi-indices with
/// `k_1 + ... + k_r <= kmax`.
pub fn defect_report(
    syms: &[Symbol],
    u: &GridFunction,
    h: f64,
    kmax: u32,
) -> Result<DefectReport> {
    if kmax < 1 {
        return Err(Error::InvalidParameter(String::from("kmax must be >= 1")));
    }
    if syms.is_empty() {
        return Err(Error::InvalidParameter(String::from(
            "need at least one symbol",
        )));
    }
    let grid = u.grid();
    for s in syms {
        if s.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: s.dim(),
            });
        }
    }
    let r = syms.len();
    let indices = multi_indices_up_to(r, kmax);
    let x_independent = syms.iter().all(|s| !s.depends_on_x());

    let mut entries = BTreeMap::new();
    let mut bounds = if x_independent {
        Some(BTreeMap::new())
    } else {
        None
    };

    if x_independent {
        // Everything happens on the frequency side: each operator is the
        // multiplier p_j(h k), so an iterated application scales each
        // occupied coefficient by prod_j p_j(h k)^{k_j}.
        let spectrum = semiclassical_fourier(u, h)?;
        let total: f64 = spectrum.coeffs().iter().map(|c| c.norm_sqr()).sum();
        if total == 0.0 {
            return Err(Error::InvalidParameter(String::from("u vanishes")));
        }
        let max_amp = spectrum
            .coeffs()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        // Multiplier values per occupied point, per symbol.
        let mut weights: Vec<f64> = Vec::new();
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); r];
        let mut xi = vec![0.0; grid.dim()];
        let occupancy = 1e-12 * max_amp;
        let mut failure: Option<Error> = None;
        spectrum.for_each_lattice(|k, c| {
            if failure.is_some() || c.norm() <= occupancy {
                return;
            }
            for (axis, kj) in k.iter().enumerate() {
                xi[axis] = h * *kj as f64;
            }
            let pt = crate::symbols::PhasePoint::at_xi(xi.clone());
            weights.push(c.norm_sqr());
            for (j, s) in syms.iter().enumerate() {
                match s.eval(&pt) {
                    Ok(v) => values[j].push(v),
                    Err(e) => failure = Some(e),
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        for index in &indices {
            let mut num = 0.0;
            let mut bound: f64 = 0.0;
            for (point, w) in weights.iter().enumerate() {
                let mut m = 1.0;
                for (j, e) in index.iter().enumerate() {
                    if *e > 0 {
                        m *= mathfn::powi(values[j][point], *e);
                    }
                }
                num += m * m * w;
                bound = bound.max(mathfn::abs(m));
            }
            let entry = if index.iter().all(|e| *e == 0) {
                1.0
            } else {
                mathfn::sqrt(num / total)
            };
            entries.insert(index.clone(), entry);
            bounds.as_mut().unwrap().insert(index.clone(), bound);
        }
    } else {
        let norm_u = u.norm_l2();
        for index in &indices {
            if index.iter().all(|e| *e == 0) {
                entries.insert(index.clone(), 1.0);
                continue;
            }
            // Apply right-to-left: P_r acts first.
            let mut v = u.clone();
            for j in (0..r).rev() {
                for _ in 0..index[j] {
                    v = apply_operator(&syms[j], &v, h)?;
                }
            }
            entries.insert(index.clone(), v.norm_l2() / norm_u);
        }
    }

    let normalized = entries
        .iter()
        .map(|(k, v)| {
            let weight: u32 = k.iter().sum();
            (k.clone(), v / mathfn::powi(h, weight))
        })
        .collect();

    Ok(DefectReport {
        kmax,
        h,
        entries,
        normalized,
        multiplier_bounds: bounds,
    })
}

/// Smooth plateau bump: 1 on `|t| <= 1`, 0 on `|t| >= 2`, with an
/// `exp(-1/t)` crossover in between.
pub fn plateau_bump(t: f64) -> f64 {
    let a = mathfn::abs(t);
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        smooth_step(2.0 - a)
    }
}

fn mollifier(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        mathfn::exp(-1.0 / s)
    }
}

fn smooth_step(s: f64) -> f64 {
    let f = mollifier(s);
    let g = mollifier(1.0 - s);
    f / (f + g)
}

/// Apply `chi(x, hD)`: a product-bump frequency cutoff about `xi_center` of
/// core half-width `xi_width` per axis, followed by an optional spatial
/// product bump of core half-width `x_width` about the origin.
pub fn localize(
    u: &GridFunction,
    x_width: Option<f64>,
    xi_center: &[f64],
    xi_width: f64,
    h: f64,
) -> Result<GridFunction> {
    let grid = u.grid();
    if xi_center.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: xi_center.len(),
        });
    }
    if xi_width <= 0.0 {
        return Err(Error::InvalidParameter(String::from(
            "frequency width must be positive",
        )));
    }
    if let Some(w) = x_width {
        if w <= 0.0 {
            return Err(Error::InvalidParameter(String::from(
                "spatial width must be positive",
            )));
        }
    }
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::InvalidParameter(String::from("h must be in (0, 1]")));
    }
    // The multiplier support |xi_j - c_j| <= 2 w must stay within the
    // headroom band |k_j| <= N/4.
    let headroom_xi = h * (grid.points_per_axis() / 4) as f64;
    for c in xi_center {
        if mathfn::abs(*c) + 2.0 * xi_width > headroom_xi {
            return Err(Error::InvalidParameter(alloc::format!(
                "frequency cutoff reaches |xi| = {:.3}, beyond the headroom bound {:.3}",
                mathfn::abs(*c) + 2.0 * xi_width,
                headroom_xi
            )));
        }
    }

    let mut out = crate::quantization::apply_frequency_multiplier(u, |k| {
        let mut m = 1.0;
        for (axis, kj) in k.iter().enumerate() {
            m *= plateau_bump((h * *kj as f64 - xi_center[axis]) / xi_width);
            if m == 0.0 {
                break;
            }
        }
        m
    });

    if let Some(width) = x_width {
        let values = out.values_mut();
        grid.for_each_point(|flat, digits| {
            let mut m = 1.0;
            for d in digits {
                m *= plateau_bump(grid.axis_coordinate(*d) / width);
                if m == 0.0 {
                    break;
                }
            }
            values[flat] *= m;
        });
    }
    Ok(out)
}

/// Which family a [`QuasimodeSpec`] builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuasimodeKind {
    PlaneWave,
    Cluster,
    Knapp,
    TensorJoint,
    Localized,
}

/// Declarative description of a quasimode; `h = 1/lambda` throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasimodeSpec {
    pub kind: QuasimodeKind,
    pub lambda: f64,
    /// Cluster width `W`.
    pub width: f64,
    /// Number of joint operators `r` (tensor families).
    pub rank: usize,
    pub inner: InnerKind,
    /// Spatial bump half-width for the localized family.
    pub x_width: f64,
    /// Frequency bump half-width for the localized family.
    pub xi_width: f64,
}

impl QuasimodeSpec {
    pub fn new(kind: QuasimodeKind, lambda: f64) -> Self {
        QuasimodeSpec {
            kind,
            lambda,
            width: 1.0,
            rank: 2,
            inner: InnerKind::Cluster,
            x_width: 1.0,
            xi_width: 0.4,
        }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.lambda
    }

    /// Build the family member on a grid.
    pub fn build(&self, grid: TorusGrid) -> Result<GridFunction> {
        if self.lambda < 1.0 {
            return Err(Error::InvalidParameter(String::from("lambda must be >= 1")));
        }
        let origin = vec![0.0; grid.dim()];
        match self.kind {
            QuasimodeKind::PlaneWave => {
                let mut k = vec![0i64; grid.dim()];
                k[0] = mathfn::round(self.lambda) as i64;
                make_plane_wave(grid, &k)
            }
            QuasimodeKind::Cluster => make_cluster(grid, self.lambda, self.width, &origin),
            QuasimodeKind::Knapp => make_knapp(grid, self.lambda),
            QuasimodeKind::TensorJoint => {
                make_tensor_joint(grid, self.rank, self.lambda, self.inner, self.width)
            }
            QuasimodeKind::Localized => {
                let u = make_cluster(grid, self.lambda, self.width, &origin)?;
                let mut center = vec![0.0; grid.dim()];
                center[0] = 1.0;
                localize(&u, Some(self.x_width), &center, self.xi_width, self.h())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantization::inverse_semiclassical_fourier;

    /// Independent brute-force annulus count: a dumb double loop, kept apart
    /// from the window construction it checks.
    fn oracle_annulus_points(dim: usize, lo2: f64, hi2: f64, bound: i64) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        match dim {
            2 => {
                for a in -bound..=bound {
                    for b in -bound..=bound {
                        let n2 = (a * a + b * b) as f64;
                        if n2 >= lo2 - 1e-9 && n2 <= hi2 + 1e-9 {
                            out.push(vec![a, b]);
                        }
                    }
                }
            }
            3 => {
                for a in -bound..=bound {
                    for b in -bound..=bound {
                        for c in -bound..=bound {
                            let n2 = (a * a + b * b + c * c) as f64;
                            if n2 >= lo2 - 1e-9 && n2 <= hi2 + 1e-9 {
                                out.push(vec![a, b, c]);
                            }
                        }
                    }
                }
            }
            _ => panic!("oracle supports 2 or 3 dimensions"),
        }
        out
    }

    #[test]
    fn annulus_window_matches_oracle_counts() {
        let grid = TorusGrid::new(2, 64).unwrap();
        // lambda = 5, width = 1: shells |k|^2 in {16, 17, 18, 20, 25} with
        // counts 4 + 8 + 4 + 8 + 12 = 36 by brute force.
        let window = annulus_window(grid, 5.0, 1.0).unwrap();
        let oracle = oracle_annulus_points(2, 16.0, 25.0, 5);
        assert_eq!(window.len(), oracle.len());
        assert_eq!(window.len(), 36);
        let mut sorted = window.points().to_vec();
        sorted.sort();
        let mut oracle_sorted = oracle;
        oracle_sorted.sort();
        assert_eq!(sorted, oracle_sorted);
    }

    #[test]
    fn thin_annulus_keeps_only_exact_shell() {
        let grid = TorusGrid::new(2, 64).unwrap();
        // Only |k| = 5 solutions: (+-5, 0), (0, +-5), (+-3, +-4), (+-4, +-3).
        let window = annulus_window(grid, 5.0, 0.01).unwrap();
        assert_eq!(window.len(), 12);
    }

    #[test]
    fn empty_annulus_is_rejected() {
        let grid = TorusGrid::new(2, 64).unwrap();
        // Radii between consecutive shells with width too small to reach one.
        assert!(matches!(
            annulus_window(grid, 5.4, 0.01),
            Err(Error::EmptyWindow(_))
        ));
    }

    #[test]
    fn cluster_value_at_phase_center_is_point_count() {
        let grid = TorusGrid::new(2, 64).unwrap();
        let u = make_cluster(grid, 5.0, 1.0, &[0.0, 0.0]).unwrap();
        let origin_flat = 32 * 64 + 32; // axis index N/2 is x = 0
        assert!((u.values()[origin_flat].re - 36.0).abs() < 1e-9);
        assert!(u.values()[origin_flat].im.abs() < 1e-9);
        // L2 norm^2 = (2 pi)^n * point count by orthogonality.
        let expect = (2.0 * core::f64::consts::PI) * 36.0f64.sqrt();
        assert!((u.norm_l2() - expect).abs() < 1e-8);
    }

    #[test]
    fn cluster_phase_center_moves_alignment() {
        let grid = TorusGrid::new(2, 64).unwrap();
        let x0 = [grid.axis_coordinate(10), grid.axis_coordinate(40)];
        let u = make_cluster(grid, 5.0, 1.0, &x0).unwrap();
        let flat = 10 * 64 + 40;
        assert!((u.values()[flat].re - 36.0).abs() < 1e-9);
    }

    #[test]
    fn plane_wave_defect_examples() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let p = Symbol::laplace_minus_one(2);

        // Exact eigenfunction at h = 1/|k|.
        let u = make_plane_wave(grid, &[5, 0]).unwrap();
        let v = apply_operator(&p, &u, 0.2).unwrap();
        assert!(v.norm_l2() / u.norm_l2() < 1e-12);

        // Pythagorean lattice point: |k| = 5 again.
        let u34 = make_plane_wave(grid, &[3, 4]).unwrap();
        let v34 = apply_operator(&p, &u34, 0.2).unwrap();
        assert!(v34.norm_l2() / u34.norm_l2() < 1e-12);

        // Detuned h: defect |h^2 |k|^2 - 1| = |25/16 - 1| = 0.5625.
        let report = defect_report(&[p], &u, 0.25, 1).unwrap();
        assert!((report.entry(&[1]).unwrap() - 0.5625).abs() < 1e-12);
    }

    #[test]
    fn cluster_defect_matches_enumeration_oracle() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let u = make_cluster(grid, 5.0, 1.0, &[0.0, 0.0]).unwrap();
        let p = Symbol::laplace_minus_one(2);
        let h = 0.2;
        let report = defect_report(&[p], &u, h, 2).unwrap();

        // Oracle: all coefficients are 1, so the L2 defect is the quadratic
        // mean of |h^2 |k|^2 - 1| over the 36 annulus points, and the
        // multiplier bound is the max, attained on the |k|^2 = 16 shell.
        let oracle = oracle_annulus_points(2, 16.0, 25.0, 5);
        let mut sum1 = 0.0;
        let mut sum2 = 0.0;
        let mut max1: f64 = 0.0;
        for k in &oracle {
            let n2: f64 = k.iter().map(|kj| (kj * kj) as f64).sum();
            let m = (h * h * n2 - 1.0).abs();
            sum1 += m * m;
            sum2 += m * m * m * m;
            max1 = max1.max(m);
        }
        let l2_1 = (sum1 / oracle.len() as f64).sqrt();
        let l2_2 = (sum2 / oracle.len() as f64).sqrt();
        assert!((report.entry(&[1]).unwrap() - l2_1).abs() < 1e-12);
        assert!((report.entry(&[2]).unwrap() - l2_2).abs() < 1e-12);

        let bounds = report.multiplier_bounds.as_ref().unwrap();
        assert!((bounds[&vec![1]] - 9.0 / 25.0).abs() < 1e-12);
        assert!((bounds[&vec![2]] - (9.0f64 / 25.0).powi(2)).abs() < 1e-12);
        assert!((max1 - 9.0 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn defect_entries_of_exact_eigenfunction_vanish() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let u = make_plane_wave(grid, &[3, 4]).unwrap();
        let p = Symbol::laplace_minus_one(2);
        let report = defect_report(&[p], &u, 0.2, 3).unwrap();
        for (index, value) in &report.entries {
            if index.iter().sum::<u32>() >= 1 {
                assert!(*value < 1e-12, "index {index:?} gave {value}");
            } else {
                assert_eq!(*value, 1.0);
            }
        }
    }

    #[test]
    fn frequency_side_defect_agrees_with_operator_route() {
        // Dual route: the x-independent fast path against iterated
        // apply_operator on the grid.
        let grid = TorusGrid::new(2, 64).unwrap();
        let u = make_cluster(grid, 5.0, 1.0, &[0.0, 0.0]).unwrap();
        let syms = [Symbol::laplace_minus_one(2), Symbol::xi(2, 1)];
        let h = 0.2;
        let report = defect_report(&syms, &u, h, 2).unwrap();
        for (index, fast) in &report.entries {
            if index.iter().sum::<u32>() == 0 {
                continue;
            }
            let mut v = u.clone();
            for j in (0..syms.len()).rev() {
                for _ in 0..index[j] {
                    v = apply_operator(&syms[j], &v, h).unwrap();
                }
            }
            let direct = v.norm_l2() / u.norm_l2();
            assert!(
                (fast - direct).abs() <= 1e-10 * (1.0 + direct),
                "index {index:?}: fast {fast} vs direct {direct}"
            );
        }
    }

    #[test]
    fn strong_quasimode_inequality_for_clusters() {
        // Cluster defects obey entry(k) <= (2 W h + (W h)^2)^k.
        let p = Symbol::laplace_minus_one(2);
        for lambda in [8.0f64, 16.0, 32.0] {
            let n = (8.0 * lambda) as usize;
            let grid = TorusGrid::new(2, n.next_power_of_two()).unwrap();
            let u = make_cluster(grid, lambda, 1.0, &[0.0, 0.0]).unwrap();
            let h = 1.0 / lambda;
            let report = defect_report(std::slice::from_ref(&p), &u, h, 3).unwrap();
            let bound1 = 2.0 * h + h * h;
            for k in 1u32..=3 {
                let e = report.entry(&[k]).unwrap();
                assert!(
                    e <= mathfn::powi(bound1, k) + 1e-15,
                    "lambda {lambda}, k {k}: {e} > {}",
                    mathfn::powi(bound1, k)
                );
            }
        }
    }

    #[test]
    fn knapp_cap_count_and_defect_bound() {
        let grid = TorusGrid::new(2, 512).unwrap();
        let lambda = 100.0;
        let window = cap_window(grid, lambda).unwrap();
        // Oracle: brute-force count over the box.
        let mut oracle = 0usize;
        for k1 in 99..=100i64 {
            for k2 in -10..=10i64 {
                let n2 = (k1 * k1 + k2 * k2) as f64;
                if (99.0 * 99.0 - 1e-9..=101.0 * 101.0 + 1e-9).contains(&n2) {
                    oracle += 1;
                }
            }
        }
        assert_eq!(window.len(), oracle);
        assert_eq!(window.len(), 42);

        // Defect of the Laplace symbol at h = 1/lambda is bounded by the cap
        // multiplier maximum, itself at most (2 lambda + 1)/lambda^2.
        let u = make_knapp(grid, lambda).unwrap();
        let report = defect_report(&[Symbol::laplace_minus_one(2)], &u, 1.0 / lambda, 1).unwrap();
        let max_bound = (2.0 * lambda + 1.0) / (lambda * lambda);
        assert!(report.entry(&[1]).unwrap() <= max_bound + 1e-15);
        assert!(max_bound <= 3.0 / lambda);
    }

    #[test]
    fn knapp_needs_enough_frequencies() {
        let grid = TorusGrid::new(2, 16).unwrap();
        assert!(make_knapp(grid, 1.0).is_err());
    }

    #[test]
    fn tensor_joint_annihilated_by_middle_multipliers() {
        let grid = TorusGrid::new(3, 32).unwrap();
        let u = make_tensor_joint(grid, 2, 6.0, InnerKind::Cluster, 1.0).unwrap();
        let h = 1.0 / 6.0;
        let v = apply_operator(&Symbol::xi(3, 1), &u, h).unwrap();
        assert!(v.norm_l2() == 0.0 || v.norm_l2() / u.norm_l2() < 1e-13);

        // Full-rank case: one-dimensional cluster in x1.
        let u3 = make_tensor_joint(grid, 3, 6.0, InnerKind::Cluster, 1.0).unwrap();
        for axis in [1usize, 2] {
            let v = apply_operator(&Symbol::xi(3, axis), &u3, h).unwrap();
            assert!(v.norm_l2() == 0.0 || v.norm_l2() / u3.norm_l2() < 1e-13);
        }
    }

    #[test]
    fn tensor_joint_is_order_h_quasimode_of_laplace_symbol() {
        let grid = TorusGrid::new(3, 256).unwrap();
        let lambda = 32.0;
        let u = make_tensor_joint(grid, 2, lambda, InnerKind::Cluster, 1.0).unwrap();
        let report =
            defect_report(&[Symbol::laplace_minus_one(3)], &u, 1.0 / lambda, 1).unwrap();
        let w_over_lambda = 1.0 / lambda;
        let bound = 2.0 * w_over_lambda + w_over_lambda * w_over_lambda;
        assert!(report.entry(&[1]).unwrap() <= bound + 1e-15);
    }

    #[test]
    fn localize_identity_when_cutoff_covers_spectrum() {
        let grid = TorusGrid::new(2, 64).unwrap();
        let u = make_cluster(grid, 5.0, 1.0, &[0.0, 0.0]).unwrap();
        let h = 0.2;
        // Core |xi_j - 0| <= 1.4 covers h |k_j| <= 1; support 2.8 within
        // headroom h N/4 = 3.2.
        let v = localize(&u, None, &[0.0, 0.0], 1.4, h).unwrap();
        let err = v.sub(&u).norm_l2() / u.norm_l2();
        assert!(err < 1e-10, "localization changed the function by {err}");
    }

    #[test]
    fn localize_annihilates_disjoint_spectrum() {
        let grid = TorusGrid::new(2, 64).unwrap();
        let u = make_plane_wave(grid, &[8, 0]).unwrap();
        let h = 0.125;
        // Spectrum at xi = (1, 0); cutoff core centered at (-1, 0) with
        // support ending at -1 + 0.8 < 1.
        let v = localize(&u, None, &[-1.0, 0.0], 0.4, h).unwrap();
        assert!(v.norm_l2() / u.norm_l2() < 1e-8);
    }

    #[test]
    fn localize_is_idempotent_on_plateau_core() {
        let grid = TorusGrid::new(2, 64).unwrap();
        let u = make_cluster(grid, 5.0, 1.0, &[0.0, 0.0]).unwrap();
        let h = 0.2;
        let once = localize(&u, None, &[0.0, 0.0], 1.4, h).unwrap();
        let twice = localize(&once, None, &[0.0, 0.0], 1.4, h).unwrap();
        let err = twice.sub(&once).norm_l2() / once.norm_l2();
        assert!(err < 1e-10);
    }

    #[test]
    fn localize_rejects_cutoff_beyond_headroom() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let u = make_plane_wave(grid, &[4, 0]).unwrap();
        // Headroom is h N/4 = 1; cutoff support reaches 1.0 + 2 * 0.6 > 1.
        assert!(localize(&u, None, &[1.0, 0.0], 0.6, 0.125).is_err());
    }

    #[test]
    fn localized_cluster_keeps_order_h_defect() {
        // Soft contract: localization grows the first-order defect by at
        // most a constant factor (10 in the acceptance gate).
        let p = Symbol::laplace_minus_one(2);
        for lambda in [32.0f64, 64.0] {
            let n = ((8.0 * lambda) as usize).next_power_of_two();
            let grid = TorusGrid::new(2, n).unwrap();
            let h = 1.0 / lambda;
            let u = make_cluster(grid, lambda, 1.0, &[0.0, 0.0]).unwrap();
            let mut center = vec![0.0; 2];
            center[0] = 1.0;
            let v = localize(&u, Some(1.0), &center, 0.4, h).unwrap();
            let base = defect_report(std::slice::from_ref(&p), &u, h, 1).unwrap();
            let loc = defect_report(std::slice::from_ref(&p), &v, h, 1).unwrap();
            let ratio = loc.entry(&[1]).unwrap() / base.entry(&[1]).unwrap();
            assert!(ratio < 10.0, "lambda {lambda}: ratio {ratio}");
        }
    }

    #[test]
    fn wave_packet_concentrates_at_origin() {
        let grid = TorusGrid::new(2, 128).unwrap();
        let u = make_wave_packet(grid, &[8, 5], 0.4).unwrap();
        let peak = u.values()[64 * 128 + 64].norm(); // x = 0
        // Boundary row x1 = -pi.
        let boundary_max = (0..128)
            .map(|j| u.values()[j].norm())
            .fold(0.0, f64::max);
        assert!(boundary_max < 1e-9 * peak);
    }

    #[test]
    fn spec_builder_covers_every_kind() {
        let grid2 = TorusGrid::new(2, 128).unwrap();
        for kind in [
            QuasimodeKind::PlaneWave,
            QuasimodeKind::Cluster,
            QuasimodeKind::Knapp,
            QuasimodeKind::Localized,
        ] {
            let spec = QuasimodeSpec::new(kind, 16.0);
            let u = spec.build(grid2).unwrap();
            assert!(u.norm_l2() > 0.0, "{kind:?} built an empty function");
        }
        let grid3 = TorusGrid::new(3, 64).unwrap();
        let mut spec = QuasimodeSpec::new(QuasimodeKind::TensorJoint, 8.0);
        spec.rank = 2;
        let u = spec.build(grid3).unwrap();
        assert!(u.norm_l2() > 0.0);
    }

    #[test]
    fn weak_perturbation_is_not_a_strong_quasimode() {
        // v = u + h f for an exact eigenfunction u and a concentrated bump f
        // is an order-h quasimode, but repeated application stops improving:
        // the second-order defect stays comparable to the first instead of
        // picking up another factor of h. Clusters do pick it up.
        let grid = TorusGrid::new(2, 64).unwrap();
        let p = Symbol::laplace_minus_one(2);
        let h = 0.125;
        let u = make_plane_wave(grid, &[8, 0]).unwrap();
        let f = make_wave_packet(grid, &[3, 2], 0.5).unwrap();
        let mut v = u.clone();
        let scale = h / f.norm_l2();
        v.add_scaled(&f, crate::Complex64::new(scale, 0.0));

        let report = defect_report(std::slice::from_ref(&p), &v, h, 2).unwrap();
        let d1 = report.entry(&[1]).unwrap();
        let d2 = report.entry(&[2]).unwrap();
        assert!(d1 < 4.0 * h, "first-order defect should be O(h), got {d1}");
        assert!(
            d2 > 0.25 * d1,
            "perturbation defect must not gain a factor h: d1 = {d1}, d2 = {d2}"
        );

        let cluster = make_cluster(grid, 8.0, 1.0, &[0.0, 0.0]).unwrap();
        let strong = defect_report(&[p], &cluster, h, 2).unwrap();
        let s1 = strong.entry(&[1]).unwrap();
        let s2 = strong.entry(&[2]).unwrap();
        assert!(
            s2 <= (2.0 * h + h * h) * s1,
            "cluster defect must improve multiplicatively: s1 = {s1}, s2 = {s2}"
        );
    }

    #[test]
    fn joint_frequency_support_concentrates_in_h_balls() {
        // A joint quasimode of (|xi|^2 - 1, xi2) in dimension 2 carries its
        // frequency support within O(h) of (+-1, 0).
        let grid = TorusGrid::new(2, 256).unwrap();
        let lambda = 32.0;
        let h = 1.0 / lambda;
        let u = make_tensor_joint(grid, 2, lambda, InnerKind::Cluster, 1.0).unwrap();
        let f = semiclassical_fourier(&u, h).unwrap();
        let max_amp = f.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut worst_distance: f64 = 0.0;
        f.for_each_lattice(|k, c| {
            if c.norm() > 1e-10 * max_amp {
                let xi1 = h * k[0] as f64;
                let xi2 = h * k[1] as f64;
                let to_plus = ((xi1 - 1.0).powi(2) + xi2 * xi2).sqrt();
                let to_minus = ((xi1 + 1.0).powi(2) + xi2 * xi2).sqrt();
                worst_distance = worst_distance.max(to_plus.min(to_minus));
            }
        });
        assert!(
            worst_distance <= 3.0 * h,
            "support strays {worst_distance} from the joint characteristic points"
        );
    }

    #[test]
    fn fourier_mass_of_cluster_sits_on_annulus() {
        let grid = TorusGrid::new(2, 64).unwrap();
        let u = make_cluster(grid, 5.0, 1.0, &[0.0, 0.0]).unwrap();
        let f = semiclassical_fourier(&u, 0.2).unwrap();
        let back = inverse_semiclassical_fourier(&f);
        assert!(back.sub(&u).norm_l2() / u.norm_l2() < 1e-12);
        let mut on_annulus = 0.0;
        let mut total = 0.0;
        f.for_each_lattice(|k, c| {
            let n2: i64 = k.iter().map(|kj| kj * kj).sum();
            total += c.norm_sqr();
            if (16..=25).contains(&n2) {
                on_annulus += c.norm_sqr();
            }
        });
        assert!(on_annulus / total > 1.0 - 1e-12);
    }
}
