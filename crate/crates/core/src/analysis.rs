//! Growth exponents and L^p measurement.
//!
//! `delta_exponent` is the piecewise-linear exponent governing the
//! `L^2 -> L^p` growth of joint quasimodes of `r` operators in dimension `n`;
//! `sogge_delta` is the classical `r = 1` eigenfunction exponent, implemented
//! independently so the identity between the two is a genuine cross-check.
//! `run_sweep` measures the growth of a quasimode family over a ladder of
//! frequencies and fits the rate by least squares.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mathfn;
use crate::quantization::{GridFunction, TorusGrid};
use crate::quasimodes::{defect_report, QuasimodeKind, QuasimodeSpec};
use crate::symbols::Symbol;

/// Query for the joint growth exponent `delta(n, p, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentQuery {
    pub n: usize,
    /// Lebesgue exponent in `[2, inf]`; use `f64::INFINITY` for the sup norm.
    pub p: f64,
    pub r: usize,
}

impl ExponentQuery {
    pub fn new(n: usize, p: f64, r: usize) -> Self {
        ExponentQuery { n, p, r }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(String::from("n must be >= 2")));
        }
        if self.p.is_nan() || self.p < 2.0 {
            return Err(Error::InvalidParameter(alloc::format!(
                "p must be >= 2, got {}",
                self.p
            )));
        }
        if self.r < 1 || self.r > self.n {
            return Err(Error::RankOutOfRange {
                r: self.r,
                n: self.n,
            });
        }
        Ok(())
    }
}

/// Breakpoint `2(n - r + 2)/(n - r)` between the two branches.
pub fn critical_p(n: usize, r: usize) -> Result<f64> {
    if r >= n {
        return Err(Error::RankOutOfRange { r, n });
    }
    let d = (n - r) as f64;
    Ok(2.0 * (d + 2.0) / d)
}

/// Joint growth exponent `delta(n, p, r)`:
/// `(n-r)/2 - (n-r+1)/p` above the breakpoint, `(n-r)/4 - (n-r)/(2p)` below.
/// When `r = n` the breakpoint degenerates to infinity and the low branch
/// gives 0 for every p.
pub fn delta_exponent(query: &ExponentQuery) -> Result<f64> {
    query.validate()?;
    let d = (query.n - query.r) as f64;
    let p = query.p;
    if d == 0.0 {
        return Ok(0.0);
    }
    let breakpoint = 2.0 * (d + 2.0) / d;
    Ok(if p >= breakpoint {
        let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
        d / 2.0 - (d + 1.0) * inv_p
    } else {
        d / 4.0 - d / (2.0 * p)
    })
}

/// Classical eigenfunction growth exponent `delta(n, p)`:
/// `(n-1)/2 - n/p` for `p >= 2(n+1)/(n-1)`, `(n-1)/4 - (n-1)/(2p)` below.
pub fn sogge_delta(n: usize, p: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParameter(String::from("n must be >= 2")));
    }
    if p.is_nan() || p < 2.0 {
        return Err(Error::InvalidParameter(alloc::format!(
            "p must be >= 2, got {p}"
        )));
    }
    let nf = n as f64;
    let breakpoint = 2.0 * (nf + 1.0) / (nf - 1.0);
    Ok(if p >= breakpoint {
        let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
        (nf - 1.0) / 2.0 - nf * inv_p
    } else {
        (nf - 1.0) / 4.0 - (nf - 1.0) / (2.0 * p)
    })
}

/// Riemann-sum `L^p` norm on the torus; `p = inf` returns the max modulus.
pub fn lp_norm(u: &GridFunction, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParameter(alloc::format!(
            "p must be >= 1, got {p}"
        )));
    }
    if p.is_infinite() {
        return Ok(u.values().iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    let cell = u.grid().cell_volume();
    let sum: f64 = if p == mathfn::floor(p) && p <= 64.0 {
        let ip = p as u32;
        if ip.is_multiple_of(2) {
            u.values()
                .iter()
                .map(|v| mathfn::powi(v.norm_sqr(), ip / 2))
                .sum()
        } else {
            u.values()
                .iter()
                .map(|v| {
                    let n2 = v.norm_sqr();
                    mathfn::sqrt(n2) * mathfn::powi(n2, (ip - 1) / 2)
                })
                .sum()
        }
    } else {
        u.values()
            .iter()
            .map(|v| mathfn::powf(v.norm_sqr(), p / 2.0))
            .sum()
    };
    Ok(mathfn::powf(sum * cell, 1.0 / p))
}

/// Ordinary least squares fit of `y` against `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub rms: f64,
}

/// Least-squares line through `(x, y)` points; `rms` is the root mean square
/// residual.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(String::from(
            "need at least two points to fit",
        )));
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|(x, _)| x).sum();
    let sy: f64 = points.iter().map(|(_, y)| y).sum();
    let mean_x = sx / n;
    let mean_y = sy / n;
    let sxx: f64 = points.iter().map(|(x, _)| (x - mean_x) * (x - mean_x)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit { x: mean_x });
    }
    let sxy: f64 = points.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|(x, y)| {
            let resid = y - (slope * x + intercept);
            resid * resid
        })
        .sum();
    Ok(FitResult {
        slope,
        intercept,
        rms: mathfn::sqrt(ss_res / n),
    })
}

/// Grid sizing rule for sweeps: `N` is the smallest power of two at least
/// `headroom * lambda` (and at least 4). The default headroom of 8 keeps the
/// occupied band below Nyquist/4 with room for three operator powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPolicy {
    pub headroom: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy { headroom: 8.0 }
    }
}

impl GridPolicy {
    pub fn points_per_axis(&self, lambda: f64) -> Result<usize> {
        if self.headroom < 4.0 {
            return Err(Error::InvalidParameter(String::from(
                "headroom below 4 breaks the frequency-window invariant",
            )));
        }
        let raw = mathfn::ceil(self.headroom * lambda) as usize;
        Ok(raw.next_power_of_two().max(4))
    }
}

/// One frequency rung of a sweep: norms for every requested p, plus the
/// first-order defect of each supplied symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub h: f64,
    pub l2: f64,
    /// `L^p` norms aligned with the request's p list.
    pub lp: Vec<f64>,
    /// Defect `||p_j(x,hD) u|| / ||u||` per supplied symbol.
    pub defects: Vec<f64>,
}

/// Fitted growth rate of one p against the expected exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub p: f64,
    pub rows: Vec<(f64, f64, f64, f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub rms: f64,
    pub expected_exponent: f64,
    pub tolerance: f64,
    pub two_sided: bool,
    pub pass: bool,
    pub margin: f64,
}

/// Everything needed to run a growth sweep for one quasimode family.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRequest {
    pub spec: QuasimodeSpec,
    pub dim: usize,
    pub ps: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub policy: GridPolicy,
    pub tolerance: f64,
    /// Saturating families are held to `|slope - delta| <= tolerance`;
    /// otherwise only the upper bound `slope <= delta + tolerance` applies.
    pub two_sided: bool,
}

impl SweepRequest {
    /// Effective number of joint operators for the expected exponent.
    pub fn rank(&self) -> usize {
        match self.spec.kind {
            QuasimodeKind::TensorJoint => self.spec.rank,
            _ => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lambdas.len() < 4 {
            return Err(Error::InvalidParameter(String::from(
                "a sweep needs at least 4 lambda values",
            )));
        }
        if !self.lambdas.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(String::from(
                "lambda values must be strictly increasing",
            )));
        }
        if self.ps.is_empty() {
            return Err(Error::InvalidParameter(String::from(
                "no p values requested",
            )));
        }
        Ok(())
    }
}

/// Build the family member at one `lambda` and measure the requested norms.
pub fn sweep_row(req: &SweepRequest, lambda: f64, syms: &[Symbol]) -> Result<SweepRow> {
    let wrap = |e: Error| Error::Sweep {
        lambda,
        source: Box::new(e),
    };
    let n_axis = req.policy.points_per_axis(lambda).map_err(wrap)?;
    let grid = TorusGrid::new(req.dim, n_axis).map_err(wrap)?;
    let mut spec = req.spec.clone();
    spec.lambda = lambda;
    let u = spec.build(grid).map_err(wrap)?;
    let h = spec.h();
    let l2 = lp_norm(&u, 2.0).map_err(wrap)?;
    let mut lp = Vec::with_capacity(req.ps.len());
    for p in &req.ps {
        lp.push(lp_norm(&u, *p).map_err(wrap)?);
    }
    let defects = if syms.is_empty() {
        Vec::new()
    } else {
        let report = defect_report(syms, &u, h, 1).map_err(wrap)?;
        (0..syms.len())
            .map(|j| {
                let mut index = vec![0u32; syms.len()];
                index[j] = 1;
                report.entry(&index).unwrap_or(f64::NAN)
            })
            .collect()
    };
    Ok(SweepRow {
        lambda,
        h,
        l2,
        lp,
        defects,
    })
}

/// Fit the measured rows into one [`SweepResult`] per requested p.
pub fn assemble_sweep(req: &SweepRequest, rows: &[SweepRow]) -> Result<Vec<SweepResult>> {
    let r = req.rank();
    let mut results = Vec::with_capacity(req.ps.len());
    for (pi, p) in req.ps.iter().enumerate() {
        let expected = delta_exponent(&ExponentQuery::new(req.dim, *p, r))?;
        let mut table = Vec::with_capacity(rows.len());
        let mut points = Vec::with_capacity(rows.len());
        for row in rows {
            let ratio = row.lp[pi] / row.l2;
            table.push((row.lambda, row.h, row.lp[pi], row.l2, ratio));
            points.push((mathfn::ln(row.lambda), mathfn::ln(ratio)));
        }
        let fit = fit_exponent(&points)?;
        let (pass, margin) = if req.two_sided {
            let dev = mathfn::abs(fit.slope - expected);
            (dev <= req.tolerance, req.tolerance - dev)
        } else {
            let excess = fit.slope - expected;
            (excess <= req.tolerance, req.tolerance - excess)
        };
        results.push(SweepResult {
            p: *p,
            rows: table,
            slope: fit.slope,
            intercept: fit.intercept,
            rms: fit.rms,
            expected_exponent: expected,
            tolerance: req.tolerance,
            two_sided: req.two_sided,
            pass,
            margin,
        });
    }
    Ok(results)
}

/// Run a whole sweep: rows in increasing `lambda`, then one fit per p.
pub fn run_sweep(req: &SweepRequest, syms: &[Symbol]) -> Result<Vec<SweepResult>> {
    req.validate()?;
    let mut rows = Vec::with_capacity(req.lambdas.len());
    for lambda in &req.lambdas {
        rows.push(sweep_row(req, *lambda, syms)?);
    }
    assemble_sweep(req, &rows)
}
