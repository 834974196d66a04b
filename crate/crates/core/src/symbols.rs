//! Sparse polynomial symbols `p(x, xi)` on phase space.
//!
//! Symbols are real polynomials stored as `(coefficient, x-exponents,
//! xi-exponents)` terms. All arithmetic (addition, multiplication,
//! differentiation, linear changes of the `xi` coordinates, substitution) is
//! exact polynomial manipulation; the only rounding is the usual f64
//! coefficient arithmetic. Terms whose coefficient falls below `1e-14` after
//! an operation are dropped so that term sets stay canonical and comparable.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::mathfn;

mod parse;

pub use parse::parse_symbol;

/// Coefficients smaller than this are dropped after arithmetic.
pub const COEFF_DROP: f64 = 1e-14;

/// Exponent vector, one entry per ambient dimension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zeros(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn mul(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// `prod_i v_i^{e_i}` by repeated multiplication.
    fn eval(&self, v: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(v)
            .filter(|(e, _)| **e > 0)
            .map(|(e, x)| mathfn::powi(*x, *e))
            .product()
    }
}

/// Point `(x, xi)` in phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>) -> Self {
        assert_eq!(x.len(), xi.len(), "x and xi must share a dimension");
        PhasePoint { x, xi }
    }

    /// Point with `x = 0` in the fibre over the origin.
    pub fn at_xi(xi: Vec<f64>) -> Self {
        let n = xi.len();
        PhasePoint { x: vec![0.0; n], xi }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Sparse real polynomial in `(x, xi)`.
///
/// Keys are `(x exponents, xi exponents)`; no two terms share a key.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    dim: usize,
    terms: BTreeMap<(MultiIndex, MultiIndex), f64>,
}

impl Symbol {
    pub fn zero(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Symbol {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut s = Symbol::zero(dim);
        s.add_term(c, MultiIndex::zeros(dim), MultiIndex::zeros(dim));
        s
    }

    /// The coordinate symbol `xi_i` (0-based index).
    pub fn xi(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        let mut s = Symbol::zero(dim);
        s.add_term(1.0, MultiIndex::zeros(dim), MultiIndex::unit(dim, i));
        s
    }

    /// The coordinate symbol `x_i` (0-based index).
    pub fn x(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        let mut s = Symbol::zero(dim);
        s.add_term(1.0, MultiIndex::unit(dim, i), MultiIndex::zeros(dim));
        s
    }

    /// `|xi|^2 = xi_1^2 + ... + xi_n^2`.
    pub fn xi_norm_sq(dim: usize) -> Self {
        let mut s = Symbol::zero(dim);
        for i in 0..dim {
            let mut e = vec![0; dim];
            e[i] = 2;
            s.add_term(1.0, MultiIndex::zeros(dim), MultiIndex(e));
        }
        s
    }

    /// Symbol of `-h^2 Delta - 1`, i.e. `|xi|^2 - 1`.
    pub fn laplace_minus_one(dim: usize) -> Self {
        let mut s = Symbol::xi_norm_sq(dim);
        s.add_term(-1.0, MultiIndex::zeros(dim), MultiIndex::zeros(dim));
        s
    }

    pub fn monomial(dim: usize, coeff: f64, x_exp: MultiIndex, xi_exp: MultiIndex) -> Self {
        assert_eq!(x_exp.len(), dim);
        assert_eq!(xi_exp.len(), dim);
        let mut s = Symbol::zero(dim);
        s.add_term(coeff, x_exp, xi_exp);
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Iterate terms as `(coefficient, x exponents, xi exponents)`.
    pub fn terms(&self) -> impl Iterator<Item = (f64, &MultiIndex, &MultiIndex)> {
        self.terms.iter().map(|((xe, ke), c)| (*c, xe, ke))
    }

    /// Largest coefficient magnitude; the scale used by relative tolerances.
    pub fn coeff_scale(&self) -> f64 {
        self.terms
            .values()
            .map(|c| mathfn::abs(*c))
            .fold(0.0, f64::max)
    }

    pub fn add_term(&mut self, coeff: f64, x_exp: MultiIndex, xi_exp: MultiIndex) {
        assert_eq!(x_exp.len(), self.dim);
        assert_eq!(xi_exp.len(), self.dim);
        let key = (x_exp, xi_exp);
        let entry = self.terms.entry(key.clone()).or_insert(0.0);
        *entry += coeff;
        if mathfn::abs(*entry) < COEFF_DROP {
            self.terms.remove(&key);
        }
    }

    pub fn scale(&self, c: f64) -> Symbol {
        let mut out = Symbol::zero(self.dim);
        for ((xe, ke), v) in &self.terms {
            out.add_term(c * v, xe.clone(), ke.clone());
        }
        out
    }

    pub fn add(&self, other: &Symbol) -> Symbol {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for ((xe, ke), v) in &other.terms {
            out.add_term(*v, xe.clone(), ke.clone());
        }
        out
    }

    pub fn sub(&self, other: &Symbol) -> Symbol {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Symbol) -> Symbol {
        assert_eq!(self.dim, other.dim);
        let mut out = Symbol::zero(self.dim);
        for ((xa, ka), ca) in &self.terms {
            for ((xb, kb), cb) in &other.terms {
                out.add_term(ca * cb, xa.mul(xb), ka.mul(kb));
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Symbol {
        let mut out = Symbol::constant(self.dim, 1.0);
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// Exact value `sum c x^beta xi^alpha` at a phase point.
    pub fn eval(&self, pt: &PhasePoint) -> Result<f64> {
        if pt.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: pt.dim(),
            });
        }
        Ok(self
            .terms
            .iter()
            .map(|((xe, ke), c)| c * xe.eval(&pt.x) * ke.eval(&pt.xi))
            .sum())
    }

    /// Term-wise partial derivative in `xi_i` (0-based).
    pub fn deriv_xi(&self, i: usize) -> Symbol {
        assert!(i < self.dim);
        let mut out = Symbol::zero(self.dim);
        for ((xe, ke), c) in &self.terms {
            let e = ke.0[i];
            if e == 0 {
                continue;
            }
            let mut ke2 = ke.clone();
            ke2.0[i] = e - 1;
            out.add_term(c * e as f64, xe.clone(), ke2);
        }
        out
    }

    /// Term-wise partial derivative in `x_i` (0-based).
    pub fn deriv_x(&self, i: usize) -> Symbol {
        assert!(i < self.dim);
        let mut out = Symbol::zero(self.dim);
        for ((xe, ke), c) in &self.terms {
            let e = xe.0[i];
            if e == 0 {
                continue;
            }
            let mut xe2 = xe.clone();
            xe2.0[i] = e - 1;
            out.add_term(c * e as f64, xe2, ke.clone());
        }
        out
    }

    /// Gradient in the fibre variable at a phase point.
    pub fn grad_xi(&self, pt: &PhasePoint) -> Result<Vec<f64>> {
        (0..self.dim)
            .map(|i| self.deriv_xi(i).eval(pt))
            .collect()
    }

    /// Symmetric matrix of second `xi` derivatives at a phase point.
    pub fn hess_xi(&self, pt: &PhasePoint) -> Result<Matrix> {
        let mut h = Matrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            let di = self.deriv_xi(i);
            for j in i..self.dim {
                let v = di.deriv_xi(j).eval(pt)?;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }

    pub fn degree_xi(&self) -> u32 {
        self.terms
            .keys()
            .map(|(_, ke)| ke.total_degree())
            .max()
            .unwrap_or(0)
    }

    pub fn degree_x(&self) -> u32 {
        self.terms
            .keys()
            .map(|(xe, _)| xe.total_degree())
            .max()
            .unwrap_or(0)
    }

    /// Highest power of `xi_i` appearing in any term.
    pub fn degree_xi_in(&self, i: usize) -> u32 {
        self.terms.keys().map(|(_, ke)| ke.0[i]).max().unwrap_or(0)
    }

    pub fn depends_on_x(&self) -> bool {
        self.terms.keys().any(|(xe, _)| xe.total_degree() > 0)
    }

    pub fn depends_on_xi(&self, i: usize) -> bool {
        self.terms.keys().any(|(_, ke)| ke.0[i] > 0)
    }

    /// Pull back by the linear change `xi -> Q xi`: returns `q` with
    /// `q(x, xi) = self(x, Q xi)` as an exactly expanded polynomial.
    pub fn linear_change_xi(&self, q: &Matrix) -> Result<Symbol> {
        assert_eq!(q.rows, self.dim);
        assert_eq!(q.cols, self.dim);
        let det = q.determinant();
        if mathfn::abs(det) < 1e-12 {
            return Err(Error::SingularMatrix { det });
        }
        // Row i of Q gives the substitution xi_i -> sum_j Q[i][j] xi_j.
        let images: Vec<Symbol> = (0..self.dim)
            .map(|i| {
                let mut s = Symbol::zero(self.dim);
                for j in 0..self.dim {
                    if q[(i, j)] != 0.0 {
                        s.add_term(q[(i, j)], MultiIndex::zeros(self.dim), MultiIndex::unit(self.dim, j));
                    }
                }
                s
            })
            .collect();
        let mut out = Symbol::zero(self.dim);
        for ((xe, ke), c) in &self.terms {
            let mut factor = Symbol::constant(self.dim, *c);
            for (i, e) in ke.0.iter().enumerate() {
                if *e > 0 {
                    factor = factor.mul(&images[i].pow(*e));
                }
            }
            // Reattach the untouched x part.
            let mut with_x = Symbol::zero(self.dim);
            for ((fx, fk), fc) in &factor.terms {
                with_x.add_term(*fc, fx.mul(xe), fk.clone());
            }
            out = out.add(&with_x);
        }
        Ok(out)
    }

    /// Substitute `xi_i := replacement` exactly. The replacement must not
    /// depend on `xi_i` itself.
    pub fn substitute_xi(&self, i: usize, replacement: &Symbol) -> Symbol {
        assert!(i < self.dim);
        assert_eq!(replacement.dim, self.dim);
        assert!(
            !replacement.depends_on_xi(i),
            "replacement must not depend on the substituted variable"
        );
        let mut out = Symbol::zero(self.dim);
        for ((xe, ke), c) in &self.terms {
            let e = ke.0[i];
            let mut ke2 = ke.clone();
            ke2.0[i] = 0;
            let stem = Symbol::monomial(self.dim, *c, xe.clone(), ke2);
            let term = if e == 0 { stem } else { stem.mul(&replacement.pow(e)) };
            out = out.add(&term);
        }
        out
    }

    /// Render in the text format accepted by [`parse_symbol`].
    pub fn to_text(&self) -> String {
        if self.terms.is_empty() {
            return String::from("0");
        }
        let mut out = String::new();
        for (idx, ((xe, ke), c)) in self.terms.iter().enumerate() {
            let mag = mathfn::abs(*c);
            if idx == 0 {
                if *c < 0.0 {
                    out.push('-');
                }
            } else if *c < 0.0 {
                out.push_str(" - ");
            } else {
                out.push_str(" + ");
            }
            let mut factors: Vec<String> = Vec::new();
            let monomial_present =
                xe.total_degree() > 0 || ke.total_degree() > 0;
            if !monomial_present || (mag - 1.0).abs() > 1e-13 {
                factors.push(format_coefficient(mag));
            }
            for (i, e) in xe.0.iter().enumerate() {
                if *e == 1 {
                    factors.push(format!("x{}", i + 1));
                } else if *e > 1 {
                    factors.push(format!("x{}^{}", i + 1, e));
                }
            }
            for (i, e) in ke.0.iter().enumerate() {
                if *e == 1 {
                    factors.push(format!("xi{}", i + 1));
                } else if *e > 1 {
                    factors.push(format!("xi{}^{}", i + 1, e));
                }
            }
            out.push_str(&factors.join("*"));
        }
        out
    }
}

fn format_coefficient(c: f64) -> String {
    if c == mathfn::floor(c) && mathfn::abs(c) < 1e15 {
        format!("{}", c as i64)
    } else {
        format!("{c}")
    }
}

impl core::fmt::Display for Symbol {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.to_text())
    }
}

impl<'a> core::ops::Add for &'a Symbol {
    type Output = Symbol;
    fn add(self, rhs: &'a Symbol) -> Symbol {
        Symbol::add(self, rhs)
    }
}

impl<'a> core::ops::Sub for &'a Symbol {
    type Output = Symbol;
    fn sub(self, rhs: &'a Symbol) -> Symbol {
        Symbol::sub(self, rhs)
    }
}

impl<'a> core::ops::Mul for &'a Symbol {
    type Output = Symbol;
    fn mul(self, rhs: &'a Symbol) -> Symbol {
        Symbol::mul(self, rhs)
    }
}

impl core::ops::Neg for &Symbol {
    type Output = Symbol;
    fn neg(self) -> Symbol {
        self.scale(-1.0)
    }
}

/// Thresholds for the three admissibility conditions. All are relative: the
/// gradient test scales with the symbol's coefficient magnitude, the
/// independence test uses unit normals, and the curvature test applies to the
/// gradient-normalized second fundamental form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub grad_tol: f64,
    pub indep_tol: f64,
    pub curv_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            grad_tol: 1e-8,
            indep_tol: 1e-8,
            curv_tol: 1e-8,
        }
    }
}

/// Outcome of the three admissibility checks at a phase point.
///
/// `passes[0]`: every characteristic set is a graph near the point (nonzero
/// fibre gradient). `passes[1]`: the unit normals are linearly independent
/// (smallest singular value above tolerance). `passes[2]`: the first symbol's
/// level set has a definite second fundamental form; definiteness of either
/// sign is accepted and the sign reported.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub gradient_norms: Vec<f64>,
    pub normal_matrix_min_singular_value: f64,
    pub second_fundamental_form_eigenvalues: Vec<f64>,
    pub sign_convention: i8,
    pub passes: [bool; 3],
    /// Conditions that could actually be computed; a degenerate gradient
    /// leaves the dependent conditions unevaluated.
    pub evaluated: [bool; 3],
    pub tolerances: Tolerances,
}

impl AdmissibilityReport {
    pub fn all_pass(&self) -> bool {
        self.passes.iter().all(|p| *p) && self.evaluated.iter().all(|e| *e)
    }
}

/// Run the three admissibility checks for `syms = [p_1, ..., p_r]` at `pt`.
pub fn check_admissibility(
    syms: &[Symbol],
    pt: &PhasePoint,
    tols: Tolerances,
) -> Result<AdmissibilityReport> {
    let r = syms.len();
    if r == 0 {
        return Err(Error::InvalidParameter(String::from(
            "need at least one symbol",
        )));
    }
    let n = syms[0].dim();
    if r > n {
        return Err(Error::RankOutOfRange { r, n });
    }
    for s in syms {
        if s.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.dim(),
            });
        }
    }
    if pt.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: pt.dim(),
        });
    }

    let grads: Vec<Vec<f64>> = syms
        .iter()
        .map(|s| s.grad_xi(pt))
        .collect::<Result<_>>()?;
    let gradient_norms: Vec<f64> = grads.iter().map(|g| linalg::norm(g)).collect();
    let degenerate: Vec<bool> = syms
        .iter()
        .zip(&gradient_norms)
        .map(|(s, gn)| {
            let scale = s.coeff_scale().max(f64::MIN_POSITIVE);
            *gn <= tols.grad_tol * scale
        })
        .collect();
    let condition1 = degenerate.iter().all(|d| !d);

    // Condition 2: smallest singular value of the matrix of unit normals.
    let (min_sv, cond2_evaluated) = if condition1 {
        let unit_rows: Vec<Vec<f64>> = grads
            .iter()
            .zip(&gradient_norms)
            .map(|(g, gn)| g.iter().map(|v| v / gn).collect())
            .collect();
        let normal_matrix = Matrix::from_rows(&unit_rows);
        (linalg::min_singular_value(&normal_matrix), true)
    } else {
        (0.0, false)
    };
    let condition2 = cond2_evaluated && min_sv > tols.indep_tol;

    // Condition 3: second fundamental form of {p_1 = 0}, computed as
    // T^T (Hess_xi p_1) T / |grad_xi p_1| on the tangent space.
    let p1_ok = !degenerate[0];
    let (sff_eigenvalues, sign, cond3, cond3_evaluated) = if p1_ok && n >= 2 {
        let hess = syms[0].hess_xi(pt)?;
        let grad_row = Matrix::from_rows(&[grads[0].clone()]);
        let (q, _l) = linalg::lq_normalize(&grad_row);
        // Columns 1..n of q span the tangent space of the level set.
        let mut tangent = Matrix::zeros(n, n - 1);
        for i in 0..n {
            for j in 1..n {
                tangent[(i, j - 1)] = q[(i, j)];
            }
        }
        let sff = tangent
            .transpose()
            .matmul(&hess)
            .matmul(&tangent);
        let mut eig = linalg::symmetric_eigenvalues(&sff);
        for v in eig.iter_mut() {
            *v /= gradient_norms[0];
        }
        let all_pos = eig.iter().all(|v| *v > tols.curv_tol);
        let all_neg = eig.iter().all(|v| *v < -tols.curv_tol);
        if all_neg {
            let mut flipped: Vec<f64> = eig.iter().map(|v| -v).collect();
            flipped.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (flipped, -1, true, true)
        } else {
            (eig, 1, all_pos, true)
        }
    } else if p1_ok && n == 1 {
        // No tangent directions: the curvature condition is vacuous.
        (Vec::new(), 1, true, true)
    } else {
        (Vec::new(), 1, false, false)
    };

    Ok(AdmissibilityReport {
        gradient_norms,
        normal_matrix_min_singular_value: min_sv,
        second_fundamental_form_eigenvalues: sff_eigenvalues,
        sign_convention: sign,
        passes: [condition1, condition2, cond3],
        evaluated: [true, cond2_evaluated, cond3_evaluated],
        tolerances: tols,
    })
}
