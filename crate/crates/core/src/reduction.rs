//! Inductive factorization of a joint symbol family.
//!
//! Given admissible symbols `p_1, ..., p_r` at a base point, an orthogonal
//! change of the fibre coordinates makes the gradient matrix
//! lower-trapezoidal (`d p_i / d xi_j = 0` for `j > i`, nonzero diagonal).
//! Each characteristic set `{p_i = 0}` is then solved as a graph
//! `xi_i = a_i(x, xi~)` and substituted into the remaining symbols, removing
//! `xi_r, ..., xi_2` in turn. The last symbol yields the graph
//! `xi_1 = b(x, eta)` whose curvature in the surviving variables certifies
//! the geometry. Affine graphs compose exactly as polynomials; square-root
//! type graphs stay as Newton-backed evaluators with implicit derivatives.

use alloc::format;
use alloc::sync::Arc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::mathfn;
use crate::symbols::{check_admissibility, PhasePoint, Symbol, Tolerances};

/// Default half-width of a graph's validity box.
pub const DEFAULT_BOX_HALF_WIDTH: f64 = 0.1;
/// Residual accepted from a converged graph solve.
pub const GRAPH_RESIDUAL_TOL: f64 = 1e-10;
const NEWTON_STEP_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;
const MAX_BOX_SHRINKS: usize = 5;

/// Orthogonal normalization of the fibre coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationPlan {
    /// Orthogonal matrix; transformed symbols are `p(x, Q xi)`.
    pub q: Matrix,
    /// Base point in the rotated coordinates (`xi0' = Q^T xi0`).
    pub base: PhasePoint,
    /// Rotated gradient rows `L = G Q`, lower-trapezoidal with positive
    /// diagonal.
    pub normal_matrix: Matrix,
}

/// A symbol after zero or more graph substitutions.
#[derive(Debug, Clone)]
pub enum ReducedSymbol {
    Poly(Symbol),
    Substituted {
        base: Arc<ReducedSymbol>,
        graph: Arc<GraphFunction>,
    },
}

impl ReducedSymbol {
    pub fn dim(&self) -> usize {
        match self {
            ReducedSymbol::Poly(s) => s.dim(),
            ReducedSymbol::Substituted { base, .. } => base.dim(),
        }
    }

    /// The exact polynomial form, when every substitution so far was affine.
    pub fn as_poly(&self) -> Option<&Symbol> {
        match self {
            ReducedSymbol::Poly(s) => Some(s),
            ReducedSymbol::Substituted { .. } => None,
        }
    }

    /// Evaluate at `(x, xi)`; entries of `xi` at substituted indices are
    /// ignored (the graphs fill them).
    pub fn value(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        match self {
            ReducedSymbol::Poly(s) => s.eval(&PhasePoint::new(x.to_vec(), xi.to_vec())),
            ReducedSymbol::Substituted { base, graph } => {
                let mut lifted = xi.to_vec();
                lifted[graph.index] = graph.solve(x, xi)?;
                base.value(x, &lifted)
            }
        }
    }

    /// First fibre derivative `d/d xi_j` at `(x, xi)` by the chain rule.
    pub fn deriv_xi(&self, x: &[f64], xi: &[f64], j: usize) -> Result<f64> {
        match self {
            ReducedSymbol::Poly(s) => {
                s.deriv_xi(j).eval(&PhasePoint::new(x.to_vec(), xi.to_vec()))
            }
            ReducedSymbol::Substituted { base, graph } => {
                let nu = graph.index;
                assert_ne!(j, nu, "derivative in a substituted variable");
                let mut lifted = xi.to_vec();
                lifted[nu] = graph.solve(x, xi)?;
                let p_j = base.deriv_xi(x, &lifted, j)?;
                let p_nu = base.deriv_xi(x, &lifted, nu)?;
                let a_j = graph.derivative_xi_at(x, &lifted, j)?;
                Ok(p_j + p_nu * a_j)
            }
        }
    }

    /// Second fibre derivative `d^2/d xi_j d xi_l` at `(x, xi)`.
    pub fn second_deriv_xi(&self, x: &[f64], xi: &[f64], j: usize, l: usize) -> Result<f64> {
        match self {
            ReducedSymbol::Poly(s) => s
                .deriv_xi(j)
                .deriv_xi(l)
                .eval(&PhasePoint::new(x.to_vec(), xi.to_vec())),
            ReducedSymbol::Substituted { base, graph } => {
                let nu = graph.index;
                assert!(j != nu && l != nu, "derivative in a substituted variable");
                let mut lifted = xi.to_vec();
                lifted[nu] = graph.solve(x, xi)?;
                let a_j = graph.derivative_xi_at(x, &lifted, j)?;
                let a_l = graph.derivative_xi_at(x, &lifted, l)?;
                let a_jl = graph.second_derivative_xi_at(x, &lifted, j, l)?;
                let p_jl = base.second_deriv_xi(x, &lifted, j, l)?;
                let p_jnu = base.second_deriv_xi(x, &lifted, j, nu)?;
                let p_lnu = base.second_deriv_xi(x, &lifted, l, nu)?;
                let p_nunu = base.second_deriv_xi(x, &lifted, nu, nu)?;
                let p_nu = base.deriv_xi(x, &lifted, nu)?;
                Ok(p_jl
                    + p_jnu * a_l
                    + p_lnu * a_j
                    + p_nunu * a_j * a_l
                    + p_nu * a_jl)
            }
        }
    }
}

/// Implicit-function graph `xi_index = a(x, xi~)` for the zero set of a
/// (possibly already reduced) symbol.
#[derive(Debug, Clone)]
pub struct GraphFunction {
    target: Arc<ReducedSymbol>,
    index: usize,
    base: PhasePoint,
    box_half_width: f64,
    /// Fibre coordinates that are real inputs of the graph (not solved, not
    /// already substituted away); only these are box-checked.
    live_xi: Vec<bool>,
    /// Exact polynomial form `a(x, xi~)` when the target is affine in the
    /// solved variable with constant slope.
    closed_form: Option<Symbol>,
}

impl GraphFunction {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn base(&self) -> &PhasePoint {
        &self.base
    }

    pub fn box_half_width(&self) -> f64 {
        self.box_half_width
    }

    pub fn closed_form(&self) -> Option<&Symbol> {
        self.closed_form.as_ref()
    }

    fn check_box(&self, x: &[f64], xi: &[f64]) -> Result<()> {
        let hw = self.box_half_width;
        for (axis, (v, b)) in x.iter().zip(&self.base.x).enumerate() {
            let d = mathfn::abs(v - b);
            if d > hw + 1e-15 {
                return Err(Error::OutsideValidityBox {
                    coordinate: format!("x{}", axis + 1),
                    distance: d,
                    half_width: hw,
                });
            }
        }
        for (axis, (v, b)) in xi.iter().zip(&self.base.xi).enumerate() {
            if axis == self.index || !self.live_xi[axis] {
                continue;
            }
            let d = mathfn::abs(v - b);
            if d > hw + 1e-15 {
                return Err(Error::OutsideValidityBox {
                    coordinate: format!("xi{}", axis + 1),
                    distance: d,
                    half_width: hw,
                });
            }
        }
        Ok(())
    }

    /// Solve for the graph value at `(x, xi~)`; `xi[index]` is ignored.
    pub fn solve(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        self.check_box(x, xi)?;
        if let Some(cf) = &self.closed_form {
            return cf.eval(&PhasePoint::new(x.to_vec(), xi.to_vec()));
        }
        self.newton(x, xi, self.box_half_width)
    }

    fn newton(&self, x: &[f64], xi: &[f64], _hw: f64) -> Result<f64> {
        let mut point = xi.to_vec();
        let mut t = self.base.xi[self.index];
        let mut residual = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITER {
            point[self.index] = t;
            let g = self.target.value(x, &point)?;
            residual = mathfn::abs(g);
            let dg = self.target.deriv_xi(x, &point, self.index)?;
            if dg == 0.0 {
                break;
            }
            let step = g / dg;
            t -= step;
            if mathfn::abs(step) < NEWTON_STEP_TOL && residual < GRAPH_RESIDUAL_TOL {
                return Ok(t);
            }
        }
        // Converged steps may still satisfy the residual contract.
        point[self.index] = t;
        let g = self.target.value(x, &point)?;
        if mathfn::abs(g) < GRAPH_RESIDUAL_TOL {
            return Ok(t);
        }
        Err(Error::NewtonDiverged {
            index: self.index + 1,
            iterations: NEWTON_MAX_ITER,
            residual: residual.min(mathfn::abs(g)),
        })
    }

    /// `d a / d xi_j = -(d_j target)/(d_index target)` at a lifted point
    /// (whose `xi[index]` entry already solves the graph).
    fn derivative_xi_at(&self, x: &[f64], lifted: &[f64], j: usize) -> Result<f64> {
        let t_j = self.target.deriv_xi(x, lifted, j)?;
        let t_nu = self.target.deriv_xi(x, lifted, self.index)?;
        Ok(-t_j / t_nu)
    }

    fn second_derivative_xi_at(
        &self,
        x: &[f64],
        lifted: &[f64],
        j: usize,
        l: usize,
    ) -> Result<f64> {
        let nu = self.index;
        let a_j = self.derivative_xi_at(x, lifted, j)?;
        let a_l = self.derivative_xi_at(x, lifted, l)?;
        let t_jl = self.target.second_deriv_xi(x, lifted, j, l)?;
        let t_jnu = self.target.second_deriv_xi(x, lifted, j, nu)?;
        let t_lnu = self.target.second_deriv_xi(x, lifted, l, nu)?;
        let t_nunu = self.target.second_deriv_xi(x, lifted, nu, nu)?;
        let t_nu = self.target.deriv_xi(x, lifted, nu)?;
        Ok(-(t_jl + t_jnu * a_l + t_lnu * a_j + t_nunu * a_j * a_l) / t_nu)
    }

    /// Public derivative evaluator: `d a / d xi_j` at `(x, xi~)`.
    pub fn derivative_xi(&self, x: &[f64], xi: &[f64], j: usize) -> Result<f64> {
        let mut lifted = xi.to_vec();
        lifted[self.index] = self.solve(x, xi)?;
        self.derivative_xi_at(x, &lifted, j)
    }

    /// `d^2 a / d xi_j d xi_l` at `(x, xi~)` by implicit differentiation.
    pub fn second_derivative_xi(&self, x: &[f64], xi: &[f64], j: usize, l: usize) -> Result<f64> {
        let mut lifted = xi.to_vec();
        lifted[self.index] = self.solve(x, xi)?;
        self.second_derivative_xi_at(x, &lifted, j, l)
    }
}

fn graph_from_reduced(
    target: Arc<ReducedSymbol>,
    index: usize,
    base: &PhasePoint,
    box_half_width: f64,
    live_xi: Vec<bool>,
    grad_tol: f64,
) -> Result<GraphFunction> {
    let n = target.dim();
    assert!(index < n);
    let slope = target.deriv_xi(&base.x, &base.xi, index)?;
    if mathfn::abs(slope) <= grad_tol {
        return Err(Error::DegenerateGradient {
            index: index + 1,
            value: mathfn::abs(slope),
            tol: grad_tol,
        });
    }

    // Affine in the solved variable with constant slope: closed form.
    let closed_form = target.as_poly().and_then(|p| {
        if p.degree_xi_in(index) != 1 {
            return None;
        }
        let slope_sym = p.deriv_xi(index);
        if slope_sym.degree_x() == 0 && slope_sym.degree_xi() == 0 {
            let c = slope_sym
                .eval(&PhasePoint::new(vec![0.0; n], vec![0.0; n]))
                .ok()?;
            let offset = p.substitute_xi(index, &Symbol::zero(n));
            Some(offset.scale(-1.0 / c))
        } else {
            None
        }
    });

    // On-variety base points reproduce their own fibre coordinate; a base
    // point off the zero set (the graph still exists nearby) converges to
    // the nearest root instead, so only the residual contract is enforced.
    let mut hw = box_half_width;
    let mut last_err = Error::NewtonDiverged {
        index: index + 1,
        iterations: NEWTON_MAX_ITER,
        residual: f64::NAN,
    };
    for _shrink in 0..=MAX_BOX_SHRINKS {
        let graph = GraphFunction {
            target: Arc::clone(&target),
            index,
            base: base.clone(),
            box_half_width: hw,
            live_xi: live_xi.clone(),
            closed_form: closed_form.clone(),
        };
        match validate_graph(&graph) {
            Ok(()) => return Ok(graph),
            Err(e) => last_err = e,
        }
        hw /= 2.0;
    }
    Err(last_err)
}

/// Probe the box corners and midpoints; Newton must converge with the
/// residual contract everywhere.
fn validate_graph(graph: &GraphFunction) -> Result<()> {
    let n = graph.target.dim();
    let base = &graph.base;
    let hw = graph.box_half_width;
    let mut x = base.x.clone();
    let mut xi = base.xi.clone();
    graph.solve(&x, &xi)?;
    for axis in 0..n {
        for delta in [-hw, hw] {
            x[axis] = base.x[axis] + delta;
            graph.solve(&x, &xi)?;
            x[axis] = base.x[axis];
        }
        if axis != graph.index && graph.live_xi[axis] {
            for delta in [-hw, hw] {
                xi[axis] = base.xi[axis] + delta;
                graph.solve(&x, &xi)?;
                xi[axis] = base.xi[axis];
            }
        }
    }
    Ok(())
}

/// Solve `{sym = 0}` as a graph `xi_{index} = a(x, xi~)` near `pt`.
pub fn solve_graph(
    sym: &Symbol,
    index: usize,
    pt: &PhasePoint,
    box_half_width: f64,
) -> Result<GraphFunction> {
    let n = sym.dim();
    if index >= n {
        return Err(Error::InvalidParameter(format!(
            "index {index} out of range for dimension {n}"
        )));
    }
    let live = (0..n).map(|i| i != index).collect();
    graph_from_reduced(
        Arc::new(ReducedSymbol::Poly(sym.clone())),
        index,
        pt,
        box_half_width,
        live,
        Tolerances::default().grad_tol,
    )
}

/// Substitute a graph into a symbol: `p~(x, xi~) = p(x, ..., a(x, xi~), ...)`.
/// Exact polynomial composition when the graph has a closed form and the
/// symbol is still polynomial; otherwise a chain-rule evaluator.
pub fn substitute_graph(sym: &ReducedSymbol, graph: &Arc<GraphFunction>) -> ReducedSymbol {
    if let (Some(p), Some(cf)) = (sym.as_poly(), graph.closed_form()) {
        if !p.depends_on_xi(graph.index) {
            return ReducedSymbol::Poly(p.clone());
        }
        return ReducedSymbol::Poly(p.substitute_xi(graph.index, cf));
    }
    match sym.as_poly() {
        Some(p) if !p.depends_on_xi(graph.index) => ReducedSymbol::Poly(p.clone()),
        _ => ReducedSymbol::Substituted {
            base: Arc::new(sym.clone()),
            graph: Arc::clone(graph),
        },
    }
}

/// Eigenvalues of a Hessian block, with the pass verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureCertificate {
    /// Ascending eigenvalues (after sign normalization when `sign = -1`).
    pub eigenvalues: Vec<f64>,
    /// +1 when the block was positive definite as computed, -1 when it was
    /// negative definite and reported with flipped sign.
    pub sign: i8,
    pub pass: bool,
}

/// Raw Hessian-block certificate: eigenvalues of
/// `(d^2 p / d xi_i d xi_j)_{i,j in index_set}` at `pt`, ascending; passes
/// iff the smallest exceeds `curv_tol`.
pub fn curvature_certificate(
    reduced: &ReducedSymbol,
    pt: &PhasePoint,
    index_set: &[usize],
    curv_tol: f64,
) -> Result<CurvatureCertificate> {
    let m = index_set.len();
    let mut block = Matrix::zeros(m, m);
    for (a, i) in index_set.iter().enumerate() {
        for (b, j) in index_set.iter().enumerate().skip(a) {
            let v = reduced.second_deriv_xi(&pt.x, &pt.xi, *i, *j)?;
            block[(a, b)] = v;
            block[(b, a)] = v;
        }
    }
    let eigenvalues = linalg::symmetric_eigenvalues(&block);
    let pass = eigenvalues.iter().all(|v| *v > curv_tol);
    Ok(CurvatureCertificate {
        eigenvalues,
        sign: 1,
        pass,
    })
}

/// Certificate on a graph's Hessian (the curvature of `xi_1 = b(x, eta)`);
/// definiteness of either sign passes, with the sign reported.
fn graph_curvature_certificate(
    graph: &GraphFunction,
    pt: &PhasePoint,
    index_set: &[usize],
    curv_tol: f64,
) -> Result<CurvatureCertificate> {
    let m = index_set.len();
    let mut block = Matrix::zeros(m, m);
    for (a, i) in index_set.iter().enumerate() {
        for (b, j) in index_set.iter().enumerate().skip(a) {
            let v = graph.second_derivative_xi(&pt.x, &pt.xi, *i, *j)?;
            block[(a, b)] = v;
            block[(b, a)] = v;
        }
    }
    let eig = linalg::symmetric_eigenvalues(&block);
    if m == 0 {
        return Ok(CurvatureCertificate {
            eigenvalues: eig,
            sign: 1,
            pass: true,
        });
    }
    let all_pos = eig.iter().all(|v| *v > curv_tol);
    let all_neg = eig.iter().all(|v| *v < -curv_tol);
    if all_neg {
        let mut flipped: Vec<f64> = eig.iter().map(|v| -v).collect();
        flipped.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(CurvatureCertificate {
            eigenvalues: flipped,
            sign: -1,
            pass: true,
        })
    } else {
        Ok(CurvatureCertificate {
            eigenvalues: eig,
            sign: 1,
            pass: all_pos,
        })
    }
}

/// Rotate the fibre coordinates so the gradient rows become
/// lower-trapezoidal with positive diagonal; symbols transform exactly.
pub fn normalize_coordinates(
    syms: &[Symbol],
    pt: &PhasePoint,
    tols: Tolerances,
) -> Result<(RotationPlan, Vec<Symbol>)> {
    let report = check_admissibility(syms, pt, tols)?;
    if !report.passes[0] {
        return Err(Error::NotAdmissible(String::from(
            "condition 1 (smooth hypersurfaces) fails at the base point",
        )));
    }
    if !report.passes[1] {
        return Err(Error::NotAdmissible(String::from(
            "condition 2 (independent normals) fails at the base point",
        )));
    }
    let r = syms.len();
    let rows: Vec<Vec<f64>> = syms
        .iter()
        .map(|s| s.grad_xi(pt))
        .collect::<Result<_>>()?;
    let g = Matrix::from_rows(&rows);
    let (q, l) = linalg::lq_normalize(&g);
    for i in 0..r {
        let row_norm = linalg::norm(g.row(i));
        if mathfn::abs(l[(i, i)]) <= tols.indep_tol * row_norm {
            return Err(Error::DependentNormals {
                index: i + 1,
                pivot: mathfn::abs(l[(i, i)]),
                tol: tols.indep_tol,
            });
        }
    }
    let transformed: Vec<Symbol> = syms
        .iter()
        .map(|s| s.linear_change_xi(&q))
        .collect::<Result<_>>()?;
    let rotated_xi = q.matvec_transposed(&pt.xi);
    let plan = RotationPlan {
        q,
        base: PhasePoint::new(pt.x.clone(), rotated_xi),
        normal_matrix: l,
    };
    Ok((plan, transformed))
}

/// One removal step of the induction.
#[derive(Debug, Clone)]
pub struct ReductionStage {
    /// 0-based fibre index removed at this stage.
    pub removed_index: usize,
    pub graph: Arc<GraphFunction>,
    /// Surviving symbols after the substitution (indices `0..removed_index`).
    pub reduced: Vec<ReducedSymbol>,
    /// Hessian certificate of the reduced first symbol on the surviving
    /// index set.
    pub certificate: CurvatureCertificate,
}

/// Full record of the factorization.
#[derive(Debug, Clone)]
pub struct ReductionTrace {
    pub rotation: RotationPlan,
    /// Set when the first symbol was negated to make its curvature positive.
    pub p1_negated: bool,
    pub stages: Vec<ReductionStage>,
    /// Final graph `xi_1 = b(x, eta)`.
    pub final_graph: GraphFunction,
    /// Certificate of `Hess_eta b` on the surviving indices, sign-normalized.
    pub final_certificate: CurvatureCertificate,
    /// The surviving fibre indices (0-based `r..n-1`).
    pub curvature_index_set: Vec<usize>,
}

impl ReductionTrace {
    pub fn all_certificates_pass(&self) -> bool {
        self.stages.iter().all(|s| s.certificate.pass) && self.final_certificate.pass
    }
}

/// Run the whole pipeline: admissibility, rotation, inductive removal of
/// `xi_r, ..., xi_2`, and the final graph for `xi_1`.
pub fn reduce_all(syms: &[Symbol], pt: &PhasePoint, tols: Tolerances) -> Result<ReductionTrace> {
    let report = check_admissibility(syms, pt, tols)?;
    if !report.all_pass() {
        return Err(Error::NotAdmissible(format!(
            "admissibility fails at the base point (passes = {:?})",
            report.passes
        )));
    }
    let (rotation, mut transformed) = normalize_coordinates(syms, pt, tols)?;
    let n = syms[0].dim();
    let r = syms.len();
    let base = rotation.base.clone();

    // Normalize the sign of p_1 so its Hessian certificates are positive.
    let p1_negated = report.sign_convention < 0;
    if p1_negated {
        transformed[0] = transformed[0].scale(-1.0);
    }

    let surviving: Vec<usize> = (r..n).collect();
    let mut live = vec![true; n];
    let mut current: Vec<ReducedSymbol> = transformed
        .into_iter()
        .map(ReducedSymbol::Poly)
        .collect();

    let mut stages = Vec::with_capacity(r.saturating_sub(1));
    for j in (1..r).rev() {
        let stage_err = |e: Error| Error::ReductionStage {
            stage: r - j,
            removed: format!("xi{}", j + 1),
            reason: format!("{e}"),
        };
        let target = Arc::new(current[j].clone());
        live[j] = false;
        let graph = Arc::new(
            graph_from_reduced(
                target,
                j,
                &base,
                DEFAULT_BOX_HALF_WIDTH,
                live.clone(),
                tols.grad_tol,
            )
            .map_err(stage_err)?,
        );
        let reduced: Vec<ReducedSymbol> = current[..j]
            .iter()
            .map(|s| substitute_graph(s, &graph))
            .collect();
        let certificate = curvature_certificate(&reduced[0], &base, &surviving, tols.curv_tol)
            .map_err(stage_err)?;
        if !certificate.pass {
            return Err(Error::ReductionStage {
                stage: r - j,
                removed: format!("xi{}", j + 1),
                reason: format!(
                    "curvature certificate failed: eigenvalues {:?}",
                    certificate.eigenvalues
                ),
            });
        }
        current = reduced.clone();
        stages.push(ReductionStage {
            removed_index: j,
            graph,
            reduced,
            certificate,
        });
    }

    // Final graph xi_1 = b(x, eta) from the fully reduced first symbol.
    let final_err = |e: Error| Error::ReductionStage {
        stage: r,
        removed: String::from("xi1"),
        reason: format!("{e}"),
    };
    live[0] = false;
    let final_graph = graph_from_reduced(
        Arc::new(current[0].clone()),
        0,
        &base,
        DEFAULT_BOX_HALF_WIDTH,
        live,
        tols.grad_tol,
    )
    .map_err(final_err)?;
    let final_certificate =
        graph_curvature_certificate(&final_graph, &base, &surviving, tols.curv_tol)
            .map_err(final_err)?;
    if !final_certificate.pass {
        return Err(Error::ReductionStage {
            stage: r,
            removed: String::from("xi1"),
            reason: format!(
                "final curvature certificate failed: eigenvalues {:?}",
                final_certificate.eigenvalues
            ),
        });
    }

    Ok(ReductionTrace {
        rotation,
        p1_negated,
        stages,
        final_graph,
        final_certificate,
        curvature_index_set: surviving,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_example_symbols() -> Vec<Symbol> {
        let p1 = Symbol::laplace_minus_one(3);
        let p2 = &(&(&Symbol::xi(3, 0) + &Symbol::xi(3, 1)) - &Symbol::xi(3, 2))
            + &Symbol::x(3, 1).pow(2);
        vec![p1, p2]
    }

    fn worked_example_point() -> PhasePoint {
        PhasePoint::new(vec![0.0; 3], vec![1.0, 0.0, 0.0])
    }

    #[test]
    fn normalize_keeps_already_triangular_family() {
        let p1 = Symbol::laplace_minus_one(3);
        let p2 = Symbol::xi(3, 1);
        let pt = PhasePoint::new(vec![0.0; 3], vec![1.0, 0.0, 0.0]);
        let (plan, transformed) =
            normalize_coordinates(&[p1.clone(), p2.clone()], &pt, Tolerances::default()).unwrap();
        assert!(plan.q.orthogonality_defect() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((plan.q[(i, j)] - target).abs() < 1e-12);
            }
        }
        assert_eq!(transformed[0], p1);
        assert_eq!(transformed[1], p2);
    }

    #[test]
    fn normalize_worked_example_gradients() {
        let syms = worked_example_symbols();
        let pt = worked_example_point();
        let (plan, transformed) =
            normalize_coordinates(&syms, &pt, Tolerances::default()).unwrap();
        // Row 1 = (2, 0, 0); row 2 = (1, sqrt 2, 0): the (1, -1) block length
        // is preserved by orthogonality.
        let l = &plan.normal_matrix;
        assert!((l[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(l[(0, 1)].abs() < 1e-10 && l[(0, 2)].abs() < 1e-10);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-12);
        assert!((l[(1, 1)] - core::f64::consts::SQRT_2).abs() < 1e-12);
        assert!(l[(1, 2)].abs() < 1e-10);
        // Transformed gradients at the rotated base match the rows of L.
        for (i, s) in transformed.iter().enumerate() {
            let g = s.grad_xi(&plan.base).unwrap();
            for j in 0..3 {
                assert!(
                    (g[j] - l[(i, j)]).abs() < 1e-10,
                    "row {i}, column {j}: {} vs {}",
                    g[j],
                    l[(i, j)]
                );
            }
        }
    }

    #[test]
    fn normalize_rejects_parallel_normals() {
        let p1 = Symbol::laplace_minus_one(2);
        let p2 = Symbol::xi(2, 0);
        let pt = PhasePoint::new(vec![0.0; 2], vec![1.0, 0.0]);
        assert!(matches!(
            normalize_coordinates(&[p1, p2], &pt, Tolerances::default()),
            Err(Error::NotAdmissible(_))
        ));
    }

    #[test]
    fn affine_graph_has_exact_closed_form() {
        // p2 = xi1 + 2 xi2 + x2^2 solved for xi2: a2 = -(xi1 + x2^2)/2.
        let p2 = &(&Symbol::xi(3, 0) + &Symbol::xi(3, 1).scale(2.0)) + &Symbol::x(3, 1).pow(2);
        let pt = PhasePoint::new(vec![0.0; 3], vec![0.0, 0.0, 0.0]);
        let graph = solve_graph(&p2, 1, &pt, 0.1).unwrap();
        let expect = &(&Symbol::xi(3, 0) + &Symbol::x(3, 1).pow(2)).scale(-0.5);
        assert_eq!(graph.closed_form().unwrap(), expect);
        // Residual vanishes identically on samples.
        let x = [0.05, -0.08, 0.02];
        let xi = [0.07, 999.0, -0.04];
        let a = graph.solve(&x, &xi).unwrap();
        let mut lifted = xi.to_vec();
        lifted[1] = a;
        let resid = p2
            .eval(&PhasePoint::new(x.to_vec(), lifted))
            .unwrap();
        assert!(resid.abs() < 1e-15);
    }

    #[test]
    fn sphere_graph_matches_square_root() {
        let p1 = Symbol::laplace_minus_one(2);
        let pt = PhasePoint::new(vec![0.0; 2], vec![1.0, 0.0]);
        let graph = solve_graph(&p1, 0, &pt, 0.1).unwrap();
        assert!(graph.closed_form().is_none());
        // 100 sampled box points: closed-form agreement and the residual
        // contract |p(x, graph point)| <= 1e-10.
        for i in 0..100 {
            let xi2 = -0.1 + 0.2 * i as f64 / 99.0;
            let a = graph.solve(&[0.0, 0.0], &[0.0, xi2]).unwrap();
            let expect = mathfn::sqrt(1.0 - xi2 * xi2);
            assert!(
                (a - expect).abs() < 1e-12,
                "xi2 = {xi2}: {a} vs {expect}"
            );
            let residual = p1
                .eval(&PhasePoint::new(vec![0.0; 2], vec![a, xi2]))
                .unwrap();
            assert!(residual.abs() <= 1e-10, "residual {residual} at xi2 = {xi2}");
        }
    }

    #[test]
    fn graph_rejects_degenerate_slope() {
        let p = Symbol::xi(2, 1).pow(2);
        let pt = PhasePoint::new(vec![0.0; 2], vec![1.0, 0.0]);
        assert!(matches!(
            solve_graph(&p, 1, &pt, 0.1),
            Err(Error::DegenerateGradient { .. })
        ));
    }

    #[test]
    fn graph_enforces_validity_box() {
        let p1 = Symbol::laplace_minus_one(2);
        let pt = PhasePoint::new(vec![0.0; 2], vec![1.0, 0.0]);
        let graph = solve_graph(&p1, 0, &pt, 0.1).unwrap();
        assert!(matches!(
            graph.solve(&[0.0, 0.0], &[0.0, 0.5]),
            Err(Error::OutsideValidityBox { .. })
        ));
        assert!(matches!(
            graph.solve(&[0.3, 0.0], &[0.0, 0.0]),
            Err(Error::OutsideValidityBox { .. })
        ));
    }

    #[test]
    fn implicit_derivatives_match_finite_differences() {
        let p1 = Symbol::laplace_minus_one(3);
        let pt = PhasePoint::new(vec![0.0; 3], vec![1.0, 0.0, 0.0]);
        let graph = solve_graph(&p1, 0, &pt, 0.1).unwrap();
        let x = [0.0, 0.0, 0.0];
        let xi = [0.0, 0.03, -0.05];
        let h = 1e-5;
        for j in [1usize, 2] {
            let d = graph.derivative_xi(&x, &xi, j).unwrap();
            let mut plus = xi.to_vec();
            plus[j] += h;
            let mut minus = xi.to_vec();
            minus[j] -= h;
            let fd = (graph.solve(&x, &plus).unwrap() - graph.solve(&x, &minus).unwrap())
                / (2.0 * h);
            assert!((d - fd).abs() < 1e-6 * (1.0 + fd.abs()), "j = {j}: {d} vs {fd}");
        }
        // Second derivative at the base: Hess of sqrt(1 - |xi~|^2) is -I.
        for j in [1usize, 2] {
            let s = graph
                .second_derivative_xi(&x, &[0.0, 0.0, 0.0], j, j)
                .unwrap();
            assert!((s + 1.0).abs() < 1e-9, "j = {j}: {s}");
        }
    }

    #[test]
    fn substitution_reproduces_worked_reduced_symbol() {
        // Direct-substitution route in the paper's affine frame:
        // substituting a2 = -(xi1 + x2^2)/2 into |xi|^2 - 1 gives
        // (5/4) xi1^2 + xi3^2 + x2^2 xi1/2 + x2^4/4 - 1.
        let p1 = Symbol::laplace_minus_one(3);
        let p2 = &(&Symbol::xi(3, 0) + &Symbol::xi(3, 1).scale(2.0)) + &Symbol::x(3, 1).pow(2);
        let pt = PhasePoint::new(vec![0.0; 3], vec![0.0, 0.0, 0.0]);
        let graph = Arc::new(solve_graph(&p2, 1, &pt, 0.1).unwrap());
        let reduced = substitute_graph(&ReducedSymbol::Poly(p1), &graph);
        let poly = reduced.as_poly().expect("affine substitution stays polynomial");

        let mut expect = Symbol::xi(3, 0).pow(2).scale(1.25);
        expect = expect.add(&Symbol::xi(3, 2).pow(2));
        expect = expect.add(&Symbol::x(3, 1).pow(2).mul(&Symbol::xi(3, 0)).scale(0.5));
        expect = expect.add(&Symbol::x(3, 1).pow(4).scale(0.25));
        expect = expect.add(&Symbol::constant(3, -1.0));
        assert_eq!(poly, &expect);
    }

    #[test]
    fn substitution_without_dependence_is_identity() {
        let p = Symbol::xi(3, 0).add(&Symbol::x(3, 2));
        let p2 = &(&Symbol::xi(3, 0) + &Symbol::xi(3, 1).scale(2.0)) + &Symbol::x(3, 1).pow(2);
        let pt = PhasePoint::new(vec![0.0; 3], vec![0.0, 0.0, 0.0]);
        let graph = Arc::new(solve_graph(&p2, 1, &pt, 0.1).unwrap());
        let reduced = substitute_graph(&ReducedSymbol::Poly(p.clone()), &graph);
        assert_eq!(reduced.as_poly().unwrap(), &p);
    }

    #[test]
    fn affine_symbol_and_graph_stay_affine() {
        let p = &(&Symbol::xi(3, 0) + &Symbol::xi(3, 1).scale(3.0)) + &Symbol::constant(3, 0.25);
        let p2 = &(&Symbol::xi(3, 0) + &Symbol::xi(3, 1).scale(2.0)) + &Symbol::x(3, 1).pow(2);
        let pt = PhasePoint::new(vec![0.0; 3], vec![0.0, 0.0, 0.0]);
        let graph = Arc::new(solve_graph(&p2, 1, &pt, 0.1).unwrap());
        let reduced = substitute_graph(&ReducedSymbol::Poly(p), &graph);
        let poly = reduced.as_poly().unwrap();
        assert!(poly.degree_xi() <= 1);
        assert_eq!(poly.degree_x(), 2);
    }

    #[test]
    fn curvature_certificate_of_reduced_worked_symbol() {
        let p1 = Symbol::laplace_minus_one(3);
        let p2 = &(&Symbol::xi(3, 0) + &Symbol::xi(3, 1).scale(2.0)) + &Symbol::x(3, 1).pow(2);
        let pt = PhasePoint::new(vec![0.0; 3], vec![0.0, 0.0, 0.0]);
        let graph = Arc::new(solve_graph(&p2, 1, &pt, 0.1).unwrap());
        let reduced = substitute_graph(&ReducedSymbol::Poly(p1), &graph);
        let cert = curvature_certificate(&reduced, &pt, &[2], 1e-8).unwrap();
        assert_eq!(cert.eigenvalues.len(), 1);
        assert!((cert.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!(cert.pass);
    }

    #[test]
    fn unreduced_laplace_certificate_is_twice_identity() {
        let p1 = ReducedSymbol::Poly(Symbol::laplace_minus_one(4));
        let pt = PhasePoint::new(vec![0.0; 4], vec![1.0, 0.0, 0.0, 0.0]);
        let cert = curvature_certificate(&p1, &pt, &[1, 2, 3], 1e-8).unwrap();
        for v in &cert.eigenvalues {
            assert!((v - 2.0).abs() < 1e-12);
        }
        assert!(cert.pass);
    }

    #[test]
    fn saddle_certificate_fails() {
        let saddle = &Symbol::xi(3, 1).pow(2) - &Symbol::xi(3, 2).pow(2);
        let cert = curvature_certificate(
            &ReducedSymbol::Poly(saddle),
            &PhasePoint::new(vec![0.0; 3], vec![0.0; 3]),
            &[1, 2],
            1e-8,
        )
        .unwrap();
        assert!((cert.eigenvalues[0] + 2.0).abs() < 1e-12);
        assert!((cert.eigenvalues[1] - 2.0).abs() < 1e-12);
        assert!(!cert.pass);
    }

    #[test]
    fn model_case_reduces_to_circle_graph() {
        // p1 = |xi|^2 - 1, p2 = xi2, p3 = xi3 in dimension 4 at
        // xi0 = (1, 0, 0, 0): all graphs vanish and b = sqrt(1 - xi4^2).
        let p1 = Symbol::laplace_minus_one(4);
        let p2 = Symbol::xi(4, 1);
        let p3 = Symbol::xi(4, 2);
        let pt = PhasePoint::new(vec![0.0; 4], vec![1.0, 0.0, 0.0, 0.0]);
        let trace = reduce_all(&[p1, p2, p3], &pt, Tolerances::default()).unwrap();
        assert_eq!(trace.stages.len(), 2);
        assert!(!trace.p1_negated);
        for stage in &trace.stages {
            let cf = stage.graph.closed_form().expect("xi_i graphs are affine");
            assert!(cf.is_zero(), "graph should vanish identically");
            assert!(stage.certificate.pass);
        }
        // b(xi4) = sqrt(1 - xi4^2) on the box.
        for i in 0..=100 {
            let xi4 = -0.1 + 0.002 * i as f64;
            let b = trace
                .final_graph
                .solve(&[0.0; 4], &[0.0, 0.0, 0.0, xi4])
                .unwrap();
            assert!((b - mathfn::sqrt(1.0 - xi4 * xi4)).abs() < 1e-10);
        }
        // Certificate eigenvalue 1 after sign normalization.
        assert_eq!(trace.final_certificate.eigenvalues.len(), 1);
        assert!((trace.final_certificate.eigenvalues[0] - 1.0).abs() < 1e-9);
        assert_eq!(trace.final_certificate.sign, -1);
        assert!(trace.all_certificates_pass());
    }

    #[test]
    fn worked_example_trace_completes() {
        let syms = worked_example_symbols();
        let pt = worked_example_point();
        let trace = reduce_all(&syms, &pt, Tolerances::default()).unwrap();
        assert_eq!(trace.stages.len(), 1);
        assert!(trace.all_certificates_pass());
        // The rotated p2 is affine in xi2, so the stage graph is exact:
        // a2 = -(xi1 + x2^2)/sqrt(2) in the rotated frame.
        let cf = trace.stages[0].graph.closed_form().unwrap();
        let expect = &(&Symbol::xi(3, 0) + &Symbol::x(3, 1).pow(2))
            .scale(-1.0 / core::f64::consts::SQRT_2);
        let diff = cf.sub(expect);
        assert!(
            diff.coeff_scale() < 1e-14,
            "closed form deviates: {diff}"
        );
        // Final certificate on index set {3}: positive.
        assert_eq!(trace.curvature_index_set, vec![2]);
        assert_eq!(trace.final_certificate.eigenvalues.len(), 1);
        assert!(trace.final_certificate.eigenvalues[0] > 0.5);
    }

    #[test]
    fn full_rank_reduction_has_empty_certificates() {
        let p1 = Symbol::laplace_minus_one(2);
        let p2 = Symbol::xi(2, 1);
        let pt = PhasePoint::new(vec![0.0; 2], vec![1.0, 0.0]);
        let trace = reduce_all(&[p1, p2], &pt, Tolerances::default()).unwrap();
        assert!(trace.curvature_index_set.is_empty());
        assert!(trace.final_certificate.eigenvalues.is_empty());
        assert!(trace.all_certificates_pass());
    }

    #[test]
    fn reduction_rejects_inadmissible_family() {
        let p1 = Symbol::laplace_minus_one(2);
        let p2 = Symbol::xi(2, 0);
        let pt = PhasePoint::new(vec![0.0; 2], vec![1.0, 0.0]);
        assert!(matches!(
            reduce_all(&[p1, p2], &pt, Tolerances::default()),
            Err(Error::NotAdmissible(_))
        ));
    }

    #[test]
    fn negated_first_symbol_reduces_after_sign_normalization() {
        let p1 = Symbol::laplace_minus_one(3).scale(-1.0);
        let p2 = Symbol::xi(3, 1);
        let pt = PhasePoint::new(vec![0.0; 3], vec![1.0, 0.0, 0.0]);
        let trace = reduce_all(&[p1, p2], &pt, Tolerances::default()).unwrap();
        assert!(trace.p1_negated);
        assert!(trace.all_certificates_pass());
    }

    /// Base point on both characteristic sets of the curved family below.
    fn curved_family() -> (Symbol, Symbol, PhasePoint) {
        let p1 = Symbol::laplace_minus_one(3);
        // xi1 + xi2 + 0.2 xi2^2 - xi3 + x2^2: vanishes at the base along with
        // p1, and its graph for xi2 has no closed form.
        let p2 = &(&(&(&Symbol::xi(3, 0) + &Symbol::xi(3, 1))
            + &Symbol::xi(3, 1).pow(2).scale(0.2))
            - &Symbol::xi(3, 2))
            + &Symbol::x(3, 1).pow(2);
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let pt = PhasePoint::new(vec![0.0; 3], vec![s, 0.0, s]);
        assert!(p1.eval(&pt).unwrap().abs() < 1e-15);
        assert!(p2.eval(&pt).unwrap().abs() < 1e-15);
        (p1, p2, pt)
    }

    #[test]
    fn nonaffine_substitution_matches_bisection_oracle() {
        // Curved second symbol: its graph has no closed form, so the reduced
        // first symbol stays an evaluator. Compare against an independent
        // bisection solve of the same zero set.
        let (p1, p2, pt) = curved_family();
        let graph = Arc::new(solve_graph(&p2, 1, &pt, 0.1).unwrap());
        assert!(graph.closed_form().is_none());
        let reduced = substitute_graph(&ReducedSymbol::Poly(p1.clone()), &graph);
        assert!(reduced.as_poly().is_none());

        let bisect = |x: &[f64], xi: &[f64]| -> f64 {
            let mut lo = -0.6;
            let mut hi = 0.6;
            let eval = |t: f64| {
                let mut v = xi.to_vec();
                v[1] = t;
                p2.eval(&PhasePoint::new(x.to_vec(), v)).unwrap()
            };
            assert!(eval(lo) * eval(hi) < 0.0, "bracket must straddle the root");
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if eval(lo) * eval(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };

        for i in 0..5 {
            let x = [0.0, 0.02 * i as f64, 0.0];
            let xi = [
                pt.xi[0] - 0.03 + 0.012 * i as f64,
                0.0,
                pt.xi[2] + 0.04 - 0.016 * i as f64,
            ];
            let newton = graph.solve(&x, &xi).unwrap();
            let oracle = bisect(&x, &xi);
            assert!(
                (newton - oracle).abs() < 1e-9,
                "graph {newton} vs bisection {oracle}"
            );
            // Reduced value equals the direct composition through the oracle.
            let via_eval = reduced.value(&x, &xi).unwrap();
            let mut lifted = xi.to_vec();
            lifted[1] = oracle;
            let direct = p1
                .eval(&PhasePoint::new(x.to_vec(), lifted))
                .unwrap();
            assert!((via_eval - direct).abs() < 1e-8);
        }
    }

    #[test]
    fn nonaffine_reduced_derivatives_match_finite_differences() {
        let (p1, p2, pt) = curved_family();
        let graph = Arc::new(solve_graph(&p2, 1, &pt, 0.1).unwrap());
        let reduced = substitute_graph(&ReducedSymbol::Poly(p1), &graph);

        let x = [0.0, 0.0, 0.0];
        let xi = [pt.xi[0] - 0.02, 0.0, pt.xi[2] + 0.03];
        let step = 1e-5;
        for j in [0usize, 2] {
            let d = reduced.deriv_xi(&x, &xi, j).unwrap();
            let mut plus = xi.to_vec();
            plus[j] += step;
            let mut minus = xi.to_vec();
            minus[j] -= step;
            let fd = (reduced.value(&x, &plus).unwrap() - reduced.value(&x, &minus).unwrap())
                / (2.0 * step);
            assert!((d - fd).abs() < 1e-6 * (1.0 + fd.abs()), "j = {j}: {d} vs {fd}");
            for l in [0usize, 2] {
                let s = reduced.second_deriv_xi(&x, &xi, j, l).unwrap();
                let mut pp = xi.to_vec();
                pp[l] += step;
                let mut pm = xi.to_vec();
                pm[l] -= step;
                let fd2 = (reduced.deriv_xi(&x, &pp, j).unwrap()
                    - reduced.deriv_xi(&x, &pm, j).unwrap())
                    / (2.0 * step);
                assert!(
                    (s - fd2).abs() < 1e-5 * (1.0 + fd2.abs()),
                    "({j}, {l}): {s} vs {fd2}"
                );
            }
        }
    }

    #[test]
    fn curved_second_symbol_reduces_end_to_end() {
        // Full pipeline over a Newton-backed stage graph: the final graph's
        // curvature runs the nested chain rule to depth two.
        let (p1, p2, pt) = curved_family();
        let trace = reduce_all(&[p1, p2], &pt, Tolerances::default()).unwrap();
        assert!(trace.all_certificates_pass());
        assert_eq!(trace.stages.len(), 1);
        // The final graph satisfies the residual contract on samples of the
        // reduced first symbol.
        let base = trace.rotation.base.clone();
        let reduced_p1 = &trace.stages[0].reduced[0];
        for i in 0..10 {
            let eta = -0.05 + 0.01 * i as f64;
            let mut xi = base.xi.clone();
            xi[2] += eta;
            let b = trace.final_graph.solve(&base.x, &xi).unwrap();
            let mut lifted = xi.clone();
            lifted[0] = b;
            let resid = reduced_p1.value(&base.x, &lifted).unwrap();
            assert!(resid.abs() < 1e-9, "residual {resid} at eta {eta}");
        }
    }

    #[test]
    fn reduction_is_equivariant_under_fibre_rotation() {
        let syms = worked_example_symbols();
        let pt = worked_example_point();
        let base_trace = reduce_all(&syms, &pt, Tolerances::default()).unwrap();

        // Pre-rotate the fibre by a fixed orthogonal matrix.
        let g = Matrix::from_rows(&[
            vec![0.6, 0.8, 0.0],
            vec![-0.8, 0.6, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        assert!(g.orthogonality_defect() < 1e-12);
        let rotated_syms: Vec<Symbol> = syms
            .iter()
            .map(|s| s.linear_change_xi(&g).unwrap())
            .collect();
        let rotated_xi = g.matvec_transposed(&pt.xi);
        let rotated_pt = PhasePoint::new(pt.x.clone(), rotated_xi);
        let rotated_trace =
            reduce_all(&rotated_syms, &rotated_pt, Tolerances::default()).unwrap();

        let a = &base_trace.final_certificate.eigenvalues;
        let b = &rotated_trace.final_certificate.eigenvalues;
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        // Stage certificates agree as well.
        for (s, t) in base_trace.stages.iter().zip(&rotated_trace.stages) {
            for (x, y) in s.certificate.eigenvalues.iter().zip(&t.certificate.eigenvalues) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn traces_cross_thread_boundaries() {
        // Independent base points may run on worker threads; everything in a
        // trace must therefore be Send + Sync.
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<ReductionTrace>();
        assert_send_sync::<GraphFunction>();
        assert_send_sync::<ReducedSymbol>();

        let handle = std::thread::spawn(|| {
            let p1 = Symbol::laplace_minus_one(2);
            let p2 = Symbol::xi(2, 1);
            let pt = PhasePoint::new(vec![0.0; 2], vec![1.0, 0.0]);
            reduce_all(&[p1, p2], &pt, Tolerances::default()).unwrap()
        });
        let trace = handle.join().unwrap();
        assert!(trace.all_certificates_pass());
    }

    #[test]
    fn normalization_holds_on_randomized_admissible_families() {
        // 50 random families (degree <= 2, n <= 5, r <= n) that pass the
        // first two admissibility conditions: Q orthogonal to 1e-12 and
        // L = G Q lower-trapezoidal to 1e-10 with positive diagonal.
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(99);
        let mut families = 0;
        while families < 50 {
            let n = 2 + rng.below(4);
            let r = 1 + rng.below(n);
            let pt = PhasePoint::new(
                (0..n).map(|_| rng.range(-0.5, 0.5)).collect(),
                (0..n).map(|_| rng.range(-1.0, 1.0)).collect(),
            );
            let mut syms = Vec::with_capacity(r);
            for _ in 0..r {
                // Quadratic part plus a random linear part keeps gradients
                // generic.
                let mut s = Symbol::zero(n);
                for i in 0..n {
                    s = s.add(&Symbol::xi(n, i).scale(rng.range(-1.0, 1.0)));
                    s = s.add(&Symbol::xi(n, i).pow(2).scale(rng.range(-0.5, 0.5)));
                    s = s.add(
                        &Symbol::x(n, i)
                            .mul(&Symbol::xi(n, i))
                            .scale(rng.range(-0.3, 0.3)),
                    );
                }
                syms.push(s);
            }
            let report = match check_admissibility(&syms, &pt, Tolerances::default()) {
                Ok(rep) => rep,
                Err(_) => continue,
            };
            if !(report.passes[0] && report.passes[1]) {
                continue;
            }
            let (plan, transformed) =
                normalize_coordinates(&syms, &pt, Tolerances::default()).unwrap();
            assert!(plan.q.orthogonality_defect() < 1e-12);
            let l = &plan.normal_matrix;
            for i in 0..r {
                assert!(l[(i, i)] > 0.0, "diagonal must be positive");
                for j in i + 1..n {
                    assert!(
                        mathfn::abs(l[(i, j)]) < 1e-10,
                        "row {i} column {j}: {}",
                        l[(i, j)]
                    );
                }
            }
            // Transformed gradients at the rotated base reproduce L.
            for (i, s) in transformed.iter().enumerate() {
                let g = s.grad_xi(&plan.base).unwrap();
                for j in 0..n {
                    assert!((g[j] - l[(i, j)]).abs() < 1e-9);
                }
            }
            families += 1;
        }
    }

    #[test]
    fn curvature_preserved_at_base_through_substitution() {
        // At the base point the reduced Hessian block equals the original
        // one because the graph gradient vanishes on the surviving indices.
        let syms = worked_example_symbols();
        let pt = worked_example_point();
        let (plan, transformed) =
            normalize_coordinates(&syms, &pt, Tolerances::default()).unwrap();
        let base = plan.base.clone();
        let original = ReducedSymbol::Poly(transformed[0].clone());
        let live = vec![true, false, true];
        let graph = Arc::new(
            graph_from_reduced(
                Arc::new(ReducedSymbol::Poly(transformed[1].clone())),
                1,
                &base,
                0.1,
                live,
                1e-8,
            )
            .unwrap(),
        );
        let reduced = substitute_graph(&original, &graph);
        {
            let idx = 2usize;
            let before = original
                .second_deriv_xi(&base.x, &base.xi, idx, idx)
                .unwrap();
            let after = reduced
                .second_deriv_xi(&base.x, &base.xi, idx, idx)
                .unwrap();
            assert!((before - after).abs() < 1e-8, "{before} vs {after}");
        }
    }

    #[test]
    fn graph_residuals_hold_across_sampled_box() {
        let syms = worked_example_symbols();
        let pt = worked_example_point();
        let trace = reduce_all(&syms, &pt, Tolerances::default()).unwrap();
        let graph = &trace.stages[0].graph;
        let target_p2 = graph.closed_form().unwrap();
        // 100 sampled points in the validity box: residual of the rotated p2
        // after inserting the graph value.
        let mut worst: f64 = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                let x2 = -0.1 + 0.022 * i as f64;
                let xi1 = 1.0 - 0.1 + 0.022 * j as f64;
                let x = [0.0, x2, 0.0];
                let xi = [xi1, 0.0, 0.0];
                let a = graph.solve(&x, &xi).unwrap();
                let direct = target_p2
                    .eval(&PhasePoint::new(x.to_vec(), xi.to_vec()))
                    .unwrap();
                worst = worst.max(mathfn::abs(a - direct));
            }
        }
        assert!(worst < 1e-12, "closed form drifted by {worst}");
    }
}
