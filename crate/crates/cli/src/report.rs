//! Text artifacts: the sweep CSV and the reduction report.

use std::fmt::Write as _;

use qmlab_core::analysis::SweepResult;
use qmlab_core::quasimodes::DefectReport;
use qmlab_core::reduction::ReductionTrace;

fn fmt_p(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

/// CSV columns `lambda,h,p,lp_norm,l2_norm,ratio,log_lambda,log_ratio`, one
/// block per p, then the fit summaries as `#` comment lines.
pub fn sweep_csv(results: &[SweepResult]) -> String {
    let mut out = String::from("lambda,h,p,lp_norm,l2_norm,ratio,log_lambda,log_ratio\n");
    for res in results {
        for (lambda, h, lp, l2, ratio) in &res.rows {
            let _ = writeln!(
                out,
                "{lambda:.12e},{h:.12e},{},{lp:.12e},{l2:.12e},{ratio:.12e},{:.12e},{:.12e}",
                fmt_p(res.p),
                lambda.ln(),
                ratio.ln(),
            );
        }
    }
    for res in results {
        let _ = writeln!(
            out,
            "# p={} slope={:.12e} intercept={:.12e} rms={:.12e} expected={:.12e} tolerance={:.12e} two_sided={} pass={} margin={:.12e}",
            fmt_p(res.p),
            res.slope,
            res.intercept,
            res.rms,
            res.expected_exponent,
            res.tolerance,
            res.two_sided,
            res.pass,
            res.margin,
        );
    }
    out
}

/// CSV for a defect report: one row per multi-index.
pub fn defect_csv(report: &DefectReport, rank: usize) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = (1..=rank).map(|j| format!("k{j}")).collect();
    header.push("defect".into());
    header.push("normalized".into());
    if report.multiplier_bounds.is_some() {
        header.push("multiplier_bound".into());
    }
    let _ = writeln!(out, "{}", header.join(","));
    for (index, value) in &report.entries {
        let mut row: Vec<String> = index.iter().map(|k| k.to_string()).collect();
        row.push(format!("{value:.12e}"));
        row.push(format!("{:.12e}", report.normalized[index]));
        if let Some(bounds) = &report.multiplier_bounds {
            row.push(format!("{:.12e}", bounds[index]));
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Structured text report of a reduction trace: the rotation, one block per
/// stage with a graph sample table and certificate eigenvalues, and the
/// final graph block.
pub fn reduction_report(trace: &ReductionTrace) -> String {
    let mut out = String::new();
    let n = trace.rotation.q.rows;
    let _ = writeln!(out, "reduction report");
    let _ = writeln!(out, "dimension: {n}");
    let _ = writeln!(out, "p1 negated: {}", trace.p1_negated);
    let _ = writeln!(out, "rotation Q (rows):");
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| format!("{:+.6}", trace.rotation.q[(i, j)]))
            .collect();
        let _ = writeln!(out, "  [{}]", row.join(", "));
    }
    let base = &trace.rotation.base;
    let _ = writeln!(
        out,
        "rotated base point: x = {:?}, xi = {:?}",
        base.x, base.xi
    );
    let _ = writeln!(out, "normal matrix L = G Q (rows):");
    let l = &trace.rotation.normal_matrix;
    for i in 0..l.rows {
        let row: Vec<String> = (0..l.cols).map(|j| format!("{:+.6}", l[(i, j)])).collect();
        let _ = writeln!(out, "  [{}]", row.join(", "));
    }

    for (s, stage) in trace.stages.iter().enumerate() {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "stage {}: removed xi{}",
            s + 1,
            stage.removed_index + 1
        );
        match stage.graph.closed_form() {
            Some(cf) => {
                let _ = writeln!(out, "  graph xi{} = {}", stage.removed_index + 1, cf);
            }
            None => {
                let _ = writeln!(
                    out,
                    "  graph xi{} = a(x, xi~) (Newton-backed evaluator)",
                    stage.removed_index + 1
                );
            }
        }
        let _ = write_graph_samples(&mut out, trace, stage.removed_index, &stage.graph);
        let _ = writeln!(
            out,
            "  certificate eigenvalues: {:?}  pass: {}",
            stage.certificate.eigenvalues, stage.certificate.pass
        );
    }

    let _ = writeln!(out);
    let _ = writeln!(out, "final graph: xi1 = b(x, eta)");
    let _ = write_graph_samples(&mut out, trace, 0, &trace.final_graph);
    let _ = writeln!(
        out,
        "  certificate eigenvalues (sign {}): {:?}  pass: {}",
        trace.final_certificate.sign,
        trace.final_certificate.eigenvalues,
        trace.final_certificate.pass
    );
    let _ = writeln!(
        out,
        "all certificates pass: {}",
        trace.all_certificates_pass()
    );
    out
}

fn write_graph_samples(
    out: &mut String,
    trace: &ReductionTrace,
    solved_index: usize,
    graph: &qmlab_core::reduction::GraphFunction,
) -> std::fmt::Result {
    let base = graph.base();
    let hw = graph.box_half_width();
    // Vary the last surviving fibre coordinate when one exists, else x1.
    let vary_xi = trace
        .curvature_index_set
        .iter()
        .copied()
        .find(|i| *i != solved_index);
    writeln!(out, "  sample table (5 points across the validity box):")?;
    match vary_xi {
        Some(axis) => {
            writeln!(out, "    xi{}        value", axis + 1)?;
            for s in 0..5 {
                let offset = -hw + 2.0 * hw * (s as f64) / 4.0;
                let mut xi = base.xi.clone();
                xi[axis] += offset;
                match graph.solve(&base.x, &xi) {
                    Ok(v) => writeln!(out, "    {:+.6}  {:+.12}", xi[axis], v)?,
                    Err(e) => writeln!(out, "    {:+.6}  <{e}>", xi[axis])?,
                }
            }
        }
        None => {
            writeln!(out, "    x1         value")?;
            for s in 0..5 {
                let offset = -hw + 2.0 * hw * (s as f64) / 4.0;
                let mut x = base.x.clone();
                x[0] += offset;
                match graph.solve(&x, &base.xi) {
                    Ok(v) => writeln!(out, "    {:+.6}  {:+.12}", x[0], v)?,
                    Err(e) => writeln!(out, "    {:+.6}  <{e}>", x[0])?,
                }
            }
        }
    }
    Ok(())
}
