//! Experiment configuration: a TOML document with one table per concern.
//! Unknown keys are rejected with the offending name so typos surface
//! immediately.

use serde::Deserialize;

use qmlab_core::quasimodes::{InnerKind, QuasimodeKind, QuasimodeSpec};
use qmlab_core::symbols::{parse_symbol, PhasePoint, Symbol, Tolerances};

use crate::CliError;

/// Lebesgue exponent: a number or "inf".
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PValue {
    Number(f64),
    Text(String),
}

impl PValue {
    pub fn resolve(&self) -> Result<f64, CliError> {
        match self {
            PValue::Number(v) => Ok(*v),
            PValue::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" => Ok(f64::INFINITY),
                other => Err(CliError::config(format!(
                    "p must be a number or \"inf\", got \"{other}\""
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasimodeTable {
    pub kind: String,
    pub lambda: Option<f64>,
    pub width: Option<f64>,
    pub rank: Option<usize>,
    pub inner: Option<String>,
    pub x_width: Option<f64>,
    pub xi_width: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesTable {
    pub grad: Option<f64>,
    pub indep: Option<f64>,
    pub curv: Option<f64>,
}

/// Raw document; every command reads the subset of keys it understands and
/// rejects the rest through validation.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    /// Optional echo of the subcommand; must match when present.
    pub command: Option<String>,

    // delta
    pub n: Option<usize>,
    pub p: Option<PValue>,
    pub r: Option<usize>,

    // symbol-based commands
    pub dimension: Option<usize>,
    pub symbols: Option<Vec<String>>,
    pub base_x: Option<Vec<f64>>,
    pub base_xi: Option<Vec<f64>>,
    pub tolerances: Option<TolerancesTable>,

    // defect
    pub kmax: Option<u32>,
    pub dump_grid: Option<String>,
    pub quasimode: Option<QuasimodeTable>,
    pub grid_headroom: Option<f64>,

    // compose-check
    pub pairs: Option<usize>,
    pub grid_points: Option<usize>,
    pub h: Option<f64>,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,

    // sweep
    pub lambdas: Option<Vec<f64>>,
    pub ps: Option<Vec<PValue>>,
    pub two_sided: Option<bool>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config parse error: {e}")))
    }

    pub fn check_command(&self, expected: &str) -> Result<(), CliError> {
        if let Some(c) = &self.command {
            if c != expected {
                return Err(CliError::config(format!(
                    "config says command = \"{c}\" but the \"{expected}\" subcommand was invoked"
                )));
            }
        }
        Ok(())
    }

    fn require<T: Clone>(&self, field: Option<&T>, name: &str) -> Result<T, CliError> {
        field
            .cloned()
            .ok_or_else(|| CliError::config(format!("missing required key \"{name}\"")))
    }

    pub fn delta_query(&self) -> Result<(usize, f64, usize), CliError> {
        let n = self.require(self.n.as_ref(), "n")?;
        let p = self.require(self.p.as_ref(), "p")?.resolve()?;
        let r = self.require(self.r.as_ref(), "r")?;
        Ok((n, p, r))
    }

    pub fn dimension(&self) -> Result<usize, CliError> {
        self.require(self.dimension.as_ref(), "dimension")
    }

    pub fn parsed_symbols(&self) -> Result<Vec<Symbol>, CliError> {
        let dim = self.dimension()?;
        let texts = self.require(self.symbols.as_ref(), "symbols")?;
        if texts.is_empty() {
            return Err(CliError::config("symbols list is empty".into()));
        }
        texts
            .iter()
            .map(|t| {
                parse_symbol(t, dim).map_err(|e| {
                    CliError::config(format!("symbol \"{t}\": {e}"))
                })
            })
            .collect()
    }

    pub fn base_point(&self) -> Result<PhasePoint, CliError> {
        let dim = self.dimension()?;
        let x = self.require(self.base_x.as_ref(), "base_x")?;
        let xi = self.require(self.base_xi.as_ref(), "base_xi")?;
        if x.len() != dim || xi.len() != dim {
            return Err(CliError::config(format!(
                "base point length must equal dimension = {dim}"
            )));
        }
        Ok(PhasePoint::new(x, xi))
    }

    pub fn tolerances(&self) -> Tolerances {
        let mut tols = Tolerances::default();
        if let Some(t) = &self.tolerances {
            if let Some(g) = t.grad {
                tols.grad_tol = g;
            }
            if let Some(i) = t.indep {
                tols.indep_tol = i;
            }
            if let Some(c) = t.curv {
                tols.curv_tol = c;
            }
        }
        tols
    }

    pub fn quasimode_spec(&self) -> Result<QuasimodeSpec, CliError> {
        let table = self.require(self.quasimode.as_ref(), "quasimode")?;
        let kind = match table.kind.as_str() {
            "plane_wave" => QuasimodeKind::PlaneWave,
            "cluster" => QuasimodeKind::Cluster,
            "knapp" => QuasimodeKind::Knapp,
            "tensor_joint" => QuasimodeKind::TensorJoint,
            "localized" => QuasimodeKind::Localized,
            other => {
                return Err(CliError::config(format!(
                    "unknown quasimode kind \"{other}\" (expected plane_wave, cluster, knapp, tensor_joint, or localized)"
                )))
            }
        };
        let mut spec = QuasimodeSpec::new(kind, table.lambda.unwrap_or(1.0));
        if let Some(w) = table.width {
            spec.width = w;
        }
        if let Some(r) = table.rank {
            spec.rank = r;
        }
        if let Some(inner) = &table.inner {
            spec.inner = match inner.as_str() {
                "cluster" => InnerKind::Cluster,
                "knapp" => InnerKind::Knapp,
                other => {
                    return Err(CliError::config(format!(
                        "unknown inner kind \"{other}\" (expected cluster or knapp)"
                    )))
                }
            };
        }
        if let Some(w) = table.x_width {
            spec.x_width = w;
        }
        if let Some(w) = table.xi_width {
            spec.xi_width = w;
        }
        Ok(spec)
    }

    pub fn resolved_ps(&self) -> Result<Vec<f64>, CliError> {
        let ps = self.require(self.ps.as_ref(), "ps")?;
        ps.iter().map(|p| p.resolve()).collect()
    }
}
