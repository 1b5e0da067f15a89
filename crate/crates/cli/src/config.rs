//! Run configuration: one TOML file with nested sections, with a handful of
//! command-line flags overriding file keys.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use tshelm::expr::{parse_expr, VarSet};
use tshelm::hamiltonian::ExprHamiltonian;
use tshelm::helmholtz::VectorField;
use tshelm::timescale::{parse_literal, TimeScale};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Time-scale literal, e.g. `union: [0,1]; points: 1.5 2; dense_step: 0.001`.
    pub scale: Option<String>,
    /// Phase-space dimension d (fields live on R^d x R^d).
    pub dimension: Option<usize>,
    pub seed: Option<u64>,
    pub field: Option<FieldSection>,
    pub hamiltonian: Option<HamiltonianSection>,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub reconstruct: ReconstructSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub xq: Vec<String>,
    pub xp: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSection {
    pub expr: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    /// Uniform phase box `[lo, hi]` applied to every coordinate.
    pub r#box: [f64; 2],
    pub samples: usize,
    pub tol: Option<f64>,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection { r#box: [-1.0, 1.0], samples: 128, tol: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructSection {
    pub nodes: usize,
    /// Lattice points per phase axis in the sampled-H artifact.
    pub grid: usize,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        ReconstructSection { nodes: 32, grid: 9 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub q0: Vec<f64>,
    pub p0: Vec<f64>,
    /// "derivative" or "integral".
    pub form: String,
    /// Integral-form constants; default to the values induced by (q0, p0).
    pub cq: Option<Vec<f64>>,
    pub cp: Option<Vec<f64>>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub picard_max_sweeps: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            q0: vec![1.0],
            p0: vec![0.0],
            form: "derivative".to_string(),
            cq: None,
            cp: None,
            newton_tol: 1e-12,
            newton_max_iter: 50,
            picard_max_sweeps: 200,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// "json" or "csv"; selects the table format where both make sense.
    pub format: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), format: "json".to_string() }
    }
}

/// Flag overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub scale: Option<String>,
}

/// Fully resolved configuration.
pub struct RunConfig {
    pub file: FileConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub format: String,
}

pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config file {}", p.display()))?;
            toml::from_str::<FileConfig>(&text)
                .with_context(|| format!("invalid config file {}", p.display()))?
        }
        None => FileConfig::default(),
    };
    if let Some(scale) = &overrides.scale {
        file.scale = Some(scale.clone());
    }
    if let Some(tol) = overrides.tol {
        file.check.tol = Some(tol);
    }
    let seed = overrides.seed.or(file.seed).unwrap_or(42);
    let out_dir = overrides.out.clone().unwrap_or_else(|| file.output.dir.clone());
    let format = overrides
        .format
        .clone()
        .unwrap_or_else(|| file.output.format.clone());
    if format != "json" && format != "csv" {
        bail!("--format must be `json` or `csv`, got `{format}`");
    }
    Ok(RunConfig { file, seed, out_dir, format })
}

impl RunConfig {
    pub fn scale(&self) -> Result<Arc<TimeScale<f64>>> {
        let literal = self
            .file
            .scale
            .as_deref()
            .context("no time scale given: set `scale` in the config or pass --scale")?;
        let scale = parse_literal::<f64>(literal)
            .with_context(|| format!("invalid time-scale literal `{literal}`"))?;
        Ok(Arc::new(scale))
    }

    pub fn dimension(&self) -> Result<usize> {
        let d = self.file.dimension.unwrap_or(1);
        if d == 0 {
            bail!("dimension must be at least 1");
        }
        Ok(d)
    }

    pub fn field(&self) -> Result<Arc<VectorField<f64>>> {
        let d = self.dimension()?;
        let section = self
            .file
            .field
            .as_ref()
            .context("this command needs a [field] section with `xq` and `xp`")?;
        if section.xq.len() != d || section.xp.len() != d {
            bail!(
                "field has {} xq and {} xp components but dimension is {d}",
                section.xq.len(),
                section.xp.len()
            );
        }
        let parse_all = |srcs: &[String]| -> Result<Vec<tshelm::expr::Expr>> {
            srcs.iter()
                .map(|s| {
                    let e = parse_expr(s, VarSet::Phase { dim: d })
                        .with_context(|| format!("in field expression `{s}`"))?;
                    if e.uses_time() {
                        bail!("field expression `{s}` must not depend on t");
                    }
                    Ok(e)
                })
                .collect()
        };
        let xq = parse_all(&section.xq)?;
        let xp = parse_all(&section.xp)?;
        Ok(Arc::new(VectorField::from_exprs(d, xq, xp).map_err(anyhow::Error::msg)?))
    }

    pub fn hamiltonian(&self) -> Result<Option<ExprHamiltonian>> {
        let d = self.dimension()?;
        match &self.file.hamiltonian {
            None => Ok(None),
            Some(h) => {
                let expr = parse_expr(&h.expr, VarSet::Phase { dim: d })
                    .with_context(|| format!("in hamiltonian expression `{}`", h.expr))?;
                if expr.uses_time() {
                    bail!("hamiltonian `{}` must not depend on t", h.expr);
                }
                Ok(Some(ExprHamiltonian::new(d, expr)))
            }
        }
    }
}
