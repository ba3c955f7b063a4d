//! Run configuration, read from a flat TOML document.

use std::path::PathBuf;

use fracsteklov::harness::{MeshPolicy, DEFAULT_S_GRID};
use fracsteklov::kernel::QuadratureControl;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
}

fn invalid(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, msg: msg.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Constants,
    Verify,
    Solve,
    Sweep,
    Ref,
    DemoZero,
    Trace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub a: f64,
    pub b: f64,
    /// dimension for `constants`
    pub n: usize,
    pub p: f64,
    /// single s for solve, trace and demo-zero
    pub s: f64,
    /// strip width for solve; 1 − s when absent
    pub eps: Option<f64>,
    pub s_grid: Vec<f64>,
    pub radius: f64,
    pub h: f64,
    pub gamma: f64,
    pub strip_cells: usize,
    pub quad_order: usize,
    pub grading_levels: usize,
    pub rel_tol: f64,
    /// largest translate in demo-zero
    pub k_max: u32,
    pub seed: u64,
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = MeshPolicy::default();
        let q = QuadratureControl::default();
        RunConfig {
            command: None,
            a: m.a,
            b: m.b,
            n: 1,
            p: 2.0,
            s: 0.95,
            eps: None,
            s_grid: DEFAULT_S_GRID.to_vec(),
            radius: m.radius,
            h: m.h,
            gamma: m.gamma,
            strip_cells: m.strip_cells,
            quad_order: q.order,
            grading_levels: q.grading_levels,
            rel_tol: q.rel_tol,
            k_max: 20,
            seed: 42,
            threads: None,
            output_dir: PathBuf::from("results"),
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
    parse_config(&text)
}

impl RunConfig {
    pub fn policy(&self) -> MeshPolicy {
        MeshPolicy {
            a: self.a,
            b: self.b,
            radius: self.radius,
            h: self.h,
            gamma: self.gamma,
            strip_cells: self.strip_cells,
            quadrature: QuadratureControl {
                order: self.quad_order,
                grading_levels: self.grading_levels,
                rel_tol: self.rel_tol,
            },
        }
    }

    pub fn strip_width(&self) -> f64 {
        self.eps.unwrap_or(1.0 - self.s)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(invalid("p", "p must exceed 1"));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(invalid("s", "s must lie in (0, 1)"));
        }
        if self.n == 0 {
            return Err(invalid("n", "dimension must be positive"));
        }
        if !(self.a < self.b) || !self.b.is_finite() || !self.a.is_finite() {
            return Err(invalid("b", "need a < b"));
        }
        if let Some(eps) = self.eps {
            if !(eps > 0.0) {
                return Err(invalid("eps", "strip width must be positive"));
            }
        }
        if self.s_grid.is_empty() {
            return Err(invalid("s_grid", "grid is empty"));
        }
        if self.s_grid.iter().any(|&s| !(s > 0.0 && s < 1.0)) || self.s_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("s_grid", "values must increase strictly inside (0, 1)"));
        }
        if !(self.radius > 0.0) {
            return Err(invalid("radius", "collar width must be positive"));
        }
        if !(self.h > 0.0 && self.h <= 0.5 * (self.b - self.a)) {
            return Err(invalid("h", "h must lie in (0, (b - a)/2]"));
        }
        if !(self.gamma >= 1.0) {
            return Err(invalid("gamma", "grading exponent must be at least 1"));
        }
        if self.strip_cells == 0 {
            return Err(invalid("strip_cells", "need at least one cell per strip"));
        }
        if !(2..=fracsteklov::gauss::MAX_ORDER).contains(&self.quad_order) {
            return Err(invalid("quad_order", format!("order must lie in [2, {}]", fracsteklov::gauss::MAX_ORDER)));
        }
        if self.grading_levels == 0 {
            return Err(invalid("grading_levels", "need at least one level"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(invalid("rel_tol", "tolerance must lie in (0, 1)"));
        }
        if self.k_max < 3 {
            return Err(invalid("k_max", "need k_max >= 3"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads", "thread count must be positive"));
        }
        if self.command == Some(Command::Trace) && self.s * self.p <= 1.0 {
            return Err(invalid("s", format!("the trace constant needs sp > 1, got {}", self.s * self.p)));
        }
        Ok(())
    }

    /// Applies command-line overrides and validates again.
    pub fn with_overrides(mut self, p: Option<f64>, s: Option<f64>) -> Result<Self, ConfigError> {
        if let Some(p) = p {
            self.p = p;
        }
        if let Some(s) = s {
            self.s = s;
        }
        self.validate()?;
        Ok(self)
    }
}
