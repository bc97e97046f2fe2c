//! System config files (TOML) and certified configuration files (JSON).

use std::ops::Range;
use std::path::{Path, PathBuf};

use homolab::{
    BodySystemF64, CentralConfigurationF64, IntegratorSpecF64, PhaseStateF64, SolverOptions,
};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    alpha: Spanned<f64>,
    dim: Spanned<i64>,
    masses: Spanned<Vec<Spanned<f64>>>,
    positions: Option<Spanned<Vec<Spanned<Vec<f64>>>>>,
    velocities: Option<Spanned<Vec<Spanned<Vec<f64>>>>>,
    integrator: Option<Spanned<RawIntegrator>>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_step: Option<f64>,
}

/// A parsed system config. `state` is `None` when the file gives no positions.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub system: BodySystemF64,
    pub state: Option<PhaseStateF64>,
    pub integrator: IntegratorSpecF64,
    pub path: PathBuf,
}

impl SystemConfig {
    pub fn require_state(&self) -> Result<&PhaseStateF64, CliError> {
        self.state.as_ref().ok_or_else(|| CliError::Config {
            path: self.path.clone(),
            line: None,
            column: None,
            message: "this command needs `positions`".into(),
        })
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

struct Located<'a> {
    text: &'a str,
    path: &'a Path,
}

impl Located<'_> {
    fn error(&self, span: Range<usize>, message: impl Into<String>) -> CliError {
        let (line, column) = line_col(self.text, span.start);
        CliError::Config {
            path: self.path.to_path_buf(),
            line: Some(line),
            column: Some(column),
            message: message.into(),
        }
    }

    fn bodies(
        &self,
        rows: &Spanned<Vec<Spanned<Vec<f64>>>>,
        key: &str,
        n: usize,
        dim: usize,
    ) -> Result<Vec<f64>, CliError> {
        if rows.get_ref().len() != n {
            return Err(self.error(
                rows.span(),
                format!("`{key}` has {} rows but there are {n} masses", rows.get_ref().len()),
            ));
        }
        let mut flat = Vec::with_capacity(n * dim);
        for (k, row) in rows.get_ref().iter().enumerate() {
            if row.get_ref().len() != dim {
                return Err(self.error(
                    row.span(),
                    format!("`{key}` row {k} has {} entries, expected dim = {dim}", row.get_ref().len()),
                ));
            }
            if let Some(x) = row.get_ref().iter().find(|x| !x.is_finite()) {
                return Err(self.error(row.span(), format!("`{key}` row {k} contains {x}")));
            }
            flat.extend_from_slice(row.get_ref());
        }
        Ok(flat)
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<SystemConfig, CliError> {
    let loc = Located { text, path };
    let raw: RawConfig = toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => loc.error(span, e.message().to_string()),
        None => CliError::Config {
            path: path.to_path_buf(),
            line: None,
            column: None,
            message: e.message().to_string(),
        },
    })?;

    let alpha = *raw.alpha.get_ref();
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(loc.error(raw.alpha.span(), format!("alpha must be positive, got {alpha}")));
    }
    let dim = *raw.dim.get_ref();
    if dim < 1 {
        return Err(loc.error(raw.dim.span(), format!("dim must be at least 1, got {dim}")));
    }
    let dim = dim as usize;
    let masses: Vec<f64> = raw.masses.get_ref().iter().map(|m| *m.get_ref()).collect();
    if masses.len() < 2 {
        return Err(loc.error(raw.masses.span(), "at least two masses are required"));
    }
    for m in raw.masses.get_ref() {
        let v = *m.get_ref();
        if !(v.is_finite() && v > 0.0) {
            return Err(loc.error(m.span(), format!("masses must be positive, got {v}")));
        }
    }
    let n = masses.len();
    let system =
        BodySystemF64::new(masses, alpha, dim).map_err(|e| loc.error(raw.masses.span(), e.to_string()))?;

    let state = match &raw.positions {
        None => {
            if let Some(v) = &raw.velocities {
                return Err(loc.error(v.span(), "`velocities` given without `positions`"));
            }
            None
        }
        Some(p) => {
            let positions = loc.bodies(p, "positions", n, dim)?;
            let velocities = match &raw.velocities {
                Some(v) => loc.bodies(v, "velocities", n, dim)?,
                None => vec![0.0; n * dim],
            };
            let state = PhaseStateF64::new(0.0, dim, positions, velocities)
                .map_err(|e| loc.error(p.span(), e.to_string()))?;
            homolab::pairwise_deltas(&system, &state).map_err(|e| loc.error(p.span(), e.to_string()))?;
            Some(state)
        }
    };

    let mut integrator = IntegratorSpecF64::default();
    if let Some(spec) = &raw.integrator {
        let r = spec.get_ref();
        integrator.rel_tol = r.rel_tol.unwrap_or(integrator.rel_tol);
        integrator.abs_tol = r.abs_tol.unwrap_or(integrator.abs_tol);
        integrator.sample_dt = r.sample_dt.unwrap_or(integrator.sample_dt);
        integrator.max_step = r.max_step.unwrap_or(integrator.max_step);
        integrator.validate().map_err(|e| loc.error(spec.span(), e.to_string()))?;
    }

    Ok(SystemConfig {
        system,
        state,
        integrator,
        path: path.to_path_buf(),
    })
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn load_config(path: &Path) -> Result<SystemConfig, CliError> {
    parse_config(&read_text(path)?, path)
}

#[derive(Debug, Serialize)]
struct ConfigOut<'a> {
    alpha: f64,
    dim: usize,
    masses: &'a [f64],
    positions: Vec<&'a [f64]>,
    velocities: Vec<&'a [f64]>,
    integrator: RawIntegrator,
}

/// TOML text for a system and initial state; parses back to the same bits.
pub fn render_config(
    system: &BodySystemF64,
    state: &PhaseStateF64,
    integrator: &IntegratorSpecF64,
    comment: &str,
) -> Result<String, CliError> {
    let n = system.n();
    let out = ConfigOut {
        alpha: system.alpha(),
        dim: system.dim(),
        masses: system.masses(),
        positions: (0..n).map(|k| state.position(k)).collect(),
        velocities: (0..n).map(|k| state.velocity(k)).collect(),
        integrator: RawIntegrator {
            rel_tol: Some(integrator.rel_tol),
            abs_tol: Some(integrator.abs_tol),
            sample_dt: Some(integrator.sample_dt),
            max_step: Some(integrator.max_step),
        },
    };
    let body = toml::to_string(&out).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut text = String::new();
    for line in comment.lines() {
        text.push_str("# ");
        text.push_str(line);
        text.push('\n');
    }
    text.push_str(&body);
    Ok(text)
}

/// Serialized form of a certified planar central configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcFile {
    pub alpha: f64,
    pub masses: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub lambda: f64,
    pub residual_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_kind: Option<String>,
}

impl CcFile {
    pub fn from_cc(cc: &CentralConfigurationF64, seed_kind: Option<&str>) -> Self {
        Self {
            alpha: cc.system.alpha(),
            masses: cc.system.masses().to_vec(),
            positions: (0..cc.system.n()).map(|k| cc.position(k)).collect(),
            lambda: cc.lambda,
            residual_norm: cc.residual_norm,
            seed_kind: seed_kind.map(str::to_string),
        }
    }

    /// Rebuild and re-certify; the stored `lambda` and residual are not trusted.
    pub fn certify(&self, path: &Path) -> Result<CentralConfigurationF64, CliError> {
        let invalid = |message: String| CliError::Config {
            path: path.to_path_buf(),
            line: None,
            column: None,
            message,
        };
        let system = BodySystemF64::new(self.masses.clone(), self.alpha, 2).map_err(|e| invalid(e.to_string()))?;
        let flat: Vec<f64> = self.positions.iter().flatten().copied().collect();
        let tol = SolverOptions::<f64>::default().tol;
        CentralConfigurationF64::from_positions(system, flat, tol).map_err(|e| match e {
            homolab::Error::NonConvergence { residual, .. } => CliError::Numerical(format!(
                "{} is not a certified central configuration (residual {residual:e} > {tol:e})",
                path.display()
            )),
            other => invalid(other.to_string()),
        })
    }
}

pub fn parse_cc(text: &str, path: &Path) -> Result<CentralConfigurationF64, CliError> {
    let file: CcFile = serde_json::from_str(text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        line: Some(e.line()),
        column: Some(e.column()),
        message: e.to_string(),
    })?;
    file.certify(path)
}

pub fn load_cc(path: &Path) -> Result<CentralConfigurationF64, CliError> {
    parse_cc(&read_text(path)?, path)
}

/// Either input accepted by `verify`.
pub enum Input {
    Config(SystemConfig),
    Cc(CentralConfigurationF64),
}

/// `.json` files are read as configurations, anything else as a system config.
pub fn load_input(path: &Path) -> Result<Input, CliError> {
    let text = read_text(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        parse_cc(&text, path).map(Input::Cc)
    } else {
        parse_config(&text, path).map(Input::Config)
    }
}
