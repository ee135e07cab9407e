//! Config-file loading: TOML with fixed sections, unknown keys rejected,
//! all numeric constraints enforced at load.

use serde::Deserialize;

use porodiff::grid::{FieldSet, Grid};
use porodiff::network::{GeneralSystem, ReactionSystem};
use porodiff::solver::{Scheme, SimConfig, SystemModel};

use crate::expr::Expr;

/// Config/domain error; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum SystemSection {
    /// Single reversible mass-action reaction.
    #[serde(rename = "R")]
    Reversible {
        alpha: Vec<f64>,
        beta: Vec<f64>,
        d: Vec<f64>,
        h: Vec<f64>,
        m: Vec<f64>,
        p: Vec<f64>,
        #[serde(default = "one")]
        k_f: f64,
        #[serde(default = "one")]
        k_b: f64,
    },
    /// Pure porous-medium diffusion (reaction maps are code, not config).
    #[serde(rename = "general")]
    General { m: Vec<f64>, d: Vec<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub cells: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub a: Option<Vec<String>>,
    pub b: Option<Vec<String>>,
    pub u: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    pub scheme: Option<String>,
    pub cfl_safety: Option<f64>,
    pub sample_interval: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub p_norms: Option<Vec<f64>>,
    pub snapshots: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemSection,
    pub grid: GridSection,
    pub initial: InitialSection,
    pub run: RunSection,
    pub diagnostics: Option<DiagnosticsSection>,
}

impl ConfigFile {
    /// Parses the document; TOML errors carry line/column positions.
    pub fn parse(text: &str) -> Result<ConfigFile, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("config parse error: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<ConfigFile, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn build_grid(&self) -> Result<Grid, ConfigError> {
        let cells = &self.grid.cells;
        let grid = match (self.grid.dim, cells.len()) {
            (1, 1) => Grid::line(cells[0]),
            (2, 2) => Grid::rectangle(cells[0], cells[1]),
            (d, n) => {
                return Err(ConfigError(format!(
                    "grid dim {d} needs exactly {d} cell counts, got {n} (dim must be 1 or 2)"
                )))
            }
        };
        grid.map_err(|e| ConfigError(e.to_string()))
    }

    pub fn build_system(&self) -> Result<SystemModel, ConfigError> {
        match &self.system {
            SystemSection::Reversible {
                alpha,
                beta,
                d,
                h,
                m,
                p,
                k_f,
                k_b,
            } => {
                let sys = ReactionSystem::with_rates(
                    alpha.clone(),
                    beta.clone(),
                    d.clone(),
                    h.clone(),
                    m.clone(),
                    p.clone(),
                    *k_f,
                    *k_b,
                )
                .map_err(|e| ConfigError(e.to_string()))?;
                Ok(SystemModel::Reversible(sys))
            }
            SystemSection::General { m, d } => {
                let sys = GeneralSystem::pure_diffusion(m.clone(), d.clone())
                    .map_err(|e| ConfigError(e.to_string()))?;
                Ok(SystemModel::General(sys))
            }
        }
    }

    fn initial_expressions(&self) -> Result<Vec<(String, &str)>, ConfigError> {
        let mut list = Vec::new();
        match &self.system {
            SystemSection::Reversible { alpha, beta, .. } => {
                let a = self.initial.a.as_ref().ok_or_else(|| {
                    ConfigError("reversible systems need [initial] key `a`".into())
                })?;
                let b = self.initial.b.as_ref().ok_or_else(|| {
                    ConfigError("reversible systems need [initial] key `b`".into())
                })?;
                if self.initial.u.is_some() {
                    return Err(ConfigError(
                        "[initial] key `u` is for general systems".into(),
                    ));
                }
                if a.len() != alpha.len() || b.len() != beta.len() {
                    return Err(ConfigError(format!(
                        "[initial] needs {} `a` and {} `b` expressions, got {} and {}",
                        alpha.len(),
                        beta.len(),
                        a.len(),
                        b.len()
                    )));
                }
                for (i, e) in a.iter().enumerate() {
                    list.push((format!("a_{}", i + 1), e.as_str()));
                }
                for (j, e) in b.iter().enumerate() {
                    list.push((format!("b_{}", j + 1), e.as_str()));
                }
            }
            SystemSection::General { m, .. } => {
                let u =
                    self.initial.u.as_ref().ok_or_else(|| {
                        ConfigError("general systems need [initial] key `u`".into())
                    })?;
                if self.initial.a.is_some() || self.initial.b.is_some() {
                    return Err(ConfigError(
                        "[initial] keys `a`/`b` are for reversible systems".into(),
                    ));
                }
                if u.len() != m.len() {
                    return Err(ConfigError(format!(
                        "[initial] needs {} `u` expressions, got {}",
                        m.len(),
                        u.len()
                    )));
                }
                for (s, e) in u.iter().enumerate() {
                    list.push((format!("u_{}", s + 1), e.as_str()));
                }
            }
        }
        Ok(list)
    }

    /// Evaluates the per-species initial expressions at the cell centers.
    pub fn build_initial(&self, grid: &Grid) -> Result<FieldSet, ConfigError> {
        let mut fields = Vec::new();
        for (label, src) in self.initial_expressions()? {
            let expr = Expr::parse(src)
                .map_err(|e| ConfigError(format!("initial condition for {label}: {e}")))?;
            let mut field = Vec::with_capacity(grid.cells());
            for idx in 0..grid.cells() {
                let (x, y) = grid.cell_center(idx);
                let v = expr.eval(x, y);
                if !v.is_finite() || v < 0.0 {
                    return Err(ConfigError(format!(
                        "initial condition for {label} evaluates to {v} at ({x}, {y}); \
                         values must be finite and nonnegative"
                    )));
                }
                field.push(v);
            }
            fields.push(field);
        }
        FieldSet::from_fields(fields).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn build_sim_config(&self) -> Result<SimConfig, ConfigError> {
        let grid = self.build_grid()?;
        let system = self.build_system()?;
        let initial = self.build_initial(&grid)?;
        let mut cfg = SimConfig::new(system, grid, initial, self.run.t_end);
        if let Some(scheme) = &self.run.scheme {
            cfg.scheme = match scheme.as_str() {
                "explicit" => Scheme::Explicit,
                "semi-implicit" => Scheme::SemiImplicit,
                other => {
                    return Err(ConfigError(format!(
                        "unknown scheme `{other}` (use \"explicit\" or \"semi-implicit\")"
                    )))
                }
            };
        }
        if let Some(cfl) = self.run.cfl_safety {
            cfg.cfl_safety = cfl;
        }
        if let Some(interval) = self.run.sample_interval {
            cfg.sample_interval = interval;
        }
        if let Some(eps) = self.run.epsilon {
            cfg.epsilon = eps;
        }
        // Snapshots default on: `simulate` emits trajectory.csv from them.
        cfg.store_snapshots = true;
        if let Some(diag) = &self.diagnostics {
            if let Some(ps) = &diag.p_norms {
                cfg.p_norms = ps.clone();
            }
            cfg.store_snapshots = diag.snapshots.unwrap_or(true);
        }
        validate_run(&cfg)?;
        Ok(cfg)
    }
}

fn validate_run(cfg: &SimConfig) -> Result<(), ConfigError> {
    if !(cfg.t_end >= 0.0) {
        return Err(ConfigError(format!(
            "t_end must be >= 0, got {}",
            cfg.t_end
        )));
    }
    if !(cfg.cfl_safety > 0.0 && cfg.cfl_safety <= 1.0) {
        return Err(ConfigError(format!(
            "cfl_safety must lie in (0,1], got {}",
            cfg.cfl_safety
        )));
    }
    if !(cfg.sample_interval > 0.0) {
        return Err(ConfigError(format!(
            "sample_interval must be > 0, got {}",
            cfg.sample_interval
        )));
    }
    if !(cfg.epsilon >= 0.0) {
        return Err(ConfigError(format!(
            "epsilon must be >= 0, got {}",
            cfg.epsilon
        )));
    }
    for &p in &cfg.p_norms {
        if p.is_nan() || p < 1.0 {
            return Err(ConfigError(format!(
                "diagnostics p_norms entries must be >= 1, got {p}"
            )));
        }
    }
    Ok(())
}
