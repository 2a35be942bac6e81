//! Flat experiment configuration: JSON file keys mirror the command-line flags.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::{Path, PathBuf};
use wavemaps_core::cutoff::Params;
use wavemaps_core::illposed::LacunaryProfile;
use wavemaps_core::solver::SolverConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {msg}")]
    Read { path: String, msg: String },
    #[error("config {path} is not a JSON object")]
    NotObject { path: String },
    #[error("flag {0} needs a value")]
    MissingValue(String),
    #[error("unexpected argument {0}")]
    Unexpected(String),
    #[error("{field}: {msg}")]
    Field { field: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GenPath,
    Hhl,
    Solve,
    Converge,
    Illposed,
    Norms,
}

impl Command {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gen-path" => Self::GenPath,
            "hhl" => Self::Hhl,
            "solve" => Self::Solve,
            "converge" => Self::Converge,
            "illposed" => Self::Illposed,
            "norms" => Self::Norms,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::GenPath => "gen-path",
            Self::Hhl => "hhl",
            Self::Solve => "solve",
            Self::Converge => "converge",
            Self::Illposed => "illposed",
            Self::Norms => "norms",
        }
    }
}

/// Every setting of every command, with defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dim: usize,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    pub tau: f64,
    pub x0: f64,
    pub theta: f64,
    pub s: f64,
    pub r: f64,
    pub delta: f64,
    pub eta: f64,
    pub sigma: f64,
    pub null_points: usize,
    pub null_half_length: f64,
    pub data_refine: usize,
    pub substeps: usize,
    pub global_points: usize,
    pub picard_tol: f64,
    pub max_iter: usize,
    pub time_cutoff: Option<f64>,
    pub oracle_renormalize: bool,
    pub t_samples: usize,
    pub patch_check: bool,
    /// keep every `stride`-th null-grid node in the solution CSV
    pub stride: usize,
    pub m_min: u64,
    pub m_max: u64,
    pub shifts: usize,
    pub with_lemma: bool,
    pub base: u32,
    pub gap: u32,
    pub kappa0: u32,
    pub kappa_max: u32,
    pub t: f64,
    /// defaults to t/100
    pub eps_loc: Option<f64>,
    /// defaults to $WAVEMAPS_OUT, then ./wavemaps-out
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = Params::solver_defaults();
        let sc = SolverConfig::default();
        Self {
            seed: sc.seed,
            dim: sc.dim,
            eps: sc.eps,
            eps_list: (4..=10).map(|i| 2f64.powi(-i)).collect(),
            tau: sc.tau,
            x0: sc.x0,
            theta: sc.theta,
            s: p.s,
            r: p.r,
            delta: p.delta,
            eta: p.eta,
            sigma: p.sigma,
            null_points: sc.null_points,
            null_half_length: sc.null_half_length,
            data_refine: sc.data_refine,
            substeps: sc.substeps,
            global_points: sc.global_points,
            picard_tol: sc.picard_tol,
            max_iter: sc.max_iter,
            time_cutoff: sc.time_cutoff,
            oracle_renormalize: sc.oracle_renormalize,
            t_samples: 9,
            patch_check: true,
            stride: 8,
            m_min: 16,
            m_max: 1024,
            shifts: 3,
            with_lemma: false,
            base: 2,
            gap: 3,
            kappa0: 4,
            kappa_max: 9,
            t: 1.0,
            eps_loc: None,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn params(&self) -> Params {
        Params {
            s: self.s,
            r: self.r,
            delta: self.delta,
            eta: self.eta,
            sigma: self.sigma,
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            dim: self.dim,
            seed: self.seed,
            eps: self.eps,
            tau: self.tau,
            x0: self.x0,
            theta: self.theta,
            params: self.params(),
            null_points: self.null_points,
            null_half_length: self.null_half_length,
            data_refine: self.data_refine,
            substeps: self.substeps,
            global_points: self.global_points,
            picard_tol: self.picard_tol,
            max_iter: self.max_iter,
            time_cutoff: self.time_cutoff,
            oracle_renormalize: self.oracle_renormalize,
        }
    }

    pub fn eps_loc(&self) -> f64 {
        self.eps_loc.unwrap_or(self.t / 100.0)
    }

    pub fn profile(&self) -> Result<LacunaryProfile, ConfigError> {
        LacunaryProfile::new(self.base, self.gap, self.kappa0, self.kappa0, self.eps_loc()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn column_scales(&self) -> Vec<u64> {
        let mut v = Vec::new();
        let mut m = self.m_min.max(1).next_power_of_two();
        while m <= self.m_max {
            v.push(m);
            m *= 2;
        }
        v
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("WAVEMAPS_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("wavemaps-out"))
    }

    /// Constraints shared by all commands plus those of `command`.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        let field = |f: &str, msg: String| ConfigError::Field {
            field: f.to_string(),
            msg,
        };
        self.params().validate().map_err(|m| {
            let f = m.split_whitespace().next().unwrap_or("params").to_string();
            field(&f, m)
        })?;
        if !(self.eps > 0.0) {
            return Err(field("eps", format!("must be positive, got {}", self.eps)));
        }
        if !self.global_points.is_power_of_two() || self.global_points < 64 {
            return Err(field("global-points", format!("must be a power of two >= 64, got {}", self.global_points)));
        }
        match command {
            Command::Solve | Command::Converge => {
                self.solver().validate().map_err(|e| field("solver", e.to_string()))?;
                if self.stride == 0 {
                    return Err(field("stride", "must be positive".into()));
                }
                if command == Command::Converge {
                    if self.eps_list.len() < 2 {
                        return Err(field("eps-list", "needs at least two values".into()));
                    }
                    if self.eps_list.windows(2).any(|w| !(w[1] <= w[0])) || self.eps_list.iter().any(|&e| !(e > 0.0)) {
                        return Err(field("eps-list", "must be positive and non-increasing".into()));
                    }
                }
            }
            Command::Norms => {
                if self.eps_list.is_empty() || self.eps_list.iter().any(|&e| !(e > 0.0)) {
                    return Err(field("eps-list", "must be non-empty and positive".into()));
                }
            }
            Command::Hhl => {
                if self.column_scales().len() < 2 {
                    return Err(field("m-max", "the column needs at least two dyadic scales in [m-min, m-max]".into()));
                }
            }
            Command::Illposed => {
                self.profile()?;
                if self.kappa_max <= self.kappa0 {
                    return Err(field("kappa-max", format!("must exceed kappa0 = {}", self.kappa0)));
                }
                if !(self.t > 0.0) {
                    return Err(field("t", format!("must be positive, got {}", self.t)));
                }
            }
            Command::GenPath => {}
        }
        Ok(())
    }
}

/// A flag value: JSON when it parses, a list for comma-separated numbers, a string otherwise.
fn flag_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    if raw.contains(',') {
        let parts: Vec<Value> = raw.split(',').map(|p| flag_value(p.trim())).collect();
        return Value::Array(parts);
    }
    Value::String(raw.to_string())
}

fn read_file(path: &Path) -> Result<Map<String, Value>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let v: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(ConfigError::NotObject {
            path: path.display().to_string(),
        }),
    }
}

/// Parse `[--config path] [--flag value ...]`; flags override file values.
pub fn load(args: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut file = None;
    let mut flags = Map::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let key = a.strip_prefix("--").ok_or_else(|| ConfigError::Unexpected(a.clone()))?;
        let val = it.next().ok_or_else(|| ConfigError::MissingValue(a.clone()))?;
        if key == "config" {
            file = Some(PathBuf::from(val));
        } else if key == "out" {
            flags.insert(key.to_string(), Value::String(val.clone()));
        } else {
            flags.insert(key.to_string(), flag_value(val));
        }
    }
    let mut merged = match &file {
        Some(p) => read_file(p)?,
        None => Map::new(),
    };
    merged.extend(flags);
    serde_path_to_error::deserialize(Value::Object(merged)).map_err(|e| ConfigError::Field {
        field: e.path().to_string(),
        msg: e.inner().to_string(),
    })
}
