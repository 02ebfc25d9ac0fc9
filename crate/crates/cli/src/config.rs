//! Flat `key = value` run configuration with `#` comments.
//!
//! `parse(render(c))` reproduces `c` exactly; unknown keys are rejected with
//! the offending line number so typos surface instead of silently defaulting.

use crate::scenario::Scenario;
use acflow_core::ContinuityVariant;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderChoice {
    First,
    Second,
    Variable,
}

impl OrderChoice {
    pub fn parse(s: &str) -> Option<OrderChoice> {
        match s {
            "1" => Some(OrderChoice::First),
            "2" => Some(OrderChoice::Second),
            "var" => Some(OrderChoice::Variable),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OrderChoice::First => "1",
            OrderChoice::Second => "2",
            OrderChoice::Variable => "var",
        }
    }
}

pub fn continuity_name(v: ContinuityVariant) -> &'static str {
    match v {
        ContinuityVariant::GeometricAverage => "ga",
        ContinuityVariant::Min => "min",
    }
}

pub fn parse_continuity(s: &str) -> Option<ContinuityVariant> {
    match s {
        "ga" => Some(ContinuityVariant::GeometricAverage),
        "min" => Some(ContinuityVariant::Min),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub nx: usize,
    pub ny: usize,
    pub tol_m: f64,
    pub tol_c: f64,
    pub continuity: ContinuityVariant,
    pub order: OrderChoice,
    pub k0: f64,
    pub eps0: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    /// Overrides the scenario's own horizon when set.
    pub t_final: Option<f64>,
    pub out: Option<PathBuf>,
    pub audit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::Manufactured,
            nx: 32,
            ny: 32,
            tol_m: 1e-3,
            tol_c: 1e-3,
            continuity: ContinuityVariant::GeometricAverage,
            order: OrderChoice::Second,
            k0: 1e-2,
            eps0: 1e-4,
            eps_min: 1e-8,
            eps_max: 1e-1,
            t_final: None,
            out: None,
            audit: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: bad value for `{key}`: `{value}`")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("could not read config: {0}")]
    Io(#[from] std::io::Error),
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line,
                text: content.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = || ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            };
            match key {
                "scenario" => cfg.scenario = Scenario::parse(value).ok_or_else(bad)?,
                "nx" => cfg.nx = value.parse().map_err(|_| bad())?,
                "ny" => cfg.ny = value.parse().map_err(|_| bad())?,
                "tol_m" => cfg.tol_m = value.parse().map_err(|_| bad())?,
                "tol_c" => cfg.tol_c = value.parse().map_err(|_| bad())?,
                "continuity" => cfg.continuity = parse_continuity(value).ok_or_else(bad)?,
                "order" => cfg.order = OrderChoice::parse(value).ok_or_else(bad)?,
                "k0" => cfg.k0 = value.parse().map_err(|_| bad())?,
                "eps0" => cfg.eps0 = value.parse().map_err(|_| bad())?,
                "eps_min" => cfg.eps_min = value.parse().map_err(|_| bad())?,
                "eps_max" => cfg.eps_max = value.parse().map_err(|_| bad())?,
                "t_final" => cfg.t_final = Some(value.parse().map_err(|_| bad())?),
                "out" => cfg.out = Some(PathBuf::from(value)),
                "audit" => cfg.audit = value.parse().map_err(|_| bad())?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("scenario = {}\n", self.scenario.name()));
        s.push_str(&format!("nx = {}\n", self.nx));
        s.push_str(&format!("ny = {}\n", self.ny));
        s.push_str(&format!("tol_m = {:e}\n", self.tol_m));
        s.push_str(&format!("tol_c = {:e}\n", self.tol_c));
        s.push_str(&format!("continuity = {}\n", continuity_name(self.continuity)));
        s.push_str(&format!("order = {}\n", self.order.name()));
        s.push_str(&format!("k0 = {:e}\n", self.k0));
        s.push_str(&format!("eps0 = {:e}\n", self.eps0));
        s.push_str(&format!("eps_min = {:e}\n", self.eps_min));
        s.push_str(&format!("eps_max = {:e}\n", self.eps_max));
        if let Some(t) = self.t_final {
            s.push_str(&format!("t_final = {t:e}\n"));
        }
        if let Some(out) = &self.out {
            s.push_str(&format!("out = {}\n", out.display()));
        }
        s.push_str(&format!("audit = {}\n", self.audit));
        s
    }
}
