//! Experiment configuration: flat TOML keys, each grid key a scalar or a list.

use crate::bounds::Scenario;
use crate::error::{Error, Result};
use crate::model::Params;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Grid<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Grid::One(v) => vec![v.clone()],
            Grid::Many(v) => v.clone(),
        }
    }
}

fn one<T>(v: T) -> Grid<T> {
    Grid::One(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_n")]
    pub n: Grid<usize>,
    #[serde(default = "default_k")]
    pub k: Grid<usize>,
    #[serde(default = "default_delta")]
    pub delta: Grid<usize>,
    #[serde(default = "default_p")]
    pub p: Grid<f64>,
    #[serde(default = "default_q")]
    pub q: Grid<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: Grid<f64>,
    /// Omitted: the scenario's sufficient size, capped at n.
    #[serde(default)]
    pub s_size: Option<Grid<usize>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Label CSV used as the fixed ground truth of worst-case scenarios.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Separation used in place of the measured one when computing the sample size.
    #[serde(default)]
    pub alpha_override: Option<f64>,
    /// Fraction of n placed in each cluster alone for planted worst-case instances.
    #[serde(default = "default_exclusive_fraction")]
    pub exclusive_fraction: f64,
    /// Extra resampling attempts for the direct algorithm after a basis failure.
    #[serde(default)]
    pub retries: usize,
}

fn default_n() -> Grid<usize> {
    one(1000)
}
fn default_k() -> Grid<usize> {
    one(6)
}
fn default_delta() -> Grid<usize> {
    one(2)
}
fn default_p() -> Grid<f64> {
    one(0.5)
}
fn default_q() -> Grid<f64> {
    one(0.0)
}
fn default_sigma() -> Grid<f64> {
    one(1.0)
}
fn default_trials() -> usize {
    1
}
fn default_epsilon() -> f64 {
    1.0
}
fn default_exclusive_fraction() -> f64 {
    0.012
}

/// One parameter combination of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub n: usize,
    pub k: usize,
    pub delta: usize,
    pub p: f64,
    pub q: f64,
    pub sigma: f64,
    pub s_size: Option<usize>,
}

impl GridPoint {
    pub fn params(&self, epsilon: f64) -> Params {
        Params { n: self.n, k: self.k, delta: self.delta, p: self.p, q: self.q, sigma: self.sigma, epsilon, ..Default::default() }
    }
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario) -> Self {
        ExperimentConfig {
            scenario,
            n: default_n(),
            k: default_k(),
            delta: default_delta(),
            p: default_p(),
            q: default_q(),
            sigma: default_sigma(),
            s_size: None,
            trials: 1,
            seed: 0,
            out: None,
            dataset: None,
            epsilon: 1.0,
            alpha_override: None,
            exclusive_fraction: default_exclusive_fraction(),
            retries: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidParams(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::InvalidParams(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A TOML document (possibly empty) with `key = value` overrides on top. Override values
    /// containing commas become lists; numbers and booleans are recognised.
    pub fn load(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = match file {
            Some(t) => t.parse().map_err(|e: toml::de::Error| Error::InvalidParams(e.to_string()))?,
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            table.insert(k.clone(), override_value(k, v));
        }
        Self::from_table(table)
    }

    /// Grid in the order n, k, delta, p, q, sigma, s_size, the last varying fastest.
    pub fn points(&self) -> Vec<GridPoint> {
        let sizes: Vec<Option<usize>> = match &self.s_size {
            Some(g) => g.values().into_iter().map(Some).collect(),
            None => vec![None],
        };
        let mut out = Vec::new();
        for n in self.n.values() {
            for k in self.k.values() {
                for delta in self.delta.values() {
                    for p in self.p.values() {
                        for q in self.q.values() {
                            for sigma in self.sigma.values() {
                                for &s_size in &sizes {
                                    out.push(GridPoint { n, k, delta, p, q, sigma, s_size });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParams("trials must be at least 1".into()));
        }
        let points = self.points();
        if points.is_empty() {
            return Err(Error::InvalidParams("parameter grid is empty".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParams("epsilon must be positive".into()));
        }
        if let Some(a) = self.alpha_override {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::InvalidParams(format!("alpha_override = {a} outside (0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.exclusive_fraction) {
            return Err(Error::InvalidParams("exclusive_fraction outside [0, 1]".into()));
        }
        if self.dataset.is_some() && !matches!(self.scenario, Scenario::WorstCase | Scenario::WorstCaseDelta2) {
            return Err(Error::InvalidParams("a dataset ground truth is only supported for worst-case scenarios".into()));
        }
        for pt in &points {
            if self.dataset.is_none() {
                pt.params(self.epsilon).validate()?;
            } else if !(0.0..0.5).contains(&pt.q) {
                return Err(Error::InvalidParams(format!("q = {} outside [0, 0.5)", pt.q)));
            }
            if pt.s_size == Some(0) {
                return Err(Error::InvalidParams("s_size must be positive".into()));
            }
        }
        Ok(())
    }
}

fn scalar(v: &str) -> toml::Value {
    let v = v.trim();
    if let Ok(i) = v.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = v.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = v.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(v.to_string())
    }
}

fn override_value(key: &str, v: &str) -> toml::Value {
    match key {
        "scenario" | "out" | "dataset" => toml::Value::String(v.to_string()),
        _ if v.contains(',') => toml::Value::Array(v.split(',').map(scalar).collect()),
        _ => scalar(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_scalars_and_lists() {
        let cfg = ExperimentConfig::from_toml(
            "scenario = \"quantized-uniform\"\nn = [500, 1000]\nk = 8\ndelta = 2\nq = [0.0, 0.1]\ns_size = 400\ntrials = 3\nseed = 7\n",
        )
        .unwrap();
        let pts = cfg.points();
        assert_eq!(pts.len(), 4);
        assert_eq!((pts[1].n, pts[1].q), (500, 0.1));
        assert_eq!(pts[0].s_size, Some(400));
    }

    #[test]
    fn overrides_replace_file_values() {
        let over = vec![("q".to_string(), "0,0.05,0.1".to_string()), ("trials".to_string(), "2".to_string())];
        let cfg = ExperimentConfig::load(Some("scenario = \"quantized-uniform\"\nq = 0.2\n"), &over).unwrap();
        assert_eq!(cfg.q, Grid::Many(vec![0.0, 0.05, 0.1]));
        assert_eq!(cfg.trials, 2);
        let cfg = ExperimentConfig::load(None, &[("scenario".into(), "worst-case".into()), ("n".into(), "300".into())]).unwrap();
        assert_eq!(cfg.n, Grid::One(300));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml("scenario = \"direct-uniform\"\ntrials = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("scenario = \"direct-uniform\"\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("scenario = \"nope\"\n").is_err());
        assert!(ExperimentConfig::from_toml("scenario = \"direct-uniform\"\nn = []\n").is_err());
        assert!(ExperimentConfig::from_toml("scenario = \"direct-uniform\"\ndelta = 9\nk = 4\n").is_err());
    }
}
