//! Flat `key = value` run configuration with module-namespaced keys.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::PipelineError;

/// Every recognized key with its default and meaning.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("global.seed", "0", "seed for every randomized step"),
    ("global.budget_elements", "100000", "element budget for group enumeration"),
    ("global.tol", "1e-9", "eigensolver tolerance"),
    ("pipeline.rho", "log(1+t)", "the distortion bound rho(t)"),
    ("pipeline.rounds", "2", "selection rounds"),
    ("pipeline.horizon", "1000000", "largest threshold t considered"),
    ("pipeline.family", "sl3:2:1,sl3:3:1,sl3:2:2", "family members as sl3:p:level, in index order"),
    ("pipeline.genset", "small", "generating set: small or large"),
    ("pipeline.j_cap", "16", "length cap for the shortest balanced words defining J"),
    ("distortion.frechet_dim", "8", "coordinates of the seeded Frechet embeddings"),
    ("distortion.profile_rows", "32", "source rows sampled for each profile"),
    ("wreath.factors", "S3", "toy factors of the wreath plan (C<k> or S<k>)"),
    ("wreath.radii", "1,1", "ball radii m(i), one per plan position"),
    ("wreath.cap", "64", "largest Schreier index scanned when placing"),
    ("wreath.rectifier_length", "30", "length cap for rectifier search"),
    ("wreath.state_budget", "1000000", "state budget for rectifier search"),
    ("wreath.measure_radius", "10", "ball radius for the bi-Lipschitz measurement"),
    ("wreath.ball_budget", "2000000", "element budget for balls in W"),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Config { values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect() }
    }
}

impl Config {
    /// Parses `key = value` lines over the defaults; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = Config::default();
        let mut seen = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(PipelineError::Config(format!("line {}: expected key = value", k + 1)));
            };
            let key = key.trim();
            if let Some(prev) = seen.insert(key.to_string(), k + 1) {
                return Err(PipelineError::Config(format!("line {}: {key} already set on line {prev}", k + 1)));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.to_string();
                Ok(())
            }
            None => Err(PipelineError::Config(format!("unknown key {key:?}"))),
        }
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).unwrap_or_else(|| panic!("{key} is not a configuration key"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, PipelineError> {
        let v = self.raw(key);
        v.parse().map_err(|_| PipelineError::Config(format!("{key} = {v:?} is not a valid value")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, PipelineError> {
        let v = self.raw(key);
        if v.trim().is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|x| x.trim().parse().map_err(|_| PipelineError::Config(format!("{key}: {x:?} is not a valid entry"))))
            .collect()
    }

    /// All effective values, sorted; parsing the snapshot reproduces `self`.
    pub fn snapshot(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
