use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Method;
use crate::synth::CampaignConfig;
use crate::trainer::TrainConfig;

/// Everything an experiment run needs. Every field has a default, so an
/// empty file is a valid config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_users: usize,
    pub n_test: usize,
    pub unbiased_frac: f64,
    pub methods: Vec<String>,
    pub baseline: String,
    pub out_dir: PathBuf,
    /// Per-capita allocation budget, in currency.
    pub budget: f64,
    /// Unbiased fractions visited by the sweep.
    pub fractions: Vec<f64>,
    /// Seeds averaged per fraction in the sweep.
    pub sweep_seeds: Vec<u64>,
    pub campaign: CampaignConfig,
    pub train: TrainConfig,
    /// Per-method overrides layered on top of `train`.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub method_train: BTreeMap<String, toml::Table>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_users: 100_000,
            n_test: 20_000,
            unbiased_frac: 0.05,
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            baseline: Method::SbbmU.name().to_string(),
            out_dir: PathBuf::from("out"),
            budget: 3.0,
            fractions: vec![0.01, 0.05, 0.1, 0.2],
            sweep_seeds: vec![1, 2, 3],
            campaign: CampaignConfig::default(),
            train: TrainConfig::default(),
            method_train: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        let methods = self.method_list()?;
        let baseline: Method = self
            .baseline
            .parse()
            .map_err(|_| Error::Config(format!("unknown baseline `{}`", self.baseline)))?;
        if !methods.contains(&baseline) {
            return Err(Error::Config(format!(
                "baseline `{}` is not in the method list",
                self.baseline
            )));
        }
        for key in self.method_train.keys() {
            key.parse::<Method>()
                .map_err(|_| Error::Config(format!("override for unknown method `{key}`")))?;
        }
        if self.n_users == 0 || self.n_test == 0 {
            return Err(Error::Config("n_users and n_test must be positive".into()));
        }
        if !(self.unbiased_frac > 0.0 && self.unbiased_frac < 1.0) {
            return Err(Error::Config("unbiased_frac must lie in (0, 1)".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(Error::Config(format!("sweep fraction {f} outside (0, 1)")));
        }
        if self.sweep_seeds.is_empty() {
            return Err(Error::Config("sweep_seeds is empty".into()));
        }
        self.train
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn method_list(&self) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for name in &self.methods {
            let m: Method = name
                .parse()
                .map_err(|_| Error::Config(format!("unknown method `{name}`")))?;
            if out.contains(&m) {
                return Err(Error::Config(format!("method `{name}` listed twice")));
            }
            out.push(m);
        }
        Ok(out)
    }

    pub fn baseline_method(&self) -> Result<Method> {
        self.baseline
            .parse()
            .map_err(|_| Error::Config(format!("unknown baseline `{}`", self.baseline)))
    }

    /// Training config for one method: `train`, then that method's overrides,
    /// with the run seed applied.
    pub fn train_config(&self, method: Method, seed: u64) -> Result<TrainConfig> {
        let mut cfg = match self.method_train.get(method.name()) {
            None => self.train.clone(),
            Some(over) => {
                let mut base =
                    toml::Table::try_from(&self.train).map_err(|e| Error::Config(e.to_string()))?;
                for (k, v) in over {
                    base.insert(k.clone(), v.clone());
                }
                base.try_into().map_err(|e: toml::de::Error| {
                    Error::Config(format!("[method_train.{method}]: {e}"))
                })?
            }
        };
        cfg.seed = seed;
        cfg.validate()
            .map_err(|e| Error::Config(format!("{method}: {e}")))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(
            ExperimentConfig::from_toml("").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn round_trip_and_overrides() {
        let text = r#"
            seed = 4
            methods = ["sbbm_u", "pcan"]
            [train]
            batch_size = 64
            [method_train.pcan]
            lr_gen = 0.001
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let p = cfg.train_config(Method::Pcan, 9).unwrap();
        assert_eq!((p.lr_gen, p.batch_size, p.seed), (0.001, 64, 9));
        let u = cfg.train_config(Method::SbbmU, 9).unwrap();
        assert_eq!(u.lr_gen, 1e-4);
    }

    #[test]
    fn bad_configs_are_rejected() {
        for text in [
            "methods = []",
            "methods = [\"pcan\"]",
            "baseline = \"nope\"",
            "unbiased_frac = 1.0",
            "bogus = 3",
            "[method_train.nope]\nlr_gen = 1.0",
            "[train]\nn_w = 0",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }
}
