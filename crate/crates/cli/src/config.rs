use filica_core::simgen::ALLOWED_PCTS;
use filica_core::{FiLicaConfig, Method, Setting};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Invalid or unreadable experiment configuration (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub settings: Vec<Setting>,
    pub missing_pcts: Vec<f64>,
    pub n_replicates: usize,
    pub methods: Vec<Method>,
    #[serde(rename = "L")]
    pub n_components: usize,
    /// Engine budget for oracle, complete-case and zero-fill fits.
    pub lica_iters: usize,
    /// Engine budget for each refit inside the full-information loop.
    pub fi_lica_iters: usize,
    pub fi_updates: usize,
    pub tol_rel: f64,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    pub parallelism: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            settings: Setting::ALL.to_vec(),
            missing_pcts: vec![0.05, 0.10, 0.20],
            n_replicates: 100,
            methods: Method::ALL.to_vec(),
            n_components: 5,
            lica_iters: 1500,
            fi_lica_iters: 1000,
            fi_updates: 20,
            tol_rel: 1e-3,
            base_seed: 0,
            out_dir: PathBuf::from("results"),
            parallelism: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError(msg));
        if self.settings.is_empty() {
            return fail("settings must not be empty".into());
        }
        if self.methods.is_empty() {
            return fail("methods must not be empty".into());
        }
        let only_oracle = self.methods.iter().all(|&m| m == Method::Oracle);
        if self.missing_pcts.is_empty() && !only_oracle {
            return fail("missing_pcts must not be empty unless only the oracle runs".into());
        }
        for &p in &self.missing_pcts {
            if p == 0.0 || !ALLOWED_PCTS.iter().any(|a| (a - p).abs() < 1e-12) {
                return fail(format!("missing_pct {p} is not one of 0.05, 0.10, 0.20"));
            }
        }
        if self.n_replicates == 0 || self.n_components == 0 || self.parallelism == 0 {
            return fail("n_replicates, L and parallelism must be positive".into());
        }
        if self.lica_iters == 0 || self.fi_lica_iters == 0 || self.fi_updates == 0 {
            return fail("iteration budgets must be positive".into());
        }
        if !(self.tol_rel > 0.0 && self.tol_rel < 1.0) {
            return fail(format!("tol_rel must lie in (0, 1), got {}", self.tol_rel));
        }
        Ok(())
    }

    /// Percentages actually iterated; an oracle-only run uses 0.
    pub fn effective_pcts(&self) -> Vec<f64> {
        if self.missing_pcts.is_empty() {
            vec![0.0]
        } else {
            self.missing_pcts.clone()
        }
    }

    pub fn fit_config(&self, method: Method, seed: u64) -> FiLicaConfig {
        FiLicaConfig {
            n_components: self.n_components,
            lica_iters: if method == Method::Filica {
                self.fi_lica_iters
            } else {
                self.lica_iters
            },
            fi_updates: self.fi_updates,
            tol_rel: self.tol_rel,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"settings": ["mcar"], "replicates": 3}"#);
        assert!(err.is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"settings": ["mar_mixed"], "missing_pcts": [0.2], "L": 4}"#).unwrap();
        assert_eq!(cfg.settings, vec![Setting::MarMixed]);
        assert_eq!(cfg.n_components, 4);
        assert_eq!(cfg.fi_lica_iters, 1000);
        cfg.validate().unwrap();
    }

    #[test]
    fn oracle_only_may_skip_pcts() {
        let cfg = ExperimentConfig {
            missing_pcts: vec![],
            methods: vec![Method::Oracle],
            ..Default::default()
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.effective_pcts(), vec![0.0]);
        let bad = ExperimentConfig {
            missing_pcts: vec![],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            missing_pcts: vec![0.3],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
