use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Portfolio,
    Knapsack,
    Multiclass,
    Diagnostics,
}

impl Study {
    pub fn as_str(self) -> &'static str {
        match self {
            Study::Portfolio => "portfolio",
            Study::Knapsack => "knapsack",
            Study::Multiclass => "multiclass",
            Study::Diagnostics => "diagnostics",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    Ls,
    SpoPlus,
    RegGap,
    AbsDev,
}

impl LossName {
    pub fn as_str(self) -> &'static str {
        match self {
            LossName::Ls => "ls",
            LossName::SpoPlus => "spo_plus",
            LossName::RegGap => "reg_gap",
            LossName::AbsDev => "abs_dev",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    SquaredBound,
    MarginBound,
    VanishingMargin,
    Multiclass,
    OneDim,
    Calibration,
    All,
}

impl SuiteName {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "squared_bound" => SuiteName::SquaredBound,
            "margin_bound" => SuiteName::MarginBound,
            "vanishing_margin" => SuiteName::VanishingMargin,
            "multiclass" => SuiteName::Multiclass,
            "one_dim" => SuiteName::OneDim,
            "calibration" => SuiteName::Calibration,
            "all" => SuiteName::All,
            _ => {
                return Err(Error::Config(format!(
                    "unknown suite '{s}' (expected squared_bound, margin_bound, vanishing_margin, multiclass, one_dim, calibration or all)"
                )))
            }
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::SquaredBound => "squared_bound",
            SuiteName::MarginBound => "margin_bound",
            SuiteName::VanishingMargin => "vanishing_margin",
            SuiteName::Multiclass => "multiclass",
            SuiteName::OneDim => "one_dim",
            SuiteName::Calibration => "calibration",
            SuiteName::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub steps: usize,
    /// Fixed initial step; the holdout grid is used when absent.
    pub step_size: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            step_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnapsackConfig {
    /// Odd polynomial degree of the value model.
    pub degree: u32,
    pub noise_halfwidth: f64,
    pub additive_noise: bool,
    pub lambda: f64,
    pub test_size: usize,
}

impl Default for KnapsackConfig {
    fn default() -> Self {
        Self {
            degree: 1,
            noise_halfwidth: 0.1,
            additive_noise: true,
            lambda: 0.01,
            test_size: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MulticlassConfig {
    pub test_size: usize,
}

impl Default for MulticlassConfig {
    fn default() -> Self {
        Self { test_size: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortfolioConfig {
    /// Long-format returns CSV; synthetic factor data is used when absent.
    pub returns_csv: Option<PathBuf>,
    pub factors_csv: Option<PathBuf>,
    /// Test days after each training window.
    pub horizon: usize,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        Self {
            returns_csv: None,
            factors_csv: None,
            horizon: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub suite: SuiteName,
    /// Random distributions per randomized suite.
    pub trials: usize,
    /// Predictors per distribution.
    pub predictors: usize,
    /// Mean of the vanishing-margin densities.
    pub eps: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            suite: SuiteName::All,
            trials: 100,
            predictors: 100,
            eps: 1.0,
        }
    }
}

/// One experiment: a study, its dimensions, sample sizes, repetitions and
/// the losses to train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    #[serde(default)]
    pub m: usize,
    #[serde(default)]
    pub k: usize,
    #[serde(default)]
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub reps: usize,
    #[serde(default)]
    pub losses: Vec<LossName>,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub knapsack: KnapsackConfig,
    #[serde(default)]
    pub multiclass: MulticlassConfig,
    #[serde(default)]
    pub portfolio: PortfolioConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

impl ExperimentConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!(
            "cannot read config {}: {e}",
            path.display()
        )))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg: Self = if is_json {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.study == Study::Diagnostics {
            let d = &self.diagnostics;
            if d.trials == 0 || d.predictors == 0 {
                return bad("diagnostics trials and predictors must be positive".into());
            }
            if !(d.eps > 0.0 && d.eps.is_finite()) {
                return bad(format!("diagnostics eps must be positive, got {}", d.eps));
            }
            return Ok(());
        }
        if self.m == 0 || self.k == 0 {
            return bad(format!("m and k must be positive, got m = {}, k = {}", self.m, self.k));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return bad("n_list must be a nonempty list of positive sizes".into());
        }
        if self.reps == 0 {
            return bad("reps must be positive".into());
        }
        if self.losses.is_empty() {
            return bad("losses must not be empty".into());
        }
        let mut seen = self.losses.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.losses.len() {
            return bad("losses must not repeat".into());
        }
        if self.training.steps == 0 {
            return bad("training.steps must be positive".into());
        }
        if let Some(s) = self.training.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("training.step_size must be positive, got {s}"));
            }
        }
        if self.losses.contains(&LossName::RegGap) && self.study != Study::Knapsack {
            return bad("reg_gap is only available for the knapsack study".into());
        }
        match self.study {
            Study::Knapsack => {
                let c = &self.knapsack;
                if c.degree == 0 || c.degree % 2 == 0 {
                    return bad(format!("knapsack.degree must be odd, got {}", c.degree));
                }
                if !(0.0..1.0).contains(&c.noise_halfwidth) {
                    return bad(format!(
                        "knapsack.noise_halfwidth must lie in [0, 1), got {}",
                        c.noise_halfwidth
                    ));
                }
                if !(c.lambda > 0.0 && c.lambda.is_finite()) {
                    return bad(format!("knapsack.lambda must be positive, got {}", c.lambda));
                }
                if c.test_size == 0 {
                    return bad("knapsack.test_size must be positive".into());
                }
            }
            Study::Multiclass => {
                if self.m < 2 {
                    return bad("multiclass needs m ≥ 2".into());
                }
                if self.multiclass.test_size == 0 {
                    return bad("multiclass.test_size must be positive".into());
                }
            }
            Study::Portfolio => {
                let p = &self.portfolio;
                if p.horizon == 0 {
                    return bad("portfolio.horizon must be positive".into());
                }
                if p.returns_csv.is_some() != p.factors_csv.is_some() {
                    return bad("portfolio.returns_csv and portfolio.factors_csv go together".into());
                }
                if self.n_list.iter().any(|&n| n < 2) {
                    return bad("portfolio windows need n ≥ 2".into());
                }
            }
            Study::Diagnostics => unreachable!(),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML: &str = r#"
study = "multiclass"
m = 4
k = 4
n_list = [100, 200]
reps = 3
losses = ["ls", "spo_plus"]
seed = 7
output = "out.csv"

[training]
steps = 50
"#;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(&t, TOML).unwrap();
        let a = ExperimentConfig::load(&t).unwrap();
        assert_eq!(a.training.steps, 50);
        assert_eq!(a.multiclass.test_size, 20_000);
        let j = dir.path().join("c.json");
        std::fs::write(&j, serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(ExperimentConfig::load(&j).unwrap(), a);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        let mut c: ExperimentConfig = toml::from_str(TOML).unwrap();
        c.n_list = vec![];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c: ExperimentConfig = toml::from_str(TOML).unwrap();
        c.losses = vec![LossName::RegGap];
        assert!(c.validate().is_err());
        let mut c: ExperimentConfig = toml::from_str(TOML).unwrap();
        c.losses = vec![LossName::Ls, LossName::Ls];
        assert!(c.validate().is_err());
        assert!(toml::from_str::<ExperimentConfig>(&TOML.replace("seed", "sead")).is_err());
        assert!(toml::from_str::<ExperimentConfig>(&TOML.replace("\"ls\"", "\"hinge\"")).is_err());
    }

    #[test]
    fn unreadable_file_is_config_error() {
        let err = ExperimentConfig::load(Path::new("/nonexistent/c.toml")).unwrap_err();
        assert!(err.is_config());
    }
}
