//! TOML configuration holding every pipeline tunable. CLI flags override
//! individual fields.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterParams;
use crate::error::{Error, Result};
use crate::labeling::LabelingParams;
use crate::predict::PredictParams;
use crate::synth::{CorpusConfig, CorpusCounts};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneralConfig {
    /// Sample period, s.
    pub dt: f64,
    pub seed: u64,
    /// Worker cap for parallel sections; 0 = all cores.
    pub jobs: usize,
}

impl Default for GeneralConfig {
    fn default() -> Self {
        GeneralConfig {
            dt: 0.04,
            seed: 42,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSection {
    pub lcl: usize,
    pub lcr: usize,
    pub lk: usize,
    pub lane_width: f64,
    pub sigma_d: f64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let c = CorpusConfig::default();
        CorpusSection {
            lcl: c.counts.lcl,
            lcr: c.counts.lcr,
            lk: c.counts.lk,
            lane_width: c.lane_width,
            sigma_d: c.sigma_d,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingSection {
    pub velocity_threshold: f64,
    pub min_duration: f64,
    pub knot_spacing: f64,
}

impl Default for LabelingSection {
    fn default() -> Self {
        let p = LabelingParams::default();
        LabelingSection {
            velocity_threshold: p.velocity_threshold,
            min_duration: p.min_duration,
            knot_spacing: p.knot_spacing,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSection {
    pub sigma_max: f64,
    pub max_shift: f64,
    pub var_floor: f64,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let p = ClusterParams::default();
        ClusterSection {
            sigma_max: p.sigma_max,
            max_shift: p.max_shift,
            var_floor: p.var_floor,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchingSection {
    /// Partial-trajectory buffer depth, s.
    pub t_buffer: f64,
    /// Frame stride for feature extraction (1 = every frame).
    pub stride: usize,
}

impl Default for MatchingSection {
    fn default() -> Self {
        MatchingSection {
            t_buffer: 2.0,
            stride: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifySection {
    pub n_learners: usize,
    pub lk_missrate: f64,
    /// Fraction of training trajectories held out for calibration.
    pub validation_ratio: f64,
}

impl Default for ClassifySection {
    fn default() -> Self {
        ClassifySection {
            n_learners: 90,
            lk_missrate: 0.11,
            validation_ratio: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictSection {
    pub horizon: f64,
    pub adapt_interval: f64,
    pub lk_time_const: f64,
    pub lk_var: f64,
}

impl Default for PredictSection {
    fn default() -> Self {
        let p = PredictParams::default();
        PredictSection {
            horizon: p.horizon,
            adapt_interval: p.adapt_interval,
            lk_time_const: p.lk_time_const,
            lk_var: p.lk_var,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub split_ratio: f64,
    pub bin_width: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            split_ratio: 0.7,
            bin_width: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub general: GeneralConfig,
    pub corpus: CorpusSection,
    pub labeling: LabelingSection,
    pub cluster: ClusterSection,
    pub matching: MatchingSection,
    pub classify: ClassifySection,
    pub predict: PredictSection,
    pub eval: EvalSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::from_toml(&text)
    }

    pub fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig {
            counts: CorpusCounts {
                lcl: self.corpus.lcl,
                lcr: self.corpus.lcr,
                lk: self.corpus.lk,
            },
            lane_width: self.corpus.lane_width,
            sigma_d: self.corpus.sigma_d,
            dt: self.general.dt,
        }
    }

    pub fn labeling_params(&self) -> LabelingParams {
        LabelingParams {
            velocity_threshold: self.labeling.velocity_threshold,
            lane_width: self.corpus.lane_width,
            min_duration: self.labeling.min_duration,
            knot_spacing: self.labeling.knot_spacing,
            dt: self.general.dt,
        }
    }

    pub fn cluster_params(&self) -> ClusterParams {
        ClusterParams {
            sigma_max: self.cluster.sigma_max,
            max_shift: self.cluster.max_shift,
            var_floor: self.cluster.var_floor,
        }
    }

    pub fn predict_params(&self) -> PredictParams {
        PredictParams {
            horizon: self.predict.horizon,
            adapt_interval: self.predict.adapt_interval,
            lk_time_const: self.predict.lk_time_const,
            lk_var: self.predict.lk_var,
            best_only: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = Config::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = Config::from_toml(&text).unwrap();
        assert_eq!(back.general.dt, cfg.general.dt);
        assert_eq!(back.classify.n_learners, 90);
        assert_eq!(back.corpus.lcl, 156);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = Config::from_toml("[cluster]\nsigma_max = 0.5\n").unwrap();
        assert_eq!(cfg.cluster.sigma_max, 0.5);
        assert_eq!(cfg.general.seed, 42);
        assert_eq!(cfg.eval.split_ratio, 0.7);
    }

    #[test]
    fn bad_toml_is_config_error() {
        assert!(matches!(
            Config::from_toml("general = \"nope"),
            Err(Error::Config(_))
        ));
    }
}
