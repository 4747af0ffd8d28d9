//! Benchmark methods: unsupervised detectors and synthesiser-trained
//! supervised detectors behind one fit / confidence interface.

use serde::{Deserialize, Serialize};

use crate::detectors::{write_blob, CalibratedDetector, DetectorConfig};
use crate::error::{OodError, Result};
use crate::points::Points;
use crate::synthesis::{
    synthesise, tpoke, train_supervised, SupervisedDetector, SynthesisConfig, SynthesisMethod, SynthesisedSet,
    TPokeOptions, TPokeState,
};
use crate::toyspace::{LabeledSplits, ToySpec};
use crate::weighting::{weight_synthesised_set, EvalSpace, KernelKind, WeightingOptions};

fn default_max_cycles() -> usize {
    30
}

/// Optional OOD sample weighting applied to a synthesised set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightingConfig {
    #[serde(default = "default_space")]
    pub space: EvalSpace,
    #[serde(default)]
    pub kernel: Option<KernelKind>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

fn default_space() -> EvalSpace {
    WeightingOptions::default().space
}

impl Default for WeightingConfig {
    fn default() -> Self {
        Self { space: default_space(), kernel: None, bandwidth: None }
    }
}

impl WeightingConfig {
    pub fn options(&self) -> WeightingOptions {
        WeightingOptions {
            space: self.space,
            kernel: self.kernel.unwrap_or(self.space.default_kernel()),
            bandwidth: self.bandwidth,
        }
    }
}

/// An OOD synthesiser feeding the supervised classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SynthesiserConfig {
    Uniform {
        #[serde(default)]
        n_ood: Option<usize>,
        #[serde(default)]
        weighting: Option<WeightingConfig>,
    },
    FgsmConstant {
        eps: f64,
        #[serde(default)]
        n_ood: Option<usize>,
        #[serde(default)]
        kde_bandwidth: Option<f64>,
        #[serde(default)]
        weighting: Option<WeightingConfig>,
    },
    FgsmUniform {
        lo: f64,
        hi: f64,
        #[serde(default)]
        n_ood: Option<usize>,
        #[serde(default)]
        kde_bandwidth: Option<f64>,
        #[serde(default)]
        weighting: Option<WeightingConfig>,
    },
    FgsmTpoke {
        #[serde(default)]
        uniform: bool,
        #[serde(default = "default_max_cycles")]
        max_cycles: usize,
        #[serde(default)]
        anneal_rate: Option<f64>,
        #[serde(default)]
        n_ood: Option<usize>,
        #[serde(default)]
        kde_bandwidth: Option<f64>,
    },
}

impl SynthesiserConfig {
    pub const NAMES: [&'static str; 6] =
        ["uniform", "fgsm_constant", "fgsm_uniform", "fgsm_tpoke", "w_uniform", "w_fgsm_uniform"];

    pub fn from_name(name: &str) -> Result<Self> {
        let w = Some(WeightingConfig::default());
        Ok(match name {
            "uniform" => Self::Uniform { n_ood: None, weighting: None },
            "w_uniform" => Self::Uniform { n_ood: None, weighting: w },
            "fgsm_constant" => Self::FgsmConstant { eps: 1.0, n_ood: None, kde_bandwidth: None, weighting: None },
            "fgsm_uniform" => Self::FgsmUniform { lo: 0.0, hi: 1.0, n_ood: None, kde_bandwidth: None, weighting: None },
            "w_fgsm_uniform" => Self::FgsmUniform { lo: 0.0, hi: 1.0, n_ood: None, kde_bandwidth: None, weighting: w },
            "fgsm_tpoke" => Self::FgsmTpoke {
                uniform: false,
                max_cycles: default_max_cycles(),
                anneal_rate: None,
                n_ood: None,
                kde_bandwidth: None,
            },
            other => return Err(OodError::Config(format!("unknown synthesiser '{other}'"))),
        })
    }

    pub fn label(&self) -> String {
        let base = match self {
            Self::Uniform { .. } => "Uniform".to_string(),
            Self::FgsmConstant { eps, .. } => format!("FGSM({eps:?})"),
            Self::FgsmUniform { lo, hi, .. } => format!("FGSM(U({lo},{hi}))"),
            Self::FgsmTpoke { uniform: false, .. } => "FGSM(t-poke)".into(),
            Self::FgsmTpoke { uniform: true, .. } => "FGSM(U(0,t-poke))".into(),
        };
        match self.weighting() {
            Some(_) => format!("w({base})"),
            None => base,
        }
    }

    fn weighting(&self) -> Option<&WeightingConfig> {
        match self {
            Self::Uniform { weighting, .. }
            | Self::FgsmConstant { weighting, .. }
            | Self::FgsmUniform { weighting, .. } => weighting.as_ref(),
            Self::FgsmTpoke { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let method = match *self {
            Self::Uniform { .. } => SynthesisMethod::UniformBox,
            Self::FgsmConstant { eps, .. } => SynthesisMethod::FgsmConstant { eps },
            Self::FgsmUniform { lo, hi, .. } => SynthesisMethod::FgsmUniform { lo, hi },
            Self::FgsmTpoke { max_cycles, .. } => {
                if max_cycles == 0 {
                    return Err(OodError::Config("fgsm_tpoke needs max_cycles >= 1".into()));
                }
                return Ok(());
            }
        };
        method.validate().map_err(|e| OodError::Config(e.to_string()))
    }

    /// Synthesises OOD points, optionally weights them, and trains the
    /// classifier. Returns the detector and the set it was trained on.
    pub fn fit(
        &self,
        splits: &LabeledSplits,
        spec: &ToySpec,
        seed: u64,
    ) -> Result<(SupervisedDetector, SynthesisedSet)> {
        let train = &splits.train.points;
        let default_n = train.len();
        // synthesis and classifier draw from differently labelled sub-streams of `seed`
        let synth_seed = seed;
        let fit_seed = seed;
        let (method, n_ood, kde_bandwidth) = match *self {
            Self::Uniform { n_ood, .. } => (SynthesisMethod::UniformBox, n_ood, None),
            Self::FgsmConstant { eps, n_ood, kde_bandwidth, .. } => {
                (SynthesisMethod::FgsmConstant { eps }, n_ood, kde_bandwidth)
            }
            Self::FgsmUniform { lo, hi, n_ood, kde_bandwidth, .. } => {
                (SynthesisMethod::FgsmUniform { lo, hi }, n_ood, kde_bandwidth)
            }
            Self::FgsmTpoke { uniform, max_cycles, anneal_rate, n_ood, kde_bandwidth } => {
                let mut initial = TPokeState::default();
                if let Some(a) = anneal_rate {
                    initial.anneal_rate = a;
                }
                let mut options = TPokeOptions::new(n_ood.unwrap_or(default_n), synth_seed);
                options.uniform = uniform;
                options.kde_bandwidth = kde_bandwidth;
                let (state, det) = tpoke(train, &splits.valid.points, spec, initial, max_cycles, &options)?;
                // rebuild the set the returned detector was trained on
                let t = state
                    .history
                    .iter()
                    .rev()
                    .find(|s| s.passed)
                    .or(state.history.last())
                    .map(|s| s.t)
                    .unwrap_or(state.t);
                let config = SynthesisConfig {
                    method: SynthesisMethod::FgsmTPoke { t, uniform },
                    n_ood: options.n_ood,
                    kde_bandwidth,
                    seed: synth_seed,
                };
                return Ok((det, synthesise(train, spec, &config)?));
            }
        };
        let config = SynthesisConfig { method, n_ood: n_ood.unwrap_or(default_n), kde_bandwidth, seed: synth_seed };
        let mut set = synthesise(train, spec, &config)?;
        if let Some(w) = self.weighting() {
            set = weight_synthesised_set(train, &set, spec, &w.options())?;
        }
        let det = train_supervised(train, &set, fit_seed)?;
        Ok((det, set))
    }
}

/// One benchmark row: either kind of method.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodConfig {
    Detector(DetectorConfig),
    Synthesiser(SynthesiserConfig),
}

impl MethodConfig {
    /// Detector names first, then synthesiser names.
    pub fn from_name(name: &str) -> Result<Self> {
        DetectorConfig::from_name(name)
            .map(Self::Detector)
            .or_else(|_| SynthesiserConfig::from_name(name).map(Self::Synthesiser))
            .map_err(|_| OodError::Config(format!("unknown method '{name}'")))
    }

    pub fn label(&self) -> String {
        match self {
            Self::Detector(d) => d.label(),
            Self::Synthesiser(s) => s.label(),
        }
    }

    pub fn fit(&self, splits: &LabeledSplits, spec: &ToySpec, seed: u64) -> Result<FittedMethod> {
        match self {
            Self::Detector(d) => {
                let model = d.fit(&splits.train, spec, seed)?;
                Ok(FittedMethod::Unsupervised(CalibratedDetector::new(model, &splits.valid.points)?))
            }
            Self::Synthesiser(s) => {
                let (detector, set) = s.fit(splits, spec, seed)?;
                Ok(FittedMethod::Supervised { detector, set })
            }
        }
    }
}

/// File-name friendly form of a label: lower case, runs of other
/// characters collapsed to `_`.
pub fn slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedMethod {
    Unsupervised(CalibratedDetector),
    Supervised { detector: SupervisedDetector, set: SynthesisedSet },
}

impl FittedMethod {
    /// Confidence in `[0, 1]` that each point is ID.
    pub fn confidence(&self, points: &Points) -> Result<Vec<f64>> {
        match self {
            Self::Unsupervised(d) => d.confidence(points),
            Self::Supervised { detector, .. } => detector.confidence(points),
        }
    }

    pub fn synthetic_points(&self) -> Option<&SynthesisedSet> {
        match self {
            Self::Supervised { set, .. } => Some(set),
            Self::Unsupervised(_) => None,
        }
    }

    /// Serialised model, the basis of the memory column.
    pub fn to_blob(&self) -> Result<Vec<u8>> {
        match self {
            Self::Unsupervised(d) => d.model.to_blob(),
            Self::Supervised { detector, .. } => {
                let payload = bincode::serialize(detector).map_err(|e| OodError::Blob(e.to_string()))?;
                Ok(write_blob("supervised", &payload))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("GP@10%"), "gp_10");
        assert_eq!(slug("w(FGSM(U(0,1)))"), "w_fgsm_u_0_1");
        assert_eq!(slug("FGSM(1.0)"), "fgsm_1_0");
    }

    #[test]
    fn names_resolve() {
        for n in DetectorConfig::NAMES.iter().chain(SynthesiserConfig::NAMES.iter()) {
            assert!(MethodConfig::from_name(n).is_ok(), "{n}");
        }
        assert!(MethodConfig::from_name("gan").is_err());
        assert_eq!(MethodConfig::from_name("w_uniform").unwrap().label(), "w(Uniform)");
        assert_eq!(MethodConfig::from_name("fgsm_constant").unwrap().label(), "FGSM(1.0)");
        assert_eq!(MethodConfig::from_name("fgsm_uniform").unwrap().label(), "FGSM(U(0,1))");
    }

    #[test]
    fn synthesiser_configs_parse_from_toml() {
        let s: SynthesiserConfig =
            toml::from_str("kind = \"fgsm_uniform\"\nlo = 0.0\nhi = 1.0\n[weighting]\nspace = \"input_space\"\n")
                .unwrap();
        assert_eq!(s.label(), "w(FGSM(U(0,1)))");
        assert!(toml::from_str::<SynthesiserConfig>("kind = \"uniform\"\nbogus = 1\n").is_err());
    }
}
