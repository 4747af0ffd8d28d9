//! Unsupervised OOD detectors behind one contract: fit on ID training
//! points, emit a raw OOD score where higher means more OOD.

pub mod autoassoc;
pub mod gp;
pub mod lof;
pub mod mahalanobis;
pub mod ocsvm;
pub mod pca;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, OodError, Result};
use crate::points::Points;
use crate::toyspace::{reference_ood_score, Dataset, ToySpec};

pub use autoassoc::{fit_autoassoc, fit_md_aa, AaHyperparams, AaModel, MdAaModel};
pub use gp::{fit_aa_gp, fit_gp, fit_ncgp, AaGpModel, GpDetector, GpRegressor, NcGpParams, RbfKernel};
pub use lof::LofModel;
pub use mahalanobis::MahalanobisModel;
pub use ocsvm::{OcSvmModel, OcSvmParams};
pub use pca::PcaModel;

/// Sorted validation OOD scores turning raw scores into confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    sorted: Vec<f64>,
}

impl Calibrator {
    pub fn new(mut validation_scores: Vec<f64>) -> Result<Self> {
        if validation_scores.is_empty() {
            return Err(invalid("calibrator needs at least one validation score"));
        }
        if validation_scores.iter().any(|s| s.is_nan()) {
            return Err(invalid("validation scores contain NaN"));
        }
        validation_scores.sort_by(f64::total_cmp);
        Ok(Self { sorted: validation_scores })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_scores(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of validation points whose OOD score is at least `raw`.
    pub fn confidence(&self, raw: f64) -> f64 {
        let below = self.sorted.partition_point(|v| *v < raw);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }
}

pub fn calibrate_confidence(cal: &Calibrator, raw_scores: &[f64]) -> Vec<f64> {
    raw_scores.iter().map(|&s| cal.confidence(s)).collect()
}

/// A fitted unsupervised detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DetectorModel {
    Reference(ToySpec),
    OcSvm(OcSvmModel),
    Mahalanobis(MahalanobisModel),
    Lof(LofModel),
    Gp(GpDetector),
    NcGp(GpDetector),
    PcaTrunc(PcaModel),
    AutoAssoc(AaModel),
    MdAa(MdAaModel),
    AaGp(AaGpModel),
}

impl DetectorModel {
    pub fn kind_tag(&self) -> &'static str {
        match self {
            DetectorModel::Reference(_) => "reference",
            DetectorModel::OcSvm(_) => "ocsvm",
            DetectorModel::Mahalanobis(_) => "mahalanobis",
            DetectorModel::Lof(_) => "lof",
            DetectorModel::Gp(_) => "gp",
            DetectorModel::NcGp(_) => "ncgp",
            DetectorModel::PcaTrunc(_) => "pca",
            DetectorModel::AutoAssoc(_) => "aa",
            DetectorModel::MdAa(_) => "md_aa",
            DetectorModel::AaGp(_) => "aa_gp",
        }
    }

    pub fn score(&self, points: &Points) -> Result<Vec<f64>> {
        match self {
            DetectorModel::Reference(spec) => reference_ood_score(spec, points),
            DetectorModel::OcSvm(m) => m.score(points),
            DetectorModel::Mahalanobis(m) => m.score(points),
            DetectorModel::Lof(m) => m.score(points),
            DetectorModel::Gp(m) | DetectorModel::NcGp(m) => m.score(points),
            DetectorModel::PcaTrunc(m) => m.score(points),
            DetectorModel::AutoAssoc(m) => m.score_sse(points),
            DetectorModel::MdAa(m) => m.score(points),
            DetectorModel::AaGp(m) => m.score(points),
        }
    }

    /// Versioned binary blob; its length feeds the memory metric.
    pub fn to_blob(&self) -> Result<Vec<u8>> {
        let payload = bincode::serialize(self).map_err(|e| OodError::Blob(e.to_string()))?;
        Ok(write_blob(self.kind_tag(), &payload))
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self> {
        let (tag, payload) = read_blob(bytes)?;
        let model: Self = bincode::deserialize(payload).map_err(|e| OodError::Blob(e.to_string()))?;
        if model.kind_tag() != tag {
            return Err(OodError::Blob(format!("kind tag '{tag}' does not match payload '{}'", model.kind_tag())));
        }
        Ok(model)
    }
}

pub const BLOB_MAGIC: &[u8; 8] = b"OODBENCH";
pub const BLOB_VERSION: u16 = 1;

/// `magic | version u16 | tag length u16 | tag | payload length u64 | payload`,
/// integers little-endian.
pub fn write_blob(tag: &str, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + tag.len() + payload.len());
    out.extend_from_slice(BLOB_MAGIC);
    out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
    out.extend_from_slice(&(tag.len() as u16).to_le_bytes());
    out.extend_from_slice(tag.as_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn read_blob(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let err = |m: &str| OodError::Blob(m.to_string());
    if bytes.len() < 12 || &bytes[..8] != BLOB_MAGIC {
        return Err(err("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != BLOB_VERSION {
        return Err(OodError::Blob(format!("unsupported blob version {version}")));
    }
    let tag_len = usize::from(u16::from_le_bytes([bytes[10], bytes[11]]));
    let rest = &bytes[12..];
    if rest.len() < tag_len + 8 {
        return Err(err("truncated header"));
    }
    let tag = std::str::from_utf8(&rest[..tag_len]).map_err(|_| err("tag is not UTF-8"))?;
    let len_bytes: [u8; 8] = rest[tag_len..tag_len + 8].try_into().expect("8 bytes");
    let len = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| err("payload too large"))?;
    let payload = &rest[tag_len + 8..];
    if payload.len() != len {
        return Err(err("payload length mismatch"));
    }
    Ok((tag, payload))
}

fn default_nu() -> f64 {
    0.5
}
fn default_k() -> usize {
    20
}
fn default_gp_fraction() -> f64 {
    0.1
}
fn default_aagp_fraction() -> f64 {
    0.01
}
fn default_variance_threshold() -> f64 {
    0.95
}
fn default_noise_scale() -> f64 {
    NcGpParams::default().noise_scale
}
fn default_pseudo_noise() -> f64 {
    NcGpParams::default().pseudo_noise_variance
}

/// A detector kind with its hyperparameters, as named in benchmark configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorConfig {
    Reference {},
    Ocsvm {
        #[serde(default = "default_nu")]
        nu: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
    Mahalanobis {},
    Lof {
        #[serde(default = "default_k")]
        k: usize,
    },
    Gp {
        #[serde(default = "default_gp_fraction")]
        subsample: f64,
    },
    Ncgp {
        #[serde(default = "default_gp_fraction")]
        subsample: f64,
        #[serde(default = "default_noise_scale")]
        noise_scale: f64,
        #[serde(default = "default_pseudo_noise")]
        pseudo_noise_variance: f64,
    },
    Pca {
        #[serde(default = "default_variance_threshold")]
        variance_threshold: f64,
    },
    Aa {
        #[serde(default)]
        max_epochs: Option<usize>,
    },
    MdAa {
        #[serde(default)]
        max_epochs: Option<usize>,
    },
    AaGp {
        #[serde(default = "default_aagp_fraction")]
        subsample: f64,
    },
}

impl DetectorConfig {
    /// Default configuration for a detector name.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "reference" => Self::Reference {},
            "ocsvm" => Self::Ocsvm { nu: default_nu(), gamma: None },
            "mahalanobis" | "md" => Self::Mahalanobis {},
            "lof" => Self::Lof { k: default_k() },
            "gp" => Self::Gp { subsample: default_gp_fraction() },
            "ncgp" => Self::Ncgp {
                subsample: default_gp_fraction(),
                noise_scale: default_noise_scale(),
                pseudo_noise_variance: default_pseudo_noise(),
            },
            "pca" => Self::Pca { variance_threshold: default_variance_threshold() },
            "aa" => Self::Aa { max_epochs: None },
            "md_aa" => Self::MdAa { max_epochs: None },
            "aa_gp" => Self::AaGp { subsample: default_aagp_fraction() },
            other => return Err(OodError::Config(format!("unknown detector '{other}'"))),
        })
    }

    pub const NAMES: [&'static str; 10] =
        ["reference", "ocsvm", "mahalanobis", "lof", "gp", "ncgp", "pca", "aa", "md_aa", "aa_gp"];

    /// Row label used in report tables.
    pub fn label(&self) -> String {
        let pct = |f: f64| format!("{}%", (f * 100.0 * 1e6).round() / 1e6);
        match self {
            Self::Reference {} => "Reference".into(),
            Self::Ocsvm { .. } => "1c-SVM".into(),
            Self::Mahalanobis {} => "MD".into(),
            Self::Lof { .. } => "LOF".into(),
            Self::Gp { subsample } => format!("GP@{}", pct(*subsample)),
            Self::Ncgp { subsample, .. } => format!("nc-GP@{}", pct(*subsample)),
            Self::Pca { .. } => "PCA-trunc.".into(),
            Self::Aa { .. } => "Auto-Assoc.".into(),
            Self::MdAa { .. } => "MD(AA)".into(),
            Self::AaGp { subsample } => format!("AA-GP@{}", pct(*subsample)),
        }
    }

    fn aa_params(max_epochs: Option<usize>) -> AaHyperparams {
        let mut hp = AaHyperparams::default();
        if let Some(e) = max_epochs {
            hp.train.max_epochs = e;
        }
        hp
    }

    pub fn fit(&self, train: &Dataset, spec: &ToySpec, seed: u64) -> Result<DetectorModel> {
        let p = &train.points;
        Ok(match self {
            Self::Reference {} => DetectorModel::Reference(spec.clone()),
            Self::Ocsvm { nu, gamma } => {
                DetectorModel::OcSvm(OcSvmModel::fit(p, &OcSvmParams { nu: *nu, gamma: *gamma, ..Default::default() })?)
            }
            Self::Mahalanobis {} => DetectorModel::Mahalanobis(MahalanobisModel::fit(p)?),
            Self::Lof { k } => DetectorModel::Lof(LofModel::fit(p, *k)?),
            Self::Gp { subsample } => DetectorModel::Gp(fit_gp(train, *subsample, seed)?),
            Self::Ncgp { subsample, noise_scale, pseudo_noise_variance } => DetectorModel::NcGp(fit_ncgp(
                train,
                *subsample,
                &NcGpParams { noise_scale: *noise_scale, pseudo_noise_variance: *pseudo_noise_variance },
                seed,
            )?),
            Self::Pca { variance_threshold } => DetectorModel::PcaTrunc(PcaModel::fit(p, *variance_threshold)?),
            Self::Aa { max_epochs } => DetectorModel::AutoAssoc(fit_autoassoc(p, &Self::aa_params(*max_epochs), seed)?),
            Self::MdAa { max_epochs } => {
                let aa = fit_autoassoc(p, &Self::aa_params(*max_epochs), seed)?;
                DetectorModel::MdAa(fit_md_aa(p, aa)?)
            }
            Self::AaGp { subsample } => DetectorModel::AaGp(fit_aa_gp(train, *subsample, seed)?),
        })
    }
}

/// A detector together with its validation calibrator.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedDetector {
    pub model: DetectorModel,
    pub calibrator: Calibrator,
}

impl CalibratedDetector {
    pub fn new(model: DetectorModel, valid: &Points) -> Result<Self> {
        let calibrator = Calibrator::new(model.score(valid)?)?;
        Ok(Self { model, calibrator })
    }

    pub fn confidence(&self, points: &Points) -> Result<Vec<f64>> {
        Ok(calibrate_confidence(&self.calibrator, &self.model.score(points)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_examples() {
        let cal = Calibrator::new(vec![3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!(cal.confidence(2.5), 0.5);
        assert_eq!(cal.confidence(0.0), 1.0);
        assert_eq!(cal.confidence(9.0), 0.0);
        // ties count as "greater or equal"
        assert_eq!(cal.confidence(2.0), 0.75);
        assert!(Calibrator::new(vec![]).is_err());
    }

    #[test]
    fn blob_round_trips_and_rejects_corruption() {
        let m = DetectorModel::Reference(ToySpec::circle());
        let b = m.to_blob().unwrap();
        assert_eq!(&b[..8], BLOB_MAGIC);
        assert_eq!(DetectorModel::from_blob(&b).unwrap(), m);
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(DetectorModel::from_blob(&bad).is_err());
        assert!(DetectorModel::from_blob(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn config_names_resolve() {
        for n in DetectorConfig::NAMES {
            assert!(DetectorConfig::from_name(n).is_ok(), "{n}");
        }
        assert!(matches!(DetectorConfig::from_name("svm2"), Err(OodError::Config(_))));
        assert_eq!(DetectorConfig::from_name("gp").unwrap().label(), "GP@10%");
        assert_eq!(DetectorConfig::from_name("aa_gp").unwrap().label(), "AA-GP@1%");
    }
}
