use serde::{Deserialize, Serialize};

use super::mahalanobis::MahalanobisModel;
use crate::error::{check_dim, invalid, Result};
use crate::mlp::{train_with_backoff, Activation, Loss, Mlp, TrainConfig};
use crate::points::{Points, Standardizer};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaHyperparams {
    pub hidden: usize,
    pub bottleneck: usize,
    pub train: TrainConfig,
}

impl Default for AaHyperparams {
    fn default() -> Self {
        Self {
            hidden: 16,
            bottleneck: 1,
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 32,
                max_epochs: 2000,
                patience: 50,
                tol: 1e-6,
                l2: 0.0,
            },
        }
    }
}

/// Auto-associative network `D -> h -> b -> h -> D` on standardised inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AaModel {
    pub standardizer: Standardizer,
    pub mlp: Mlp,
    pub epochs: usize,
    pub final_loss: f64,
}

pub const MIN_AA_TRAIN: usize = 32;

pub fn fit_autoassoc(train: &Points, hp: &AaHyperparams, seed: u64) -> Result<AaModel> {
    if train.len() < MIN_AA_TRAIN {
        return Err(invalid(format!("auto-associative fit needs at least {MIN_AA_TRAIN} points")));
    }
    let d = train.dim();
    if hp.bottleneck == 0 || hp.bottleneck >= d {
        return Err(invalid("bottleneck must be narrower than the input"));
    }
    let standardizer = Standardizer::fit(train);
    let z = standardizer.transform(train)?;
    let mut rng = substream(seed, &["autoassoc"]);
    let sizes = [d, hp.hidden, hp.bottleneck, hp.hidden, d];
    let (mlp, report) = train_with_backoff(
        |r| Mlp::new(&sizes, Activation::Tanh, Activation::Identity, r),
        &z,
        Loss::Mse { targets: &z },
        &hp.train,
        &mut rng,
    )?;
    Ok(AaModel { standardizer, mlp, epochs: report.epochs, final_loss: report.final_loss })
}

impl AaModel {
    /// Per-feature reconstruction errors `x_hat - x` in standardised units.
    pub fn reconstruction_errors(&self, points: &Points) -> Result<Points> {
        check_dim(self.standardizer.dim(), points.dim())?;
        let mut z = vec![0.0; points.dim()];
        Ok(points.map_rows(|r, e| {
            self.standardizer.transform_row(r, &mut z);
            let rec = self.mlp.forward_row(&z);
            for j in 0..e.len() {
                e[j] = rec[j] - z[j];
            }
        }))
    }

    /// Sum of squared reconstruction errors.
    pub fn score_sse(&self, points: &Points) -> Result<Vec<f64>> {
        let e = self.reconstruction_errors(points)?;
        Ok(e.rows().map(|r| r.iter().map(|v| v * v).sum()).collect())
    }
}

/// Mahalanobis distance of auto-associative reconstruction errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdAaModel {
    pub aa: AaModel,
    pub errors: MahalanobisModel,
}

pub fn fit_md_aa(train: &Points, aa: AaModel) -> Result<MdAaModel> {
    let e = aa.reconstruction_errors(train)?;
    let errors = MahalanobisModel::fit(&e)?;
    Ok(MdAaModel { aa, errors })
}

impl MdAaModel {
    pub fn score(&self, points: &Points) -> Result<Vec<f64>> {
        let e = self.aa.reconstruction_errors(points)?;
        self.errors.score(&e)
    }
}
