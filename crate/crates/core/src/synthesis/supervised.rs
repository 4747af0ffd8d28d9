//! MLP classifier trained on ID versus synthetic OOD points; its ID-class
//! probability is the confidence.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::mlp::{sigmoid, train_with_backoff, Activation, Loss, Mlp, TrainConfig};
use crate::points::{Points, Standardizer};
use crate::rng::substream;

use super::SynthesisedSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedParams {
    pub hidden: usize,
    pub train: TrainConfig,
}

impl Default for SupervisedParams {
    fn default() -> Self {
        Self {
            hidden: 100,
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 200,
                max_epochs: 200,
                patience: 10,
                tol: 1e-4,
                l2: 1e-4,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedDetector {
    pub standardizer: Standardizer,
    pub mlp: Mlp,
    pub params: SupervisedParams,
    pub epochs: usize,
    pub final_loss: f64,
}

impl SupervisedDetector {
    /// Probability of the ID class per point.
    pub fn confidence(&self, points: &Points) -> Result<Vec<f64>> {
        Ok(self.logits(points)?.into_iter().map(sigmoid).collect())
    }

    pub fn logits(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.standardizer.dim(), points.dim())?;
        let mut z = vec![0.0; points.dim()];
        Ok(points
            .rows()
            .map(|r| {
                self.standardizer.transform_row(r, &mut z);
                self.mlp.forward_row(&z)[0]
            })
            .collect())
    }

    /// `1 - confidence`, for use wherever a raw OOD score is expected.
    pub fn score(&self, points: &Points) -> Result<Vec<f64>> {
        Ok(self.confidence(points)?.into_iter().map(|c| 1.0 - c).collect())
    }
}

/// Stacks ID (label 1, weight 1) and OOD (label 0, set weights) points in
/// the ID standardisation.
pub(crate) fn training_set(
    standardizer: &Standardizer,
    id_points: &Points,
    ood: &SynthesisedSet,
) -> Result<(Points, Vec<f64>, Vec<f64>)> {
    let x = standardizer.transform(&id_points.concat(&ood.points)?)?;
    let mut labels = vec![1.0; id_points.len()];
    labels.extend(std::iter::repeat_n(0.0, ood.len()));
    let mut weights = vec![1.0; id_points.len()];
    weights.extend_from_slice(&ood.weights);
    Ok((x, labels, weights))
}

pub fn train_supervised(id_points: &Points, ood_set: &SynthesisedSet, seed: u64) -> Result<SupervisedDetector> {
    train_supervised_with(id_points, ood_set, &SupervisedParams::default(), seed)
}

pub fn train_supervised_with(
    id_points: &Points,
    ood_set: &SynthesisedSet,
    params: &SupervisedParams,
    seed: u64,
) -> Result<SupervisedDetector> {
    if id_points.is_empty() || ood_set.is_empty() {
        return Err(invalid("supervised training needs ID and OOD points"));
    }
    check_dim(id_points.dim(), ood_set.points.dim())?;
    check_dim(ood_set.len(), ood_set.weights.len())?;
    if ood_set.weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(invalid("OOD weights must lie in [0, 1]"));
    }
    let standardizer = Standardizer::fit(id_points);
    let (x, labels, weights) = training_set(&standardizer, id_points, ood_set)?;
    let mut rng = substream(seed, &["supervised"]);
    let sizes = [id_points.dim(), params.hidden, 1];
    let (mlp, report) = train_with_backoff(
        |r| Mlp::new(&sizes, Activation::Relu, Activation::Identity, r),
        &x,
        Loss::WeightedBce { labels: &labels, weights: &weights },
        &params.train,
        &mut rng,
    )?;
    Ok(SupervisedDetector {
        standardizer,
        mlp,
        params: params.clone(),
        epochs: report.epochs,
        final_loss: report.final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn clusters(n: usize, seed: u64) -> (Points, Points) {
        let mut rng = substream(seed, &["clusters"]);
        let mut a = Points::zeros(n, 2);
        let mut b = Points::zeros(n, 2);
        for i in 0..n {
            a.row_mut(i).copy_from_slice(&[rng.random_range(-1.0..0.0), rng.random_range(-1.0..1.0)]);
            b.row_mut(i).copy_from_slice(&[rng.random_range(1.0..2.0), rng.random_range(-1.0..1.0)]);
        }
        (a, b)
    }

    #[test]
    fn separable_clusters_are_learned() {
        let (id, ood) = clusters(300, 5);
        let det = train_supervised(&id, &SynthesisedSet::unweighted(ood.clone(), None), 1).unwrap();
        let ci = det.confidence(&id).unwrap();
        let co = det.confidence(&ood).unwrap();
        let correct = ci.iter().filter(|c| **c > 0.5).count() + co.iter().filter(|c| **c < 0.5).count();
        assert!(correct as f64 / 600.0 >= 0.99, "{correct}");
    }

    #[test]
    fn zero_ood_weights_leave_one_effective_class() {
        let (id, ood) = clusters(200, 6);
        let mut set = SynthesisedSet::unweighted(ood, None);
        set.weights.iter_mut().for_each(|w| *w = 0.0);
        let det = train_supervised(&id, &set, 2).unwrap();
        assert!(det.confidence(&id).unwrap().iter().all(|c| *c >= 0.5));
    }

    #[test]
    fn deterministic_per_seed() {
        let (id, ood) = clusters(50, 7);
        let set = SynthesisedSet::unweighted(ood, None);
        let a = train_supervised(&id, &set, 3).unwrap();
        let b = train_supervised(&id, &set, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn confidence_complements_ood_probability() {
        let (id, ood) = clusters(20, 8);
        let det = train_supervised(&id, &SynthesisedSet::unweighted(ood, None), 4).unwrap();
        let c = det.confidence(&id).unwrap();
        let s = det.score(&id).unwrap();
        assert!(c.iter().zip(&s).all(|(a, b)| (a + b - 1.0).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_weights() {
        let (id, ood) = clusters(5, 9);
        let mut set = SynthesisedSet::unweighted(ood, None);
        set.weights[0] = 1.5;
        assert!(train_supervised(&id, &set, 1).is_err());
    }
}
