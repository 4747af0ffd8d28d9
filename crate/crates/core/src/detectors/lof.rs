use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::points::{sq_dist, Points};

const REACH_FLOOR: f64 = 1e-10;

/// Novelty-mode local outlier factor over an exact brute-force neighbour search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LofModel {
    pub train: Points,
    pub k: usize,
    pub k_distance: Vec<f64>,
    pub lrd: Vec<f64>,
}

/// The `k` nearest training indices and distances, ties broken by index.
fn nearest(train: &Points, q: &[f64], k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> =
        train.rows().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(i, r)| (sq_dist(q, r), i)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if d.len() > k {
        d.select_nth_unstable_by(k - 1, cmp);
        d.truncate(k);
    }
    d.sort_by(cmp);
    d.into_iter().map(|(s, i)| (s.sqrt(), i)).collect()
}

impl LofModel {
    pub fn fit(train: &Points, k: usize) -> Result<Self> {
        let n = train.len();
        if k == 0 || k >= n {
            return Err(invalid(format!("LOF needs 1 <= k < n_train, got k = {k}, n = {n}")));
        }
        let neighbours: Vec<Vec<(f64, usize)>> = (0..n).map(|i| nearest(train, train.row(i), k, Some(i))).collect();
        let k_distance: Vec<f64> = neighbours.iter().map(|nb| nb[k - 1].0).collect();
        let lrd = neighbours
            .iter()
            .map(|nb| {
                let mean_reach = nb.iter().map(|&(d, j)| d.max(k_distance[j]).max(REACH_FLOOR)).sum::<f64>() / k as f64;
                1.0 / mean_reach
            })
            .collect();
        Ok(Self { train: train.clone(), k, k_distance, lrd })
    }

    pub fn score_point(&self, q: &[f64]) -> f64 {
        let nb = nearest(&self.train, q, self.k, None);
        let mean_reach =
            nb.iter().map(|&(d, j)| d.max(self.k_distance[j]).max(REACH_FLOOR)).sum::<f64>() / self.k as f64;
        let lrd_q = 1.0 / mean_reach;
        nb.iter().map(|&(_, j)| self.lrd[j]).sum::<f64>() / (self.k as f64 * lrd_q)
    }

    pub fn score(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.train.dim(), points.dim())?;
        Ok(points.rows().map(|q| self.score_point(q)).collect())
    }
}
