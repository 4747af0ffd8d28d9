//! t-poking: a multiplicative search over the FGSM step `t`. A cycle whose
//! validation ID confidence falls below the threshold backs `t` off; a
//! passing cycle pokes it smaller. Both factors anneal towards 1.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::points::Points;
use crate::toyspace::ToySpec;

use super::supervised::{train_supervised_with, SupervisedDetector, SupervisedParams};
use super::{synthesise_fgsm, SynthesisConfig, SynthesisMethod};

/// Factors closer to 1 than this count as annealed out.
pub const FACTOR_CONVERGENCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TPokeStep {
    pub t: f64,
    pub mean_id_confidence: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TPokeState {
    pub t: f64,
    pub backoff_factor: f64,
    pub poke_factor: f64,
    pub anneal_rate: f64,
    pub criterion_threshold: f64,
    pub iteration: usize,
    pub converged: bool,
    pub history: Vec<TPokeStep>,
}

impl Default for TPokeState {
    fn default() -> Self {
        Self {
            t: 1.0,
            backoff_factor: 2.0,
            poke_factor: 0.5,
            anneal_rate: 0.75,
            criterion_threshold: 0.95,
            iteration: 0,
            converged: false,
            history: Vec::new(),
        }
    }
}

impl TPokeState {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(invalid("t must be positive"));
        }
        if !(self.backoff_factor > 1.0) {
            return Err(invalid("back-off factor must exceed 1"));
        }
        if !(self.poke_factor > 0.0 && self.poke_factor < 1.0) {
            return Err(invalid("poke factor must lie in (0, 1)"));
        }
        if !(self.anneal_rate > 0.0 && self.anneal_rate < 1.0) {
            return Err(invalid("anneal rate must lie in (0, 1)"));
        }
        Ok(())
    }

    fn factors_annealed(&self) -> bool {
        self.backoff_factor.max(1.0 / self.poke_factor) < 1.0 + FACTOR_CONVERGENCE
    }

    /// Whether any recorded cycle met the criterion.
    pub fn ever_passed(&self) -> bool {
        self.history.iter().any(|s| s.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TPokeOptions {
    pub n_ood: usize,
    pub kde_bandwidth: Option<f64>,
    /// Draw each step from `U(0, t)` instead of using `t` directly.
    pub uniform: bool,
    pub seed: u64,
    pub classifier: SupervisedParams,
}

impl TPokeOptions {
    pub fn new(n_ood: usize, seed: u64) -> Self {
        Self { n_ood, kde_bandwidth: None, uniform: false, seed, classifier: SupervisedParams::default() }
    }
}

/// Runs the search with a caller-supplied cycle that maps `(t, cycle index)`
/// to the mean validation ID confidence and the cycle's detector.
///
/// Returns the detector of the last passing cycle, or of the last cycle if
/// none passed. `converged` requires annealed factors and at least one pass.
pub fn tpoke_with<D>(
    initial: TPokeState,
    max_cycles: usize,
    mut cycle: impl FnMut(f64, usize) -> Result<(f64, D)>,
) -> Result<(TPokeState, D)> {
    initial.validate()?;
    if max_cycles == 0 {
        return Err(invalid("t-poking needs at least one cycle"));
    }
    let mut s = initial;
    let mut passing = None;
    let mut last = None;
    let mut annealed = false;
    for _ in 0..max_cycles {
        let (conf, det) = cycle(s.t, s.iteration)?;
        let passed = conf >= s.criterion_threshold;
        s.history.push(TPokeStep { t: s.t, mean_id_confidence: conf, passed });
        s.t *= if passed { s.poke_factor } else { s.backoff_factor };
        s.iteration += 1;
        if passed {
            passing = Some(det);
        } else {
            last = Some(det);
        }
        if s.factors_annealed() {
            annealed = true;
            break;
        }
        s.backoff_factor = s.backoff_factor.powf(s.anneal_rate);
        s.poke_factor = s.poke_factor.powf(s.anneal_rate);
    }
    s.converged = annealed && s.ever_passed();
    let det = passing.or(last).expect("at least one cycle ran");
    Ok((s, det))
}

/// t-poking with FGSM synthesis from the reference gradient and a freshly
/// trained classifier every cycle. Synthesis and training seeds are the same
/// in every cycle, so only `t` changes between cycles.
pub fn tpoke(
    train: &Points,
    valid: &Points,
    spec: &ToySpec,
    initial: TPokeState,
    max_cycles: usize,
    options: &TPokeOptions,
) -> Result<(TPokeState, SupervisedDetector)> {
    if valid.is_empty() {
        return Err(invalid("t-poking needs validation points"));
    }
    tpoke_with(initial, max_cycles, |t, _| {
        let config = SynthesisConfig {
            method: SynthesisMethod::FgsmTPoke { t, uniform: options.uniform },
            n_ood: options.n_ood,
            kde_bandwidth: options.kde_bandwidth,
            seed: options.seed,
        };
        let set = synthesise_fgsm(train, spec, &config)?;
        let det = train_supervised_with(train, &set, &options.classifier, options.seed)?;
        let conf = det.confidence(valid)?;
        let mean = conf.iter().sum::<f64>() / conf.len() as f64;
        Ok((mean, det))
    })
}
