//! Mini-batch Adam training of the logit head.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::{peak_groups, pmce, pmce_logit_gradient, ModelGradient, PeakGroups, SparseGradient};
use super::{ModelWeights, PredictorError, SlotLayout};
use crate::decomp::DecompConfig;
use crate::molgraph::{featurize, FeatureConfig, MolGraph};
use crate::spectra::SpectrumRecord;
use crate::vocab::{candidate_set, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub feature: FeatureConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Fraction of records held out to select the best epoch.
    pub validation_fraction: f64,
    /// Tolerance for matching isotopic slots to peaks.
    pub decomp: DecompConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            feature: FeatureConfig::default(),
            epochs: 100,
            batch_size: 32,
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            validation_fraction: 0.0,
            decomp: DecompConfig::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), PredictorError> {
        let bad = |m: &str| Err(PredictorError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("moment coefficients must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

/// A molecule paired with its annotated spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub graph: MolGraph,
    pub spectrum: SpectrumRecord,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean batch loss per epoch, measured before each update.
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// 1-based epoch whose weights were returned, when validating.
    pub best_epoch: Option<usize>,
    /// Records without any explainable peak.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub report: TrainReport,
}

struct Example {
    x: Vec<(usize, f64)>,
    layout: SlotLayout,
    groups: PeakGroups,
}

impl Example {
    fn loss_and_grad(&self, w: &ModelWeights) -> (f64, SparseGradient) {
        let probs = self.probabilities(w);
        let loss = pmce(&self.groups, &probs).map(|v| v.loss).unwrap_or(0.0);
        let g = pmce_logit_gradient(&self.groups, &probs).unwrap_or_default();
        (loss, SparseGradient::from_logit_gradient(&self.layout, w, &g))
    }

    fn probabilities(&self, w: &ModelWeights) -> Vec<f64> {
        let raw = self.layout.raw_logits(&self.x, w);
        let m = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut e: Vec<f64> = raw
            .iter()
            .zip(&self.layout.slots)
            .map(|(&z, s)| {
                let v = (z - m).exp();
                if s.halved {
                    0.5 * v
                } else {
                    v
                }
            })
            .collect();
        let total: f64 = e.iter().sum();
        for v in &mut e {
            *v /= total;
        }
        e
    }

    fn loss(&self, w: &ModelWeights) -> f64 {
        pmce(&self.groups, &self.probabilities(w))
            .map(|v| v.loss)
            .unwrap_or(0.0)
    }
}

fn prepare(
    corpus: &[TrainingRecord],
    v: &Vocabulary,
    feature: &FeatureConfig,
    decomp: &DecompConfig,
) -> Result<(Vec<Example>, usize), PredictorError> {
    let prepared: Vec<Result<Option<Example>, PredictorError>> = corpus
        .par_iter()
        .map(|r| {
            let s = &r.spectrum;
            let precursor = s
                .precursor
                .ok_or_else(|| PredictorError::NoPrecursor(s.id.clone()))?;
            let cs = candidate_set(v, &precursor);
            let layout = SlotLayout::new(&cs, s.covariates.has_isotopic_peaks);
            let groups = peak_groups(s, &layout, decomp)?;
            if groups.groups.iter().all(Vec::is_empty) {
                return Ok(None);
            }
            let x = featurize(&r.graph, &s.covariates, feature).nonzeros();
            Ok(Some(Example { x, layout, groups }))
        })
        .collect();
    let mut out = Vec::with_capacity(corpus.len());
    let mut skipped = 0;
    for p in prepared {
        match p? {
            Some(e) => out.push(e),
            None => skipped += 1,
        }
    }
    Ok((out, skipped))
}

fn mean_loss(examples: &[Example], idx: &[usize], w: &ModelWeights) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let losses: Vec<f64> = idx.par_iter().map(|&i| examples[i].loss(w)).collect();
    losses.iter().sum::<f64>() / idx.len() as f64
}

struct Adam {
    m: ModelGradient,
    v: ModelGradient,
    t: i32,
}

impl Adam {
    fn new(w: &ModelWeights) -> Self {
        Self {
            m: ModelGradient::zeros_like(w),
            v: ModelGradient::zeros_like(w),
            t: 0,
        }
    }

    fn step(&mut self, w: &mut ModelWeights, g: &ModelGradient, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                p[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.epsilon);
            }
        };
        update(&mut w.w, &g.w, &mut self.m.w, &mut self.v.w);
        update(&mut w.b, &g.b, &mut self.m.b, &mut self.v.b);
        update(&mut w.w_iso, &g.w_iso, &mut self.m.w_iso, &mut self.v.w_iso);
    }
}

/// Train from zero initialization.
pub fn train(corpus: &[TrainingRecord], v: &Vocabulary, cfg: &TrainConfig) -> Result<TrainOutcome, PredictorError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(PredictorError::Config("empty training corpus".into()));
    }
    let mut w = ModelWeights::zeros(v, cfg.feature);
    let (examples, skipped) = prepare(corpus, v, &cfg.feature, &cfg.decomp)?;
    if examples.is_empty() {
        return Err(PredictorError::Unexplained);
    }
    info!(
        "training on {} records ({} skipped), {} parameters",
        examples.len(),
        skipped,
        w.num_params()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let n_val = if cfg.validation_fraction > 0.0 && examples.len() > 1 {
        ((examples.len() as f64 * cfg.validation_fraction).ceil() as usize).min(examples.len() - 1)
    } else {
        0
    };
    if n_val > 0 {
        order.shuffle(&mut rng);
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();

    let d = w.dim();
    let mut adam = Adam::new(&w);
    let mut report = TrainReport {
        skipped,
        ..TrainReport::default()
    };
    let mut best: Option<(f64, ModelWeights)> = None;
    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let parts: Vec<(f64, SparseGradient)> =
                batch.par_iter().map(|&i| examples[i].loss_and_grad(&w)).collect();
            let scale = 1.0 / batch.len() as f64;
            let mut grad = ModelGradient::zeros_like(&w);
            for (&i, (loss, g)) in batch.iter().zip(&parts) {
                epoch_loss += loss;
                g.accumulate(&mut grad, &examples[i].x, d, scale);
            }
            adam.step(&mut w, &grad, cfg);
        }
        let mean = epoch_loss / train_idx.len() as f64;
        report.train_loss.push(mean);
        if n_val > 0 {
            let vl = mean_loss(&examples, &val_idx, &w);
            report.validation_loss.push(vl);
            if best.as_ref().map_or(true, |(b, _)| vl < *b) {
                best = Some((vl, w.clone()));
                report.best_epoch = Some(epoch);
            }
            debug!("epoch {epoch}: train {mean:.6} validation {vl:.6}");
        } else {
            debug!("epoch {epoch}: train {mean:.6}");
        }
    }
    let weights = match best {
        Some((_, bw)) => bw,
        None => w,
    };
    Ok(TrainOutcome { weights, report })
}

/// Mean PMCE of `w` over the records with at least one explainable peak,
/// together with the mean entropy lower bound of those records.
pub fn evaluate(
    corpus: &[TrainingRecord],
    v: &Vocabulary,
    w: &ModelWeights,
    decomp: &DecompConfig,
) -> Result<(f64, f64), PredictorError> {
    w.check_shape()?;
    let (examples, _) = prepare(corpus, v, &w.feature, decomp)?;
    if examples.is_empty() {
        return Err(PredictorError::Unexplained);
    }
    let idx: Vec<usize> = (0..examples.len()).collect();
    let loss = mean_loss(&examples, &idx, w);
    let bound = examples
        .iter()
        .map(|e| super::entropy_lower_bound(&e.groups))
        .sum::<f64>()
        / examples.len() as f64;
    Ok((loss, bound))
}
