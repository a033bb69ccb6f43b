//! Linear spectrum predictor over formula candidates.
//!
//! Every candidate formula of a precursor is scored in three adduct states
//! and, when the spectrum carries isotopic peaks, three isotopic states. A
//! single softmax over all of these slots yields the predicted spectrum.

mod io;
mod loss;
mod train;

pub use io::{decode_weights, encode_weights, load_weights, save_weights, weights_fingerprint};
pub use loss::{
    entropy_lower_bound, peak_groups, pmce, pmce_gradient, pmce_logit_gradient, poisson_log_likelihood,
    ModelGradient, PeakGroups, PmceValue,
};
pub use train::{evaluate, train, TrainConfig, TrainOutcome, TrainReport, TrainingRecord};

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use thiserror::Error;

use crate::elements::{Formula, ISOTOPE_SPACING};
use crate::molgraph::{featurize, precursor_formula, Covariates, FeatureConfig, FeatureVector, MolGraph, MolGraphError};
use crate::spectra::{Peak, SpectrumRecord};
use crate::vocab::{candidate_set, CandidateSet, Vocabulary};

pub const N_ADDUCTS: usize = 3;
pub const N_ISOTOPES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictorError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("no peak is explained by any candidate")]
    Unexplained,
    #[error("record `{0}` has no annotations")]
    Unannotated(String),
    #[error("record `{0}` has no precursor formula")]
    NoPrecursor(String),
    #[error("weights were trained against vocabulary {expected}, got {found}")]
    Fingerprint { expected: String, found: String },
    #[error("unsupported weights file version {0}")]
    Version(u32),
    #[error("corrupt weights file: {0}")]
    Corrupt(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Graph(#[from] MolGraphError),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Adduct {
    None,
    Water,
    Nitrogen,
}

impl Adduct {
    pub const ALL: [Adduct; N_ADDUCTS] = [Adduct::None, Adduct::Water, Adduct::Nitrogen];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn formula(self) -> Formula {
        match self {
            Adduct::None => Formula::empty(),
            Adduct::Water => Formula::from_counts([0, 2, 0, 1, 0, 0, 0, 0, 0, 0]),
            Adduct::Nitrogen => Formula::from_counts([0, 0, 2, 0, 0, 0, 0, 0, 0, 0]),
        }
    }

    pub fn mass(self) -> f64 {
        self.formula().mass()
    }

    pub fn label(self) -> &'static str {
        match self {
            Adduct::None => "",
            Adduct::Water => "+H2O",
            Adduct::Nitrogen => "+N2",
        }
    }
}

/// Parameters of the logit head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub feature: FeatureConfig,
    pub vocab_fingerprint: String,
    pub vocab_size: usize,
    /// `[vocab][adduct][feature]`
    pub w: Vec<f64>,
    /// `[vocab][adduct]`
    pub b: Vec<f64>,
    /// `[isotope][feature]`
    pub w_iso: Vec<f64>,
}

impl ModelWeights {
    pub fn zeros(v: &Vocabulary, feature: FeatureConfig) -> Self {
        let d = feature.len();
        let k = v.len();
        Self {
            feature,
            vocab_fingerprint: v.fingerprint(),
            vocab_size: k,
            w: vec![0.0; k * N_ADDUCTS * d],
            b: vec![0.0; k * N_ADDUCTS],
            w_iso: vec![0.0; N_ISOTOPES * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.feature.len()
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len() + self.w_iso.len()
    }

    pub(crate) fn row(&self, vocab: usize, adduct: usize) -> usize {
        vocab * N_ADDUCTS + adduct
    }

    pub fn check_shape(&self) -> Result<(), PredictorError> {
        let d = self.dim();
        let rows = self.vocab_size * N_ADDUCTS;
        for (expected, found) in [
            (rows * d, self.w.len()),
            (rows, self.b.len()),
            (N_ISOTOPES * d, self.w_iso.len()),
        ] {
            if expected != found {
                return Err(PredictorError::Dimension { expected, found });
            }
        }
        Ok(())
    }

    pub fn check_compatible(&self, v: &Vocabulary) -> Result<(), PredictorError> {
        let found = v.fingerprint();
        if found != self.vocab_fingerprint {
            return Err(PredictorError::Fingerprint {
                expected: self.vocab_fingerprint.clone(),
                found,
            });
        }
        if v.len() != self.vocab_size {
            return Err(PredictorError::Dimension {
                expected: self.vocab_size,
                found: v.len(),
            });
        }
        self.check_shape()
    }
}

/// One output of the head: a candidate entry routed through one vocabulary
/// entry, in one adduct and isotopic state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    /// Index into the candidate set.
    pub entry: usize,
    pub vocab: usize,
    pub adduct: Adduct,
    pub isotope: usize,
    /// Set for entries reachable both as product and as loss.
    pub halved: bool,
    /// Candidate formula plus adduct.
    pub ion: Formula,
    pub mz: f64,
}

/// The slots generated by a candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLayout {
    pub slots: Vec<Slot>,
    pub n_isotopes: usize,
}

impl SlotLayout {
    pub fn new(cs: &CandidateSet, has_isotopes: bool) -> Self {
        let n_isotopes = if has_isotopes { N_ISOTOPES } else { 1 };
        let mut slots = Vec::new();
        for (entry, e) in cs.entries().iter().enumerate() {
            let (routes, n_routes) = e.origin.vocab_indices();
            let halved = e.origin.is_both();
            for &vocab in &routes[..n_routes] {
                for adduct in Adduct::ALL {
                    let ion = e
                        .formula
                        .checked_add(&adduct.formula())
                        .unwrap_or(e.formula);
                    let base = ion.mass();
                    for isotope in 0..n_isotopes {
                        slots.push(Slot {
                            entry,
                            vocab,
                            adduct,
                            isotope,
                            halved,
                            ion,
                            mz: base + isotope as f64 * ISOTOPE_SPACING,
                        });
                    }
                }
            }
        }
        Self { slots, n_isotopes }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Uncorrected logits `w·x + w_iso·x + b` for every slot.
    pub(crate) fn raw_logits(&self, x: &[(usize, f64)], w: &ModelWeights) -> Vec<f64> {
        let d = w.dim();
        let dot = |row: &[f64]| x.iter().map(|&(j, v)| row[j] * v).sum::<f64>();
        let iso: Vec<f64> = (0..self.n_isotopes)
            .map(|b| dot(&w.w_iso[b * d..(b + 1) * d]))
            .collect();
        let mut cache: Option<(usize, f64)> = None;
        self.slots
            .iter()
            .map(|s| {
                let r = w.row(s.vocab, s.adduct.index());
                let head = match cache {
                    Some((cr, v)) if cr == r => v,
                    _ => {
                        let v = dot(&w.w[r * d..(r + 1) * d]) + w.b[r];
                        cache = Some((r, v));
                        v
                    }
                };
                head + iso[s.isotope]
            })
            .collect()
    }
}

/// Logits over the slots of one candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitTensor {
    pub layout: SlotLayout,
    /// Logits before the double-count correction.
    pub raw: Vec<f64>,
}

impl LogitTensor {
    pub fn isotope_extent(&self) -> usize {
        self.layout.n_isotopes
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Corrected logits: `ln 2` subtracted from halved slots.
    pub fn logits(&self) -> Vec<f64> {
        self.raw
            .iter()
            .zip(&self.layout.slots)
            .map(|(&z, s)| if s.halved { z - LN_2 } else { z })
            .collect()
    }

    /// Unnormalized softmax weights `exp(z)`, with halved slots scaled by an
    /// exact factor of one half.
    pub fn contributions(&self) -> Vec<f64> {
        self.weights_shifted(0.0)
    }

    fn weights_shifted(&self, shift: f64) -> Vec<f64> {
        self.raw
            .iter()
            .zip(&self.layout.slots)
            .map(|(&z, s)| {
                let e = (z - shift).exp();
                if s.halved {
                    0.5 * e
                } else {
                    e
                }
            })
            .collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let m = self.raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut e = self.weights_shifted(if m.is_finite() { m } else { 0.0 });
        let total: f64 = e.iter().sum();
        for v in &mut e {
            *v /= total;
        }
        e
    }

    /// Per candidate entry, the summed contribution of its slots in the given
    /// adduct and isotopic state.
    pub fn entry_contributions(&self, adduct: Adduct, isotope: usize) -> Vec<f64> {
        let n = self.layout.slots.iter().map(|s| s.entry + 1).max().unwrap_or(0);
        let mut out = vec![0.0; n];
        for (s, c) in self.layout.slots.iter().zip(self.contributions()) {
            if s.adduct == adduct && s.isotope == isotope {
                out[s.entry] += c;
            }
        }
        out
    }
}

pub fn logits(
    x: &FeatureVector,
    cs: &CandidateSet,
    w: &ModelWeights,
    has_isotopes: bool,
) -> Result<LogitTensor, PredictorError> {
    w.check_shape()?;
    if x.len() != w.dim() {
        return Err(PredictorError::Dimension {
            expected: w.dim(),
            found: x.len(),
        });
    }
    if let Some(bad) = cs.entries().iter().find_map(|e| {
        let (r, n) = e.origin.vocab_indices();
        r[..n].iter().copied().find(|&i| i >= w.vocab_size)
    }) {
        return Err(PredictorError::Dimension {
            expected: w.vocab_size,
            found: bad + 1,
        });
    }
    let layout = SlotLayout::new(cs, has_isotopes);
    let raw = layout.raw_logits(&x.nonzeros(), w);
    Ok(LogitTensor { layout, raw })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedPeak {
    pub formula: Formula,
    pub adduct: Adduct,
    pub isotope: usize,
    pub mz: f64,
    pub probability: f64,
}

impl PredictedPeak {
    /// Formula plus adduct.
    pub fn ion(&self) -> Formula {
        self.formula
            .checked_add(&self.adduct.formula())
            .unwrap_or(self.formula)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedSpectrum {
    pub precursor: Formula,
    pub covariates: Covariates,
    /// Sorted by m/z.
    pub peaks: Vec<PredictedPeak>,
}

impl PredictedSpectrum {
    fn from_tensor(t: &LogitTensor, cs: &CandidateSet, covariates: Covariates) -> Self {
        let probs = t.probabilities();
        let mut merged: BTreeMap<(Formula, usize), PredictedPeak> = BTreeMap::new();
        for (s, p) in t.layout.slots.iter().zip(probs) {
            merged
                .entry((s.ion, s.isotope))
                .and_modify(|e| e.probability += p)
                .or_insert(PredictedPeak {
                    formula: cs.entries()[s.entry].formula,
                    adduct: s.adduct,
                    isotope: s.isotope,
                    mz: s.mz,
                    probability: p,
                });
        }
        let mut peaks: Vec<PredictedPeak> = merged.into_values().collect();
        peaks.sort_by(|a, b| a.mz.total_cmp(&b.mz).then_with(|| a.ion().cmp(&b.ion())));
        Self {
            precursor: cs.precursor,
            covariates,
            peaks,
        }
    }

    pub fn total_probability(&self) -> f64 {
        self.peaks.iter().map(|p| p.probability).sum()
    }

    /// Mean of several predictions for the same precursor.
    pub fn mean(spectra: &[PredictedSpectrum]) -> Option<PredictedSpectrum> {
        let first = spectra.first()?;
        let n = spectra.len() as f64;
        let mut merged: BTreeMap<(Formula, usize), PredictedPeak> = BTreeMap::new();
        for s in spectra {
            for p in &s.peaks {
                merged
                    .entry((p.ion(), p.isotope))
                    .and_modify(|e| e.probability += p.probability)
                    .or_insert(*p);
            }
        }
        let mut peaks: Vec<PredictedPeak> = merged
            .into_values()
            .map(|mut p| {
                p.probability /= n;
                p
            })
            .collect();
        peaks.sort_by(|a, b| a.mz.total_cmp(&b.mz).then_with(|| a.ion().cmp(&b.ion())));
        Some(PredictedSpectrum {
            precursor: first.precursor,
            covariates: first.covariates,
            peaks,
        })
    }

    /// Spectrum record of the peaks with probability at least
    /// `min_probability`, renormalized. The bare empty formula has no m/z and
    /// is dropped. Monoisotopic peaks are annotated with their ion formula.
    pub fn to_record(&self, id: impl Into<String>, min_probability: f64) -> SpectrumRecord {
        let kept: Vec<&PredictedPeak> = self
            .peaks
            .iter()
            .filter(|p| p.probability >= min_probability && p.probability > 0.0 && p.mz > 0.0)
            .collect();
        let total: f64 = kept.iter().map(|p| p.probability).sum();
        let peaks = kept
            .iter()
            .map(|p| Peak {
                mz: p.mz,
                height: p.probability / total,
            })
            .collect();
        let annotations = kept
            .iter()
            .map(|p| if p.isotope == 0 { vec![p.ion()] } else { Vec::new() })
            .collect();
        SpectrumRecord::with_annotations(id, peaks, annotations, Some(self.precursor), self.covariates)
    }
}

/// A vocabulary bound to compatible weights.
#[derive(Debug, Clone, Copy)]
pub struct Predictor<'a> {
    vocab: &'a Vocabulary,
    weights: &'a ModelWeights,
}

impl<'a> Predictor<'a> {
    pub fn new(vocab: &'a Vocabulary, weights: &'a ModelWeights) -> Result<Self, PredictorError> {
        weights.check_compatible(vocab)?;
        Ok(Self { vocab, weights })
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.vocab
    }

    pub fn weights(&self) -> &ModelWeights {
        self.weights
    }

    pub fn predict(&self, g: &MolGraph, c: &Covariates) -> Result<PredictedSpectrum, PredictorError> {
        let precursor = precursor_formula(g, c.precursor_type)?;
        let x = featurize(g, c, &self.weights.feature);
        self.predict_features(&x, &precursor, c)
    }

    pub fn predict_features(
        &self,
        x: &FeatureVector,
        precursor: &Formula,
        c: &Covariates,
    ) -> Result<PredictedSpectrum, PredictorError> {
        let cs = candidate_set(self.vocab, precursor);
        if cs.is_empty() {
            return Err(PredictorError::EmptyCandidates);
        }
        let t = logits(x, &cs, self.weights, c.has_isotopic_peaks)?;
        Ok(PredictedSpectrum::from_tensor(&t, &cs, *c))
    }
}

pub fn predict(
    g: &MolGraph,
    c: &Covariates,
    v: &Vocabulary,
    w: &ModelWeights,
) -> Result<PredictedSpectrum, PredictorError> {
    Predictor::new(v, w)?.predict(g, c)
}
