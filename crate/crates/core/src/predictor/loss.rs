//! Peak-marginal cross entropy and its gradient.

use std::collections::HashMap;

use super::{LogitTensor, ModelWeights, PredictorError, SlotLayout};
use crate::decomp::DecompConfig;
use crate::elements::Formula;
use crate::molgraph::FeatureVector;
use crate::spectra::SpectrumRecord;

/// For every peak, the slots compatible with it, plus normalized heights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakGroups {
    pub groups: Vec<Vec<usize>>,
    pub heights: Vec<f64>,
}

impl PeakGroups {
    /// Height of peaks with at least one compatible slot.
    pub fn explained(&self) -> f64 {
        self.groups
            .iter()
            .zip(&self.heights)
            .filter(|(g, _)| !g.is_empty())
            .map(|(_, y)| y)
            .sum()
    }

    pub fn unexplained(&self) -> f64 {
        self.groups
            .iter()
            .zip(&self.heights)
            .filter(|(g, _)| g.is_empty())
            .map(|(_, y)| y)
            .sum()
    }
}

/// Match slots to peaks. Monoisotopic slots match a peak when their ion
/// formula is among the peak's annotations; heavier isotopic states match by
/// m/z within the decomposition tolerance.
pub fn peak_groups(
    s: &SpectrumRecord,
    layout: &SlotLayout,
    cfg: &DecompConfig,
) -> Result<PeakGroups, PredictorError> {
    let anns = s
        .annotations()
        .ok_or_else(|| PredictorError::Unannotated(s.id.clone()))?;
    let peaks = s.peaks();
    let total = s.total_height();
    let heights = peaks
        .iter()
        .map(|p| if total > 0.0 { p.height / total } else { 0.0 })
        .collect();
    let mut by_formula: HashMap<&Formula, Vec<usize>> = HashMap::new();
    for (i, fs) in anns.iter().enumerate() {
        for f in fs {
            let e = by_formula.entry(f).or_default();
            if e.last() != Some(&i) {
                e.push(i);
            }
        }
    }
    let mut groups = vec![Vec::new(); peaks.len()];
    for (si, slot) in layout.slots.iter().enumerate() {
        if slot.isotope == 0 {
            if let Some(ps) = by_formula.get(&slot.ion) {
                for &i in ps {
                    groups[i].push(si);
                }
            }
        } else {
            let lo = peaks.partition_point(|p| p.mz + cfg.tolerance(p.mz) < slot.mz);
            for (i, p) in peaks.iter().enumerate().skip(lo) {
                if p.mz - cfg.tolerance(p.mz) > slot.mz {
                    break;
                }
                if cfg.in_window(slot.mz, p.mz) {
                    groups[i].push(si);
                }
            }
        }
    }
    Ok(PeakGroups { groups, heights })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmceValue {
    pub loss: f64,
    /// Height fraction of peaks without any compatible slot.
    pub unexplained: f64,
}

/// `−Σ y_i ln Σ_{s∈G_i} p_s` over peaks with a nonempty group.
pub fn pmce(groups: &PeakGroups, probs: &[f64]) -> Result<PmceValue, PredictorError> {
    let mut loss = 0.0;
    let mut any = false;
    for (g, &y) in groups.groups.iter().zip(&groups.heights) {
        if g.is_empty() {
            continue;
        }
        any = true;
        let q: f64 = g.iter().map(|&s| probs[s]).sum();
        if y > 0.0 {
            loss -= y * q.ln();
        }
    }
    if !any {
        return Err(PredictorError::Unexplained);
    }
    Ok(PmceValue {
        loss,
        unexplained: groups.unexplained(),
    })
}

/// Gradient of [`pmce`] with respect to the logits:
/// `p_s (Y − Σ_{i: s∈G_i} y_i / Q_i)` with `Y` the explained height.
pub fn pmce_logit_gradient(groups: &PeakGroups, probs: &[f64]) -> Result<Vec<f64>, PredictorError> {
    let mut inner = vec![0.0; probs.len()];
    let mut explained = 0.0;
    let mut any = false;
    for (g, &y) in groups.groups.iter().zip(&groups.heights) {
        if g.is_empty() {
            continue;
        }
        any = true;
        explained += y;
        let q: f64 = g.iter().map(|&s| probs[s]).sum();
        if y > 0.0 {
            for &s in g {
                inner[s] += y / q;
            }
        }
    }
    if !any {
        return Err(PredictorError::Unexplained);
    }
    Ok(probs
        .iter()
        .zip(inner)
        .map(|(&p, r)| p * (explained - r))
        .collect())
}

/// Dense gradient with the layout of [`ModelWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradient {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub w_iso: Vec<f64>,
}

impl ModelGradient {
    pub fn zeros_like(w: &ModelWeights) -> Self {
        Self {
            w: vec![0.0; w.w.len()],
            b: vec![0.0; w.b.len()],
            w_iso: vec![0.0; w.w_iso.len()],
        }
    }
}

/// Sparse per-record gradient: summed logit gradients per head row and per
/// isotopic state, to be multiplied by the record's features.
#[derive(Debug, Clone, Default)]
pub(crate) struct SparseGradient {
    pub rows: Vec<(usize, f64)>,
    pub iso: Vec<f64>,
}

impl SparseGradient {
    pub fn from_logit_gradient(layout: &SlotLayout, w: &ModelWeights, g: &[f64]) -> Self {
        let mut rows: Vec<(usize, f64)> = Vec::new();
        let mut iso = vec![0.0; layout.n_isotopes];
        for (s, &gs) in layout.slots.iter().zip(g) {
            let r = w.row(s.vocab, s.adduct.index());
            match rows.last_mut() {
                Some((lr, acc)) if *lr == r => *acc += gs,
                _ => rows.push((r, gs)),
            }
            iso[s.isotope] += gs;
        }
        Self { rows, iso }
    }

    /// `grad += scale · self ⊗ x`.
    pub fn accumulate(&self, grad: &mut ModelGradient, x: &[(usize, f64)], d: usize, scale: f64) {
        for &(r, g) in &self.rows {
            let g = g * scale;
            if g == 0.0 {
                continue;
            }
            grad.b[r] += g;
            let row = &mut grad.w[r * d..(r + 1) * d];
            for &(j, v) in x {
                row[j] += g * v;
            }
        }
        for (beta, &g) in self.iso.iter().enumerate() {
            let g = g * scale;
            let row = &mut grad.w_iso[beta * d..(beta + 1) * d];
            for &(j, v) in x {
                row[j] += g * v;
            }
        }
    }
}

/// Loss and exact gradient of PMCE ∘ softmax ∘ logits for one record.
pub fn pmce_gradient(
    s: &SpectrumRecord,
    t: &LogitTensor,
    x: &FeatureVector,
    w: &ModelWeights,
    cfg: &DecompConfig,
) -> Result<(PmceValue, ModelGradient), PredictorError> {
    if x.len() != w.dim() {
        return Err(PredictorError::Dimension {
            expected: w.dim(),
            found: x.len(),
        });
    }
    let groups = peak_groups(s, &t.layout, cfg)?;
    let probs = t.probabilities();
    let value = pmce(&groups, &probs)?;
    let g = pmce_logit_gradient(&groups, &probs)?;
    let mut grad = ModelGradient::zeros_like(w);
    SparseGradient::from_logit_gradient(&t.layout, w, &g).accumulate(&mut grad, &x.nonzeros(), w.dim(), 1.0);
    Ok((value, grad))
}

/// Minimum of [`pmce`] over all distributions when groups are disjoint:
/// `−Σ y_i ln(y_i / Y)` over explained peaks.
pub fn entropy_lower_bound(groups: &PeakGroups) -> f64 {
    let explained = groups.explained();
    groups
        .groups
        .iter()
        .zip(&groups.heights)
        .filter(|(g, &y)| !g.is_empty() && y > 0.0)
        .map(|(_, &y)| -y * (y / explained).ln())
        .sum()
}

/// Poisson log-likelihood of integer peak heights `counts` when `lambda`
/// precursor ions split into fragments with probabilities `probs`.
pub fn poisson_log_likelihood(counts: &[u64], groups: &PeakGroups, probs: &[f64], lambda: f64) -> f64 {
    counts
        .iter()
        .zip(&groups.groups)
        .map(|(&k, g)| {
            let rate = lambda * g.iter().map(|&s| probs[s]).sum::<f64>();
            let log_fact: f64 = (2..=k).map(|j| (j as f64).ln()).sum();
            let kf = k as f64;
            let term = if k == 0 { 0.0 } else { kf * rate.ln() };
            term - rate - log_fact
        })
        .sum()
}
