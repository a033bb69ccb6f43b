//! Fixed formula vocabulary: frequent product ions and neutral losses.
//!
//! Selection follows the greedy two-list merge: every annotated peak splits
//! its height uniformly across its candidate formulas, crediting each
//! candidate `f` as a product ion and `P − f` as a neutral loss. Both tables
//! are ranked by accumulated weight and merged by repeatedly taking the
//! heavier head until `K` entries are chosen.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::elements::{parse_formula, Formula};
use crate::spectra::SpectrumRecord;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VocabError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("vocabulary size must be at least 1")]
    InvalidSize,
    #[error("record `{0}` has no annotations")]
    Unannotated(String),
    #[error("record `{0}` has no precursor formula")]
    NoPrecursor(String),
    #[error("vocabulary line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VocabKind {
    Product,
    Loss,
}

impl VocabKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VocabKind::Product => "product",
            VocabKind::Loss => "loss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocabEntry {
    pub kind: VocabKind,
    pub formula: Formula,
    pub weight: f64,
}

/// Ranked weight tables accumulated from a corpus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightTables {
    pub products: Vec<(Formula, f64)>,
    pub losses: Vec<(Formula, f64)>,
}

fn rank_table(acc: BTreeMap<Formula, Vec<f64>>) -> Vec<(Formula, f64)> {
    let mut table: Vec<(Formula, f64)> = acc
        .into_iter()
        .map(|(f, mut parts)| {
            // Summing sorted contributions makes the total independent of
            // corpus order.
            parts.sort_by(f64::total_cmp);
            (f, parts.iter().sum())
        })
        .collect();
    table.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.0.mass().total_cmp(&b.0.mass()))
            .then_with(|| a.0.cmp(&b.0))
    });
    table
}

impl WeightTables {
    pub fn accumulate(corpus: &[SpectrumRecord]) -> Result<Self, VocabError> {
        if corpus.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        let mut products: BTreeMap<Formula, Vec<f64>> = BTreeMap::new();
        let mut losses: BTreeMap<Formula, Vec<f64>> = BTreeMap::new();
        for r in corpus {
            let precursor = r
                .precursor
                .ok_or_else(|| VocabError::NoPrecursor(r.id.clone()))?;
            let anns = r
                .annotations()
                .ok_or_else(|| VocabError::Unannotated(r.id.clone()))?;
            for (peak, cands) in r.peaks().iter().zip(anns) {
                if cands.is_empty() {
                    continue;
                }
                let share = peak.height / cands.len() as f64;
                for f in cands {
                    products.entry(*f).or_default().push(share);
                    if let Ok(l) = precursor.checked_sub(f) {
                        losses.entry(l).or_default().push(share);
                    }
                }
            }
        }
        Ok(Self {
            products: rank_table(products),
            losses: rank_table(losses),
        })
    }

    /// Greedy merge of the two ranked tables into `k` entries (fewer when the
    /// tables run out). Ties go to the product table.
    pub fn select(&self, k: usize) -> Result<Vocabulary, VocabError> {
        if k < 1 {
            return Err(VocabError::InvalidSize);
        }
        let (mut i, mut j) = (0, 0);
        let mut entries = Vec::with_capacity(k.min(self.products.len() + self.losses.len()));
        while entries.len() < k {
            let take_product = match (self.products.get(i), self.losses.get(j)) {
                (None, None) => break,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(p), Some(l)) => p.1 >= l.1,
            };
            if take_product {
                let (formula, weight) = self.products[i];
                entries.push(VocabEntry {
                    kind: VocabKind::Product,
                    formula,
                    weight,
                });
                i += 1;
            } else {
                let (formula, weight) = self.losses[j];
                entries.push(VocabEntry {
                    kind: VocabKind::Loss,
                    formula,
                    weight,
                });
                j += 1;
            }
        }
        Ok(Vocabulary::from_entries(entries))
    }

    /// Top-`k` entries of a single table.
    pub fn select_single(&self, kind: VocabKind, k: usize) -> Result<Vocabulary, VocabError> {
        if k < 1 {
            return Err(VocabError::InvalidSize);
        }
        let table = match kind {
            VocabKind::Product => &self.products,
            VocabKind::Loss => &self.losses,
        };
        Ok(Vocabulary::from_entries(
            table
                .iter()
                .take(k)
                .map(|&(formula, weight)| VocabEntry {
                    kind,
                    formula,
                    weight,
                })
                .collect(),
        ))
    }
}

pub fn build_vocabulary(corpus: &[SpectrumRecord], k: usize) -> Result<Vocabulary, VocabError> {
    if k < 1 {
        return Err(VocabError::InvalidSize);
    }
    WeightTables::accumulate(corpus)?.select(k)
}

/// Ranked vocabulary; an entry's index is its selection rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    product_index: HashMap<Formula, usize>,
    loss_index: HashMap<Formula, usize>,
}

impl Vocabulary {
    pub fn from_entries(entries: Vec<VocabEntry>) -> Self {
        let mut product_index = HashMap::new();
        let mut loss_index = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            let map = match e.kind {
                VocabKind::Product => &mut product_index,
                VocabKind::Loss => &mut loss_index,
            };
            map.entry(e.formula).or_insert(i);
        }
        Self {
            entries,
            product_index,
            loss_index,
        }
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn products(&self) -> impl Iterator<Item = (usize, &VocabEntry)> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == VocabKind::Product)
    }

    pub fn losses(&self) -> impl Iterator<Item = (usize, &VocabEntry)> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == VocabKind::Loss)
    }

    pub fn product_rank(&self, f: &Formula) -> Option<usize> {
        self.product_index.get(f).copied()
    }

    pub fn loss_rank(&self, f: &Formula) -> Option<usize> {
        self.loss_index.get(f).copied()
    }

    /// The first `k` ranked entries.
    pub fn prefix(&self, k: usize) -> Vocabulary {
        Vocabulary::from_entries(self.entries[..k.min(self.len())].to_vec())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("rank\tkind\tformula\tweight\n");
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", i + 1, e.kind.as_str(), e.formula, e.weight);
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, VocabError> {
        let err = |line: usize, msg: String| VocabError::Parse { line, msg };
        let mut entries = Vec::new();
        let mut seen_header = false;
        for (n, raw) in text.split('\n').enumerate() {
            let line = n + 1;
            let l = raw.strip_suffix('\r').unwrap_or(raw);
            if l.is_empty() {
                continue;
            }
            if !seen_header {
                if l != "rank\tkind\tformula\tweight" {
                    return Err(err(line, "missing header".into()));
                }
                seen_header = true;
                continue;
            }
            let cols: Vec<&str> = l.split('\t').collect();
            if cols.len() != 4 {
                return Err(err(line, format!("expected 4 columns, found {}", cols.len())));
            }
            let rank: usize = cols[0]
                .parse()
                .map_err(|_| err(line, format!("bad rank `{}`", cols[0])))?;
            if rank != entries.len() + 1 {
                return Err(err(line, format!("rank {rank} out of sequence")));
            }
            let kind = match cols[1] {
                "product" => VocabKind::Product,
                "loss" => VocabKind::Loss,
                other => return Err(err(line, format!("unknown kind `{other}`"))),
            };
            let formula = if cols[2].is_empty() {
                Formula::empty()
            } else {
                parse_formula(cols[2]).map_err(|e| err(line, e.to_string()))?
            };
            let weight: f64 = cols[3]
                .parse()
                .map_err(|_| err(line, format!("bad weight `{}`", cols[3])))?;
            entries.push(VocabEntry {
                kind,
                formula,
                weight,
            });
        }
        if !seen_header {
            return Err(err(1, "missing header".into()));
        }
        let v = Self::from_entries(entries);
        if v.product_index.len() + v.loss_index.len() != v.len() {
            return Err(err(0, "duplicate formula within a list".into()));
        }
        Ok(v)
    }

    /// SHA-256 of the TSV serialization, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_tsv().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Product(usize),
    Loss(usize),
    /// Generated by both routes; holds the product and loss vocabulary indices.
    Both { product: usize, loss: usize },
}

impl Origin {
    pub fn vocab_indices(&self) -> ([usize; 2], usize) {
        match *self {
            Origin::Product(i) | Origin::Loss(i) => ([i, i], 1),
            Origin::Both { product, loss } => ([product, loss], 2),
        }
    }

    pub fn is_both(&self) -> bool {
        matches!(self, Origin::Both { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateEntry {
    pub formula: Formula,
    pub origin: Origin,
}

/// Per-precursor expansion of a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub precursor: Formula,
    entries: Vec<CandidateEntry>,
    index: HashMap<Formula, usize>,
}

impl CandidateSet {
    pub fn entries(&self) -> &[CandidateEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, f: &Formula) -> Option<usize> {
        self.index.get(f).copied()
    }

    pub fn contains(&self, f: &Formula) -> bool {
        self.index.contains_key(f)
    }

    /// Formulas predicted by both a product and a loss entry.
    pub fn double_count(&self) -> impl Iterator<Item = &Formula> {
        self.entries
            .iter()
            .filter(|e| e.origin.is_both())
            .map(|e| &e.formula)
    }
}

pub fn candidate_set(v: &Vocabulary, precursor: &Formula) -> CandidateSet {
    let mut entries: Vec<CandidateEntry> = Vec::new();
    let mut index: HashMap<Formula, usize> = HashMap::new();
    for (rank, e) in v.entries.iter().enumerate() {
        let (formula, origin) = match e.kind {
            VocabKind::Product if e.formula.is_subformula_of(precursor) => {
                (e.formula, Origin::Product(rank))
            }
            VocabKind::Loss => match precursor.checked_sub(&e.formula) {
                Ok(f) => (f, Origin::Loss(rank)),
                Err(_) => continue,
            },
            _ => continue,
        };
        match index.get(&formula) {
            Some(&pos) => {
                let existing = &mut entries[pos];
                existing.origin = match (existing.origin, origin) {
                    (Origin::Product(p), Origin::Loss(l)) | (Origin::Loss(l), Origin::Product(p)) => {
                        Origin::Both { product: p, loss: l }
                    }
                    (o, _) => o,
                };
            }
            None => {
                index.insert(formula, entries.len());
                entries.push(CandidateEntry { formula, origin });
            }
        }
    }
    CandidateSet {
        precursor: *precursor,
        entries,
        index,
    }
}

/// Explained-height fractions for a corpus under one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    /// Explained fraction per spectrum with the full vocabulary.
    pub per_spectrum: Vec<f64>,
    pub mean: f64,
    /// `curve[k]` is the mean coverage using the first `k` entries.
    pub curve: Vec<f64>,
}

/// Rank of the first vocabulary entry that explains a peak with the given
/// candidate formulas, if any.
fn first_explaining_rank(v: &Vocabulary, precursor: &Formula, cands: &[Formula]) -> Option<usize> {
    cands
        .iter()
        .filter(|f| f.is_subformula_of(precursor))
        .flat_map(|f| {
            let loss = precursor.checked_sub(f).ok().and_then(|l| v.loss_rank(&l));
            [v.product_rank(f), loss]
        })
        .flatten()
        .min()
}

pub fn coverage(v: &Vocabulary, corpus: &[SpectrumRecord]) -> Result<CoverageReport, VocabError> {
    let k = v.len();
    let mut delta = vec![0.0; k + 1];
    let mut per_spectrum = Vec::with_capacity(corpus.len());
    for r in corpus {
        let precursor = r
            .precursor
            .ok_or_else(|| VocabError::NoPrecursor(r.id.clone()))?;
        let total = r.total_height();
        let mut explained = 0.0;
        if total > 0.0 {
            for (i, p) in r.peaks().iter().enumerate() {
                if let Some(rank) = first_explaining_rank(v, &precursor, r.peak_annotations(i)) {
                    let frac = p.height / total;
                    explained += frac;
                    delta[rank + 1] += frac;
                }
            }
        }
        per_spectrum.push(explained);
    }
    let n = corpus.len().max(1) as f64;
    let mut curve = Vec::with_capacity(k + 1);
    let mut acc = 0.0;
    for d in delta {
        acc += d;
        curve.push(acc / n);
    }
    let mean = per_spectrum.iter().sum::<f64>() / n;
    Ok(CoverageReport {
        per_spectrum,
        mean,
        curve,
    })
}
