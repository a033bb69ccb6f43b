//! Predicted spectral libraries: build, persist, query and evaluate.

use std::collections::HashSet;
use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::molgraph::parse_smiles;
use crate::predictor::{Predictor, PredictorError};
use crate::scoring::{cosine_similarity, MatchConfig, ScoringError};
use crate::spectra::{parse_msp, write_msp, SpectraError, SpectrumRecord};
use crate::testkit::StructureRow;

const LIBRARY_MAGIC: &str = "#MSFLIB";
pub const LIBRARY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("empty structure list")]
    NoStructures,
    #[error("library is empty")]
    EmptyLibrary,
    #[error("duplicate library id `{0}`")]
    DuplicateId(String),
    #[error("true id `{0}` is not in the library")]
    MissingId(String),
    #[error("library header line {line}: {msg}")]
    Header { line: usize, msg: String },
    #[error("unsupported library version {0}")]
    Version(u32),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LibraryEntry {
    pub id: String,
    pub smiles: String,
    pub spectrum: SpectrumRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLibrary {
    pub model_fingerprint: String,
    pub vocab_fingerprint: String,
    /// Seconds since the Unix epoch, supplied by the caller.
    pub created: u64,
    pub entries: Vec<LibraryEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildFailure {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildConfig {
    /// Predicted peaks below this probability are dropped before the
    /// spectrum is renormalized.
    pub min_probability: f64,
    pub created: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            min_probability: 1e-4,
            created: 0,
        }
    }
}

/// Round-trip through the text form so stored entries equal what a reload
/// produces.
fn canonicalize(r: &SpectrumRecord) -> Result<SpectrumRecord, SpectraError> {
    let mut back = parse_msp(&write_msp(std::slice::from_ref(r)))?;
    Ok(back.pop().expect("one record"))
}

/// Predict one library spectrum per structure row. Rows that fail are
/// reported and skipped.
pub fn build_library(
    rows: &[StructureRow],
    predictor: &Predictor,
    model_fingerprint: &str,
    cfg: &BuildConfig,
) -> Result<(SpectralLibrary, Vec<BuildFailure>), SearchError> {
    if rows.is_empty() {
        return Err(SearchError::NoStructures);
    }
    let mut seen = HashSet::new();
    for r in rows {
        if !seen.insert(r.id.as_str()) {
            return Err(SearchError::DuplicateId(r.id.clone()));
        }
    }
    let built: Vec<Result<LibraryEntry, BuildFailure>> = rows
        .par_iter()
        .map(|row| {
            let fail = |message: String| BuildFailure {
                id: row.id.clone(),
                message,
            };
            let g = parse_smiles(&row.smiles).map_err(|e| fail(e.to_string()))?;
            let pred = predictor
                .predict(&g, &row.covariates)
                .map_err(|e| fail(e.to_string()))?;
            let mut rec = pred.to_record(row.id.clone(), cfg.min_probability);
            rec.metadata.push(("SMILES".to_string(), row.smiles.clone()));
            let spectrum = canonicalize(&rec).map_err(|e| fail(e.to_string()))?;
            Ok(LibraryEntry {
                id: row.id.clone(),
                smiles: row.smiles.clone(),
                spectrum,
            })
        })
        .collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for b in built {
        match b {
            Ok(e) => entries.push(e),
            Err(f) => {
                warn!("skipping {}: {}", f.id, f.message);
                failures.push(f);
            }
        }
    }
    Ok((
        SpectralLibrary {
            model_fingerprint: model_fingerprint.to_string(),
            vocab_fingerprint: predictor.weights().vocab_fingerprint.clone(),
            created: cfg.created,
            entries,
        },
        failures,
    ))
}

impl SpectralLibrary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{LIBRARY_MAGIC} {LIBRARY_VERSION}");
        let _ = writeln!(out, "#model {}", self.model_fingerprint);
        let _ = writeln!(out, "#vocab {}", self.vocab_fingerprint);
        let _ = writeln!(out, "#created {}", self.created);
        let _ = writeln!(out, "#entries {}", self.entries.len());
        out.push('\n');
        let records: Vec<SpectrumRecord> = self.entries.iter().map(|e| e.spectrum.clone()).collect();
        out.push_str(&write_msp(&records));
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SearchError> {
        let mut header_end = 0;
        let mut fields: Vec<(usize, &str, &str)> = Vec::new();
        for (n, line) in text.split('\n').enumerate() {
            let line_no = n + 1;
            let l = line.strip_suffix('\r').unwrap_or(line);
            if !l.starts_with('#') {
                break;
            }
            header_end += line.len() + 1;
            let (k, v) = l.split_once(' ').unwrap_or((l, ""));
            fields.push((line_no, k, v.trim()));
        }
        let header = |line: usize, msg: &str| SearchError::Header {
            line,
            msg: msg.to_string(),
        };
        let Some(&(_, magic, version)) = fields.first() else {
            return Err(header(1, "missing library header"));
        };
        if magic != LIBRARY_MAGIC {
            return Err(header(1, "not a spectral library"));
        }
        let version: u32 = version.parse().map_err(|_| header(1, "bad version"))?;
        if version != LIBRARY_VERSION {
            return Err(SearchError::Version(version));
        }
        let get = |key: &str| {
            fields
                .iter()
                .find(|(_, k, _)| *k == key)
                .map(|&(l, _, v)| (l, v))
                .ok_or_else(|| header(fields.len() + 1, &format!("missing {key}")))
        };
        let model_fingerprint = get("#model")?.1.to_string();
        let vocab_fingerprint = get("#vocab")?.1.to_string();
        let (cl, created) = get("#created")?;
        let created: u64 = created.parse().map_err(|_| header(cl, "bad timestamp"))?;
        let (el, n_entries) = get("#entries")?;
        let n_entries: usize = n_entries.parse().map_err(|_| header(el, "bad entry count"))?;
        let body = &text[header_end.min(text.len())..];
        let records = parse_msp(body).map_err(|e| e.with_line_offset(fields.len()))?;
        if records.len() != n_entries {
            return Err(header(el, &format!("declared {n_entries} entries, found {}", records.len())));
        }
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(records.len());
        for r in records {
            if !seen.insert(r.id.clone()) {
                return Err(SearchError::DuplicateId(r.id));
            }
            entries.push(LibraryEntry {
                id: r.id.clone(),
                smiles: r.metadata_value("SMILES").unwrap_or_default().to_string(),
                spectrum: r,
            });
        }
        Ok(Self {
            model_fingerprint,
            vocab_fingerprint,
            created,
            entries,
        })
    }

    pub fn get(&self, id: &str) -> Option<&LibraryEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub matching: MatchConfig,
    pub top_n: usize,
    /// Restrict candidates to entries whose precursor m/z lies within this
    /// many ppm of the query's, when both are known.
    pub precursor_ppm: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            matching: MatchConfig::default(),
            top_n: 10,
            precursor_ppm: Some(10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
    pub n_matched: usize,
}

fn passes_prefilter(query: &SpectrumRecord, entry: &SpectrumRecord, ppm: Option<f64>) -> bool {
    match (ppm, query.precursor_mass(), entry.precursor_mass()) {
        (Some(ppm), Some(q), Some(e)) => (q - e).abs() <= ppm * 1e-6 * q,
        _ => true,
    }
}

/// Library entries ranked by cosine similarity to the query, best first,
/// ties broken by id.
pub fn search(query: &SpectrumRecord, lib: &SpectralLibrary, cfg: &SearchConfig) -> Result<Vec<SearchHit>, SearchError> {
    if lib.entries.is_empty() {
        return Err(SearchError::EmptyLibrary);
    }
    let mut hits = Vec::new();
    for e in &lib.entries {
        if !passes_prefilter(query, &e.spectrum, cfg.precursor_ppm) {
            continue;
        }
        let r = cosine_similarity(query, &e.spectrum, &cfg.matching)?;
        hits.push(SearchHit {
            id: e.id.clone(),
            score: r.score,
            n_matched: r.matches.len(),
        });
    }
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    hits.truncate(cfg.top_n);
    Ok(hits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalMetrics {
    pub n_queries: usize,
    pub recall_at_1: f64,
    pub recall_at_5: f64,
    pub recall_at_10: f64,
    /// Mean cosine between each query and its true entry.
    pub mean_cosine: f64,
    /// Fraction of queries whose true-entry cosine exceeds 0.7.
    pub frac_above_0_7: f64,
    /// 1-based rank of the true id per query, if retrieved in the top 10.
    pub ranks: Vec<Option<usize>>,
}

pub fn evaluate_retrieval(
    queries: &[(String, SpectrumRecord)],
    lib: &SpectralLibrary,
    cfg: &SearchConfig,
) -> Result<RetrievalMetrics, SearchError> {
    if lib.entries.is_empty() {
        return Err(SearchError::EmptyLibrary);
    }
    for (id, _) in queries {
        if lib.get(id).is_none() {
            return Err(SearchError::MissingId(id.clone()));
        }
    }
    let cfg10 = SearchConfig {
        top_n: cfg.top_n.max(10),
        ..*cfg
    };
    let per_query: Vec<Result<(Option<usize>, f64), SearchError>> = queries
        .par_iter()
        .map(|(id, q)| {
            let hits = search(q, lib, &cfg10)?;
            let rank = hits.iter().position(|h| &h.id == id).map(|p| p + 1);
            let truth = lib.get(id).expect("checked above");
            let cos = cosine_similarity(q, &truth.spectrum, &cfg.matching)?.score;
            Ok((rank, cos))
        })
        .collect();
    let mut ranks = Vec::with_capacity(queries.len());
    let mut cosines = Vec::with_capacity(queries.len());
    for r in per_query {
        let (rank, cos) = r?;
        ranks.push(rank);
        cosines.push(cos);
    }
    let n = queries.len().max(1) as f64;
    let recall = |k: usize| ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count() as f64 / n;
    Ok(RetrievalMetrics {
        n_queries: queries.len(),
        recall_at_1: recall(1),
        recall_at_5: recall(5),
        recall_at_10: recall(10),
        mean_cosine: cosines.iter().sum::<f64>() / n,
        frac_above_0_7: cosines.iter().filter(|&&c| c > 0.7).count() as f64 / n,
        ranks,
    })
}
