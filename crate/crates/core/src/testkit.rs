//! Synthetic ground truth: random structures and a toy bond-breaking
//! simulator producing spectra with exact formula annotations.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::elements::{idx, Formula};
use crate::molgraph::{
    featurize, parse_smiles, precursor_formula, Covariates, FeatureConfig, Instrument, MolGraph, MolGraphError,
    PrecursorType, SmilesError,
};
use crate::spectra::{Peak, SpectrumRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("max_cuts must be at least 1")]
    MaxCuts,
    #[error("noise must be nonnegative and finite (got {0} ppm)")]
    Noise(f64),
    #[error("height temperature must be positive (got {0})")]
    Temperature(f64),
    #[error("molecular graph is disconnected")]
    Disconnected,
    #[error(transparent)]
    Graph(#[from] MolGraphError),
    #[error("empty structure list")]
    NoStructures,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub max_cuts: usize,
    pub seed: u64,
    pub height_temperature: f64,
    pub noise_ppm: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            max_cuts: 2,
            seed: 0,
            height_temperature: 1.0,
            noise_ppm: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.max_cuts < 1 {
            return Err(SimError::MaxCuts);
        }
        if !(self.noise_ppm >= 0.0 && self.noise_ppm.is_finite()) {
            return Err(SimError::Noise(self.noise_ppm));
        }
        if !(self.height_temperature > 0.0 && self.height_temperature.is_finite()) {
            return Err(SimError::Temperature(self.height_temperature));
        }
        Ok(())
    }
}

/// A structure with the acquisition covariates of its spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureRow {
    pub id: String,
    pub smiles: String,
    pub covariates: Covariates,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("structures line {line}: {msg}")]
pub struct StructureParseError {
    pub line: usize,
    pub msg: String,
}

/// Parse a structure table. Each non-comment line holds a SMILES string,
/// optionally followed by collision energy, precursor type, instrument and
/// isotope flag, and optionally an id. Missing ids become `mol00000`,
/// `mol00001`, ... by row.
pub fn parse_structures(text: &str) -> Result<Vec<StructureRow>, StructureParseError> {
    let mut out = Vec::new();
    for (n, raw) in text.split('\n').enumerate() {
        let line = n + 1;
        let l = raw.strip_suffix('\r').unwrap_or(raw);
        if l.trim().is_empty() || l.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = l.split('\t').map(str::trim).collect();
        if out.is_empty() && cols[0].eq_ignore_ascii_case("smiles") {
            continue;
        }
        let err = |msg: String| StructureParseError { line, msg };
        let mut covariates = Covariates::default();
        match cols.len() {
            1 => {}
            5 | 6 => {
                let energy: f64 = cols[1]
                    .parse()
                    .map_err(|_| err(format!("bad collision energy `{}`", cols[1])))?;
                let precursor_type: PrecursorType = cols[2].parse().map_err(|e| err(format!("{e}")))?;
                let has_iso = crate::molgraph::parse_bool(cols[4]).map_err(|e| err(format!("{e}")))?;
                covariates = Covariates::new(energy, precursor_type, Instrument::parse_lenient(cols[3]), has_iso)
                    .map_err(|e| err(format!("{e}")))?;
            }
            k => return Err(err(format!("expected 1, 5 or 6 columns, found {k}"))),
        }
        if cols[0].is_empty() {
            return Err(err("empty SMILES".into()));
        }
        let id = match cols.get(5) {
            Some(id) if !id.is_empty() => id.to_string(),
            _ => format!("mol{:05}", out.len()),
        };
        out.push(StructureRow {
            id,
            smiles: cols[0].to_string(),
            covariates,
        });
    }
    Ok(out)
}

/// Inverse of [`parse_structures`] for rows with explicit ids.
pub fn write_structures(rows: &[StructureRow]) -> String {
    let mut out = String::from("#smiles\tnce\ttype\tinstrument\thas_isotopes\tid\n");
    for r in rows {
        let c = &r.covariates;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.smiles, c.collision_energy, c.precursor_type, c.instrument, c.has_isotopic_peaks, r.id
        ));
    }
    out
}

/// Charged fragment formula for a neutral fragment, or `None` when a
/// deprotonated fragment has no hydrogen to lose.
fn charge_fragment(f: &Formula, t: PrecursorType) -> Option<Formula> {
    t.apply(f).ok()
}

/// Distinct charged fragments reachable by removing up to `max_cuts` acyclic
/// bonds, with the fraction of heavy atoms each retains. The intact
/// precursor is always included.
pub fn enumerate_fragments(
    g: &MolGraph,
    t: PrecursorType,
    max_cuts: usize,
) -> Result<BTreeMap<Formula, f64>, SimError> {
    if !g.is_connected() {
        return Err(SimError::Disconnected);
    }
    let heavy = g.heavy_atom_count().max(1) as f64;
    let bridges: Vec<usize> = g
        .bridges()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect();
    let mut out: BTreeMap<Formula, f64> = BTreeMap::new();
    out.insert(precursor_formula(g, t)?, 1.0);
    let mut removed = vec![false; g.bonds().len()];
    fn walk(
        g: &MolGraph,
        t: PrecursorType,
        heavy: f64,
        bridges: &[usize],
        start: usize,
        left: usize,
        removed: &mut Vec<bool>,
        out: &mut BTreeMap<Formula, f64>,
    ) -> Result<(), SimError> {
        for k in start..bridges.len() {
            removed[bridges[k]] = true;
            for comp in g.components(removed) {
                let f = g.fragment_formula(&comp).map_err(MolGraphError::from)?;
                if let Some(ion) = charge_fragment(&f, t) {
                    let n_heavy = comp.iter().filter(|&&a| g.atoms()[a].element != idx::H).count();
                    out.entry(ion).or_insert(n_heavy as f64 / heavy);
                }
            }
            if left > 1 {
                walk(g, t, heavy, bridges, k + 1, left - 1, removed, out)?;
            }
            removed[bridges[k]] = false;
        }
        Ok(())
    }
    walk(g, t, heavy, &bridges, 0, max_cuts, &mut removed, &mut out)?;
    Ok(out)
}

/// Simulate one spectrum. Each distinct charged fragment receives weight
/// `u^(1/T) · exp(−λ·frac/T)` where `u` is uniform, `frac` the fragment's
/// share of heavy atoms and `λ = 4·E/200 − 2` grows with collision energy.
pub fn simulate_spectrum(g: &MolGraph, c: &Covariates, cfg: &SimConfig) -> Result<SpectrumRecord, SimError> {
    cfg.validate()?;
    let fragments = enumerate_fragments(g, c.precursor_type, cfg.max_cuts)?;
    let precursor = precursor_formula(g, c.precursor_type)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lambda = 4.0 * c.collision_energy / 200.0 - 2.0;
    let mut peaks = Vec::with_capacity(fragments.len());
    let mut annotations = Vec::with_capacity(fragments.len());
    let mut total = 0.0;
    for (f, frac) in &fragments {
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let w = ((u.ln() - lambda * frac) / cfg.height_temperature).exp();
        let jitter = if cfg.noise_ppm > 0.0 {
            rng.gen_range(-1.0..=1.0) * cfg.noise_ppm * 1e-6
        } else {
            0.0
        };
        let mz = f.mass() * (1.0 + jitter);
        total += w;
        peaks.push((mz, w));
        annotations.push(vec![*f]);
    }
    let peaks = peaks
        .into_iter()
        .map(|(mz, w)| Peak::new(mz, w / total).expect("finite positive peak"))
        .collect();
    Ok(SpectrumRecord::with_annotations(
        "",
        peaks,
        annotations,
        Some(precursor),
        *c,
    ))
}

/// Per-record seed derived from the corpus seed.
pub fn record_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureFailure {
    #[error("{id}: {error}")]
    Smiles { id: String, error: SmilesError },
    #[error("{id}: {error}")]
    Simulation { id: String, error: SimError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<SpectrumRecord>,
    pub graphs: Vec<MolGraph>,
    pub failures: Vec<StructureFailure>,
}

/// Simulate one record per structure row; failures are collected. Records
/// keep the structure's id and carry its SMILES as metadata.
pub fn generate_corpus(rows: &[StructureRow], cfg: &SimConfig) -> Result<Corpus, SimError> {
    cfg.validate()?;
    if rows.is_empty() {
        return Err(SimError::NoStructures);
    }
    let results: Vec<Result<(SpectrumRecord, MolGraph), StructureFailure>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let g = parse_smiles(&row.smiles).map_err(|error| StructureFailure::Smiles {
                id: row.id.clone(),
                error,
            })?;
            let rc = SimConfig {
                seed: record_seed(cfg.seed, i),
                ..*cfg
            };
            let mut r = simulate_spectrum(&g, &row.covariates, &rc).map_err(|error| StructureFailure::Simulation {
                id: row.id.clone(),
                error,
            })?;
            r.id = row.id.clone();
            r.metadata.push(("SMILES".to_string(), row.smiles.clone()));
            Ok((r, g))
        })
        .collect();
    let mut corpus = Corpus {
        records: Vec::new(),
        graphs: Vec::new(),
        failures: Vec::new(),
    };
    for r in results {
        match r {
            Ok((rec, g)) => {
                corpus.records.push(rec);
                corpus.graphs.push(g);
            }
            Err(e) => corpus.failures.push(e),
        }
    }
    Ok(corpus)
}

const CHAIN_UNITS: &[&str] = &[
    "C", "C", "C", "C", "N", "O", "C=C", "C(=O)N", "c1ccccc1", "c1ccncc1", "C1CCCCC1", "C1CCOC1", "c1ccsc1",
    "C(F)(F)", "S", "c1ccc2ccccc2c1",
];
const BRANCHES: &[&str] = &["(C)", "(=O)", "(O)", "(F)", "(Cl)", "(Br)", "(N)", "(CC)", "(C#N)", "(OC)"];
const TERMINALS: &[&str] = &["", "", "O", "N", "F", "Cl", "Br", "I", "C#N", "C(=O)O", "C(F)(F)F", "OP(=O)(O)O"];

/// A random, valid SMILES string: a chain of units with occasional
/// branches on aliphatic carbons and an optional terminal group.
pub fn random_smiles(rng: &mut impl Rng, max_units: usize) -> String {
    let n = rng.gen_range(2..=max_units.max(2));
    let mut s = String::new();
    for _ in 0..n {
        let unit = CHAIN_UNITS[rng.gen_range(0..CHAIN_UNITS.len())];
        s.push_str(unit);
        if unit == "C" && rng.gen_bool(0.35) {
            s.push_str(BRANCHES[rng.gen_range(0..BRANCHES.len())]);
        }
    }
    s.push_str(TERMINALS[rng.gen_range(0..TERMINALS.len())]);
    s
}

/// Distinct random structures with randomized covariates. Structures are
/// deduplicated by formula and fingerprint.
pub fn random_structures(n: usize, seed: u64, max_units: usize) -> Vec<StructureRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let fp = FeatureConfig::default();
    let mut attempts = 0usize;
    while out.len() < n && attempts < n * 100 + 1000 {
        attempts += 1;
        let smiles = random_smiles(&mut rng, max_units);
        let energy = [20.0, 35.0, 50.0, 65.0][rng.gen_range(0..4)];
        let precursor_type = if rng.gen_bool(0.8) {
            PrecursorType::Protonated
        } else {
            PrecursorType::Deprotonated
        };
        let instrument = Instrument::ALL[rng.gen_range(0..Instrument::ALL.len())];
        let Ok(g) = parse_smiles(&smiles) else { continue };
        let Ok(p) = precursor_formula(&g, precursor_type) else { continue };
        let key = (p, featurize(&g, &Covariates::default(), &fp).nonzeros().into_iter().map(|(i, _)| i).collect::<Vec<_>>());
        if !seen.insert(key) {
            continue;
        }
        let covariates = Covariates {
            collision_energy: energy,
            precursor_type,
            instrument,
            has_isotopic_peaks: false,
        };
        out.push(StructureRow {
            id: format!("mol{:05}", out.len()),
            smiles,
            covariates,
        });
    }
    out
}
