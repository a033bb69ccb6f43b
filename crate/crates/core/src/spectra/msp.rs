//! MSP text format.
//!
//! ```text
//! Name: caffeine
//! PrecursorFormula: C8H11N4O2
//! PrecursorMZ: 195.087652
//! PrecursorType: [M+H]+
//! NCE: 35
//! Instrument: Orbitrap Fusion Lumos
//! HasIsotopes: false
//! Num Peaks: 2
//! 86.024204 0.25 C3H4NO2
//! 195.087652 0.75 C8H11N4O2
//! ```
//!
//! Records are separated by blank lines. The optional third peak column
//! lists candidate formulas separated by `/`.

use std::fmt::Write as _;

use super::numfmt::{fmt_mz, fmt_sig9};
use super::{lines, parse_annotation_token, Peak, SpectraError, SpectrumRecord};
use crate::elements::parse_formula;
use crate::molgraph::{parse_bool, Covariates, Instrument};

#[derive(Default)]
struct Block {
    start_line: usize,
    id: String,
    precursor: Option<crate::elements::Formula>,
    precursor_mz: Option<f64>,
    covariates: Covariates,
    metadata: Vec<(String, String)>,
    num_peaks: Option<(usize, usize)>,
    peaks: Vec<Peak>,
    annotations: Vec<Vec<crate::elements::Formula>>,
    any_annotation: bool,
}

impl Block {
    fn finish(self, end_line: usize) -> Result<SpectrumRecord, SpectraError> {
        let (expected, decl_line) = self
            .num_peaks
            .ok_or(SpectraError::MissingNumPeaks { line: self.start_line })?;
        if self.peaks.len() != expected {
            return Err(SpectraError::PeakCountMismatch {
                line: end_line.max(decl_line),
                expected,
                found: self.peaks.len(),
            });
        }
        let precursor = self
            .precursor
            .ok_or(SpectraError::MissingPrecursor { line: self.start_line })?;
        let mut r = if self.any_annotation {
            SpectrumRecord::with_annotations(
                self.id,
                self.peaks,
                self.annotations,
                Some(precursor),
                self.covariates,
            )
        } else {
            SpectrumRecord::new(self.id, self.peaks, Some(precursor), self.covariates)
        };
        r.precursor_mz = self.precursor_mz;
        r.metadata = self.metadata;
        Ok(r)
    }

    fn header(&mut self, line: usize, key: &str, value: &str) -> Result<(), SpectraError> {
        let norm: String = key
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "name" => self.id = value.to_string(),
            "precursorformula" => {
                self.precursor =
                    Some(parse_formula(value).map_err(|e| SpectraError::header(line, e))?)
            }
            "precursormz" => {
                let m: f64 = value
                    .parse()
                    .ok()
                    .filter(|m: &f64| *m > 0.0 && m.is_finite())
                    .ok_or_else(|| SpectraError::header(line, format!("bad precursor m/z `{value}`")))?;
                self.precursor_mz = Some(m);
            }
            "precursortype" => {
                self.covariates.precursor_type =
                    value.parse().map_err(|e| SpectraError::header(line, e))?
            }
            "nce" => {
                let e: f64 = value
                    .parse()
                    .map_err(|_| SpectraError::header(line, format!("bad NCE `{value}`")))?;
                self.covariates = self
                    .covariates
                    .with_energy(e)
                    .map_err(|e| SpectraError::header(line, e))?;
            }
            "instrument" => self.covariates.instrument = Instrument::parse_lenient(value),
            "hasisotopes" => {
                self.covariates.has_isotopic_peaks =
                    parse_bool(value).map_err(|e| SpectraError::header(line, e))?
            }
            "numpeaks" => {
                let n = value
                    .parse()
                    .map_err(|_| SpectraError::header(line, format!("bad peak count `{value}`")))?;
                self.num_peaks = Some((n, line));
            }
            _ => self.metadata.push((key.to_string(), value.to_string())),
        }
        Ok(())
    }

    fn peak_line(&mut self, line: usize, text: &str) -> Result<(), SpectraError> {
        let mut cols = text.split_whitespace();
        let mz_s = cols.next().unwrap_or_default();
        let mz: f64 = mz_s.parse().map_err(|_| SpectraError::BadMz {
            line,
            value: mz_s.to_string(),
        })?;
        let h_s = cols.next().ok_or_else(|| SpectraError::BadIntensity {
            line,
            value: String::new(),
        })?;
        let h: f64 = h_s.parse().map_err(|_| SpectraError::BadIntensity {
            line,
            value: h_s.to_string(),
        })?;
        let peak = Peak::new(mz, h).map_err(|_| SpectraError::BadMz {
            line,
            value: mz_s.to_string(),
        })?;
        let ann = match cols.next() {
            Some(tok) => {
                self.any_annotation = true;
                parse_annotation_token(line, tok)?
            }
            None => Vec::new(),
        };
        if let Some(extra) = cols.next() {
            return Err(SpectraError::Unexpected {
                line,
                text: extra.to_string(),
            });
        }
        self.peaks.push(peak);
        self.annotations.push(ann);
        Ok(())
    }
}

pub fn parse_msp(text: &str) -> Result<Vec<SpectrumRecord>, SpectraError> {
    let mut out = Vec::new();
    let mut block: Option<Block> = None;
    let mut last_line = 0;
    for (line, raw) in lines(text) {
        last_line = line;
        let l = raw.trim();
        if l.is_empty() {
            if let Some(b) = block.take() {
                out.push(b.finish(line)?);
            }
            continue;
        }
        let b = block.get_or_insert_with(|| Block {
            start_line: line,
            ..Block::default()
        });
        if b.num_peaks.is_some() {
            b.peak_line(line, l)?;
        } else if let Some((k, v)) = l.split_once(':') {
            b.header(line, k.trim(), v.trim())?;
        } else if l.starts_with(|c: char| c.is_ascii_digit()) {
            return Err(SpectraError::MissingNumPeaks { line: b.start_line });
        } else {
            return Err(SpectraError::Unexpected {
                line,
                text: l.to_string(),
            });
        }
    }
    if let Some(b) = block.take() {
        out.push(b.finish(last_line)?);
    }
    Ok(out)
}

pub(crate) fn write_record(out: &mut String, r: &SpectrumRecord) {
    let _ = writeln!(out, "Name: {}", r.id);
    if let Some(p) = &r.precursor {
        let _ = writeln!(out, "PrecursorFormula: {p}");
    }
    if let Some(m) = r.precursor_mz {
        let _ = writeln!(out, "PrecursorMZ: {}", fmt_mz(m));
    }
    let c = &r.covariates;
    let _ = writeln!(out, "PrecursorType: {}", c.precursor_type);
    let _ = writeln!(out, "NCE: {}", c.collision_energy);
    let _ = writeln!(out, "Instrument: {}", c.instrument);
    let _ = writeln!(out, "HasIsotopes: {}", c.has_isotopic_peaks);
    for (k, v) in &r.metadata {
        let _ = writeln!(out, "{k}: {v}");
    }
    let _ = writeln!(out, "Num Peaks: {}", r.peaks().len());
    for (i, p) in r.peaks().iter().enumerate() {
        let _ = write!(out, "{} {}", fmt_mz(p.mz), fmt_sig9(p.height));
        let ann = r.peak_annotations(i);
        if !ann.is_empty() {
            let joined: Vec<String> = ann.iter().map(|f| f.to_string()).collect();
            let _ = write!(out, " {}", joined.join("/"));
        }
        out.push('\n');
    }
    out.push('\n');
}

/// Serialize records. Records without a precursor formula are written
/// without the header and will not parse back.
pub fn write_msp(records: &[SpectrumRecord]) -> String {
    let mut out = String::new();
    for r in records {
        write_record(&mut out, r);
    }
    out
}
