//! MGF subset: `BEGIN IONS` / `END IONS` blocks of `KEY=VALUE` lines followed
//! by `mz intensity` peak lines. Only singly charged precursors are accepted;
//! the sign of `CHARGE` selects the precursor type.

use std::fmt::Write as _;

use super::numfmt::{fmt_mz, fmt_sig9};
use super::{lines, Peak, SpectraError, SpectrumRecord};
use crate::elements::parse_formula;
use crate::molgraph::{parse_bool, Covariates, Instrument, PrecursorType};

fn parse_charge(line: usize, value: &str) -> Result<PrecursorType, SpectraError> {
    let unsupported = || SpectraError::UnsupportedCharge {
        line,
        value: value.to_string(),
    };
    match value.trim() {
        "1" | "1+" | "+1" | "+" => Ok(PrecursorType::Protonated),
        "1-" | "-1" | "-" => Ok(PrecursorType::Deprotonated),
        _ => Err(unsupported()),
    }
}

pub fn parse_mgf(text: &str) -> Result<Vec<SpectrumRecord>, SpectraError> {
    let mut out = Vec::new();
    let mut open: Option<(usize, Vec<(usize, String, String)>, Vec<Peak>)> = None;
    for (line, raw) in lines(text) {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if l.eq_ignore_ascii_case("BEGIN IONS") {
            if let Some((start, _, _)) = open {
                return Err(SpectraError::Unterminated { line: start });
            }
            open = Some((line, Vec::new(), Vec::new()));
            continue;
        }
        let Some((_, keys, peaks)) = open.as_mut() else {
            return Err(SpectraError::Unexpected {
                line,
                text: l.to_string(),
            });
        };
        if l.eq_ignore_ascii_case("END IONS") {
            let (start, keys, peaks) = open.take().expect("open block");
            out.push(finish(start, keys, peaks)?);
        } else if let Some((k, v)) = l.split_once('=') {
            if !peaks.is_empty() {
                return Err(SpectraError::Unexpected {
                    line,
                    text: l.to_string(),
                });
            }
            keys.push((line, k.trim().to_string(), v.trim().to_string()));
        } else {
            let mut cols = l.split_whitespace();
            let mz_s = cols.next().unwrap_or_default();
            let mz: f64 = mz_s.parse().map_err(|_| SpectraError::BadMz {
                line,
                value: mz_s.to_string(),
            })?;
            let h_s = cols.next().unwrap_or("1");
            let h: f64 = h_s.parse().map_err(|_| SpectraError::BadIntensity {
                line,
                value: h_s.to_string(),
            })?;
            peaks.push(Peak::new(mz, h).map_err(|_| SpectraError::BadMz {
                line,
                value: mz_s.to_string(),
            })?);
        }
    }
    if let Some((start, _, _)) = open {
        return Err(SpectraError::Unterminated { line: start });
    }
    Ok(out)
}

fn finish(
    start: usize,
    keys: Vec<(usize, String, String)>,
    peaks: Vec<Peak>,
) -> Result<SpectrumRecord, SpectraError> {
    let mut id = String::new();
    let mut pepmass = None;
    let mut precursor = None;
    let mut cov = Covariates::default();
    let mut metadata = Vec::new();
    for (line, k, v) in keys {
        match k.to_ascii_uppercase().as_str() {
            "TITLE" => id = v,
            "PEPMASS" => {
                let first = v.split_whitespace().next().unwrap_or_default();
                let m: f64 = first.parse().map_err(|_| SpectraError::BadMz {
                    line,
                    value: v.clone(),
                })?;
                if !(m > 0.0 && m.is_finite()) {
                    return Err(SpectraError::BadMz { line, value: v });
                }
                pepmass = Some(m);
            }
            "CHARGE" => cov.precursor_type = parse_charge(line, &v)?,
            "FORMULA" => {
                precursor = Some(parse_formula(&v).map_err(|e| SpectraError::header(line, e))?)
            }
            "NCE" => {
                let e: f64 = v
                    .parse()
                    .map_err(|_| SpectraError::header(line, format!("bad NCE `{v}`")))?;
                cov = cov.with_energy(e).map_err(|e| SpectraError::header(line, e))?;
            }
            "INSTRUMENT" => cov.instrument = Instrument::parse_lenient(&v),
            "HASISOTOPES" => {
                cov.has_isotopic_peaks = parse_bool(&v).map_err(|e| SpectraError::header(line, e))?
            }
            _ => metadata.push((k, v)),
        }
    }
    let pepmass = pepmass.ok_or(SpectraError::MissingPepmass { line: start })?;
    let mut r = SpectrumRecord::new(id, peaks, precursor, cov);
    r.precursor_mz = Some(pepmass);
    r.metadata = metadata;
    Ok(r)
}

/// Serialize records; annotations are not part of the MGF subset. A record
/// without a declared precursor m/z gets `PEPMASS` from its precursor formula.
pub fn write_mgf(records: &[SpectrumRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str("BEGIN IONS\n");
        let _ = writeln!(out, "TITLE={}", r.id);
        if let Some(m) = r.precursor_mass() {
            let _ = writeln!(out, "PEPMASS={}", fmt_mz(m));
        }
        let charge = match r.covariates.precursor_type {
            PrecursorType::Protonated => "1+",
            PrecursorType::Deprotonated => "1-",
        };
        let _ = writeln!(out, "CHARGE={charge}");
        if let Some(p) = &r.precursor {
            let _ = writeln!(out, "FORMULA={p}");
        }
        let _ = writeln!(out, "NCE={}", r.covariates.collision_energy);
        let _ = writeln!(out, "INSTRUMENT={}", r.covariates.instrument);
        let _ = writeln!(out, "HASISOTOPES={}", r.covariates.has_isotopic_peaks);
        for (k, v) in &r.metadata {
            let _ = writeln!(out, "{k}={v}");
        }
        for p in r.peaks() {
            let _ = writeln!(out, "{} {}", fmt_mz(p.mz), fmt_sig9(p.height));
        }
        out.push_str("END IONS\n\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::numfmt::{canonical_mz, canonical_sig9};
    use proptest::prelude::*;

    #[test]
    fn minimal_block() {
        let recs = parse_mgf("BEGIN IONS\nTITLE=q1\nPEPMASS=195.0877\nCHARGE=1+\n86.0242 100\nEND IONS\n").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].id, "q1");
        assert_eq!(recs[0].precursor_mz, Some(195.0877));
        assert_eq!(recs[0].peaks().len(), 1);
        assert!(recs[0].annotations().is_none());
    }

    #[test]
    fn unterminated() {
        assert_eq!(
            parse_mgf("BEGIN IONS\nPEPMASS=100\n50 1\n"),
            Err(SpectraError::Unterminated { line: 1 })
        );
    }

    #[test]
    fn charge_rules() {
        let two = "BEGIN IONS\nPEPMASS=100\nCHARGE=2+\n50 1\nEND IONS\n";
        assert!(matches!(parse_mgf(two), Err(SpectraError::UnsupportedCharge { line: 3, .. })));
        let neg = "BEGIN IONS\nPEPMASS=100\nCHARGE=1-\n50 1\nEND IONS\n";
        assert_eq!(parse_mgf(neg).unwrap()[0].covariates.precursor_type, PrecursorType::Deprotonated);
        assert!(parse_charge(1, "+1").is_ok());
        assert!(parse_charge(1, "1").is_ok());
        assert!(parse_charge(1, "").is_err());
        assert!(parse_charge(1, "3-").is_err());
    }

    #[test]
    fn missing_pepmass() {
        assert_eq!(
            parse_mgf("BEGIN IONS\nTITLE=x\n50 1\nEND IONS\n"),
            Err(SpectraError::MissingPepmass { line: 1 })
        );
    }

    proptest! {
        #[test]
        fn round_trip_canonical(
            specs in prop::collection::vec(
                ("[a-z0-9]{1,8}", 50u32..2_000_000, prop::collection::btree_map(1_000u32..900_000, 1e-4f64..1e4, 0..10), prop::bool::ANY, 0u32..=400),
                0..4,
            )
        ) {
            let recs: Vec<SpectrumRecord> = specs
                .into_iter()
                .map(|(id, pm, peaks, neg, nce)| {
                    let ps = peaks
                        .iter()
                        .map(|(&k, &h)| Peak::new(canonical_mz(f64::from(k) / 1000.0), canonical_sig9(h)).unwrap())
                        .collect();
                    let mut cov = Covariates::default().with_energy(f64::from(nce) / 2.0).unwrap();
                    if neg {
                        cov.precursor_type = PrecursorType::Deprotonated;
                    }
                    let mut r = SpectrumRecord::new(id, ps, None, cov);
                    r.precursor_mz = Some(canonical_mz(f64::from(pm) / 1000.0));
                    r
                })
                .collect();
            let text = write_mgf(&recs);
            let back = parse_mgf(&text).unwrap();
            prop_assert_eq!(&back, &recs);
            prop_assert_eq!(write_mgf(&back), text);
        }
    }
}
