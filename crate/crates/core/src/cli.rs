//! Command-line interface.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use log::info;
use thiserror::Error;

use crate::decomp::{annotate_spectrum, decompose, ppm_error, DecompConfig};
use crate::elements::parse_formula;
use crate::molgraph::{parse_smiles, Covariates, FeatureConfig, Instrument, PrecursorType};
use crate::predictor::{
    load_weights, save_weights, train, weights_fingerprint, PredictedSpectrum, Predictor, TrainConfig,
    TrainingRecord,
};
use crate::scoring::{cosine_similarity, MatchConfig};
use crate::search::{build_library, evaluate_retrieval, search, BuildConfig, SearchConfig, SpectralLibrary};
use crate::spectra::numfmt::fmt_sig9;
use crate::spectra::{parse_mgf, parse_msp, write_msp, SpectrumRecord};
use crate::testkit::{generate_corpus, parse_structures, SimConfig};
use crate::vocab::{build_vocabulary, coverage, Vocabulary};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (weights format 1, library format 1)");

#[derive(Debug, Parser)]
#[command(name = "msformula", version = VERSION, about = "Formula-space tandem mass spectrum toolkit")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for batch commands (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enumerate subformulas of a precursor matching an m/z.
    Decompose {
        #[arg(long)]
        mz: f64,
        #[arg(long)]
        precursor: String,
        #[arg(long, default_value_t = 10.0)]
        ppm: f64,
    },
    /// Select a product/loss vocabulary from an annotated corpus.
    BuildVocab {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fraction of corpus intensity explained by a vocabulary.
    Coverage {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        vocab: PathBuf,
        /// Write coverage for every vocabulary prefix to this CSV file.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Simulate annotated spectra for a structure table.
    Simulate {
        #[arg(long)]
        structures: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        max_cuts: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_ppm: f64,
    },
    /// Fit predictor weights on a corpus whose records carry SMILES.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 5e-4)]
        lr: f64,
        #[arg(long, default_value_t = 2048)]
        bits: usize,
        #[arg(long, default_value_t = 2)]
        radius: u32,
        #[arg(long, default_value_t = 0.0)]
        validation: f64,
    },
    /// Predict the spectrum of one structure.
    Predict {
        #[arg(long)]
        smiles: String,
        #[arg(long, conflicts_with = "energies")]
        nce: Option<f64>,
        /// Comma-separated energies; the mean prediction is emitted.
        #[arg(long)]
        energies: Option<String>,
        #[arg(long = "type", default_value = "[M+H]+")]
        precursor_type: String,
        #[arg(long, default_value = "Unknown")]
        instrument: String,
        #[arg(long)]
        isotopes: bool,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value = "query")]
        id: String,
        #[arg(long, default_value_t = 1e-4)]
        min_prob: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cosine scores between the spectra of two files (CSV).
    Score {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        tau: f64,
        /// Score record i of `a` against record i of `b` only.
        #[arg(long)]
        paired: bool,
    },
    /// Predict a spectral library for a structure table.
    BuildLibrary {
        #[arg(long)]
        structures: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        min_prob: f64,
    },
    /// Rank library entries for each query spectrum.
    Search {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Retrieval metrics for queries whose ids name their true entry.
    Eval {
        #[command(flatten)]
        query: QueryArgs,
    },
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// MSP or MGF corpus.
    #[arg(long = "in", alias = "corpus", value_name = "FILE")]
    corpus: PathBuf,
    /// Recompute annotations by decomposition even when present.
    #[arg(long)]
    annotate: bool,
    #[arg(long, default_value_t = 10.0)]
    ppm: f64,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    lib: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    /// Precursor window in ppm.
    #[arg(long, default_value_t = 10.0, conflicts_with = "no_prefilter")]
    ppm: f64,
    #[arg(long)]
    no_prefilter: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {msg}")]
    File { path: PathBuf, msg: String },
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn file(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::File {
            path: path.to_path_buf(),
            msg: e.to_string(),
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))
}

fn read_spectra(path: &Path) -> Result<Vec<SpectrumRecord>, CliError> {
    let text = read(path)?;
    let is_mgf = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("mgf"));
    let parsed = if is_mgf { parse_mgf(&text) } else { parse_msp(&text) };
    parsed.map_err(|e| CliError::file(path, e))
}

fn read_vocab(path: &Path) -> Result<Vocabulary, CliError> {
    Vocabulary::from_tsv(&read(path)?).map_err(|e| CliError::file(path, e))
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::file(p, e)),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn load_corpus(args: &CorpusArgs) -> Result<Vec<SpectrumRecord>, CliError> {
    let cfg = DecompConfig::with_ppm(args.ppm).map_err(data)?;
    let records = read_spectra(&args.corpus)?;
    records
        .into_iter()
        .map(|r| {
            let r = if args.annotate || r.annotations().is_none() {
                annotate_spectrum(&r, &cfg).map_err(|e| CliError::file(&args.corpus, e))?
            } else {
                r
            };
            r.normalized().map_err(|e| CliError::file(&args.corpus, format!("{}: {e}", r.id)))
        })
        .collect()
}

fn parse_covariates(nce: f64, t: &str, instrument: &str, isotopes: bool) -> Result<Covariates, CliError> {
    let t: PrecursorType = t.parse().map_err(data)?;
    Covariates::new(nce, t, Instrument::parse_lenient(instrument), isotopes).map_err(data)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Decompose { mz, precursor, ppm } => {
            let p = parse_formula(&precursor).map_err(data)?;
            let cfg = DecompConfig::with_ppm(ppm).map_err(data)?;
            let mut text = String::new();
            for f in decompose(mz, &p, &cfg) {
                let _ = writeln!(text, "{f}\t{:.3}", ppm_error(&f, mz));
            }
            emit(out, None, &text)
        }
        Command::BuildVocab { corpus, k, out: path } => {
            let records = load_corpus(&corpus)?;
            let v = build_vocabulary(&records, k).map_err(data)?;
            info!("selected {} entries", v.len());
            emit(out, path.as_deref(), &v.to_tsv())
        }
        Command::Coverage { corpus, vocab, curve } => {
            let records = load_corpus(&corpus)?;
            let v = read_vocab(&vocab)?;
            let rep = coverage(&v, &records).map_err(data)?;
            if let Some(path) = curve {
                let mut csv = String::from("k,coverage\n");
                for (k, c) in rep.curve.iter().enumerate() {
                    let _ = writeln!(csv, "{k},{}", fmt_sig9(*c));
                }
                emit(out, Some(&path), &csv)?;
            }
            emit(out, None, &format!("coverage\t{}\n", fmt_sig9(rep.mean)))
        }
        Command::Simulate {
            structures,
            out: path,
            max_cuts,
            temperature,
            noise_ppm,
        } => {
            let rows = parse_structures(&read(&structures)?).map_err(|e| CliError::file(&structures, e))?;
            let cfg = SimConfig {
                max_cuts,
                seed: cli.seed,
                height_temperature: temperature,
                noise_ppm,
            };
            let corpus = generate_corpus(&rows, &cfg).map_err(data)?;
            for f in &corpus.failures {
                log::warn!("{f}");
            }
            emit(out, path.as_deref(), &write_msp(&corpus.records))
        }
        Command::Train {
            corpus,
            vocab,
            out: path,
            epochs,
            batch_size,
            lr,
            bits,
            radius,
            validation,
        } => {
            let records = load_corpus(&corpus)?;
            let v = read_vocab(&vocab)?;
            let mut training = Vec::with_capacity(records.len());
            for r in records {
                let smiles = r
                    .metadata_value("SMILES")
                    .ok_or_else(|| CliError::file(&corpus.corpus, format!("{}: no SMILES metadata", r.id)))?;
                let graph =
                    parse_smiles(smiles).map_err(|e| CliError::file(&corpus.corpus, format!("{}: {e}", r.id)))?;
                training.push(TrainingRecord { graph, spectrum: r });
            }
            let cfg = TrainConfig {
                feature: FeatureConfig { radius, bits },
                epochs,
                batch_size,
                learning_rate: lr,
                seed: cli.seed,
                validation_fraction: validation,
                decomp: DecompConfig::with_ppm(corpus.ppm).map_err(data)?,
                ..TrainConfig::default()
            };
            let outcome = train(&training, &v, &cfg).map_err(data)?;
            if let Some(l) = outcome.report.train_loss.last() {
                info!("final training loss {l:.6}");
            }
            save_weights(&path, &outcome.weights).map_err(data)
        }
        Command::Predict {
            smiles,
            nce,
            energies,
            precursor_type,
            instrument,
            isotopes,
            model,
            vocab,
            id,
            min_prob,
            out: path,
        } => {
            let v = read_vocab(&vocab)?;
            let w = load_weights(&model, &v).map_err(|e| CliError::file(&model, e))?;
            let predictor = Predictor::new(&v, &w).map_err(data)?;
            let g = parse_smiles(&smiles).map_err(data)?;
            let levels: Vec<f64> = match energies {
                Some(list) => list
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| data(format!("bad energy `{s}`"))))
                    .collect::<Result<_, _>>()?,
                None => vec![nce.unwrap_or(35.0)],
            };
            let mut preds = Vec::with_capacity(levels.len());
            for e in levels {
                let c = parse_covariates(e, &precursor_type, &instrument, isotopes)?;
                preds.push(predictor.predict(&g, &c).map_err(data)?);
            }
            let mean = PredictedSpectrum::mean(&preds).ok_or_else(|| data("no collision energy given"))?;
            let mut rec = mean.to_record(id, min_prob);
            rec.metadata.push(("SMILES".to_string(), smiles));
            emit(out, path.as_deref(), &write_msp(&[rec]))
        }
        Command::Score { a, b, tau, paired } => {
            let cfg = MatchConfig::new(tau).map_err(data)?;
            let sa = read_spectra(&a)?;
            let sb = read_spectra(&b)?;
            if paired && sa.len() != sb.len() {
                return Err(data(format!(
                    "--paired needs equal record counts ({} vs {})",
                    sa.len(),
                    sb.len()
                )));
            }
            let pairs: Vec<(usize, usize)> = if paired {
                (0..sa.len()).map(|i| (i, i)).collect()
            } else {
                (0..sa.len())
                    .flat_map(|i| (0..sb.len()).map(move |j| (i, j)))
                    .collect()
            };
            let mut text = String::from("id_a,id_b,cosine,n_matched\n");
            for (i, j) in pairs {
                let r = cosine_similarity(&sa[i], &sb[j], &cfg).map_err(data)?;
                let _ = writeln!(text, "{},{},{},{}", sa[i].id, sb[j].id, fmt_sig9(r.score), r.matches.len());
            }
            emit(out, None, &text)
        }
        Command::BuildLibrary {
            structures,
            model,
            vocab,
            out: path,
            min_prob,
        } => {
            let rows = parse_structures(&read(&structures)?).map_err(|e| CliError::file(&structures, e))?;
            let v = read_vocab(&vocab)?;
            let w = load_weights(&model, &v).map_err(|e| CliError::file(&model, e))?;
            let predictor = Predictor::new(&v, &w).map_err(data)?;
            let created = std::env::var("SOURCE_DATE_EPOCH")
                .ok()
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            let cfg = BuildConfig {
                min_probability: min_prob,
                created,
            };
            let (lib, failures) = build_library(&rows, &predictor, &weights_fingerprint(&w), &cfg).map_err(data)?;
            for f in &failures {
                log::warn!("{}: {}", f.id, f.message);
            }
            info!("library of {} entries, {} failures", lib.entries.len(), failures.len());
            std::fs::write(&path, lib.to_text()).map_err(|e| CliError::file(&path, e))
        }
        Command::Search { query, top } => {
            let (lib, queries, cfg) = load_query(&query, top)?;
            let mut text = String::from("query\trank\tid\tscore\tn_matched\n");
            for q in &queries {
                let hits = search(q, &lib, &cfg).map_err(|e| data(format!("{}: {e}", q.id)))?;
                for (rank, h) in hits.iter().enumerate() {
                    let _ = writeln!(text, "{}\t{}\t{}\t{}\t{}", q.id, rank + 1, h.id, fmt_sig9(h.score), h.n_matched);
                }
            }
            emit(out, None, &text)
        }
        Command::Eval { query } => {
            let (lib, queries, cfg) = load_query(&query, 10)?;
            let pairs: Vec<(String, SpectrumRecord)> = queries.into_iter().map(|q| (q.id.clone(), q)).collect();
            let m = evaluate_retrieval(&pairs, &lib, &cfg).map_err(data)?;
            let mut text = String::new();
            let _ = writeln!(text, "queries\t{}", m.n_queries);
            let _ = writeln!(text, "recall@1\t{}", fmt_sig9(m.recall_at_1));
            let _ = writeln!(text, "recall@5\t{}", fmt_sig9(m.recall_at_5));
            let _ = writeln!(text, "recall@10\t{}", fmt_sig9(m.recall_at_10));
            let _ = writeln!(text, "mean_cosine\t{}", fmt_sig9(m.mean_cosine));
            let _ = writeln!(text, "frac_cosine_gt_0.7\t{}", fmt_sig9(m.frac_above_0_7));
            emit(out, None, &text)
        }
    }
}

fn load_query(q: &QueryArgs, top: usize) -> Result<(SpectralLibrary, Vec<SpectrumRecord>, SearchConfig), CliError> {
    let lib = SpectralLibrary::from_text(&read(&q.lib)?).map_err(|e| CliError::file(&q.lib, e))?;
    let queries = read_spectra(&q.query)?;
    let cfg = SearchConfig {
        matching: MatchConfig::new(q.tau).map_err(data)?,
        top_n: top,
        precursor_ppm: if q.no_prefilter { None } else { Some(q.ppm) },
    };
    Ok((lib, queries, cfg))
}

/// Run the command line `args` (including the program name), writing
/// results to `out` and diagnostics to `err`. Returns the exit code: 0 on
/// success, 1 on usage errors and 2 on data errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    let level = match cli.log_level.parse::<log::LevelFilter>() {
        Ok(l) => l,
        Err(_) => {
            let _ = writeln!(err, "error: invalid log level `{}`", cli.log_level);
            return 1;
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    log::set_max_level(level);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            let _ = writeln!(err, "error: --threads must be positive");
            return 1;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 2;
        }
    };
    let mut buf: Vec<u8> = Vec::new();
    let result = pool.install(|| execute(cli, &mut buf));
    if out.write_all(&buf).and_then(|_| out.flush()).is_err() {
        let _ = writeln!(err, "error: cannot write output");
        return 2;
    }
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}
