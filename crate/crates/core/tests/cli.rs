use std::path::{Path, PathBuf};

use msformula::cli::run;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("msformula").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn trained(dir: &Path) -> (String, String) {
    let corpus = s(&dir.join("c.msp"));
    let vocab = s(&dir.join("v.tsv"));
    let model = s(&dir.join("m.bin"));
    let structures = s(&golden("structures.tsv"));
    assert_eq!(cli(&["simulate", "--structures", &structures, "--out", &corpus]).0, 0);
    assert_eq!(cli(&["build-vocab", "--in", &corpus, "--k", "100", "--out", &vocab]).0, 0);
    let (code, _, err) = cli(&["train", "--in", &corpus, "--vocab", &vocab, "--out", &model, "--epochs", "5", "--bits", "64"]);
    assert_eq!(code, 0, "{err}");
    (vocab, model)
}

#[test]
fn version_and_help() {
    let (code, out, _) = cli(&["--version"]);
    assert_eq!(code, 0);
    assert!(out.contains(env!("CARGO_PKG_VERSION")));
    assert!(out.contains("weights format 1") && out.contains("library format 1"));
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["decompose", "build-vocab", "coverage", "simulate", "train", "predict", "score", "build-library", "search", "eval"] {
        assert!(out.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn usage_errors_exit_1() {
    let (code, _, err) = cli(&["frobnicate"]);
    assert_eq!(code, 1);
    assert!(err.contains("Usage"));
    assert_eq!(cli(&["decompose", "--mz", "10", "--precursor", "CH4", "--bogus"]).0, 1);
    assert_eq!(cli(&[]).0, 1);
    assert_eq!(cli(&["--threads", "0", "decompose", "--mz", "16", "--precursor", "CH4"]).0, 1);
    assert_eq!(cli(&["--log-level", "loud", "decompose", "--mz", "16", "--precursor", "CH4"]).0, 1);
    let (code, _, err) = cli(&["predict", "--smiles", "CCO", "--nce", "35", "--energies", "20,35", "--model", "m", "--vocab", "v"]);
    assert_eq!(code, 1);
    assert!(err.contains("cannot be used with"));
}

#[test]
fn data_errors_exit_2_with_path() {
    let (code, _, err) = cli(&["score", "--a", "/nonexistent/a.msp", "--b", "/nonexistent/b.msp"]);
    assert_eq!(code, 2);
    assert!(err.contains("/nonexistent/a.msp"));
    let (code, _, err) = cli(&["decompose", "--mz", "16", "--precursor", "Xx2"]);
    assert_eq!(code, 2, "{err}");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.msp");
    std::fs::write(&bad, "Name: x\nPrecursorFormula: CH5O\nNum Peaks: 1\n12.0 abc\n").unwrap();
    let (code, _, err) = cli(&["score", "--a", &s(&bad), "--b", &s(&bad)]);
    assert_eq!(code, 2);
    assert!(err.contains("bad.msp") && err.contains("line 4"), "{err}");
}

#[test]
fn decompose_golden() {
    let (code, out, _) = cli(&["decompose", "--mz", "195.0877", "--precursor", "C8H11N4O2"]);
    assert_eq!(code, 0);
    assert_eq!(out, std::fs::read_to_string(golden("decompose.out")).unwrap());
    let (_, none, _) = cli(&["decompose", "--mz", "5.0", "--precursor", "C8H11N4O2"]);
    assert!(none.is_empty());
}

#[test]
fn simulate_and_vocab_golden() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.msp");
    let vocab = dir.path().join("v.tsv");
    let curve = dir.path().join("curve.csv");
    let structures = s(&golden("structures.tsv"));
    assert_eq!(cli(&["--seed", "5", "simulate", "--structures", &structures, "--out", &s(&corpus)]).0, 0);
    assert_eq!(std::fs::read(&corpus).unwrap(), std::fs::read(golden("corpus.msp.out")).unwrap());
    assert_eq!(cli(&["build-vocab", "--in", &s(&corpus), "--k", "200", "--out", &s(&vocab)]).0, 0);
    assert_eq!(std::fs::read(&vocab).unwrap(), std::fs::read(golden("vocab.tsv.out")).unwrap());
    let (code, out, _) = cli(&["coverage", "--in", &s(&corpus), "--vocab", &s(&vocab), "--curve", &s(&curve)]);
    assert_eq!(code, 0);
    assert_eq!(out, std::fs::read_to_string(golden("coverage.out")).unwrap());
    let rows = std::fs::read_to_string(&curve).unwrap();
    assert!(rows.starts_with("k,coverage\n0,0\n"));
    assert_eq!(rows.lines().count(), 1 + 1 + 145 - 1);
    let (code, out, _) = cli(&["score", "--a", &s(&corpus), "--b", &s(&corpus), "--tau", "0.05"]);
    assert_eq!(code, 0);
    assert_eq!(out, std::fs::read_to_string(golden("score.out")).unwrap());
}

#[test]
fn different_seed_changes_simulation() {
    let structures = s(&golden("structures.tsv"));
    let (_, a, _) = cli(&["--seed", "1", "simulate", "--structures", &structures]);
    let (_, b, _) = cli(&["--seed", "2", "simulate", "--structures", &structures]);
    let (_, c, _) = cli(&["--seed", "1", "--threads", "1", "simulate", "--structures", &structures]);
    assert_ne!(a, b);
    assert_eq!(a, c);
}

#[test]
fn predict_and_search_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (vocab, model) = trained(dir.path());
    let (code, out, err) = cli(&["predict", "--smiles", "CCO", "--nce", "35", "--type", "[M+H]+", "--model", &model, "--vocab", &vocab]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("Name: query\nPrecursorFormula: C2H7O\n"));
    let recs = msformula::spectra::parse_msp(&out).unwrap();
    assert_eq!(recs.len(), 1);

    let mean_file = dir.path().join("mean.msp");
    let (code, _, _) = cli(&[
        "predict", "--smiles", "CCO", "--energies", "20,35,50", "--model", &model, "--vocab", &vocab, "--out", &s(&mean_file),
    ]);
    assert_eq!(code, 0);
    assert!(std::fs::read_to_string(&mean_file).unwrap().contains("NCE: 20"));

    let lib = s(&dir.path().join("lib.msl"));
    let structures = s(&golden("structures.tsv"));
    assert_eq!(cli(&["build-library", "--structures", &structures, "--model", &model, "--vocab", &vocab, "--out", &lib]).0, 0);
    let text = std::fs::read_to_string(&lib).unwrap();
    assert!(text.starts_with("#MSFLIB 1\n#model "));
    assert!(text.contains("#entries 8\n"));

    let corpus = s(&dir.path().join("c.msp"));
    let (code, out, _) = cli(&["search", "--lib", &lib, "--query", &corpus, "--tau", "0.05", "--top", "2"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "query\trank\tid\tscore\tn_matched");
    assert!(lines.len() > 8);
    let (code, out, _) = cli(&["eval", "--lib", &lib, "--query", &corpus, "--no-prefilter"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("queries\t8\nrecall@1\t"));

    // mismatched vocabulary is a data error
    let other = s(&dir.path().join("other.tsv"));
    std::fs::write(&other, "rank\tkind\tformula\tweight\n1\tproduct\tCH3\t1\n").unwrap();
    let (code, _, err) = cli(&["predict", "--smiles", "CCO", "--nce", "35", "--model", &model, "--vocab", &other]);
    assert_eq!(code, 2);
    assert!(err.contains("m.bin"), "{err}");
}

#[test]
fn train_requires_smiles() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.msp");
    std::fs::write(&corpus, "Name: x\nPrecursorFormula: CH5O\nNum Peaks: 1\n33.033491 1 CH5O\n").unwrap();
    let vocab = dir.path().join("v.tsv");
    assert_eq!(cli(&["build-vocab", "--in", &s(&corpus), "--k", "5", "--out", &s(&vocab)]).0, 0);
    let (code, _, err) = cli(&["train", "--in", &s(&corpus), "--vocab", &s(&vocab), "--out", &s(&dir.path().join("m.bin"))]);
    assert_eq!(code, 2);
    assert!(err.contains("SMILES"));
}

#[test]
fn unannotated_corpus_is_annotated_by_decomposition() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.msp");
    std::fs::write(&corpus, "Name: x\nPrecursorFormula: C2H7O\nNum Peaks: 2\n19.018390 0.5\n47.049690 0.5\n").unwrap();
    let (code, out, err) = cli(&["build-vocab", "--in", &s(&corpus), "--k", "10"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("\tproduct\tH3O\t") && out.contains("\tproduct\tC2H7O\t"), "{out}");
}
