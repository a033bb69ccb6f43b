//! C ABI for msformula.
//!
//! Every fallible function returns an [`MsfStatus`]; on failure the message
//! is available from [`msf_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function. Strings returned
//! through `char **` are owned by the caller and released with
//! [`msf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use msformula::decomp::{decompose, DecompConfig};
use msformula::elements::parse_formula;
use msformula::molgraph::{parse_smiles, Covariates, Instrument, PrecursorType};
use msformula::predictor::{load_weights, ModelWeights, Predictor};
use msformula::scoring::{cosine_similarity, MatchConfig};
use msformula::search::{search, SearchConfig, SearchHit, SpectralLibrary};
use msformula::spectra::{parse_msp, write_msp, Peak, SpectrumRecord};
use msformula::vocab::Vocabulary;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Io = 5,
    Incompatible = 6,
    OutOfRange = 7,
    Panic = 8,
}

pub struct MsfVocab {
    inner: Vocabulary,
}

/// Weights together with the vocabulary they were trained on.
pub struct MsfModel {
    vocab: Vocabulary,
    weights: ModelWeights,
}

pub struct MsfSpectrum {
    inner: SpectrumRecord,
}

pub struct MsfLibrary {
    inner: SpectralLibrary,
}

pub struct MsfHits {
    hits: Vec<SearchHit>,
    ids: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(MsfStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: MsfStatus, msg: impl std::fmt::Display) -> FfiResult<T> {
    Err(Failure(status, msg.to_string()))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> MsfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MsfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MsfStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(MsfStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(MsfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn object<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .map_or_else(|| fail(MsfStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return fail(MsfStatus::NullPointer, "output pointer is null");
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn store_string(out: *mut *mut c_char, s: String) -> FfiResult<()> {
    if out.is_null() {
        return fail(MsfStatus::NullPointer, "output pointer is null");
    }
    let c = CString::new(s).or_else(|_| fail(MsfStatus::InvalidArgument, "string contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn msf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library and format versions, statically allocated.
#[no_mangle]
pub extern "C" fn msf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), " (weights format 1, library format 1)\0").as_ptr() as *const c_char
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn msf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Monoisotopic mass of a formula such as `C8H10N4O2`.
///
/// # Safety
/// `formula` must be a NUL-terminated string; `out_mass` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msf_formula_mass(formula: *const c_char, out_mass: *mut f64) -> MsfStatus {
    guard(|| {
        let f = parse_formula(text(formula, "formula")?).or_else(|e| fail(MsfStatus::Parse, e))?;
        if out_mass.is_null() {
            return fail(MsfStatus::NullPointer, "out_mass is null");
        }
        *out_mass = f.mass();
        Ok(())
    })
}

/// Subformulas of `precursor` within `ppm` of `mz`, one per line.
///
/// # Safety
/// `precursor` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msf_decompose(
    mz: f64,
    precursor: *const c_char,
    ppm: f64,
    out: *mut *mut c_char,
) -> MsfStatus {
    guard(|| {
        let p = parse_formula(text(precursor, "precursor")?).or_else(|e| fail(MsfStatus::Parse, e))?;
        let cfg = DecompConfig::with_ppm(ppm).or_else(|e| fail(MsfStatus::InvalidArgument, e))?;
        if !(mz > 0.0 && mz.is_finite()) {
            return fail(MsfStatus::InvalidArgument, format!("m/z must be positive (got {mz})"));
        }
        let lines: String = decompose(mz, &p, &cfg).iter().map(|f| format!("{f}\n")).collect();
        store_string(out, lines)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msf_vocab_load(path: *const c_char, out: *mut *mut MsfVocab) -> MsfStatus {
    guard(|| {
        let path = text(path, "path")?;
        let body = std::fs::read_to_string(path).or_else(|e| fail(MsfStatus::Io, format!("{path}: {e}")))?;
        let inner = Vocabulary::from_tsv(&body).or_else(|e| fail(MsfStatus::Parse, format!("{path}: {e}")))?;
        store(out, MsfVocab { inner })
    })
}

/// Number of entries, or 0 for a null handle.
///
/// # Safety
/// `v` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn msf_vocab_len(v: *const MsfVocab) -> usize {
    v.as_ref().map_or(0, |v| v.inner.len())
}

/// # Safety
/// `v` must come from [`msf_vocab_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn msf_vocab_free(v: *mut MsfVocab) {
    free(v)
}

/// Load weights checked against `vocab`. The model keeps its own copy of the
/// vocabulary, so `vocab` may be freed afterwards.
///
/// # Safety
/// `path` must be a NUL-terminated string, `vocab` a live handle and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn msf_model_load(
    path: *const c_char,
    vocab: *const MsfVocab,
    out: *mut *mut MsfModel,
) -> MsfStatus {
    guard(|| {
        let path = text(path, "path")?;
        let vocab = object(vocab, "vocab")?;
        let weights = load_weights(Path::new(path), &vocab.inner).or_else(|e| {
            use msformula::predictor::PredictorError as E;
            let status = match e {
                E::Io(_) => MsfStatus::Io,
                E::Fingerprint { .. } | E::Dimension { .. } => MsfStatus::Incompatible,
                _ => MsfStatus::Parse,
            };
            fail(status, format!("{path}: {e}"))
        })?;
        store(
            out,
            MsfModel {
                vocab: vocab.inner.clone(),
                weights,
            },
        )
    })
}

/// # Safety
/// `m` must come from [`msf_model_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn msf_model_free(m: *mut MsfModel) {
    free(m)
}

/// Predict a spectrum. `precursor_type` is `[M+H]+` or `[M-H]-`; peaks below
/// `min_probability` are dropped and the rest renormalized.
///
/// # Safety
/// Pointers must be valid NUL-terminated strings or live handles; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn msf_predict(
    model: *const MsfModel,
    smiles: *const c_char,
    collision_energy: f64,
    precursor_type: *const c_char,
    has_isotopes: c_int,
    min_probability: f64,
    out: *mut *mut MsfSpectrum,
) -> MsfStatus {
    guard(|| {
        let model = object(model, "model")?;
        let smiles = text(smiles, "smiles")?;
        let t: PrecursorType = text(precursor_type, "precursor_type")?
            .parse()
            .or_else(|e| fail(MsfStatus::InvalidArgument, e))?;
        let c = Covariates::new(collision_energy, t, Instrument::Unknown, has_isotopes != 0)
            .or_else(|e| fail(MsfStatus::InvalidArgument, e))?;
        let g = parse_smiles(smiles).or_else(|e| fail(MsfStatus::Parse, e))?;
        let p = Predictor::new(&model.vocab, &model.weights).or_else(|e| fail(MsfStatus::Incompatible, e))?;
        let pred = p.predict(&g, &c).or_else(|e| fail(MsfStatus::InvalidArgument, e))?;
        store(
            out,
            MsfSpectrum {
                inner: pred.to_record(smiles, min_probability),
            },
        )
    })
}

/// Build a spectrum from parallel m/z and height arrays.
///
/// # Safety
/// `mz` and `height` must each point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msf_spectrum_new(
    mz: *const f64,
    height: *const f64,
    n: usize,
    out: *mut *mut MsfSpectrum,
) -> MsfStatus {
    guard(|| {
        if n > 0 && (mz.is_null() || height.is_null()) {
            return fail(MsfStatus::NullPointer, "peak arrays are null");
        }
        let (mz, height) = if n == 0 {
            (&[][..], &[][..])
        } else {
            (std::slice::from_raw_parts(mz, n), std::slice::from_raw_parts(height, n))
        };
        let peaks = mz
            .iter()
            .zip(height)
            .map(|(&m, &h)| Peak::new(m, h))
            .collect::<Result<Vec<_>, _>>()
            .or_else(|e| fail(MsfStatus::InvalidArgument, e))?;
        store(
            out,
            MsfSpectrum {
                inner: SpectrumRecord::new("spectrum", peaks, None, Covariates::default()),
            },
        )
    })
}

/// Parse the first record of an MSP text.
///
/// # Safety
/// `msp` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msf_spectrum_from_msp(msp: *const c_char, out: *mut *mut MsfSpectrum) -> MsfStatus {
    guard(|| {
        let recs = parse_msp(text(msp, "msp")?).or_else(|e| fail(MsfStatus::Parse, e))?;
        match recs.into_iter().next() {
            Some(inner) => store(out, MsfSpectrum { inner }),
            None => fail(MsfStatus::Parse, "no record"),
        }
    })
}

/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msf_spectrum_to_msp(s: *const MsfSpectrum, out: *mut *mut c_char) -> MsfStatus {
    guard(|| {
        let s = object(s, "spectrum")?;
        store_string(out, write_msp(std::slice::from_ref(&s.inner)))
    })
}

/// Number of peaks, or 0 for a null handle.
///
/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn msf_spectrum_len(s: *const MsfSpectrum) -> usize {
    s.as_ref().map_or(0, |s| s.inner.peaks().len())
}

/// # Safety
/// `s` must be a live handle; `mz` and `height` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msf_spectrum_peak(
    s: *const MsfSpectrum,
    index: usize,
    mz: *mut f64,
    height: *mut f64,
) -> MsfStatus {
    guard(|| {
        let s = object(s, "spectrum")?;
        let Some(p) = s.inner.peaks().get(index) else {
            return fail(MsfStatus::OutOfRange, format!("peak {index} of {}", s.inner.peaks().len()));
        };
        if mz.is_null() || height.is_null() {
            return fail(MsfStatus::NullPointer, "output pointer is null");
        }
        *mz = p.mz;
        *height = p.height;
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn msf_spectrum_free(s: *mut MsfSpectrum) {
    free(s)
}

/// Assignment cosine between two spectra.
///
/// # Safety
/// `a`, `b` must be live handles; `score` must be writable; `n_matched` may
/// be null.
#[no_mangle]
pub unsafe extern "C" fn msf_cosine(
    a: *const MsfSpectrum,
    b: *const MsfSpectrum,
    tau: f64,
    score: *mut f64,
    n_matched: *mut usize,
) -> MsfStatus {
    guard(|| {
        let (a, b) = (object(a, "a")?, object(b, "b")?);
        let cfg = MatchConfig::new(tau).or_else(|e| fail(MsfStatus::InvalidArgument, e))?;
        let r = cosine_similarity(&a.inner, &b.inner, &cfg).or_else(|e| fail(MsfStatus::InvalidArgument, e))?;
        if score.is_null() {
            return fail(MsfStatus::NullPointer, "score is null");
        }
        *score = r.score;
        if !n_matched.is_null() {
            *n_matched = r.matches.len();
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msf_library_load(path: *const c_char, out: *mut *mut MsfLibrary) -> MsfStatus {
    guard(|| {
        let path = text(path, "path")?;
        let body = std::fs::read_to_string(path).or_else(|e| fail(MsfStatus::Io, format!("{path}: {e}")))?;
        let inner = SpectralLibrary::from_text(&body).or_else(|e| fail(MsfStatus::Parse, format!("{path}: {e}")))?;
        store(out, MsfLibrary { inner })
    })
}

/// Number of entries, or 0 for a null handle.
///
/// # Safety
/// `lib` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn msf_library_len(lib: *const MsfLibrary) -> usize {
    lib.as_ref().map_or(0, |l| l.inner.entries.len())
}

/// # Safety
/// `lib` must come from [`msf_library_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn msf_library_free(lib: *mut MsfLibrary) {
    free(lib)
}

/// Rank library entries against a query. `precursor_ppm <= 0` disables the
/// precursor prefilter.
///
/// # Safety
/// `lib`, `query` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msf_search(
    lib: *const MsfLibrary,
    query: *const MsfSpectrum,
    tau: f64,
    top_n: usize,
    precursor_ppm: f64,
    out: *mut *mut MsfHits,
) -> MsfStatus {
    guard(|| {
        let (lib, q) = (object(lib, "library")?, object(query, "query")?);
        let cfg = SearchConfig {
            matching: MatchConfig::new(tau).or_else(|e| fail(MsfStatus::InvalidArgument, e))?,
            top_n,
            precursor_ppm: (precursor_ppm > 0.0).then_some(precursor_ppm),
        };
        let hits = search(&q.inner, &lib.inner, &cfg).or_else(|e| fail(MsfStatus::InvalidArgument, e))?;
        let ids = hits
            .iter()
            .map(|h| CString::new(h.id.clone()).unwrap_or_default())
            .collect();
        store(out, MsfHits { hits, ids })
    })
}

/// # Safety
/// `hits` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn msf_hits_len(hits: *const MsfHits) -> usize {
    hits.as_ref().map_or(0, |h| h.hits.len())
}

/// Id and score of hit `index`. The id pointer lives as long as `hits`.
///
/// # Safety
/// `hits` must be a live handle; `id` and `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msf_hits_get(
    hits: *const MsfHits,
    index: usize,
    id: *mut *const c_char,
    score: *mut f64,
) -> MsfStatus {
    guard(|| {
        let h = object(hits, "hits")?;
        let Some(hit) = h.hits.get(index) else {
            return fail(MsfStatus::OutOfRange, format!("hit {index} of {}", h.hits.len()));
        };
        if id.is_null() || score.is_null() {
            return fail(MsfStatus::NullPointer, "output pointer is null");
        }
        *id = h.ids[index].as_ptr();
        *score = hit.score;
        Ok(())
    })
}

/// # Safety
/// `hits` must come from [`msf_search`] or be null.
#[no_mangle]
pub unsafe extern "C" fn msf_hits_free(hits: *mut MsfHits) {
    free(hits)
}
