#ifndef MSFORMULA_H
#define MSFORMULA_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MsfStatus {
  MSF_STATUS_OK = 0,
  MSF_STATUS_NULL_POINTER = 1,
  MSF_STATUS_INVALID_UTF8 = 2,
  MSF_STATUS_INVALID_ARGUMENT = 3,
  MSF_STATUS_PARSE = 4,
  MSF_STATUS_IO = 5,
  MSF_STATUS_INCOMPATIBLE = 6,
  MSF_STATUS_OUT_OF_RANGE = 7,
  MSF_STATUS_PANIC = 8,
} MsfStatus;

typedef struct MsfHits MsfHits;

typedef struct MsfLibrary MsfLibrary;

/**
 * Weights together with the vocabulary they were trained on.
 */
typedef struct MsfModel MsfModel;

typedef struct MsfSpectrum MsfSpectrum;

typedef struct MsfVocab MsfVocab;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *msf_last_error(void);

/**
 * Library and format versions, statically allocated.
 */
const char *msf_version(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void msf_string_free(char *s);

/**
 * Monoisotopic mass of a formula such as `C8H10N4O2`.
 *
 * # Safety
 * `formula` must be a NUL-terminated string; `out_mass` must be writable.
 */
enum MsfStatus msf_formula_mass(const char *formula, double *out_mass);

/**
 * Subformulas of `precursor` within `ppm` of `mz`, one per line.
 *
 * # Safety
 * `precursor` must be a NUL-terminated string; `out` must be writable.
 */
enum MsfStatus msf_decompose(double mz, const char *precursor, double ppm, char **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MsfStatus msf_vocab_load(const char *path, struct MsfVocab **out);

/**
 * Number of entries, or 0 for a null handle.
 *
 * # Safety
 * `v` must be a live handle or null.
 */
size_t msf_vocab_len(const struct MsfVocab *v);

/**
 * # Safety
 * `v` must come from [`msf_vocab_load`] or be null.
 */
void msf_vocab_free(struct MsfVocab *v);

/**
 * Load weights checked against `vocab`. The model keeps its own copy of the
 * vocabulary, so `vocab` may be freed afterwards.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `vocab` a live handle and `out`
 * writable.
 */
enum MsfStatus msf_model_load(const char *path,
                              const struct MsfVocab *vocab,
                              struct MsfModel **out);

/**
 * # Safety
 * `m` must come from [`msf_model_load`] or be null.
 */
void msf_model_free(struct MsfModel *m);

/**
 * Predict a spectrum. `precursor_type` is `[M+H]+` or `[M-H]-`; peaks below
 * `min_probability` are dropped and the rest renormalized.
 *
 * # Safety
 * Pointers must be valid NUL-terminated strings or live handles; `out` must
 * be writable.
 */
enum MsfStatus msf_predict(const struct MsfModel *model,
                           const char *smiles,
                           double collision_energy,
                           const char *precursor_type,
                           int has_isotopes,
                           double min_probability,
                           struct MsfSpectrum **out);

/**
 * Build a spectrum from parallel m/z and height arrays.
 *
 * # Safety
 * `mz` and `height` must each point to `n` doubles; `out` must be writable.
 */
enum MsfStatus msf_spectrum_new(const double *mz,
                                const double *height,
                                size_t n,
                                struct MsfSpectrum **out);

/**
 * Parse the first record of an MSP text.
 *
 * # Safety
 * `msp` must be a NUL-terminated string; `out` must be writable.
 */
enum MsfStatus msf_spectrum_from_msp(const char *msp, struct MsfSpectrum **out);

/**
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum MsfStatus msf_spectrum_to_msp(const struct MsfSpectrum *s, char **out);

/**
 * Number of peaks, or 0 for a null handle.
 *
 * # Safety
 * `s` must be a live handle or null.
 */
size_t msf_spectrum_len(const struct MsfSpectrum *s);

/**
 * # Safety
 * `s` must be a live handle; `mz` and `height` must be writable.
 */
enum MsfStatus msf_spectrum_peak(const struct MsfSpectrum *s,
                                 size_t index,
                                 double *mz,
                                 double *height);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void msf_spectrum_free(struct MsfSpectrum *s);

/**
 * Assignment cosine between two spectra.
 *
 * # Safety
 * `a`, `b` must be live handles; `score` must be writable; `n_matched` may
 * be null.
 */
enum MsfStatus msf_cosine(const struct MsfSpectrum *a,
                          const struct MsfSpectrum *b,
                          double tau,
                          double *score,
                          size_t *n_matched);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MsfStatus msf_library_load(const char *path, struct MsfLibrary **out);

/**
 * Number of entries, or 0 for a null handle.
 *
 * # Safety
 * `lib` must be a live handle or null.
 */
size_t msf_library_len(const struct MsfLibrary *lib);

/**
 * # Safety
 * `lib` must come from [`msf_library_load`] or be null.
 */
void msf_library_free(struct MsfLibrary *lib);

/**
 * Rank library entries against a query. `precursor_ppm <= 0` disables the
 * precursor prefilter.
 *
 * # Safety
 * `lib`, `query` must be live handles; `out` must be writable.
 */
enum MsfStatus msf_search(const struct MsfLibrary *lib,
                          const struct MsfSpectrum *query,
                          double tau,
                          size_t top_n,
                          double precursor_ppm,
                          struct MsfHits **out);

/**
 * # Safety
 * `hits` must be a live handle or null.
 */
size_t msf_hits_len(const struct MsfHits *hits);

/**
 * Id and score of hit `index`. The id pointer lives as long as `hits`.
 *
 * # Safety
 * `hits` must be a live handle; `id` and `score` must be writable.
 */
enum MsfStatus msf_hits_get(const struct MsfHits *hits,
                            size_t index,
                            const char **id,
                            double *score);

/**
 * # Safety
 * `hits` must come from [`msf_search`] or be null.
 */
void msf_hits_free(struct MsfHits *hits);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSFORMULA_H */
