#ifndef OODBENCH_H
#define OODBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OodStatus {
  OOD_STATUS_OK = 0,
  OOD_STATUS_NULL_POINTER = 1,
  OOD_STATUS_INVALID_ARGUMENT = 2,
  OOD_STATUS_DIMENSION_MISMATCH = 3,
  OOD_STATUS_NUMERICAL = 4,
  OOD_STATUS_CONFIG = 5,
  OOD_STATUS_IO = 6,
  OOD_STATUS_PANIC = 7,
} OodStatus;

typedef enum OodToy {
  OOD_TOY_LINE = 0,
  OOD_TOY_CIRCLE = 1,
  OOD_TOY_HAYSTACK = 2,
} OodToy;

typedef enum OodSplit {
  OOD_SPLIT_TRAIN = 0,
  OOD_SPLIT_VALID = 1,
  OOD_SPLIT_TEST = 2,
} OodSplit;

// Validation-score calibrator mapping raw OOD scores to confidences.
typedef struct OodCalibrator OodCalibrator;

// A fitted, calibrated detector or supervised classifier.
typedef struct OodDetector OodDetector;

// Generated train / validation / test data of one toy.
typedef struct OodSplits OodSplits;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on this thread.
const char *oodb_last_error(void);

// Library version as a static NUL-terminated string.
const char *oodb_version(void);

// Generates the splits of a toy with default parameters.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum OodStatus oodb_toy_generate(enum OodToy toy,
                                 uint64_t seed,
                                 uintptr_t n_train,
                                 uintptr_t n_valid,
                                 uintptr_t n_test,
                                 struct OodSplits **out);

// Feature dimension of the toy.
//
// # Safety
// `splits` must be a live handle and `out` writable.
enum OodStatus oodb_splits_dim(const struct OodSplits *splits, uintptr_t *out);

// Number of points in a split.
//
// # Safety
// `splits` must be a live handle and `out` writable.
enum OodStatus oodb_splits_len(const struct OodSplits *splits, enum OodSplit split, uintptr_t *out);

// Copies a split's points, row-major, into `buf` of `len` doubles, which
// must equal `rows * dim`.
//
// # Safety
// `splits` must be a live handle and `buf` valid for `len` writes.
enum OodStatus oodb_splits_copy_points(const struct OodSplits *splits,
                                       enum OodSplit split,
                                       double *buf,
                                       uintptr_t len);

// Copies the test ground truth (1 = ID, 0 = OOD) into `buf` of `len` bytes.
//
// # Safety
// `splits` must be a live handle and `buf` valid for `len` writes.
enum OodStatus oodb_splits_copy_test_labels(const struct OodSplits *splits,
                                            uint8_t *buf,
                                            uintptr_t len);

// # Safety
// `splits` must be null or a handle from [`oodb_toy_generate`] not yet freed.
void oodb_splits_free(struct OodSplits *splits);

// Fits the named method (e.g. `"mahalanobis"`, `"lof"`, `"fgsm_uniform"`)
// on the training split and calibrates it on the validation split.
//
// # Safety
// `splits` must be a live handle, `method` a NUL-terminated string and
// `out` writable.
enum OodStatus oodb_detector_fit(const struct OodSplits *splits,
                                 const char *method,
                                 uint64_t seed,
                                 struct OodDetector **out);

// ID confidences in `[0, 1]` for `n` row-major points of dimension `dim`,
// written to `out` (`n` doubles).
//
// # Safety
// `detector` must be a live handle, `points` valid for `n * dim` reads and
// `out` for `n` writes.
enum OodStatus oodb_detector_confidence(const struct OodDetector *detector,
                                        const double *data,
                                        uintptr_t n,
                                        uintptr_t dim,
                                        double *out);

// # Safety
// `detector` must be null or a handle from [`oodb_detector_fit`] not yet freed.
void oodb_detector_free(struct OodDetector *detector);

// Builds a calibrator from `n` raw validation scores (higher = more OOD).
//
// # Safety
// `scores` must be valid for `n` reads and `out` writable.
enum OodStatus oodb_calibrator_new(const double *scores, uintptr_t n, struct OodCalibrator **out);

// Confidence of each raw score: the fraction of validation scores at or
// above it.
//
// # Safety
// `calibrator` must be a live handle, `raw` valid for `n` reads and `out`
// for `n` writes.
enum OodStatus oodb_calibrator_confidence(const struct OodCalibrator *calibrator,
                                          const double *raw,
                                          uintptr_t n,
                                          double *out);

// # Safety
// `calibrator` must be null or a handle from [`oodb_calibrator_new`] not yet freed.
void oodb_calibrator_free(struct OodCalibrator *calibrator);

// ROC-AUC of confidences against labels (nonzero = ID).
//
// # Safety
// `confidences` and `is_id` must be valid for `n` reads and `out` writable.
enum OodStatus oodb_roc_auc(const double *confidences,
                            const uint8_t *is_id,
                            uintptr_t n,
                            double *out);

// Soft precision, F1 and ROC-AUC in one call.
//
// # Safety
// `confidences` and `is_id` must be valid for `n` reads; the three outputs
// must be writable.
enum OodStatus oodb_evaluate(const double *confidences,
                             const uint8_t *is_id,
                             uintptr_t n,
                             double *precision,
                             double *f1,
                             double *auc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OODBENCH_H */
