#ifndef PTSDIM_H
#define PTSDIM_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum PtsdimStatus {
  PTSDIM_STATUS_OK = 0,
  PTSDIM_STATUS_NULL_POINTER = 1,
  PTSDIM_STATUS_INVALID_CONFIG = 2,
  PTSDIM_STATUS_CONTRACT = 3,
  PTSDIM_STATUS_DECODE = 4,
  PTSDIM_STATUS_NUMERICAL = 5,
  PTSDIM_STATUS_INVALID_UTF8 = 6,
  PTSDIM_STATUS_BUFFER_TOO_SMALL = 7,
  PTSDIM_STATUS_PANIC = 8,
} PtsdimStatus;

/**
 * GSM bit mapper for one parameter set.
 */
typedef struct PtsdimCodec PtsdimCodec;

/**
 * One curve of an experiment, ready to run.
 */
typedef struct PtsdimSimulator PtsdimSimulator;

/**
 * Statistics of one SNR point.
 */
typedef struct PtsdimBerRecord {
  double snr_db;
  double sigma2;
  double ber;
  uint64_t bits_sent;
  uint64_t bit_errors;
  uint64_t symbols_sent;
  uint64_t aic_errors;
  uint64_t symbol_errors;
  double mean_tx_power;
  double mean_residual;
  double mean_active_antennas;
} PtsdimBerRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ptsdim_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ptsdim_version(void);

/**
 * Builds a simulator from TOML experiment text. `curve` selects a curve by
 * label; null selects the first. Calibration runs here.
 *
 * # Safety
 * `toml` and `curve` (if non-null) must be NUL-terminated strings; `out`
 * must be a valid pointer.
 */
enum PtsdimStatus ptsdim_simulator_new(const char *toml,
                                       const char *curve,
                                       struct PtsdimSimulator **out);

/**
 * Runs one SNR point.
 *
 * # Safety
 * `sim` must come from [`ptsdim_simulator_new`]; `out` must be valid.
 */
enum PtsdimStatus ptsdim_simulator_run_point(const struct PtsdimSimulator *sim,
                                             double snr_db,
                                             struct PtsdimBerRecord *out);

/**
 * Calibration constants: mean received energy per user and mean direct
 * transmit power.
 *
 * # Safety
 * `sim` must come from [`ptsdim_simulator_new`]; output pointers must be valid.
 */
enum PtsdimStatus ptsdim_simulator_calibration(const struct PtsdimSimulator *sim,
                                               double *rx_energy,
                                               double *tx_power);

/**
 * # Safety
 * `sim` must come from [`ptsdim_simulator_new`] or be null; it must not be
 * used afterwards.
 */
void ptsdim_simulator_free(struct PtsdimSimulator *sim);

/**
 * Creates a bit mapper. `order` is the constellation size (QAM for even
 * bit counts, PSK otherwise); `reduced` selects the repeated-symbol variant.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PtsdimStatus ptsdim_codec_new(size_t n_s,
                                   size_t n_a,
                                   size_t order,
                                   bool reduced,
                                   struct PtsdimCodec **out);

/**
 * Bits carried by one user symbol, or 0 for a null codec.
 *
 * # Safety
 * `codec` must come from [`ptsdim_codec_new`] or be null.
 */
size_t ptsdim_codec_bits_per_user(const struct PtsdimCodec *codec);

/**
 * Maps `n_bits` bits (one per byte, 0 or 1) to a dense length-`n_s` symbol
 * written as interleaved real/imaginary pairs into `out` (length `out_len`
 * doubles, at least `2·n_s`).
 *
 * # Safety
 * `bits` must hold `n_bits` bytes and `out` `out_len` doubles.
 */
enum PtsdimStatus ptsdim_codec_encode(const struct PtsdimCodec *codec,
                                      const uint8_t *bits,
                                      size_t n_bits,
                                      double *out,
                                      size_t out_len);

/**
 * Inverse of [`ptsdim_codec_encode`]: reads `2·n_s` doubles and writes
 * `bits_per_user` bits. Non-zero entries mark the active positions.
 *
 * # Safety
 * `symbol` must hold `symbol_len` doubles and `bits` `n_bits` bytes.
 */
enum PtsdimStatus ptsdim_codec_decode(const struct PtsdimCodec *codec,
                                      const double *symbol,
                                      size_t symbol_len,
                                      uint8_t *bits,
                                      size_t n_bits);

/**
 * # Safety
 * `codec` must come from [`ptsdim_codec_new`] or be null; it must not be
 * used afterwards.
 */
void ptsdim_codec_free(struct PtsdimCodec *codec);

/**
 * Per-user and total bits per channel use.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum PtsdimStatus ptsdim_bits_per_symbol(size_t n_s,
                                         size_t n_a,
                                         size_t order,
                                         bool reduced,
                                         size_t n_u,
                                         size_t *per_user,
                                         size_t *total);

double ptsdim_flops_min_power(size_t n_u, size_t n_rx, size_t n_tx);

double ptsdim_flops_aar(size_t n_u, size_t n_rx, size_t n_tx, size_t n_on, size_t q);

/**
 * Complex soft threshold of `re + i·im` at level `v`.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum PtsdimStatus ptsdim_soft_threshold(double re,
                                        double im,
                                        double v,
                                        double *out_re,
                                        double *out_im);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PTSDIM_H */
