#ifndef ANTIDOTE_H
#define ANTIDOTE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdtStatus {
  ADT_STATUS_OK = 0,
  ADT_STATUS_NULL_POINTER = -1,
  ADT_STATUS_INVALID_UTF8 = -2,
  ADT_STATUS_INVALID_NAME = -3,
  ADT_STATUS_INVALID_ARGUMENT = -4,
  ADT_STATUS_DECODE_ERROR = -5,
  ADT_STATUS_ENCODE_ERROR = -6,
  ADT_STATUS_CONFIG_ERROR = -7,
  ADT_STATUS_BUFFER_TOO_SMALL = -8,
  ADT_STATUS_PANIC = -99,
} AdtStatus;

/**
 * Opaque entropy configuration.
 */
typedef struct AdtEntropyConfig AdtEntropyConfig;

/**
 * Opaque decoded DNS message.
 */
typedef struct AdtMessage AdtMessage;

/**
 * Bits of entropy per validation field.
 */
typedef struct AdtEntropyBudget {
  double txid_bits;
  double port_bits;
  double src_ip_bits;
  double dst_ip_bits;
  double case_bits;
  double total_bits;
} AdtEntropyBudget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *adt_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void adt_string_free(char *s);

/**
 * Number of ASCII letters in `name`.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum AdtStatus adt_count_letters(const char *name, size_t *out);

/**
 * Randomises the letter case of `name` with an RNG seeded by `seed`. The result
 * is written to `*out` and must be freed with [`adt_string_free`].
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum AdtStatus adt_encode_0x20(const char *name, uint64_t seed, char **out);

/**
 * Whether `received` echoes `sent` byte for byte.
 *
 * # Safety
 * Both names must be NUL-terminated strings; `out` must be writable.
 */
enum AdtStatus adt_validate_0x20(const char *sent, const char *received, bool *out);

/**
 * `1 - (1 - 2^-bits)^packets`.
 *
 * # Safety
 * `out` must be writable.
 */
enum AdtStatus adt_spoof_success_probability(double bits, uint64_t packets, double *out);

/**
 * A configuration with every mechanism at its default. Free with
 * [`adt_entropy_config_free`].
 */
struct AdtEntropyConfig *adt_entropy_config_new(void);

/**
 * # Safety
 * `cfg` must be NULL or a handle from [`adt_entropy_config_new`], not yet freed.
 */
void adt_entropy_config_free(struct AdtEntropyConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum AdtStatus adt_entropy_config_set_txid(struct AdtEntropyConfig *cfg,
                                           bool randomize,
                                           uint8_t bits);

/**
 * Enables or disables source port randomisation over `[lo, hi]`. The range is
 * not restricted here so that budgets for any range can be computed.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum AdtStatus adt_entropy_config_set_spr(struct AdtEntropyConfig *cfg,
                                          bool enabled,
                                          uint16_t lo,
                                          uint16_t hi);

/**
 * Size of the source address pool.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum AdtStatus adt_entropy_config_set_pool_size(struct AdtEntropyConfig *cfg, size_t n);

/**
 * Number of authority addresses a query may go to.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum AdtStatus adt_entropy_config_set_dst_count(struct AdtEntropyConfig *cfg, size_t n);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum AdtStatus adt_entropy_config_set_0x20(struct AdtEntropyConfig *cfg, bool enabled);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum AdtStatus adt_entropy_config_set_short_query(struct AdtEntropyConfig *cfg, bool enabled);

/**
 * Entropy budget of a query for `name` under `cfg`.
 *
 * # Safety
 * `cfg` must be a live handle, `name` a NUL-terminated string, `out` writable.
 */
enum AdtStatus adt_entropy_budget(const struct AdtEntropyConfig *cfg,
                                  const char *name,
                                  struct AdtEntropyBudget *out);

/**
 * Decodes a DNS message. Free the handle with [`adt_message_free`].
 *
 * # Safety
 * `buf` must point to `len` readable bytes; `out` must be writable.
 */
enum AdtStatus adt_message_decode(const uint8_t *buf, size_t len, struct AdtMessage **out);

/**
 * # Safety
 * `msg` must be NULL or a handle from [`adt_message_decode`], not yet freed.
 */
void adt_message_free(struct AdtMessage *msg);

/**
 * # Safety
 * `msg` must be a live handle; `out` must be writable.
 */
enum AdtStatus adt_message_txid(const struct AdtMessage *msg, uint16_t *out);

/**
 * Question name exactly as carried, letter case included. Free with
 * [`adt_string_free`].
 *
 * # Safety
 * `msg` must be a live handle; `out` must be writable.
 */
enum AdtStatus adt_message_qname(const struct AdtMessage *msg, char **out);

/**
 * # Safety
 * `msg` must be a live handle; `out` must be writable.
 */
enum AdtStatus adt_message_answer_count(const struct AdtMessage *msg, size_t *out);

/**
 * Encodes `msg` into `buf`. `*written` receives the encoded length; when it
 * exceeds `cap` nothing is copied and `BufferTooSmall` is returned.
 *
 * # Safety
 * `msg` must be a live handle, `buf` must point to `cap` writable bytes (may be
 * NULL when `cap` is 0), and `written` must be writable.
 */
enum AdtStatus adt_message_encode(const struct AdtMessage *msg,
                                  uint8_t *buf,
                                  size_t cap,
                                  size_t *written);

/**
 * Runs an experiment described by key-value `config_text` and writes the CSV
 * table to `*out_csv`. Free it with [`adt_string_free`].
 *
 * # Safety
 * `config_text` must be a NUL-terminated string; `out_csv` must be writable.
 */
enum AdtStatus adt_experiment_run(const char *config_text, char **out_csv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANTIDOTE_H */
