/* SPDX-License-Identifier: Apache-2.0 */
#ifndef DISCOVER_CODER_C_API_H_
#define DISCOVER_CODER_C_API_H_

/*
 * C boundary of the reference entropy coder. Any compatible coder (for
 * example a faster drop-in) implements the same functions over the same
 * buffers and must produce identical bytes.
 *
 * A cdf table is DSCV_CDF_LENGTH uint32 values (see rans.hpp for the rule).
 * Symbol i uses table indexes[i]; pass indexes = NULL to use table i.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define DSCV_CDF_LENGTH 257
#define DSCV_ALPHABET_MIN (-127)
#define DSCV_ALPHABET_MAX 128

enum dscv_status {
  DSCV_OK = 0,
  DSCV_INVALID_CDF = 1,
  DSCV_BUFFER_TOO_SMALL = 2,
  DSCV_DECODE_FAILED = 3,
  DSCV_INVALID_ARGUMENT = 4
};

/* On DSCV_BUFFER_TOO_SMALL, *out_len holds the required size. */
int dscv_encode(const int32_t* symbols, size_t count, const uint32_t* cdfs, size_t num_tables,
                const uint32_t* indexes, uint8_t* out, size_t out_capacity, size_t* out_len);

int dscv_decode(const uint8_t* data, size_t len, const uint32_t* cdfs, size_t num_tables, const uint32_t* indexes,
                size_t count, int32_t* out_symbols);

/* Quantized discretized-Gaussian table for (mu, sigma). */
int dscv_gaussian_cdf(double mu, double sigma, uint32_t* out_cdf);

#ifdef __cplusplus
}
#endif

#endif /* DISCOVER_CODER_C_API_H_ */
