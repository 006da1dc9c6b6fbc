#ifndef SCANET_CONVCORE_H
#define SCANET_CONVCORE_H

#include <stdint.h>

/* Direct grouped 2-D cross-correlation kernels on physically padded
 * buffers (the Python wrapper pads inputs and crops gradients), so every
 * loop runs branch-free over its full range.
 *
 * Summation order per output element is fixed by the source: ascending
 * in-channel, then kernel row; within one kernel row the taps combine
 * left-to-right into a row term before being added. Weight-grad dot
 * products use eight interleaved partial sums (tail into lane 0) combined
 * pairwise. Callers pass zero-initialised output buffers.
 */

#define SCANET_CONV_PROTO(SUF, REAL)                                        \
void conv2d_fwd##SUF(const REAL *xp, const REAL *w, REAL *out,              \
                     int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,        \
                     int64_t Cout, int64_t kh, int64_t kw,                  \
                     int64_t Ho, int64_t Wo,                                \
                     int64_t stride, int64_t groups);                       \
void conv2d_bwdx_gather##SUF(const REAL *gyq, const REAL *w, REAL *gxp,     \
                             int64_t N, int64_t Cin, int64_t Hp,            \
                             int64_t Wp, int64_t Cout, int64_t kh,          \
                             int64_t kw, int64_t Hq, int64_t Wq,            \
                             int64_t groups);                               \
void conv2d_bwdx_scatter##SUF(const REAL *gy, const REAL *w, REAL *gxp,     \
                              int64_t N, int64_t Cin, int64_t Hp,           \
                              int64_t Wp, int64_t Cout, int64_t kh,         \
                              int64_t kw, int64_t Ho, int64_t Wo,           \
                              int64_t stride, int64_t groups);              \
void conv2d_bwdw##SUF(const REAL *gy, const REAL *xp, REAL *gw,             \
                      int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,       \
                      int64_t Cout, int64_t kh, int64_t kw,                 \
                      int64_t Ho, int64_t Wo,                               \
                      int64_t stride, int64_t groups);

SCANET_CONV_PROTO(_f32, float)
SCANET_CONV_PROTO(_f64, double)

#undef SCANET_CONV_PROTO

#endif
