/* Template body for the direct convolution kernels; included from
 * _convcore.c once per element type with REAL and SUFFIX defined.
 * All buffers are pre-padded by the caller: no bounds logic in loops. */

void FN(conv2d_fwd)(const REAL *restrict xp, const REAL *restrict w,
                    REAL *restrict out,
                    int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,
                    int64_t Cout, int64_t kh, int64_t kw,
                    int64_t Ho, int64_t Wo,
                    int64_t stride, int64_t groups)
{
    const int64_t Cing = Cin / groups;
    const int64_t cog = Cout / groups;
    for (int64_t n = 0; n < N; n++)
    for (int64_t g = 0; g < groups; g++) {
        const int64_t cin0 = g * Cing;
        for (int64_t coL = 0; coL < cog; coL++) {
            const int64_t co = g * cog + coL;
            for (int64_t ho = 0; ho < Ho; ho++) {
                REAL *restrict orow = out + ((n * Cout + co) * Ho + ho) * Wo;
                for (int64_t ci = 0; ci < Cing; ci++) {
                    const REAL *restrict xplane =
                        xp + ((n * Cin + cin0 + ci) * Hp + ho * stride) * Wp;
                    const REAL *restrict wrow = w + (co * Cing + ci) * kh * kw;
                    for (int64_t i = 0; i < kh; i++) {
                        const REAL *restrict xrow = xplane + i * Wp;
                        const REAL *restrict wr = wrow + i * kw;
                        if (kw == 3) {
                            const REAL w0 = wr[0], w1 = wr[1], w2 = wr[2];
                            if (stride == 1) {
                                for (int64_t wo = 0; wo < Wo; wo++)
                                    orow[wo] += w0 * xrow[wo] + w1 * xrow[wo + 1]
                                              + w2 * xrow[wo + 2];
                            } else {
                                for (int64_t wo = 0; wo < Wo; wo++) {
                                    const REAL *xv = xrow + wo * stride;
                                    orow[wo] += w0 * xv[0] + w1 * xv[1] + w2 * xv[2];
                                }
                            }
                        } else if (kw == 1) {
                            const REAL w0 = wr[0];
                            if (stride == 1) {
                                for (int64_t wo = 0; wo < Wo; wo++)
                                    orow[wo] += w0 * xrow[wo];
                            } else {
                                for (int64_t wo = 0; wo < Wo; wo++)
                                    orow[wo] += w0 * xrow[wo * stride];
                            }
                        } else {
                            for (int64_t wo = 0; wo < Wo; wo++) {
                                const REAL *xv = xrow + wo * stride;
                                REAL acc = 0;
                                for (int64_t j = 0; j < kw; j++)
                                    acc += wr[j] * xv[j];
                                orow[wo] += acc;
                            }
                        }
                    }
                }
            }
        }
    }
}

/* gxp[hp, wp] = sum over (co, i, j) of w[co, ci, i, j] *
 *               gyq[hp + kh-1 - i, wp + kw-1 - j]; stride-1 only. */
void FN(conv2d_bwdx_gather)(const REAL *restrict gyq, const REAL *restrict w,
                            REAL *restrict gxp,
                            int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,
                            int64_t Cout, int64_t kh, int64_t kw,
                            int64_t Hq, int64_t Wq,
                            int64_t groups)
{
    const int64_t Cing = Cin / groups;
    const int64_t cog = Cout / groups;
    for (int64_t n = 0; n < N; n++)
    for (int64_t g = 0; g < groups; g++) {
        const int64_t cin0 = g * Cing;
        for (int64_t ciL = 0; ciL < Cing; ciL++) {
            const int64_t ci = cin0 + ciL;
            for (int64_t hp = 0; hp < Hp; hp++) {
                REAL *restrict gxrow = gxp + ((n * Cin + ci) * Hp + hp) * Wp;
                for (int64_t coL = 0; coL < cog; coL++) {
                    const int64_t co = g * cog + coL;
                    const REAL *restrict gyplane =
                        gyq + ((n * Cout + co) * Hq + hp + kh - 1) * Wq;
                    const REAL *restrict wrow = w + (co * Cing + ciL) * kh * kw;
                    for (int64_t i = 0; i < kh; i++) {
                        const REAL *restrict gyrow = gyplane - i * Wq + kw - 1;
                        const REAL *restrict wr = wrow + i * kw;
                        if (kw == 3) {
                            const REAL w0 = wr[0], w1 = wr[1], w2 = wr[2];
                            for (int64_t wp = 0; wp < Wp; wp++)
                                gxrow[wp] += w0 * gyrow[wp] + w1 * gyrow[wp - 1]
                                           + w2 * gyrow[wp - 2];
                        } else if (kw == 1) {
                            const REAL w0 = wr[0];
                            for (int64_t wp = 0; wp < Wp; wp++)
                                gxrow[wp] += w0 * gyrow[wp];
                        } else {
                            for (int64_t wp = 0; wp < Wp; wp++) {
                                REAL acc = 0;
                                for (int64_t j = 0; j < kw; j++)
                                    acc += wr[j] * gyrow[wp - j];
                                gxrow[wp] += acc;
                            }
                        }
                    }
                }
            }
        }
    }
}

/* gxp[ho*stride + i, wo*stride + j] += w * gy[ho, wo]; any stride. */
void FN(conv2d_bwdx_scatter)(const REAL *restrict gy, const REAL *restrict w,
                             REAL *restrict gxp,
                             int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,
                             int64_t Cout, int64_t kh, int64_t kw,
                             int64_t Ho, int64_t Wo,
                             int64_t stride, int64_t groups)
{
    const int64_t Cing = Cin / groups;
    const int64_t cog = Cout / groups;
    for (int64_t n = 0; n < N; n++)
    for (int64_t g = 0; g < groups; g++) {
        const int64_t cin0 = g * Cing;
        for (int64_t coL = 0; coL < cog; coL++) {
            const int64_t co = g * cog + coL;
            for (int64_t ho = 0; ho < Ho; ho++) {
                const REAL *restrict gyrow =
                    gy + ((n * Cout + co) * Ho + ho) * Wo;
                for (int64_t ci = 0; ci < Cing; ci++) {
                    REAL *restrict gxplane =
                        gxp + ((n * Cin + cin0 + ci) * Hp + ho * stride) * Wp;
                    const REAL *restrict wrow = w + (co * Cing + ci) * kh * kw;
                    for (int64_t i = 0; i < kh; i++) {
                        REAL *restrict gxrow = gxplane + i * Wp;
                        const REAL *restrict wr = wrow + i * kw;
                        for (int64_t j = 0; j < kw; j++) {
                            const REAL wv = wr[j];
                            for (int64_t wo = 0; wo < Wo; wo++)
                                gxrow[wo * stride + j] += wv * gyrow[wo];
                        }
                    }
                }
            }
        }
    }
}

void FN(conv2d_bwdw)(const REAL *restrict gy, const REAL *restrict xp,
                     REAL *restrict gw,
                     int64_t N, int64_t Cin, int64_t Hp, int64_t Wp,
                     int64_t Cout, int64_t kh, int64_t kw,
                     int64_t Ho, int64_t Wo,
                     int64_t stride, int64_t groups)
{
    const int64_t Cing = Cin / groups;
    const int64_t cog = Cout / groups;
    for (int64_t g = 0; g < groups; g++) {
        const int64_t cin0 = g * Cing;
        for (int64_t coL = 0; coL < cog; coL++) {
            const int64_t co = g * cog + coL;
            for (int64_t ci = 0; ci < Cing; ci++) {
                REAL *restrict gwrow = gw + (co * Cing + ci) * kh * kw;
                for (int64_t i = 0; i < kh; i++)
                for (int64_t j = 0; j < kw; j++) {
                    /* 16 interleaved lanes, summed once per weight tap;
                     * row tails land in lane (wo & 15) */
                    REAL acc[16] = {0};
                    for (int64_t n = 0; n < N; n++)
                    for (int64_t ho = 0; ho < Ho; ho++) {
                        const REAL *restrict gyrow =
                            gy + ((n * Cout + co) * Ho + ho) * Wo;
                        const REAL *restrict xq =
                            xp + ((n * Cin + cin0 + ci) * Hp + ho * stride + i)
                               * Wp + j;
                        int64_t wo = 0;
                        if (stride == 1) {
                            for (; wo + 16 <= Wo; wo += 16)
                                for (int l = 0; l < 16; l++)
                                    acc[l] += gyrow[wo + l] * xq[wo + l];
                            for (; wo < Wo; wo++)
                                acc[wo & 15] += gyrow[wo] * xq[wo];
                        } else {
                            for (; wo + 16 <= Wo; wo += 16)
                                for (int l = 0; l < 16; l++)
                                    acc[l] += gyrow[wo + l] * xq[(wo + l) * stride];
                            for (; wo < Wo; wo++)
                                acc[wo & 15] += gyrow[wo] * xq[wo * stride];
                        }
                    }
                    REAL s = 0;
                    for (int l = 0; l < 16; l++)
                        s += acc[l];
                    gwrow[i * kw + j] += s;
                }
            }
        }
    }
}
