# cython: boundscheck=False, wraparound=False, cdivision=True
"""Native keystream kernels.

Same contract as :mod:`poa.kernels.pure`: counter-mode SHA3-256 over
``seed || LE64((substream << 32) | block)``, four LE64 words per block,
Box-Muller in block-then-pair order. Keccak-f[1600] is evaluated 4-wide
with AVX2 when the compiler targets it, scalar otherwise; both orderings
produce identical words.
"""

import numpy as np

cdef extern from *:
    """
#include <stdint.h>
#include <stddef.h>
#include <string.h>
#include <math.h>

#if defined(__AVX2__)
#include <immintrin.h>
#endif

static const uint64_t poa_rc[24] = {
    0x0000000000000001ULL, 0x0000000000008082ULL, 0x800000000000808aULL,
    0x8000000080008000ULL, 0x000000000000808bULL, 0x0000000080000001ULL,
    0x8000000080008081ULL, 0x8000000000008009ULL, 0x000000000000008aULL,
    0x0000000000000088ULL, 0x0000000080008009ULL, 0x000000008000000aULL,
    0x000000008000808bULL, 0x800000000000008bULL, 0x8000000000008089ULL,
    0x8000000000008003ULL, 0x8000000000008002ULL, 0x8000000000000080ULL,
    0x000000000000800aULL, 0x800000008000000aULL, 0x8000000080008081ULL,
    0x8000000000008080ULL, 0x0000000080000001ULL, 0x8000000080008008ULL
};
static const int poa_rotc[24] = {
    1, 3, 6, 10, 15, 21, 28, 36, 45, 55, 2, 14,
    27, 41, 56, 8, 25, 43, 62, 18, 39, 61, 20, 44
};
static const int poa_piln[24] = {
    10, 7, 11, 17, 18, 3, 5, 16, 8, 21, 24, 4,
    15, 23, 19, 13, 12, 2, 20, 14, 22, 9, 6, 1
};

#define POA_ROTL64(x, n) (((x) << (n)) | ((x) >> (64 - (n))))

static void poa_keccakf(uint64_t st[25])
{
    uint64_t bc[5], t;
    int r, i, j;
    for (r = 0; r < 24; r++) {
        for (i = 0; i < 5; i++)
            bc[i] = st[i] ^ st[i + 5] ^ st[i + 10] ^ st[i + 15] ^ st[i + 20];
        for (i = 0; i < 5; i++) {
            t = bc[(i + 4) % 5] ^ POA_ROTL64(bc[(i + 1) % 5], 1);
            for (j = 0; j < 25; j += 5)
                st[j + i] ^= t;
        }
        t = st[1];
        for (i = 0; i < 24; i++) {
            j = poa_piln[i];
            bc[0] = st[j];
            st[j] = POA_ROTL64(t, poa_rotc[i]);
            t = bc[0];
        }
        for (j = 0; j < 25; j += 5) {
            for (i = 0; i < 5; i++)
                bc[i] = st[j + i];
            for (i = 0; i < 5; i++)
                st[j + i] ^= (~bc[(i + 1) % 5]) & bc[(i + 2) % 5];
        }
        st[0] ^= poa_rc[r];
    }
}

/* One block: SHA3-256(seed32 || LE64(counter)); 40 bytes < rate 136, so a
 * single permutation absorbs everything. Output = first four state lanes. */
static void poa_block_scalar(const uint64_t seed_lanes[4], uint64_t counter,
                             uint64_t out[4])
{
    uint64_t st[25];
    memset(st, 0, sizeof st);
    st[0] = seed_lanes[0];
    st[1] = seed_lanes[1];
    st[2] = seed_lanes[2];
    st[3] = seed_lanes[3];
    st[4] = counter;
    st[5] = 0x06ULL;              /* SHA3 domain padding at byte 40 */
    st[16] = 0x8000000000000000ULL; /* final pad bit at byte 135 */
    poa_keccakf(st);
    out[0] = st[0];
    out[1] = st[1];
    out[2] = st[2];
    out[3] = st[3];
}

#if defined(__AVX512F__)

#define POA_XOR8 _mm512_xor_si512

static void poa_keccakf_x8(__m512i st[25])
{
    __m512i bc0, bc1, bc2, bc3, bc4, t0, t1, t2, t3, t4, u;
    int r;
    for (r = 0; r < 24; r++) {
        bc0 = POA_XOR8(st[0], POA_XOR8(st[5], POA_XOR8(st[10], POA_XOR8(st[15], st[20]))));
        bc1 = POA_XOR8(st[1], POA_XOR8(st[6], POA_XOR8(st[11], POA_XOR8(st[16], st[21]))));
        bc2 = POA_XOR8(st[2], POA_XOR8(st[7], POA_XOR8(st[12], POA_XOR8(st[17], st[22]))));
        bc3 = POA_XOR8(st[3], POA_XOR8(st[8], POA_XOR8(st[13], POA_XOR8(st[18], st[23]))));
        bc4 = POA_XOR8(st[4], POA_XOR8(st[9], POA_XOR8(st[14], POA_XOR8(st[19], st[24]))));
        t0 = POA_XOR8(bc4, _mm512_rol_epi64(bc1, 1));
        t1 = POA_XOR8(bc0, _mm512_rol_epi64(bc2, 1));
        t2 = POA_XOR8(bc1, _mm512_rol_epi64(bc3, 1));
        t3 = POA_XOR8(bc2, _mm512_rol_epi64(bc4, 1));
        t4 = POA_XOR8(bc3, _mm512_rol_epi64(bc0, 1));
        st[0] = POA_XOR8(st[0], t0);   st[5] = POA_XOR8(st[5], t0);
        st[10] = POA_XOR8(st[10], t0); st[15] = POA_XOR8(st[15], t0);
        st[20] = POA_XOR8(st[20], t0);
        st[1] = POA_XOR8(st[1], t1);   st[6] = POA_XOR8(st[6], t1);
        st[11] = POA_XOR8(st[11], t1); st[16] = POA_XOR8(st[16], t1);
        st[21] = POA_XOR8(st[21], t1);
        st[2] = POA_XOR8(st[2], t2);   st[7] = POA_XOR8(st[7], t2);
        st[12] = POA_XOR8(st[12], t2); st[17] = POA_XOR8(st[17], t2);
        st[22] = POA_XOR8(st[22], t2);
        st[3] = POA_XOR8(st[3], t3);   st[8] = POA_XOR8(st[8], t3);
        st[13] = POA_XOR8(st[13], t3); st[18] = POA_XOR8(st[18], t3);
        st[23] = POA_XOR8(st[23], t3);
        st[4] = POA_XOR8(st[4], t4);   st[9] = POA_XOR8(st[9], t4);
        st[14] = POA_XOR8(st[14], t4); st[19] = POA_XOR8(st[19], t4);
        st[24] = POA_XOR8(st[24], t4);
        u = st[1];
#define POA_RP8(j, n) bc0 = st[j]; st[j] = _mm512_rol_epi64(u, n); u = bc0;
        POA_RP8(10, 1)  POA_RP8(7, 3)   POA_RP8(11, 6)  POA_RP8(17, 10)
        POA_RP8(18, 15) POA_RP8(3, 21)  POA_RP8(5, 28)  POA_RP8(16, 36)
        POA_RP8(8, 45)  POA_RP8(21, 55) POA_RP8(24, 2)  POA_RP8(4, 14)
        POA_RP8(15, 27) POA_RP8(23, 41) POA_RP8(19, 56) POA_RP8(13, 8)
        POA_RP8(12, 25) POA_RP8(2, 43)  POA_RP8(20, 62) POA_RP8(14, 18)
        POA_RP8(22, 39) POA_RP8(9, 61)  POA_RP8(6, 20)  POA_RP8(1, 44)
#undef POA_RP8
#define POA_CHI8_ROW(j) \
        bc0 = st[j]; bc1 = st[j + 1]; bc2 = st[j + 2]; bc3 = st[j + 3]; bc4 = st[j + 4]; \
        st[j] = POA_XOR8(bc0, _mm512_andnot_si512(bc1, bc2)); \
        st[j + 1] = POA_XOR8(bc1, _mm512_andnot_si512(bc2, bc3)); \
        st[j + 2] = POA_XOR8(bc2, _mm512_andnot_si512(bc3, bc4)); \
        st[j + 3] = POA_XOR8(bc3, _mm512_andnot_si512(bc4, bc0)); \
        st[j + 4] = POA_XOR8(bc4, _mm512_andnot_si512(bc0, bc1));
        POA_CHI8_ROW(0) POA_CHI8_ROW(5) POA_CHI8_ROW(10) POA_CHI8_ROW(15) POA_CHI8_ROW(20)
#undef POA_CHI8_ROW
        st[0] = POA_XOR8(st[0], _mm512_set1_epi64((long long)poa_rc[r]));
    }
}

/* Eight consecutive counters per permutation batch. */
static void poa_block_x8(const uint64_t seed_lanes[4], uint64_t counter0,
                         uint64_t out[32])
{
    __m512i st[25];
    uint64_t tmp[4][8] __attribute__((aligned(64)));
    int l, i;
    for (l = 0; l < 25; l++)
        st[l] = _mm512_setzero_si512();
    for (l = 0; l < 4; l++)
        st[l] = _mm512_set1_epi64((long long)seed_lanes[l]);
    st[4] = _mm512_set_epi64((long long)(counter0 + 7), (long long)(counter0 + 6),
                             (long long)(counter0 + 5), (long long)(counter0 + 4),
                             (long long)(counter0 + 3), (long long)(counter0 + 2),
                             (long long)(counter0 + 1), (long long)counter0);
    st[5] = _mm512_set1_epi64(0x06LL);
    st[16] = _mm512_set1_epi64((long long)0x8000000000000000ULL);
    poa_keccakf_x8(st);
    for (l = 0; l < 4; l++)
        _mm512_store_si512((__m512i *)tmp[l], st[l]);
    for (i = 0; i < 8; i++)
        for (l = 0; l < 4; l++)
            out[4 * i + l] = tmp[l][i];
}
#endif /* __AVX512F__ */

#if defined(__AVX2__)

/* Immediate-count rotate: keeps VPSLLQ/VPSRLQ in their fast forms. */
#define POA_ROTLVI(x, n) _mm256_or_si256(_mm256_slli_epi64((x), (n)), \
                                         _mm256_srli_epi64((x), 64 - (n)))
#define POA_XOR _mm256_xor_si256

static void poa_keccakf_x4(__m256i st[25])
{
    __m256i bc0, bc1, bc2, bc3, bc4, t0, t1, t2, t3, t4, u;
    int r;
    for (r = 0; r < 24; r++) {
        /* theta */
        bc0 = POA_XOR(st[0], POA_XOR(st[5], POA_XOR(st[10], POA_XOR(st[15], st[20]))));
        bc1 = POA_XOR(st[1], POA_XOR(st[6], POA_XOR(st[11], POA_XOR(st[16], st[21]))));
        bc2 = POA_XOR(st[2], POA_XOR(st[7], POA_XOR(st[12], POA_XOR(st[17], st[22]))));
        bc3 = POA_XOR(st[3], POA_XOR(st[8], POA_XOR(st[13], POA_XOR(st[18], st[23]))));
        bc4 = POA_XOR(st[4], POA_XOR(st[9], POA_XOR(st[14], POA_XOR(st[19], st[24]))));
        t0 = POA_XOR(bc4, POA_ROTLVI(bc1, 1));
        t1 = POA_XOR(bc0, POA_ROTLVI(bc2, 1));
        t2 = POA_XOR(bc1, POA_ROTLVI(bc3, 1));
        t3 = POA_XOR(bc2, POA_ROTLVI(bc4, 1));
        t4 = POA_XOR(bc3, POA_ROTLVI(bc0, 1));
        st[0] = POA_XOR(st[0], t0);   st[5] = POA_XOR(st[5], t0);
        st[10] = POA_XOR(st[10], t0); st[15] = POA_XOR(st[15], t0);
        st[20] = POA_XOR(st[20], t0);
        st[1] = POA_XOR(st[1], t1);   st[6] = POA_XOR(st[6], t1);
        st[11] = POA_XOR(st[11], t1); st[16] = POA_XOR(st[16], t1);
        st[21] = POA_XOR(st[21], t1);
        st[2] = POA_XOR(st[2], t2);   st[7] = POA_XOR(st[7], t2);
        st[12] = POA_XOR(st[12], t2); st[17] = POA_XOR(st[17], t2);
        st[22] = POA_XOR(st[22], t2);
        st[3] = POA_XOR(st[3], t3);   st[8] = POA_XOR(st[8], t3);
        st[13] = POA_XOR(st[13], t3); st[18] = POA_XOR(st[18], t3);
        st[23] = POA_XOR(st[23], t3);
        st[4] = POA_XOR(st[4], t4);   st[9] = POA_XOR(st[9], t4);
        st[14] = POA_XOR(st[14], t4); st[19] = POA_XOR(st[19], t4);
        st[24] = POA_XOR(st[24], t4);
        /* rho + pi, unrolled chain with constant rotations */
        u = st[1];
#define POA_RP(j, n) bc0 = st[j]; st[j] = POA_ROTLVI(u, n); u = bc0;
        POA_RP(10, 1)  POA_RP(7, 3)   POA_RP(11, 6)  POA_RP(17, 10)
        POA_RP(18, 15) POA_RP(3, 21)  POA_RP(5, 28)  POA_RP(16, 36)
        POA_RP(8, 45)  POA_RP(21, 55) POA_RP(24, 2)  POA_RP(4, 14)
        POA_RP(15, 27) POA_RP(23, 41) POA_RP(19, 56) POA_RP(13, 8)
        POA_RP(12, 25) POA_RP(2, 43)  POA_RP(20, 62) POA_RP(14, 18)
        POA_RP(22, 39) POA_RP(9, 61)  POA_RP(6, 20)  POA_RP(1, 44)
#undef POA_RP
        /* chi */
#define POA_CHI_ROW(j) \
        bc0 = st[j]; bc1 = st[j + 1]; bc2 = st[j + 2]; bc3 = st[j + 3]; bc4 = st[j + 4]; \
        st[j] = POA_XOR(bc0, _mm256_andnot_si256(bc1, bc2)); \
        st[j + 1] = POA_XOR(bc1, _mm256_andnot_si256(bc2, bc3)); \
        st[j + 2] = POA_XOR(bc2, _mm256_andnot_si256(bc3, bc4)); \
        st[j + 3] = POA_XOR(bc3, _mm256_andnot_si256(bc4, bc0)); \
        st[j + 4] = POA_XOR(bc4, _mm256_andnot_si256(bc0, bc1));
        POA_CHI_ROW(0) POA_CHI_ROW(5) POA_CHI_ROW(10) POA_CHI_ROW(15) POA_CHI_ROW(20)
#undef POA_CHI_ROW
        st[0] = POA_XOR(st[0], _mm256_set1_epi64x((long long)poa_rc[r]));
    }
}

/* Four consecutive counters in one permutation batch. */
static void poa_block_x4(const uint64_t seed_lanes[4], uint64_t counter0,
                         uint64_t out[16])
{
    __m256i st[25];
    uint64_t tmp[4][4] __attribute__((aligned(32)));
    int l, i;
    for (l = 0; l < 25; l++)
        st[l] = _mm256_setzero_si256();
    for (l = 0; l < 4; l++)
        st[l] = _mm256_set1_epi64x((long long)seed_lanes[l]);
    st[4] = _mm256_set_epi64x((long long)(counter0 + 3), (long long)(counter0 + 2),
                              (long long)(counter0 + 1), (long long)counter0);
    st[5] = _mm256_set1_epi64x(0x06LL);
    st[16] = _mm256_set1_epi64x((long long)0x8000000000000000ULL);
    poa_keccakf_x4(st);
    for (l = 0; l < 4; l++)
        _mm256_store_si256((__m256i *)tmp[l], st[l]);
    for (i = 0; i < 4; i++)
        for (l = 0; l < 4; l++)
            out[4 * i + l] = tmp[l][i];
}
#endif /* __AVX2__ */

/* nblocks consecutive blocks starting at absolute counter `base`. */
static void poa_fill_blocks(const uint64_t seed_lanes[4], uint64_t base,
                            size_t nblocks, uint64_t *out)
{
    size_t i = 0;
#if defined(__AVX512F__)
    for (; i + 8 <= nblocks; i += 8)
        poa_block_x8(seed_lanes, base + i, out + 4 * i);
#endif
#if defined(__AVX2__)
    for (; i + 4 <= nblocks; i += 4)
        poa_block_x4(seed_lanes, base + i, out + 4 * i);
#endif
    for (; i < nblocks; i++)
        poa_block_scalar(seed_lanes, base + i, out + 4 * i);
}

static void poa_fill_words(const unsigned char *seed, uint64_t substream,
                           uint64_t start_block, size_t nblocks, uint64_t *out)
{
    uint64_t seed_lanes[4];
    memcpy(seed_lanes, seed, 32);
    poa_fill_blocks(seed_lanes, (substream << 32) | start_block, nblocks, out);
}

#define POA_INV_2_53 1.1102230246251565e-16 /* 2^-53 */
#define POA_TWO_PI 6.283185307179586476925286766559
#define POA_CHUNK_BLOCKS 64

extern void sincos(double x, double *sinp, double *cosp);

static void poa_words_to_gauss(const uint64_t *words, size_t nwords, double *out)
{
    size_t i;
    double sn, cs;
    for (i = 0; i + 1 < nwords; i += 2) {
        double u1 = ((double)(words[i] >> 11) + 0.5) * POA_INV_2_53;
        double u2 = ((double)(words[i + 1] >> 11) + 0.5) * POA_INV_2_53;
        double radius = sqrt(-2.0 * log(u1));
        sincos(POA_TWO_PI * u2, &sn, &cs);
        out[i] = radius * cs;
        out[i + 1] = radius * sn;
    }
}

static void poa_fill_gauss(const unsigned char *seed, uint64_t substream,
                           size_t count, double *out)
{
    uint64_t words[4 * POA_CHUNK_BLOCKS];
    double vals[4 * POA_CHUNK_BLOCKS];
    size_t done = 0, block = 0;
    uint64_t seed_lanes[4];
    uint64_t base = substream << 32;
    memcpy(seed_lanes, seed, 32);
    while (done < count) {
        size_t chunk_blocks = (count - done + 3) / 4;
        size_t n;
        if (chunk_blocks > POA_CHUNK_BLOCKS)
            chunk_blocks = POA_CHUNK_BLOCKS;
        poa_fill_blocks(seed_lanes, base + block, chunk_blocks, words);
        poa_words_to_gauss(words, 4 * chunk_blocks, vals);
        n = 4 * chunk_blocks;
        if (n > count - done)
            n = count - done;
        memcpy(out + done, vals, n * sizeof(double));
        done += n;
        block += chunk_blocks;
    }
}

static void poa_fill_unif(const unsigned char *seed, uint64_t substream,
                          size_t count, double *out)
{
    uint64_t words[4 * POA_CHUNK_BLOCKS];
    size_t done = 0, block = 0;
    uint64_t seed_lanes[4];
    uint64_t base = substream << 32;
    memcpy(seed_lanes, seed, 32);
    while (done < count) {
        size_t chunk_blocks = (count - done + 3) / 4;
        size_t n, k;
        if (chunk_blocks > POA_CHUNK_BLOCKS)
            chunk_blocks = POA_CHUNK_BLOCKS;
        poa_fill_blocks(seed_lanes, base + block, chunk_blocks, words);
        n = 4 * chunk_blocks;
        if (n > count - done)
            n = count - done;
        for (k = 0; k < n; k++)
            out[done + k] = ((double)(words[k] >> 11) + 0.5) * POA_INV_2_53;
        done += n;
        block += chunk_blocks;
    }
}

static double poa_gauss_dot_row(const unsigned char *seed, uint64_t substream,
                                size_t d, const double *w, double *scratch)
{
    double acc = 0.0;
    size_t k;
    poa_fill_gauss(seed, substream, d, scratch);
    for (k = 0; k < d; k++)
        acc += scratch[k] * w[k];
    return acc;
}
    """
    void poa_fill_words(const unsigned char* seed, unsigned long long substream,
                        unsigned long long start_block, size_t nblocks,
                        unsigned long long* out) nogil
    void poa_fill_gauss(const unsigned char* seed, unsigned long long substream,
                        size_t count, double* out) nogil
    void poa_fill_unif(const unsigned char* seed, unsigned long long substream,
                       size_t count, double* out) nogil
    double poa_gauss_dot_row(const unsigned char* seed, unsigned long long substream,
                             size_t d, const double* w, double* scratch) nogil


MAX_SUBSTREAM = 2 ** 32 - 1


cdef inline void _check(bytes seed, unsigned long long substream) except *:
    if len(seed) != 32:
        raise ValueError("seed must be exactly 32 bytes")
    if substream > <unsigned long long> MAX_SUBSTREAM:
        raise ValueError(f"substream out of range: {substream}")


def keystream_words(bytes seed, substream, start_block, nblocks):
    _check(seed, substream)
    cdef unsigned long long sub = substream
    cdef unsigned long long start = start_block
    cdef size_t n = nblocks
    out = np.empty(n * 4, dtype=np.uint64)
    cdef unsigned long long[::1] view = out
    cdef const unsigned char* s = seed
    if n:
        with nogil:
            poa_fill_words(s, sub, start, n, &view[0])
    return out


def gaussians(bytes seed, count, substream=0):
    _check(seed, substream)
    if count < 0:
        raise ValueError("count must be >= 0")
    cdef unsigned long long sub = substream
    cdef size_t n = count
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] view = out
    cdef const unsigned char* s = seed
    if n:
        with nogil:
            poa_fill_gauss(s, sub, n, &view[0])
    return out


def uniforms(bytes seed, count, substream=0):
    _check(seed, substream)
    if count < 0:
        raise ValueError("count must be >= 0")
    cdef unsigned long long sub = substream
    cdef size_t n = count
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] view = out
    cdef const unsigned char* s = seed
    if n:
        with nogil:
            poa_fill_unif(s, sub, n, &view[0])
    return out


def gaussian_rows(bytes seed, first_substream, nrows, count):
    _check(seed, first_substream)
    cdef unsigned long long first = first_substream
    cdef size_t rows = nrows
    cdef size_t d = count
    cdef size_t i
    out = np.empty((rows, d), dtype=np.float64)
    cdef double[:, ::1] view = out
    cdef const unsigned char* s = seed
    if rows and d:
        with nogil:
            for i in range(rows):
                poa_fill_gauss(s, first + i, d, &view[i, 0])
    return out


def gaussian_dot(bytes seed, first_substream, nrows, w):
    _check(seed, first_substream)
    cdef unsigned long long first = first_substream
    cdef size_t rows = nrows
    w_arr = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] wv = w_arr
    cdef size_t d = w_arr.shape[0]
    out = np.empty(rows, dtype=np.float64)
    cdef double[::1] ov = out
    scratch = np.empty(d, dtype=np.float64)
    cdef double[::1] sv = scratch
    cdef const unsigned char* s = seed
    cdef size_t i
    if rows and d:
        with nogil:
            for i in range(rows):
                ov[i] = poa_gauss_dot_row(s, first + i, d, &wv[0], &sv[0])
    return out
