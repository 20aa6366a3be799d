#pragma once

#include <algorithm>
#include <cstddef>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

// Row-at-a-time dense kernels for the GNN forward pass.
//
// Every kernel computes one output row out = a^T W (optionally accumulating)
// with a fixed reduction order that depends only on (m, n). That gives a
// bitwise shape-independence guarantee: the same input row against the same
// weights produces the same output bits no matter how many other rows the
// surrounding matrix has. The K-hop locality property relies on this; a
// library GEMM does not provide it (its blocking changes with the row count).

namespace gridse::kern {

template <bool Acc, class S>
inline void matvec_generic(const S* a, const S* W, S* out, int m, int n) {
    if constexpr (!Acc) std::fill(out, out + n, S(0));
    for (int k = 0; k < m; ++k) {
        const S ak = a[k];
        const S* w = W + static_cast<std::size_t>(k) * n;
        for (int j = 0; j < n; ++j) out[j] += ak * w[j];
    }
}

#if defined(__AVX512F__)

template <bool Acc>
inline void matvec_avx512(const float* a, const float* W, float* out, int m, int n) {
    const std::size_t stride = static_cast<std::size_t>(n);
    int j = 0;
    while (n - j >= 64) {
        __m512 c0, c1, c2, c3;
        if constexpr (Acc) {
            c0 = _mm512_loadu_ps(out + j);
            c1 = _mm512_loadu_ps(out + j + 16);
            c2 = _mm512_loadu_ps(out + j + 32);
            c3 = _mm512_loadu_ps(out + j + 48);
        } else {
            c0 = c1 = c2 = c3 = _mm512_setzero_ps();
        }
        for (int k = 0; k < m; ++k) {
            const __m512 av = _mm512_set1_ps(a[k]);
            const float* w = W + k * stride + j;
            c0 = _mm512_fmadd_ps(av, _mm512_loadu_ps(w), c0);
            c1 = _mm512_fmadd_ps(av, _mm512_loadu_ps(w + 16), c1);
            c2 = _mm512_fmadd_ps(av, _mm512_loadu_ps(w + 32), c2);
            c3 = _mm512_fmadd_ps(av, _mm512_loadu_ps(w + 48), c3);
        }
        _mm512_storeu_ps(out + j, c0);
        _mm512_storeu_ps(out + j + 16, c1);
        _mm512_storeu_ps(out + j + 32, c2);
        _mm512_storeu_ps(out + j + 48, c3);
        j += 64;
    }
    while (n - j >= 16) {
        __m512 c;
        if constexpr (Acc)
            c = _mm512_loadu_ps(out + j);
        else
            c = _mm512_setzero_ps();
        for (int k = 0; k < m; ++k)
            c = _mm512_fmadd_ps(_mm512_set1_ps(a[k]), _mm512_loadu_ps(W + k * stride + j), c);
        _mm512_storeu_ps(out + j, c);
        j += 16;
    }
    if (j < n) {
        const __mmask16 mask = static_cast<__mmask16>((1u << (n - j)) - 1u);
        __m512 c;
        if constexpr (Acc)
            c = _mm512_maskz_loadu_ps(mask, out + j);
        else
            c = _mm512_setzero_ps();
        for (int k = 0; k < m; ++k)
            c = _mm512_fmadd_ps(_mm512_set1_ps(a[k]),
                                _mm512_maskz_loadu_ps(mask, W + k * stride + j), c);
        _mm512_mask_storeu_ps(out + j, mask, c);
    }
}

template <bool Acc>
inline void matvec_avx512(const double* a, const double* W, double* out, int m, int n) {
    const std::size_t stride = static_cast<std::size_t>(n);
    int j = 0;
    while (n - j >= 32) {
        __m512d c0, c1, c2, c3;
        if constexpr (Acc) {
            c0 = _mm512_loadu_pd(out + j);
            c1 = _mm512_loadu_pd(out + j + 8);
            c2 = _mm512_loadu_pd(out + j + 16);
            c3 = _mm512_loadu_pd(out + j + 24);
        } else {
            c0 = c1 = c2 = c3 = _mm512_setzero_pd();
        }
        for (int k = 0; k < m; ++k) {
            const __m512d av = _mm512_set1_pd(a[k]);
            const double* w = W + k * stride + j;
            c0 = _mm512_fmadd_pd(av, _mm512_loadu_pd(w), c0);
            c1 = _mm512_fmadd_pd(av, _mm512_loadu_pd(w + 8), c1);
            c2 = _mm512_fmadd_pd(av, _mm512_loadu_pd(w + 16), c2);
            c3 = _mm512_fmadd_pd(av, _mm512_loadu_pd(w + 24), c3);
        }
        _mm512_storeu_pd(out + j, c0);
        _mm512_storeu_pd(out + j + 8, c1);
        _mm512_storeu_pd(out + j + 16, c2);
        _mm512_storeu_pd(out + j + 24, c3);
        j += 32;
    }
    while (n - j >= 8) {
        __m512d c;
        if constexpr (Acc)
            c = _mm512_loadu_pd(out + j);
        else
            c = _mm512_setzero_pd();
        for (int k = 0; k < m; ++k)
            c = _mm512_fmadd_pd(_mm512_set1_pd(a[k]), _mm512_loadu_pd(W + k * stride + j), c);
        _mm512_storeu_pd(out + j, c);
        j += 8;
    }
    if (j < n) {
        const __mmask8 mask = static_cast<__mmask8>((1u << (n - j)) - 1u);
        __m512d c;
        if constexpr (Acc)
            c = _mm512_maskz_loadu_pd(mask, out + j);
        else
            c = _mm512_setzero_pd();
        for (int k = 0; k < m; ++k)
            c = _mm512_fmadd_pd(_mm512_set1_pd(a[k]),
                                _mm512_maskz_loadu_pd(mask, W + k * stride + j), c);
        _mm512_mask_storeu_pd(out + j, mask, c);
    }
}

#endif // __AVX512F__

/// out = a^T W for row-major W (m x n).
template <class S>
inline void matvec_set(const S* a, const S* W, S* out, int m, int n) {
#if defined(__AVX512F__)
    matvec_avx512<false>(a, W, out, m, n);
#else
    matvec_generic<false>(a, W, out, m, n);
#endif
}

/// out += a^T W.
template <class S>
inline void matvec_acc(const S* a, const S* W, S* out, int m, int n) {
#if defined(__AVX512F__)
    matvec_avx512<true>(a, W, out, m, n);
#else
    matvec_generic<true>(a, W, out, m, n);
#endif
}

/// C = A W row by row; A is rows x m, W is m x n, C is rows x n, row-major.
template <class S>
inline void matmul_rows(const S* A, const S* W, S* C, int rows, int m, int n) {
    for (int r = 0; r < rows; ++r)
        matvec_set(A + static_cast<std::size_t>(r) * m, W, C + static_cast<std::size_t>(r) * n, m, n);
}

/// Dot product with a fixed left-to-right order.
template <class S>
inline S dot(const S* a, const S* b, int n) {
    S acc = S(0);
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

} // namespace gridse::kern
