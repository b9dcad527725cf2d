#include "idrank/distance.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "idrank/error.hpp"

#if defined(__AVX512F__) && defined(__AVX512DQ__) && defined(__FMA__)
#define IDRANK_KERNEL_AVX512 1
#include <immintrin.h>
#elif defined(__AVX2__) && defined(__FMA__)
#define IDRANK_KERNEL_AVX2 1
#include <immintrin.h>
#endif

namespace idrank {

static_assert(kDistanceLanes == 16, "kernels below hard-code 16 partial sums");

std::string_view to_string(DistanceMode m) noexcept {
  return m == DistanceMode::l2 ? "l2" : "squared_l2";
}

DistanceMode parse_distance_mode(std::string_view text) {
  if (text == "l2") return DistanceMode::l2;
  if (text == "squared_l2") return DistanceMode::squared_l2;
  throw Error(ErrorKind::validation, "unrecognized distance mode '" + std::string(text) + "'");
}

namespace {

#if defined(IDRANK_KERNEL_AVX512)

inline __m128 fold16(__m512 acc) {
  const __m256 s8 = _mm256_add_ps(_mm512_castps512_ps256(acc), _mm512_extractf32x8_ps(acc, 1));
  return _mm_add_ps(_mm256_castps256_ps128(s8), _mm256_extractf128_ps(s8, 1));
}

inline float fold4(__m128 s4) {
  const __m128 s2 = _mm_add_ps(s4, _mm_movehl_ps(s4, s4));
  return _mm_cvtss_f32(_mm_add_ss(s2, _mm_shuffle_ps(s2, s2, 1)));
}

float squared_l2_impl(const float* a, const float* b, std::size_t dim) {
  __m512 acc = _mm512_setzero_ps();
  std::size_t d = 0;
  for (; d + 16 <= dim; d += 16) {
    const __m512 diff = _mm512_sub_ps(_mm512_loadu_ps(a + d), _mm512_loadu_ps(b + d));
    acc = _mm512_fmadd_ps(diff, diff, acc);
  }
  if (d < dim) {
    const __mmask16 m = static_cast<__mmask16>((1u << (dim - d)) - 1);
    const __m512 diff = _mm512_sub_ps(_mm512_maskz_loadu_ps(m, a + d), _mm512_maskz_loadu_ps(m, b + d));
    acc = _mm512_fmadd_ps(diff, diff, acc);
  }
  return fold4(fold16(acc));
}

void squared_l2_rows_impl(const float* q, const float* rows, std::size_t n, std::size_t dim,
                          float* out) {
  const std::size_t full = dim / 16 * 16;
  const __mmask16 m = static_cast<__mmask16>((1u << (dim - full)) - 1);
  std::size_t r = 0;
  for (; r + 4 <= n; r += 4) {
    const float* r0 = rows + (r + 0) * dim;
    const float* r1 = rows + (r + 1) * dim;
    const float* r2 = rows + (r + 2) * dim;
    const float* r3 = rows + (r + 3) * dim;
    __m512 a0 = _mm512_setzero_ps(), a1 = _mm512_setzero_ps();
    __m512 a2 = _mm512_setzero_ps(), a3 = _mm512_setzero_ps();
    for (std::size_t d = 0; d < full; d += 16) {
      const __m512 qv = _mm512_loadu_ps(q + d);
      const __m512 d0 = _mm512_sub_ps(qv, _mm512_loadu_ps(r0 + d));
      const __m512 d1 = _mm512_sub_ps(qv, _mm512_loadu_ps(r1 + d));
      const __m512 d2 = _mm512_sub_ps(qv, _mm512_loadu_ps(r2 + d));
      const __m512 d3 = _mm512_sub_ps(qv, _mm512_loadu_ps(r3 + d));
      a0 = _mm512_fmadd_ps(d0, d0, a0);
      a1 = _mm512_fmadd_ps(d1, d1, a1);
      a2 = _mm512_fmadd_ps(d2, d2, a2);
      a3 = _mm512_fmadd_ps(d3, d3, a3);
    }
    if (full < dim) {
      const __m512 qv = _mm512_maskz_loadu_ps(m, q + full);
      const __m512 d0 = _mm512_sub_ps(qv, _mm512_maskz_loadu_ps(m, r0 + full));
      const __m512 d1 = _mm512_sub_ps(qv, _mm512_maskz_loadu_ps(m, r1 + full));
      const __m512 d2 = _mm512_sub_ps(qv, _mm512_maskz_loadu_ps(m, r2 + full));
      const __m512 d3 = _mm512_sub_ps(qv, _mm512_maskz_loadu_ps(m, r3 + full));
      a0 = _mm512_fmadd_ps(d0, d0, a0);
      a1 = _mm512_fmadd_ps(d1, d1, a1);
      a2 = _mm512_fmadd_ps(d2, d2, a2);
      a3 = _mm512_fmadd_ps(d3, d3, a3);
    }
    out[r + 0] = fold4(fold16(a0));
    out[r + 1] = fold4(fold16(a1));
    out[r + 2] = fold4(fold16(a2));
    out[r + 3] = fold4(fold16(a3));
  }
  for (; r < n; ++r) out[r] = squared_l2_impl(q, rows + r * dim, dim);
}

// Pairwise folding of two accumulators at a time, applying the same
// additions as fold16 followed by fold4 to each of them.
inline __m512 fold_w8(__m512 a, __m512 b) {
  return _mm512_add_ps(_mm512_shuffle_f32x4(a, b, _MM_SHUFFLE(1, 0, 1, 0)),
                       _mm512_shuffle_f32x4(a, b, _MM_SHUFFLE(3, 2, 3, 2)));
}

inline __m512 fold_w4(__m512 a, __m512 b) {
  return _mm512_add_ps(_mm512_shuffle_f32x4(a, b, _MM_SHUFFLE(2, 0, 2, 0)),
                       _mm512_shuffle_f32x4(a, b, _MM_SHUFFLE(3, 1, 3, 1)));
}

inline __m512 fold_w2(__m512 a, __m512 b) {
  return _mm512_add_ps(_mm512_shuffle_ps(a, b, _MM_SHUFFLE(1, 0, 1, 0)),
                       _mm512_shuffle_ps(a, b, _MM_SHUFFLE(3, 2, 3, 2)));
}

inline __m512 fold_w1(__m512 a, __m512 b) {
  return _mm512_add_ps(_mm512_shuffle_ps(a, b, _MM_SHUFFLE(2, 0, 2, 0)),
                       _mm512_shuffle_ps(a, b, _MM_SHUFFLE(3, 1, 3, 1)));
}

// Sixteen accumulators of a 4x4 block; a<r><p> holds query p against row r.
struct Block4x4 {
  __m512 a00, a01, a02, a03, a10, a11, a12, a13, a20, a21, a22, a23, a30, a31, a32, a33;
};

inline void accumulate4(__m512 q0, __m512 q1, __m512 q2, __m512 q3, __m512 row, __m512& a0,
                        __m512& a1, __m512& a2, __m512& a3) {
  const __m512 d0 = _mm512_sub_ps(q0, row);
  const __m512 d1 = _mm512_sub_ps(q1, row);
  const __m512 d2 = _mm512_sub_ps(q2, row);
  const __m512 d3 = _mm512_sub_ps(q3, row);
  a0 = _mm512_fmadd_ps(d0, d0, a0);
  a1 = _mm512_fmadd_ps(d1, d1, a1);
  a2 = _mm512_fmadd_ps(d2, d2, a2);
  a3 = _mm512_fmadd_ps(d3, d3, a3);
}

// One 16-coordinate chunk at offset d; each loaded row chunk feeds four FMAs.
inline __attribute__((always_inline)) void block_chunk(Block4x4& b, const float* const* q,
                                                       const float* rows, std::size_t dim,
                                                       std::size_t d, __mmask16 m) {
  const __m512 q0 = _mm512_maskz_loadu_ps(m, q[0] + d);
  const __m512 q1 = _mm512_maskz_loadu_ps(m, q[1] + d);
  const __m512 q2 = _mm512_maskz_loadu_ps(m, q[2] + d);
  const __m512 q3 = _mm512_maskz_loadu_ps(m, q[3] + d);
  accumulate4(q0, q1, q2, q3, _mm512_maskz_loadu_ps(m, rows + d), b.a00, b.a01, b.a02, b.a03);
  accumulate4(q0, q1, q2, q3, _mm512_maskz_loadu_ps(m, rows + dim + d), b.a10, b.a11, b.a12,
              b.a13);
  accumulate4(q0, q1, q2, q3, _mm512_maskz_loadu_ps(m, rows + 2 * dim + d), b.a20, b.a21, b.a22,
              b.a23);
  accumulate4(q0, q1, q2, q3, _mm512_maskz_loadu_ps(m, rows + 3 * dim + d), b.a30, b.a31, b.a32,
              b.a33);
}

// Four queries against four rows.
void block4x4(const float* const* q, const float* rows, std::size_t dim, float* out,
              std::size_t ld) {
  const __m512 z = _mm512_setzero_ps();
  Block4x4 b{z, z, z, z, z, z, z, z, z, z, z, z, z, z, z, z};
  const std::size_t full = dim / 16 * 16;
  std::size_t d = 0;
  for (; d + 32 <= full; d += 32) {
    block_chunk(b, q, rows, dim, d, 0xFFFF);
    block_chunk(b, q, rows, dim, d + 16, 0xFFFF);
  }
  if (d < full) block_chunk(b, q, rows, dim, d, 0xFFFF);
  if (full < dim) {
    block_chunk(b, q, rows, dim, full, static_cast<__mmask16>((1u << (dim - full)) - 1));
  }
  // Lane p * 4 + r of sums holds query p against row r.
  const __m512 sums = fold_w1(
      fold_w2(fold_w4(fold_w8(b.a00, b.a01), fold_w8(b.a02, b.a03)),
              fold_w4(fold_w8(b.a10, b.a11), fold_w8(b.a12, b.a13))),
      fold_w2(fold_w4(fold_w8(b.a20, b.a21), fold_w8(b.a22, b.a23)),
              fold_w4(fold_w8(b.a30, b.a31), fold_w8(b.a32, b.a33))));
  _mm_storeu_ps(out, _mm512_extractf32x4_ps(sums, 0));
  _mm_storeu_ps(out + ld, _mm512_extractf32x4_ps(sums, 1));
  _mm_storeu_ps(out + 2 * ld, _mm512_extractf32x4_ps(sums, 2));
  _mm_storeu_ps(out + 3 * ld, _mm512_extractf32x4_ps(sums, 3));
}

void squared_l2_block_impl(const float* q, std::size_t nq, const float* rows, std::size_t nr,
                           std::size_t dim, float* out) {
  const std::size_t full_rows = nr / 4 * 4;
  for (std::size_t p = 0; p < nq; p += 4) {
    const std::size_t count = std::min<std::size_t>(4, nq - p);
    // A short final group repeats its last query; the extra results land in
    // scratch and are dropped.
    const float* qs[4];
    for (std::size_t i = 0; i < 4; ++i) qs[i] = q + (p + std::min(i, count - 1)) * dim;
    if (count == 4) {
      for (std::size_t r = 0; r < full_rows; r += 4) block4x4(qs, rows + r * dim, dim, out + p * nr + r, nr);
    } else {
      float scratch[16];
      for (std::size_t r = 0; r < full_rows; r += 4) {
        block4x4(qs, rows + r * dim, dim, scratch, 4);
        for (std::size_t i = 0; i < count; ++i) {
          std::copy_n(scratch + i * 4, 4, out + (p + i) * nr + r);
        }
      }
    }
    if (full_rows < nr) {
      for (std::size_t i = 0; i < count; ++i) {
        squared_l2_rows_impl(qs[i], rows + full_rows * dim, nr - full_rows, dim,
                             out + (p + i) * nr + full_rows);
      }
    }
  }
}

constexpr std::string_view kIsa = "avx512";

#elif defined(IDRANK_KERNEL_AVX2)

inline float fold(__m256 lo, __m256 hi) {
  const __m256 s8 = _mm256_add_ps(lo, hi);
  const __m128 s4 = _mm_add_ps(_mm256_castps256_ps128(s8), _mm256_extractf128_ps(s8, 1));
  const __m128 s2 = _mm_add_ps(s4, _mm_movehl_ps(s4, s4));
  return _mm_cvtss_f32(_mm_add_ss(s2, _mm_shuffle_ps(s2, s2, 1)));
}

inline __m256i tail_mask(std::size_t valid) {
  alignas(32) std::array<int, 8> bits{};
  for (std::size_t i = 0; i < 8; ++i) bits[i] = i < valid ? -1 : 0;
  return _mm256_load_si256(reinterpret_cast<const __m256i*>(bits.data()));
}

struct TailMasks {
  __m256i lo, hi;
  explicit TailMasks(std::size_t rem)
      : lo(tail_mask(rem)), hi(tail_mask(rem > 8 ? rem - 8 : 0)) {}
};

inline void accumulate(const float* a, const float* b, __m256& lo, __m256& hi) {
  const __m256 dl = _mm256_sub_ps(_mm256_loadu_ps(a), _mm256_loadu_ps(b));
  const __m256 dh = _mm256_sub_ps(_mm256_loadu_ps(a + 8), _mm256_loadu_ps(b + 8));
  lo = _mm256_fmadd_ps(dl, dl, lo);
  hi = _mm256_fmadd_ps(dh, dh, hi);
}

inline void accumulate_tail(const float* a, const float* b, const TailMasks& m, __m256& lo,
                            __m256& hi) {
  const __m256 dl = _mm256_sub_ps(_mm256_maskload_ps(a, m.lo), _mm256_maskload_ps(b, m.lo));
  const __m256 dh =
      _mm256_sub_ps(_mm256_maskload_ps(a + 8, m.hi), _mm256_maskload_ps(b + 8, m.hi));
  lo = _mm256_fmadd_ps(dl, dl, lo);
  hi = _mm256_fmadd_ps(dh, dh, hi);
}

float squared_l2_impl(const float* a, const float* b, std::size_t dim) {
  __m256 lo = _mm256_setzero_ps(), hi = _mm256_setzero_ps();
  const std::size_t full = dim / 16 * 16;
  for (std::size_t d = 0; d < full; d += 16) accumulate(a + d, b + d, lo, hi);
  if (full < dim) accumulate_tail(a + full, b + full, TailMasks(dim - full), lo, hi);
  return fold(lo, hi);
}

void squared_l2_rows_impl(const float* q, const float* rows, std::size_t n, std::size_t dim,
                          float* out) {
  const std::size_t full = dim / 16 * 16;
  const TailMasks masks(dim - full);
  std::size_t r = 0;
  for (; r + 4 <= n; r += 4) {
    const float* rr[4] = {rows + r * dim, rows + (r + 1) * dim, rows + (r + 2) * dim,
                          rows + (r + 3) * dim};
    __m256 lo[4], hi[4];
    for (int k = 0; k < 4; ++k) lo[k] = hi[k] = _mm256_setzero_ps();
    for (std::size_t d = 0; d < full; d += 16) {
      for (int k = 0; k < 4; ++k) accumulate(q + d, rr[k] + d, lo[k], hi[k]);
    }
    if (full < dim) {
      for (int k = 0; k < 4; ++k) accumulate_tail(q + full, rr[k] + full, masks, lo[k], hi[k]);
    }
    for (int k = 0; k < 4; ++k) out[r + k] = fold(lo[k], hi[k]);
  }
  for (; r < n; ++r) out[r] = squared_l2_impl(q, rows + r * dim, dim);
}

void squared_l2_block_impl(const float* q, std::size_t nq, const float* rows, std::size_t nr,
                           std::size_t dim, float* out) {
  for (std::size_t p = 0; p < nq; ++p) squared_l2_rows_impl(q + p * dim, rows, nr, dim, out + p * nr);
}

constexpr std::string_view kIsa = "avx2";

#else

float squared_l2_impl(const float* a, const float* b, std::size_t dim) {
  std::array<float, 16> lane{};
  for (std::size_t d = 0; d < dim; ++d) {
    const float diff = a[d] - b[d];
    lane[d % 16] = std::fma(diff, diff, lane[d % 16]);
  }
  for (std::size_t w = 8; w >= 1; w /= 2) {
    for (std::size_t i = 0; i < w; ++i) lane[i] += lane[i + w];
  }
  return lane[0];
}

void squared_l2_rows_impl(const float* q, const float* rows, std::size_t n, std::size_t dim,
                          float* out) {
  for (std::size_t r = 0; r < n; ++r) out[r] = squared_l2_impl(q, rows + r * dim, dim);
}

void squared_l2_block_impl(const float* q, std::size_t nq, const float* rows, std::size_t nr,
                           std::size_t dim, float* out) {
  for (std::size_t p = 0; p < nq; ++p) squared_l2_rows_impl(q + p * dim, rows, nr, dim, out + p * nr);
}

constexpr std::string_view kIsa = "scalar";

#endif

}  // namespace

float squared_l2(std::span<const float> a, std::span<const float> b) noexcept {
  return squared_l2_impl(a.data(), b.data(), a.size());
}

void squared_l2_rows(std::span<const float> query, MatrixView rows, std::span<float> out) noexcept {
  squared_l2_rows_impl(query.data(), rows.data.data(), rows.rows, rows.dim, out.data());
}

void squared_l2_block(MatrixView queries, MatrixView rows, std::span<float> out) noexcept {
  squared_l2_block_impl(queries.data.data(), queries.rows, rows.data.data(), rows.rows, rows.dim,
                        out.data());
}

double distance(std::span<const float> a, std::span<const float> b, DistanceMode mode) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::validation, "distance between vectors of size " +
                                           std::to_string(a.size()) + " and " +
                                           std::to_string(b.size()));
  }
  const double sq = squared_l2(a, b);
  return mode == DistanceMode::l2 ? std::sqrt(sq) : sq;
}

std::string_view kernel_isa() noexcept { return kIsa; }

}  // namespace idrank
