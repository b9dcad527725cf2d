#include <gtest/gtest.h>

#include <array>
#include <bit>
#include <cmath>
#include <random>

#include "idrank/distance.hpp"
#include "idrank/error.hpp"
#include "test_support.hpp"

namespace idrank {
namespace {

// Scalar restatement of the documented summation order, kept apart from
// the library kernels.
float reference_squared_l2(std::span<const float> a, std::span<const float> b) {
  std::array<float, 16> lane{};
  for (std::size_t d = 0; d < a.size(); ++d) {
    const float diff = a[d] - b[d];
    lane[d % 16] = std::fma(diff, diff, lane[d % 16]);
  }
  for (std::size_t w : {8, 4, 2, 1}) {
    for (std::size_t i = 0; i < w; ++i) lane[i] += lane[i + w];
  }
  return lane[0];
}

TEST(Distance, ThreeFourFive) {
  const float a[] = {0, 0}, b[] = {3, 4};
  EXPECT_EQ(distance(a, b, DistanceMode::l2), 5.0);
  EXPECT_EQ(distance(a, b, DistanceMode::squared_l2), 25.0);
  EXPECT_EQ(distance(a, b), 25.0);
  EXPECT_EQ(distance(a, a, DistanceMode::l2), 0.0);
}

TEST(Distance, SizeMismatchThrows) {
  const float a[] = {0, 0}, b[] = {3, 4, 5};
  EXPECT_THROW(distance(a, b), Error);
}

TEST(Distance, KernelMatchesReferenceOrderBitForBit) {
  std::mt19937_64 rng(17);
  for (std::size_t dim : {1, 2, 7, 15, 16, 17, 31, 33, 64, 100, 512, 515}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto a = testing::random_matrix(rng, 1, dim);
      const auto b = testing::random_matrix(rng, 1, dim);
      EXPECT_EQ(std::bit_cast<std::uint32_t>(squared_l2(a, b)),
                std::bit_cast<std::uint32_t>(reference_squared_l2(a, b)))
          << "dim " << dim << " (" << kernel_isa() << ")";
    }
  }
}

TEST(Distance, BatchedRowsMatchSinglePairs) {
  std::mt19937_64 rng(18);
  for (std::size_t dim : {3, 16, 29, 512}) {
    for (std::size_t rows : {0, 1, 3, 4, 5, 9}) {
      const auto q = testing::random_matrix(rng, 1, dim);
      const auto m = testing::random_matrix(rng, rows, dim);
      const MatrixView view{m, rows, dim};
      std::vector<float> out(rows);
      squared_l2_rows(q, view, out);
      for (std::size_t r = 0; r < rows; ++r) {
        EXPECT_EQ(std::bit_cast<std::uint32_t>(out[r]),
                  std::bit_cast<std::uint32_t>(squared_l2(q, view.row(r))));
      }
    }
  }
}

TEST(Distance, BlockMatchesReferenceBitForBit) {
  std::mt19937_64 rng(21);
  for (std::size_t dim : {1, 5, 16, 23, 64, 512, 515}) {
    for (std::size_t nq : {0, 1, 4, 6, 9}) {
      for (std::size_t nr : {0, 3, 4, 7, 13}) {
        const auto q = testing::random_matrix(rng, nq, dim);
        const auto m = testing::random_matrix(rng, nr, dim);
        const MatrixView qv{q, nq, dim}, rv{m, nr, dim};
        std::vector<float> out(nq * nr, -1.0f);
        squared_l2_block(qv, rv, out);
        for (std::size_t i = 0; i < nq; ++i) {
          for (std::size_t r = 0; r < nr; ++r) {
            ASSERT_EQ(std::bit_cast<std::uint32_t>(out[i * nr + r]),
                      std::bit_cast<std::uint32_t>(reference_squared_l2(qv.row(i), rv.row(r))))
                << "dim " << dim << " query " << i << " row " << r;
          }
        }
      }
    }
  }
}

TEST(Distance, SymmetricAndNonNegative) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = testing::random_matrix(rng, 1, 37);
    const auto b = testing::random_matrix(rng, 1, 37);
    EXPECT_EQ(squared_l2(a, b), squared_l2(b, a));
    EXPECT_GE(squared_l2(a, b), 0.0f);
    EXPECT_EQ(squared_l2(a, a), 0.0f);
  }
}

TEST(Distance, L2IsStrictlyMonotoneOverFloatSquares) {
  // Adjacent floats stay distinct after the double square root, so the l2
  // mode introduces no ties the squared mode lacks.
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<float> u(1e-6f, 1e6f);
  for (int i = 0; i < 100000; ++i) {
    const float x = u(rng);
    const float y = std::nextafter(x, 2e6f);
    ASSERT_LT(std::sqrt(double{x}), std::sqrt(double{y}));
  }
}

TEST(Distance, ModeNamesRoundTrip) {
  EXPECT_EQ(parse_distance_mode(to_string(DistanceMode::l2)), DistanceMode::l2);
  EXPECT_EQ(parse_distance_mode("squared_l2"), DistanceMode::squared_l2);
  EXPECT_THROW(parse_distance_mode("cosine"), Error);
}

}  // namespace
}  // namespace idrank
