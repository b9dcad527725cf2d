#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "idrank/embedding_store.hpp"

namespace idrank {

enum class DistanceMode { l2, squared_l2 };

std::string_view to_string(DistanceMode m) noexcept;
DistanceMode parse_distance_mode(std::string_view text);

/// Number of partial sums in the squared-L2 reduction.
inline constexpr std::size_t kDistanceLanes = 16;

/// Squared Euclidean distance in float with a fixed summation order:
/// coordinate d is accumulated by fused multiply-add into partial sum
/// d % kDistanceLanes, and the partial sums are folded pairwise
/// (lane i += lane i + w for w = 8, 4, 2, 1). Every code path (scalar,
/// AVX2, AVX-512, batched) produces the same bits. Sizes must match.
float squared_l2(std::span<const float> a, std::span<const float> b) noexcept;

/// out[r] = squared_l2(query, rows.row(r)) for every row.
void squared_l2_rows(std::span<const float> query, MatrixView rows, std::span<float> out) noexcept;

/// out[q * rows.rows + r] = squared_l2(queries.row(q), rows.row(r)).
/// Bit-identical to squared_l2; blocks queries against rows for throughput.
void squared_l2_block(MatrixView queries, MatrixView rows, std::span<float> out) noexcept;

/// Distance in the requested mode. l2 is the double square root of the
/// float squared distance, which is strictly monotone over floats, so both
/// modes rank identically. Throws Error(validation) on size mismatch.
double distance(std::span<const float> a, std::span<const float> b,
                DistanceMode mode = DistanceMode::squared_l2);

/// Name of the instruction set the kernel was compiled for.
std::string_view kernel_isa() noexcept;

}  // namespace idrank
