#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "idrank/distance.hpp"
#include "idrank/embedding_store.hpp"
#include "idrank/probe_builder.hpp"
#include "json.hpp"

namespace idrank {

/// Hit tallies for each rank threshold k plus the attempt count.
struct RankCounters {
  std::map<std::size_t, std::uint64_t> hits;
  std::uint64_t attempts = 0;

  RankCounters() = default;
  explicit RankCounters(std::span<const std::size_t> thresholds);

  RankCounters& operator+=(const RankCounters& other);
  friend bool operator==(const RankCounters&, const RankCounters&) = default;
};

struct EvalConfig {
  std::vector<std::size_t> thresholds{1, 10, 100};
  DistanceMode mode = DistanceMode::squared_l2;
};

/// Throws Error(validation) unless thresholds are positive and strictly
/// increasing.
void validate_thresholds(std::span<const std::size_t> thresholds);

struct ConfigEcho {
  DistanceMode mode = DistanceMode::squared_l2;
  std::vector<std::size_t> thresholds;
  std::string gallery_fingerprint;
  std::string probe_fingerprint;
  std::uint64_t manifest_seed = 0;
  DomainLabel domain_label = DomainLabel::in_domain;

  friend bool operator==(const ConfigEcho&, const ConfigEcho&) = default;
};

struct IdentityResult {
  Gender gender = Gender::unknown;
  RankCounters counters;

  friend bool operator==(const IdentityResult&, const IdentityResult&) = default;
};

struct EvalResult {
  RankCounters counters;
  std::map<std::string, IdentityResult> per_identity;
  ConfigEcho config;

  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

/// 1 + number of gallery distances <= needle_dist: a distractor tied with
/// the needle is ranked ahead of it.
template <typename T>
std::size_t rank_of_needle(T needle_dist, std::span<const T> gallery_dists) noexcept {
  std::size_t rank = 1;
  for (T d : gallery_dists) rank += (d <= needle_dist) ? 1 : 0;
  return rank;
}

/// Direct transcription of the needle-insertion loop: for each needle and
/// each other image as probe, materialize the distances to every gallery row
/// plus the needle, sort them and locate the needle. Slow; used as oracle.
RankCounters evaluate_identity_naive(MatrixView identity_images, MatrixView gallery,
                                     const EvalConfig& config);

/// Same counters as evaluate_identity_naive. Gallery distances are computed
/// once per probe image (in cache-sized gallery tiles) and every needle's
/// rank is read off by counting gallery distances at or below the needle
/// distance.
RankCounters evaluate_identity_fast(MatrixView identity_images, MatrixView gallery,
                                    const EvalConfig& config);

/// Rank of the needle for every (needle, probe) pair of one identity, in
/// needle-major order, skipping needle == probe. Each rank is in
/// [1, gallery.rows + 1].
std::vector<std::size_t> needle_ranks(MatrixView identity_images, MatrixView gallery);

/// Gallery rows per tile used by evaluate_identity_fast at this dimension.
std::size_t gallery_tile_rows(std::size_t dim) noexcept;

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Evaluates every manifest identity against the gallery on `parallelism`
/// workers. The result does not depend on the worker count.
EvalResult evaluate_probe_set(const ProbeManifest& manifest, const EmbeddingSet& probe_embeddings,
                              const EmbeddingSet& gallery, const EvalConfig& config,
                              std::size_t parallelism = 1, const ProgressFn& progress = {});

/// hits[k] / attempts per threshold. Throws when attempts == 0.
std::map<std::size_t, double> accuracies(const RankCounters& counters);

nlohmann::ordered_json to_json(const RankCounters& counters);
RankCounters rank_counters_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const EvalResult& result);
EvalResult eval_result_from_json(const nlohmann::json& j);
std::string dump_eval_result(const EvalResult& result);

}  // namespace idrank
