#pragma once

#include <cstdint>

#include "idrank/embedding_store.hpp"
#include "idrank/probe_builder.hpp"
#include "json.hpp"

namespace idrank {

/// Gaussian identity clusters for desk-scale runs without face data.
struct SyntheticSpec {
  std::uint32_t dim = 64;
  std::uint32_t n_identities = 100;
  std::uint32_t images_per_identity = 10;
  std::uint64_t n_distractors = 1000;
  double intra_class_sigma = 0.1;
  std::uint64_t seed = 0;
  bool normalize = false;
  /// Probe images ignore their centroid and are drawn i.i.d. standard
  /// normal, so the needle is exchangeable with the distractors.
  bool pure_noise = false;
};

void validate(const SyntheticSpec& spec);
nlohmann::ordered_json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

struct SyntheticData {
  EmbeddingSet probes;
  EmbeddingSet gallery;
};

/// Centroids, probe noise and distractors come from separate seed-derived
/// streams, so changing n_distractors never moves the probes and a larger
/// gallery extends a smaller one with the same seed.
SyntheticData generate(const SyntheticSpec& spec);

std::string synthetic_identity_id(std::uint32_t identity);
/// Even identity index male, odd female.
Gender synthetic_gender(std::uint32_t identity) noexcept;

/// Manifest listing every generated identity and image. Requires an even
/// n_identities so both gender strata are the same size.
ProbeManifest synthetic_manifest(const SyntheticSpec& spec, const EmbeddingSet& probes,
                                 DomainLabel domain);

}  // namespace idrank
