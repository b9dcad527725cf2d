#include "idrank/synthetic_gen.hpp"

#include <cmath>
#include <cstdio>

#include "idrank/error.hpp"
#include "idrank/random.hpp"

namespace idrank {

namespace {
enum Stream : std::uint64_t { kCentroids = 0, kProbeNoise = 1, kDistractors = 2 };

std::string format_id(const char* fmt, unsigned long long a, unsigned long long b = 0) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}
}  // namespace

void validate(const SyntheticSpec& spec) {
  if (spec.dim == 0) throw Error(ErrorKind::validation, "synthetic dim must be positive");
  if (spec.n_identities == 0) throw Error(ErrorKind::validation, "n_identities must be positive");
  if (spec.images_per_identity == 0) {
    throw Error(ErrorKind::validation, "images_per_identity must be positive");
  }
  if (!(spec.intra_class_sigma >= 0.0) || !std::isfinite(spec.intra_class_sigma)) {
    throw Error(ErrorKind::validation, "intra_class_sigma must be finite and >= 0");
  }
}

nlohmann::ordered_json to_json(const SyntheticSpec& spec) {
  nlohmann::ordered_json j;
  j["dim"] = spec.dim;
  j["n_identities"] = spec.n_identities;
  j["images_per_identity"] = spec.images_per_identity;
  j["n_distractors"] = spec.n_distractors;
  j["intra_class_sigma"] = spec.intra_class_sigma;
  j["seed"] = spec.seed;
  j["normalize"] = spec.normalize;
  j["pure_noise"] = spec.pure_noise;
  return j;
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec spec;
  try {
    spec.dim = j.at("dim").get<std::uint32_t>();
    spec.n_identities = j.at("n_identities").get<std::uint32_t>();
    spec.images_per_identity = j.at("images_per_identity").get<std::uint32_t>();
    spec.n_distractors = j.at("n_distractors").get<std::uint64_t>();
    spec.intra_class_sigma = j.at("intra_class_sigma").get<double>();
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.normalize = j.value("normalize", false);
    spec.pure_noise = j.value("pure_noise", false);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("malformed synthetic spec: ") + e.what());
  }
  validate(spec);
  return spec;
}

std::string synthetic_identity_id(std::uint32_t identity) { return format_id("syn_id_%06llu", identity); }

Gender synthetic_gender(std::uint32_t identity) noexcept {
  return identity % 2 == 0 ? Gender::male : Gender::female;
}

SyntheticData generate(const SyntheticSpec& spec) {
  validate(spec);
  const std::size_t dim = spec.dim;

  Rng centroid_rng(mix_seed(spec.seed, kCentroids));
  Rng noise_rng(mix_seed(spec.seed, kProbeNoise));
  const std::size_t n_probe = std::size_t{spec.n_identities} * spec.images_per_identity;
  std::vector<float> probe_vectors;
  probe_vectors.reserve(n_probe * dim);
  std::vector<std::string> probe_images, probe_identities;
  probe_images.reserve(n_probe);
  probe_identities.reserve(n_probe);
  std::vector<double> centroid(dim);
  for (std::uint32_t id = 0; id < spec.n_identities; ++id) {
    for (auto& c : centroid) c = centroid_rng.normal();
    const std::string identity = synthetic_identity_id(id);
    for (std::uint32_t img = 0; img < spec.images_per_identity; ++img) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double v = spec.pure_noise ? noise_rng.normal()
                                         : centroid[d] + spec.intra_class_sigma * noise_rng.normal();
        probe_vectors.push_back(static_cast<float>(v));
      }
      probe_images.push_back(format_id("syn_id_%06llu_img_%04llu", id, img));
      probe_identities.push_back(identity);
    }
  }

  Rng distractor_rng(mix_seed(spec.seed, kDistractors));
  std::vector<float> gallery_vectors;
  gallery_vectors.reserve(spec.n_distractors * dim);
  std::vector<std::string> gallery_images, gallery_identities;
  gallery_images.reserve(spec.n_distractors);
  gallery_identities.reserve(spec.n_distractors);
  for (std::uint64_t i = 0; i < spec.n_distractors; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      gallery_vectors.push_back(static_cast<float>(distractor_rng.normal()));
    }
    gallery_images.push_back(format_id("syn_gallery_%09llu", i));
    gallery_identities.push_back(format_id("syn_distractor_%09llu", i));
  }

  SyntheticData data{
      EmbeddingSet(spec.dim, std::move(probe_vectors), std::move(probe_images),
                   std::move(probe_identities)),
      EmbeddingSet(spec.dim, std::move(gallery_vectors), std::move(gallery_images),
                   std::move(gallery_identities))};
  if (spec.normalize) {
    data.probes = normalize_rows(data.probes);
    data.gallery = normalize_rows(data.gallery);
  }
  return data;
}

ProbeManifest synthetic_manifest(const SyntheticSpec& spec, const EmbeddingSet& probes,
                                 DomainLabel domain) {
  if (spec.n_identities % 2 != 0) {
    throw Error(ErrorKind::validation, "synthetic manifest needs an even n_identities");
  }
  ProbeManifest m;
  m.domain_label = domain;
  m.seed = spec.seed;
  m.images_per_identity = spec.images_per_identity;
  m.identities_per_gender = spec.n_identities / 2;
  m.entries.reserve(spec.n_identities);
  for (std::uint32_t id = 0; id < spec.n_identities; ++id) {
    ProbeEntry e{synthetic_identity_id(id), synthetic_gender(id), {}};
    const std::size_t first = std::size_t{id} * spec.images_per_identity;
    for (std::uint32_t img = 0; img < spec.images_per_identity; ++img) {
      e.image_ids.push_back(probes.image_ids().at(first + img));
    }
    m.entries.push_back(std::move(e));
  }
  m.provenance["synthetic_spec"] = to_json(spec);
  m.provenance["probe_fingerprint"] = fingerprint(probes);
  validate_manifest(m);
  return m;
}

}  // namespace idrank
