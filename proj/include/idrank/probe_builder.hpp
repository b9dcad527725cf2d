#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idrank/embedding_store.hpp"
#include "json.hpp"

namespace idrank {

enum class DomainLabel { in_domain, out_of_domain };

std::string_view to_string(DomainLabel d) noexcept;
DomainLabel parse_domain_label(std::string_view text);

struct ProbeEntry {
  std::string identity_id;
  Gender gender = Gender::unknown;
  std::vector<std::string> image_ids;

  friend bool operator==(const ProbeEntry&, const ProbeEntry&) = default;
};

/// Sampled evaluation plan for one probe set.
struct ProbeManifest {
  DomainLabel domain_label = DomainLabel::in_domain;
  std::uint64_t seed = 0;
  std::uint32_t images_per_identity = 50;
  std::uint32_t identities_per_gender = 500;
  std::vector<ProbeEntry> entries;
  /// Free-form provenance echoed into the JSON (inputs, fingerprints).
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

  friend bool operator==(const ProbeManifest& a, const ProbeManifest& b) {
    return a.domain_label == b.domain_label && a.seed == b.seed &&
           a.images_per_identity == b.images_per_identity &&
           a.identities_per_gender == b.identities_per_gender && a.entries == b.entries;
  }
};

/// Throws Error(validation) unless every entry has images_per_identity
/// unique image ids, each gender stratum holds identities_per_gender
/// identities, and no identity repeats.
void validate_manifest(const ProbeManifest& manifest);

nlohmann::ordered_json to_json(const ProbeManifest& manifest);
ProbeManifest manifest_from_json(const nlohmann::json& j);
std::string dump_manifest(const ProbeManifest& manifest);

/// Lowercase, NFD with combining marks dropped, runs of non-alphanumerics
/// collapsed to one '_', no leading or trailing '_'.
std::string canonicalize_name(std::string_view raw);

struct NameMatch {
  std::string source_identity_id;
  std::string reference_identity_id;
  std::string canonical_name;
};

struct AmbiguousMatch {
  std::string source_identity_id;
  std::string canonical_name;
  std::vector<std::string> reference_identity_ids;
};

/// Every source identity lands in exactly one of matched, unmatched or
/// ambiguous.
struct MatchResult {
  std::vector<NameMatch> matched;
  std::vector<std::string> unmatched;
  std::vector<AmbiguousMatch> ambiguous;
};

/// Matches by canonicalized display name (identity_id when the display name
/// is empty). A canonical name claimed by several reference identities is
/// ambiguous and never matched.
MatchResult match_identities(std::span<const IdentityRecord> source,
                             std::span<const IdentityRecord> reference);

struct ExcludedIdentity {
  std::string identity_id;
  std::size_t available_images = 0;
};

struct ProbeBuild {
  ProbeManifest manifest;
  /// Candidates dropped before sampling for having too few images.
  std::vector<ExcludedIdentity> excluded;
};

struct ProbeSampling {
  DomainLabel domain_label = DomainLabel::in_domain;
  std::uint64_t seed = 0;
  std::uint32_t identities_per_gender = 500;
  std::uint32_t images_per_identity = 50;
};

/// Stratified sampling: per gender (male, then female) draw
/// identities_per_gender identities uniformly without replacement from the
/// candidates sorted by id, then per chosen identity draw
/// images_per_identity of its rows (in embedding row order) without
/// replacement. One Rng seeded with `seed` drives every draw.
ProbeBuild build_probe_manifest(std::span<const IdentityRecord> candidates,
                                const EmbeddingSet& embeddings, const ProbeSampling& sampling);

/// CSV with header identity_id,display_name,gender,image_count. Fields may
/// be double-quoted.
std::vector<IdentityRecord> read_identity_csv(std::istream& in);
std::vector<IdentityRecord> load_identity_csv(const std::filesystem::path& path);
void write_identity_csv(std::span<const IdentityRecord> records, std::ostream& out);

}  // namespace idrank
