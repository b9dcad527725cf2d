#include "idrank/probe_builder.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "idrank/error.hpp"
#include "idrank/random.hpp"

namespace idrank {

std::string_view to_string(DomainLabel d) noexcept {
  return d == DomainLabel::in_domain ? "in_domain" : "out_of_domain";
}

DomainLabel parse_domain_label(std::string_view text) {
  if (text == "in_domain" || text == "in") return DomainLabel::in_domain;
  if (text == "out_of_domain" || text == "out") return DomainLabel::out_of_domain;
  throw Error(ErrorKind::validation, "unrecognized domain label '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Manifest

void validate_manifest(const ProbeManifest& manifest) {
  if (manifest.images_per_identity == 0 || manifest.identities_per_gender == 0) {
    throw Error(ErrorKind::validation, "manifest sample sizes must be positive");
  }
  std::unordered_set<std::string> identities;
  std::unordered_set<std::string> images;
  std::size_t males = 0, females = 0;
  for (const auto& e : manifest.entries) {
    if (e.identity_id.empty()) throw Error(ErrorKind::validation, "manifest entry with empty identity_id");
    if (!identities.insert(e.identity_id).second) {
      throw Error(ErrorKind::validation, "identity '" + e.identity_id + "' appears twice in manifest");
    }
    if (e.gender == Gender::male) ++males;
    else if (e.gender == Gender::female) ++females;
    else throw Error(ErrorKind::validation, "identity '" + e.identity_id + "' has no gender stratum");
    if (e.image_ids.size() != manifest.images_per_identity) {
      throw Error(ErrorKind::validation,
                  "identity '" + e.identity_id + "' lists " + std::to_string(e.image_ids.size()) +
                      " images, expected " + std::to_string(manifest.images_per_identity));
    }
    for (const auto& img : e.image_ids) {
      if (!images.insert(img).second) {
        throw Error(ErrorKind::validation, "image '" + img + "' listed twice in manifest");
      }
    }
  }
  for (auto [g, n] : {std::pair{Gender::male, males}, std::pair{Gender::female, females}}) {
    if (n != manifest.identities_per_gender) {
      throw Error(ErrorKind::validation,
                  "manifest has " + std::to_string(n) + " " + std::string(to_string(g)) +
                      " identities, expected " + std::to_string(manifest.identities_per_gender));
    }
  }
}

nlohmann::ordered_json to_json(const ProbeManifest& manifest) {
  nlohmann::ordered_json j;
  j["domain_label"] = to_string(manifest.domain_label);
  j["seed"] = manifest.seed;
  j["images_per_identity"] = manifest.images_per_identity;
  j["identities_per_gender"] = manifest.identities_per_gender;
  auto& entries = j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json je;
    je["identity_id"] = e.identity_id;
    je["gender"] = to_string(e.gender);
    je["image_ids"] = e.image_ids;
    entries.push_back(std::move(je));
  }
  if (!manifest.provenance.empty()) j["provenance"] = manifest.provenance;
  return j;
}

ProbeManifest manifest_from_json(const nlohmann::json& j) {
  try {
    ProbeManifest m;
    m.domain_label = parse_domain_label(j.at("domain_label").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.images_per_identity = j.at("images_per_identity").get<std::uint32_t>();
    m.identities_per_gender = j.at("identities_per_gender").get<std::uint32_t>();
    for (const auto& je : j.at("entries")) {
      ProbeEntry e;
      e.identity_id = je.at("identity_id").get<std::string>();
      e.gender = parse_gender(je.at("gender").get<std::string>());
      e.image_ids = je.at("image_ids").get<std::vector<std::string>>();
      m.entries.push_back(std::move(e));
    }
    if (j.contains("provenance")) m.provenance = j.at("provenance");
    validate_manifest(m);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("malformed manifest JSON: ") + e.what());
  }
}

std::string dump_manifest(const ProbeManifest& manifest) { return to_json(manifest).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Name matching

std::string canonicalize_name(std::string_view raw) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfd = icu::Normalizer2::getNFDInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorKind::io, "ICU NFD normalizer unavailable");
  const icu::UnicodeString decomposed = nfd->normalize(
      icu::UnicodeString::fromUTF8(icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size()))),
      status);
  if (U_FAILURE(status)) throw Error(ErrorKind::validation, "cannot normalize name");

  icu::UnicodeString out;
  bool pending_sep = false;
  for (int32_t i = 0; i < decomposed.length();) {
    const UChar32 c = decomposed.char32At(i);
    i += U16_LENGTH(c);
    const auto mask = U_GET_GC_MASK(c);
    if (mask & U_GC_M_MASK) continue;
    if (mask & (U_GC_L_MASK | U_GC_N_MASK)) {
      if (pending_sep && !out.isEmpty()) out.append(UChar32('_'));
      pending_sep = false;
      out.append(u_tolower(c));
    } else {
      pending_sep = true;
    }
  }
  std::string result;
  out.toUTF8String(result);
  return result;
}

namespace {
const std::string& match_key_source(const IdentityRecord& r) {
  return r.display_name.empty() ? r.identity_id : r.display_name;
}
}  // namespace

MatchResult match_identities(std::span<const IdentityRecord> source,
                             std::span<const IdentityRecord> reference) {
  std::unordered_map<std::string, std::vector<std::string>> by_name;
  for (const auto& r : reference) {
    auto& ids = by_name[canonicalize_name(match_key_source(r))];
    if (std::find(ids.begin(), ids.end(), r.identity_id) == ids.end()) ids.push_back(r.identity_id);
  }
  MatchResult result;
  for (const auto& s : source) {
    std::string name = canonicalize_name(match_key_source(s));
    const auto it = name.empty() ? by_name.end() : by_name.find(name);
    if (it == by_name.end()) {
      result.unmatched.push_back(s.identity_id);
    } else if (it->second.size() == 1) {
      result.matched.push_back({s.identity_id, it->second.front(), std::move(name)});
    } else {
      result.ambiguous.push_back({s.identity_id, std::move(name), it->second});
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sampling

ProbeBuild build_probe_manifest(std::span<const IdentityRecord> candidates,
                                const EmbeddingSet& embeddings, const ProbeSampling& sampling) {
  if (sampling.identities_per_gender == 0 || sampling.images_per_identity == 0) {
    throw Error(ErrorKind::validation, "sample sizes must be positive");
  }
  std::unordered_map<std::string_view, std::vector<std::size_t>> rows_by_identity;
  for (std::size_t i = 0; i < embeddings.count(); ++i) {
    rows_by_identity[embeddings.identity_ids()[i]].push_back(i);
  }

  ProbeBuild build;
  std::map<Gender, std::vector<const IdentityRecord*>> strata{{Gender::male, {}},
                                                              {Gender::female, {}}};
  std::unordered_set<std::string_view> seen;
  for (const auto& c : candidates) {
    if (!seen.insert(c.identity_id).second) {
      throw Error(ErrorKind::validation, "candidate '" + c.identity_id + "' listed twice");
    }
    if (c.gender == Gender::unknown) continue;
    const auto it = rows_by_identity.find(c.identity_id);
    const std::size_t available = it == rows_by_identity.end() ? 0 : it->second.size();
    if (available < sampling.images_per_identity) {
      build.excluded.push_back({c.identity_id, available});
      continue;
    }
    strata[c.gender].push_back(&c);
  }

  std::string shortfalls;
  for (auto& [gender, pool] : strata) {
    std::sort(pool.begin(), pool.end(),
              [](const auto* a, const auto* b) { return a->identity_id < b->identity_id; });
    if (pool.size() < sampling.identities_per_gender) {
      if (!shortfalls.empty()) shortfalls += "; ";
      shortfalls += "stratum '" + std::string(to_string(gender)) + "' short by " +
                    std::to_string(sampling.identities_per_gender - pool.size()) + " (" +
                    std::to_string(pool.size()) + " eligible, " +
                    std::to_string(sampling.identities_per_gender) + " required)";
    }
  }
  if (!shortfalls.empty()) throw Error(ErrorKind::sampling, "insufficient identities: " + shortfalls);

  Rng rng(sampling.seed);
  std::vector<const IdentityRecord*> chosen;
  for (const auto& [gender, pool] : strata) {
    for (std::size_t idx : sample_without_replacement(rng, pool.size(), sampling.identities_per_gender)) {
      chosen.push_back(pool[idx]);
    }
  }

  ProbeManifest& m = build.manifest;
  m.domain_label = sampling.domain_label;
  m.seed = sampling.seed;
  m.identities_per_gender = sampling.identities_per_gender;
  m.images_per_identity = sampling.images_per_identity;
  for (const auto* c : chosen) {
    const auto& rows = rows_by_identity.at(c->identity_id);
    ProbeEntry e{c->identity_id, c->gender, {}};
    for (std::size_t idx : sample_without_replacement(rng, rows.size(), sampling.images_per_identity)) {
      e.image_ids.push_back(embeddings.image_ids()[rows[idx]]);
    }
    m.entries.push_back(std::move(e));
  }
  return build;
}

// ---------------------------------------------------------------------------
// Identity CSV

namespace {

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  char c;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && !field_started) {
      quoted = field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
    } else if (c != '\r') {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw Error(ErrorKind::format, "unterminated quoted CSV field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

std::vector<IdentityRecord> read_identity_csv(std::istream& in) {
  const auto rows = parse_csv(in);
  const std::vector<std::string> header{"identity_id", "display_name", "gender", "image_count"};
  if (rows.empty() || rows.front() != header) {
    throw Error(ErrorKind::format, "identity CSV must start with header identity_id,display_name,gender,image_count");
  }
  std::vector<IdentityRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string where = "identity CSV line " + std::to_string(i + 1);
    if (r.size() != 4) throw Error(ErrorKind::format, where + ": expected 4 fields");
    if (r[0].empty()) throw Error(ErrorKind::validation, where + ": empty identity_id");
    IdentityRecord rec{r[0], r[1], Gender::unknown, 0};
    try {
      rec.gender = parse_gender(r[2]);
    } catch (const Error& e) {
      throw Error(ErrorKind::validation, where + ": " + e.what());
    }
    try {
      std::size_t used = 0;
      rec.image_count = r[3].empty() ? 0 : std::stoull(r[3], &used);
      if (!r[3].empty() && used != r[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::format, where + ": bad image_count '" + r[3] + "'");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<IdentityRecord> load_identity_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  try {
    return read_identity_csv(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_identity_csv(std::span<const IdentityRecord> records, std::ostream& out) {
  out << "identity_id,display_name,gender,image_count\n";
  for (const auto& r : records) {
    out << csv_quote(r.identity_id) << ',' << csv_quote(r.display_name) << ','
        << to_string(r.gender) << ',' << r.image_count << '\n';
  }
}

}  // namespace idrank
