#include "idrank/eval_engine.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "idrank/error.hpp"

namespace idrank {

RankCounters::RankCounters(std::span<const std::size_t> thresholds) {
  for (std::size_t k : thresholds) hits[k] = 0;
}

RankCounters& RankCounters::operator+=(const RankCounters& other) {
  for (const auto& [k, n] : other.hits) hits[k] += n;
  attempts += other.attempts;
  return *this;
}

void validate_thresholds(std::span<const std::size_t> thresholds) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (thresholds[i] == 0) throw Error(ErrorKind::validation, "rank thresholds must be positive");
    if (i > 0 && thresholds[i] <= thresholds[i - 1]) {
      throw Error(ErrorKind::validation, "rank thresholds must be strictly increasing");
    }
  }
}

namespace {

void check_inputs(MatrixView identity_images, MatrixView gallery, const EvalConfig& config) {
  validate_thresholds(config.thresholds);
  if (identity_images.rows < 2) {
    throw Error(ErrorKind::validation, "an identity needs at least 2 images");
  }
  if (gallery.rows > 0 && gallery.dim != identity_images.dim) {
    throw Error(ErrorKind::validation, "dimension mismatch: identity images have dim " +
                                           std::to_string(identity_images.dim) + ", gallery " +
                                           std::to_string(gallery.dim));
  }
}

void tally(std::size_t rank, RankCounters& counters) {
  for (auto& [k, n] : counters.hits) n += rank <= k ? 1 : 0;
  ++counters.attempts;
}

/// Number of keys strictly below d; keys are sorted and non-empty.
std::size_t count_below(const float* keys, std::size_t n, float d) {
  const float* base = keys;
  while (n > 1) {
    const std::size_t half = n / 2;
    base = base[half] < d ? base + half : base;
    n -= half;
  }
  return static_cast<std::size_t>(base - keys) + (*base < d ? 1 : 0);
}

}  // namespace

// Sized so one tile stays resident in L1.
std::size_t gallery_tile_rows(std::size_t dim) noexcept {
  constexpr std::size_t kTileBytes = 16 * 1024;
  return std::clamp<std::size_t>(kTileBytes / (std::max<std::size_t>(dim, 1) * sizeof(float)), 8,
                                 4096);
}

RankCounters evaluate_identity_naive(MatrixView identity_images, MatrixView gallery,
                                     const EvalConfig& config) {
  check_inputs(identity_images, gallery, config);
  RankCounters counters(config.thresholds);
  struct Ranked {
    double dist;
    bool is_needle;
  };
  std::vector<Ranked> ranked;
  for (std::size_t needle = 0; needle < identity_images.rows; ++needle) {
    for (std::size_t probe = 0; probe < identity_images.rows; ++probe) {
      if (probe == needle) continue;
      const auto q = identity_images.row(probe);
      ranked.clear();
      for (std::size_t g = 0; g < gallery.rows; ++g) {
        ranked.push_back({distance(q, gallery.row(g), config.mode), false});
      }
      ranked.push_back({distance(q, identity_images.row(needle), config.mode), true});
      // Distractors sort ahead of an equally distant needle.
      std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        return a.dist != b.dist ? a.dist < b.dist : a.is_needle < b.is_needle;
      });
      const auto it = std::find_if(ranked.begin(), ranked.end(),
                                   [](const Ranked& r) { return r.is_needle; });
      tally(static_cast<std::size_t>(it - ranked.begin()) + 1, counters);
    }
  }
  return counters;
}

std::vector<std::size_t> needle_ranks(MatrixView identity_images, MatrixView gallery) {
  const std::size_t n_img = identity_images.rows;
  if (gallery.rows > 0 && gallery.dim != identity_images.dim) {
    throw Error(ErrorKind::validation, "dimension mismatch between identity images and gallery");
  }

  // For probe p: needle distances sorted ascending (self excluded), with the
  // needle index each one belongs to.
  struct NeedleDist {
    float dist;
    std::size_t needle;
  };
  std::vector<std::vector<NeedleDist>> sorted(n_img);
  for (std::size_t p = 0; p < n_img; ++p) {
    auto& s = sorted[p];
    s.reserve(n_img - 1);
    for (std::size_t n = 0; n < n_img; ++n) {
      if (n != p) s.push_back({squared_l2(identity_images.row(p), identity_images.row(n)), n});
    }
    std::sort(s.begin(), s.end(), [](const NeedleDist& a, const NeedleDist& b) {
      return a.dist != b.dist ? a.dist < b.dist : a.needle < b.needle;
    });
  }

  // bucket[p][j]: gallery rows whose distance d to probe p satisfies
  // sorted[p][j-1].dist < d <= sorted[p][j].dist. Rows beyond every needle
  // are dropped.
  const std::size_t n_keys = n_img - 1;
  std::vector<float> keys(n_img * n_keys);
  for (std::size_t p = 0; p < n_img; ++p) {
    for (std::size_t j = 0; j < n_keys; ++j) keys[p * n_keys + j] = sorted[p][j].dist;
  }
  std::vector<std::vector<std::uint64_t>> bucket(n_img, std::vector<std::uint64_t>(n_img, 0));
  const std::size_t tile = gallery_tile_rows(identity_images.dim);
  std::vector<float> dists(tile * n_img);
  for (std::size_t start = 0; n_keys > 0 && start < gallery.rows; start += tile) {
    const std::size_t len = std::min(tile, gallery.rows - start);
    const MatrixView block{gallery.data.subspan(start * gallery.dim, len * gallery.dim), len,
                           gallery.dim};
    squared_l2_block(identity_images, block, std::span<float>(dists).first(len * n_img));
    for (std::size_t p = 0; p < n_img; ++p) {
      const float* row_dists = dists.data() + p * len;
      const float* k = keys.data() + p * n_keys;
      const float farthest = k[n_keys - 1];
      auto& b = bucket[p];
      for (std::size_t r = 0; r < len; ++r) {
        const float d = row_dists[r];
        if (d > farthest) continue;
        ++b[count_below(k, n_keys, d)];
      }
    }
  }

  std::vector<std::size_t> rank_by_pair(n_img * n_img, 0);
  for (std::size_t p = 0; p < n_img; ++p) {
    std::uint64_t closer = 0;
    for (std::size_t j = 0; j < sorted[p].size(); ++j) {
      closer += bucket[p][j];
      rank_by_pair[sorted[p][j].needle * n_img + p] = static_cast<std::size_t>(closer) + 1;
    }
  }
  std::vector<std::size_t> ranks;
  ranks.reserve(n_img * (n_img - 1));
  for (std::size_t n = 0; n < n_img; ++n) {
    for (std::size_t p = 0; p < n_img; ++p) {
      if (p != n) ranks.push_back(rank_by_pair[n * n_img + p]);
    }
  }
  return ranks;
}

RankCounters evaluate_identity_fast(MatrixView identity_images, MatrixView gallery,
                                    const EvalConfig& config) {
  check_inputs(identity_images, gallery, config);
  RankCounters counters(config.thresholds);
  for (std::size_t rank : needle_ranks(identity_images, gallery)) tally(rank, counters);
  return counters;
}

EvalResult evaluate_probe_set(const ProbeManifest& manifest, const EmbeddingSet& probe_embeddings,
                              const EmbeddingSet& gallery, const EvalConfig& config,
                              std::size_t parallelism, const ProgressFn& progress) {
  validate_thresholds(config.thresholds);
  validate_manifest(manifest);
  if (!gallery.empty() && gallery.dim() != probe_embeddings.dim()) {
    throw Error(ErrorKind::validation, "dimension mismatch: probe embeddings have dim " +
                                           std::to_string(probe_embeddings.dim()) +
                                           ", gallery " + std::to_string(gallery.dim()));
  }

  std::unordered_map<std::string_view, std::size_t> probe_row;
  probe_row.reserve(probe_embeddings.count());
  for (std::size_t i = 0; i < probe_embeddings.count(); ++i) {
    probe_row.emplace(probe_embeddings.image_ids()[i], i);
  }
  std::unordered_set<std::string_view> gallery_ids(gallery.image_ids().begin(),
                                                   gallery.image_ids().end());
  std::vector<std::vector<std::size_t>> rows(manifest.entries.size());
  for (std::size_t e = 0; e < manifest.entries.size(); ++e) {
    for (const auto& img : manifest.entries[e].image_ids) {
      const auto it = probe_row.find(img);
      if (it == probe_row.end()) {
        throw Error(ErrorKind::validation, "manifest image '" + img + "' of identity '" +
                                               manifest.entries[e].identity_id +
                                               "' not found in probe embeddings");
      }
      if (gallery_ids.contains(img)) {
        throw Error(ErrorKind::validation, "manifest image '" + img + "' also present in gallery");
      }
      rows[e].push_back(it->second);
    }
  }

  const std::size_t total = manifest.entries.size();
  std::vector<RankCounters> per_entry(total);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr failure;
  std::mutex mutex;
  std::size_t done = 0;
  const std::size_t dim = probe_embeddings.dim();

  auto worker = [&] {
    std::vector<float> images;
    for (;;) {
      const std::size_t e = next.fetch_add(1);
      if (e >= total || failed.load()) return;
      try {
        images.clear();
        for (std::size_t r : rows[e]) {
          const auto v = probe_embeddings.row(r);
          images.insert(images.end(), v.begin(), v.end());
        }
        per_entry[e] = evaluate_identity_fast({images, rows[e].size(), dim}, gallery.view(), config);
        if (progress) {
          std::lock_guard lock(mutex);
          progress(++done, total);
        }
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(parallelism, 1, std::max<std::size_t>(total, 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);

  EvalResult result;
  result.counters = RankCounters(config.thresholds);
  for (std::size_t e = 0; e < total; ++e) {
    result.counters += per_entry[e];
    result.per_identity[manifest.entries[e].identity_id] = {manifest.entries[e].gender,
                                                            std::move(per_entry[e])};
  }
  result.config = {config.mode,
                   config.thresholds,
                   fingerprint(gallery),
                   fingerprint(probe_embeddings),
                   manifest.seed,
                   manifest.domain_label};
  return result;
}

std::map<std::size_t, double> accuracies(const RankCounters& counters) {
  if (counters.attempts == 0) throw Error(ErrorKind::validation, "no identification attempts");
  std::map<std::size_t, double> acc;
  for (const auto& [k, n] : counters.hits) {
    acc[k] = static_cast<double>(n) / static_cast<double>(counters.attempts);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::ordered_json to_json(const RankCounters& counters) {
  nlohmann::ordered_json j;
  j["attempts"] = counters.attempts;
  auto& hits = j["hits"] = nlohmann::ordered_json::object();
  for (const auto& [k, n] : counters.hits) hits[std::to_string(k)] = n;
  return j;
}

RankCounters rank_counters_from_json(const nlohmann::json& j) {
  RankCounters c;
  c.attempts = j.at("attempts").get<std::uint64_t>();
  for (const auto& [key, value] : j.at("hits").items()) {
    std::size_t used = 0;
    const std::size_t k = std::stoull(key, &used);
    if (used != key.size()) throw Error(ErrorKind::format, "bad threshold key '" + key + "'");
    c.hits[k] = value.get<std::uint64_t>();
  }
  return c;
}

nlohmann::ordered_json to_json(const EvalResult& result) {
  nlohmann::ordered_json j;
  auto& cfg = j["config"];
  cfg["distance_mode"] = to_string(result.config.mode);
  cfg["ranking"] = "L2";
  cfg["tie_rule"] = "pessimistic";
  cfg["thresholds"] = result.config.thresholds;
  cfg["gallery_fingerprint"] = result.config.gallery_fingerprint;
  cfg["probe_fingerprint"] = result.config.probe_fingerprint;
  cfg["manifest_seed"] = result.config.manifest_seed;
  cfg["domain_label"] = to_string(result.config.domain_label);
  j["counters"] = to_json(result.counters);
  if (result.counters.attempts > 0) {
    auto& acc = j["accuracies"] = nlohmann::ordered_json::object();
    for (const auto& [k, a] : accuracies(result.counters)) acc[std::to_string(k)] = a;
  }
  auto& ids = j["per_identity"] = nlohmann::ordered_json::array();
  for (const auto& [id, r] : result.per_identity) {
    nlohmann::ordered_json e;
    e["identity_id"] = id;
    e["gender"] = to_string(r.gender);
    const auto c = to_json(r.counters);
    e["attempts"] = c["attempts"];
    e["hits"] = c["hits"];
    ids.push_back(std::move(e));
  }
  return j;
}

EvalResult eval_result_from_json(const nlohmann::json& j) {
  try {
    EvalResult r;
    const auto& cfg = j.at("config");
    r.config.mode = parse_distance_mode(cfg.at("distance_mode").get<std::string>());
    r.config.thresholds = cfg.at("thresholds").get<std::vector<std::size_t>>();
    validate_thresholds(r.config.thresholds);
    r.config.gallery_fingerprint = cfg.at("gallery_fingerprint").get<std::string>();
    r.config.probe_fingerprint = cfg.at("probe_fingerprint").get<std::string>();
    r.config.manifest_seed = cfg.at("manifest_seed").get<std::uint64_t>();
    r.config.domain_label = parse_domain_label(cfg.at("domain_label").get<std::string>());
    r.counters = rank_counters_from_json(j.at("counters"));
    RankCounters sum(r.config.thresholds);
    for (const auto& e : j.at("per_identity")) {
      IdentityResult ir{parse_gender(e.at("gender").get<std::string>()), rank_counters_from_json(e)};
      sum += ir.counters;
      r.per_identity.emplace(e.at("identity_id").get<std::string>(), std::move(ir));
    }
    if (!(sum == r.counters)) {
      throw Error(ErrorKind::validation, "global counters differ from the sum of per-identity counters");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("malformed evaluation result JSON: ") + e.what());
  } catch (const std::logic_error& e) {
    throw Error(ErrorKind::format, std::string("malformed evaluation result JSON: ") + e.what());
  }
}

std::string dump_eval_result(const EvalResult& result) { return to_json(result).dump(2) + "\n"; }

}  // namespace idrank
