#include "idrank/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "CLI11.hpp"
#include "idrank/atomic_file.hpp"
#include "idrank/embedding_store.hpp"
#include "idrank/error.hpp"
#include "idrank/eval_engine.hpp"
#include "idrank/probe_builder.hpp"
#include "idrank/report.hpp"
#include "idrank/synthetic_gen.hpp"

namespace idrank::cli {

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return kIo;
    case ErrorKind::format: return kFormat;
    case ErrorKind::validation: return kValidation;
    case ErrorKind::sampling: return kSampling;
    case ErrorKind::usage: return kUsage;
  }
  return kInternal;
}

std::vector<std::size_t> parse_thresholds(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    try {
      ks.push_back(std::stoull(item, &used));
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw Error(ErrorKind::usage, "bad threshold '" + item + "' in --thresholds");
    }
  }
  if (ks.empty()) throw Error(ErrorKind::usage, "--thresholds needs at least one value");
  validate_thresholds(ks);
  return ks;
}

std::size_t default_parallelism() {
  if (const char* env = std::getenv("IDRANK_THREADS")) {
    try {
      const auto n = std::stoull(env);
      if (n > 0) return n;
    } catch (const std::logic_error&) {
    }
    throw Error(ErrorKind::usage, std::string("IDRANK_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

std::optional<std::string> source_date_timestamp() {
  const char* env = std::getenv("SOURCE_DATE_EPOCH");
  if (!env) return std::nullopt;
  std::time_t t = 0;
  try {
    t = static_cast<std::time_t>(std::stoll(env));
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::usage, "SOURCE_DATE_EPOCH must be an integer");
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

nlohmann::json load_json(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, path + ": invalid JSON: " + e.what());
  }
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") out << text;
  else write_text_atomically(path, text);
}

std::string file_crc(const std::string& path) {
  const std::string bytes = read_text_file(path);
  return format_fingerprint(crc32({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()}));
}

// --- build-probes -----------------------------------------------------------

struct BuildProbesArgs {
  std::string source, reference, embeddings, domain = "in", out, match_report;
  std::uint64_t seed = 0;
  std::uint32_t identities_per_gender = 500;
  std::uint32_t images_per_identity = 50;
};

int build_probes(const BuildProbesArgs& a, std::ostream& err) {
  const auto source = load_identity_csv(a.source);
  const auto reference = load_identity_csv(a.reference);
  const auto embeddings = load_embedding_file(a.embeddings);
  const DomainLabel domain = parse_domain_label(a.domain);

  const MatchResult match = match_identities(source, reference);
  err << "matched " << match.matched.size() << ", unmatched " << match.unmatched.size()
      << ", ambiguous " << match.ambiguous.size() << " of " << source.size()
      << " source identities\n";

  std::unordered_set<std::string> keep;
  if (domain == DomainLabel::in_domain) {
    for (const auto& m : match.matched) keep.insert(m.source_identity_id);
  } else {
    keep.insert(match.unmatched.begin(), match.unmatched.end());
  }
  std::vector<IdentityRecord> candidates;
  for (const auto& r : source) {
    if (keep.contains(r.identity_id)) candidates.push_back(r);
  }

  ProbeBuild build = build_probe_manifest(
      candidates, embeddings, {domain, a.seed, a.identities_per_gender, a.images_per_identity});
  for (const auto& x : build.excluded) {
    err << "excluded " << x.identity_id << ": " << x.available_images << " images available\n";
  }

  auto& prov = build.manifest.provenance;
  prov["command"] = "build-probes";
  prov["source_identities"] = {{"path", a.source}, {"crc", file_crc(a.source)}};
  prov["reference_identities"] = {{"path", a.reference}, {"crc", file_crc(a.reference)}};
  prov["embeddings"] = {{"path", a.embeddings}, {"fingerprint", fingerprint(embeddings)}};
  prov["matched"] = match.matched.size();
  prov["unmatched"] = match.unmatched.size();
  prov["ambiguous"] = match.ambiguous.size();
  prov["candidates"] = candidates.size();
  prov["excluded_for_image_count"] = build.excluded.size();

  if (!a.match_report.empty()) {
    nlohmann::ordered_json j;
    j["matched"] = nlohmann::ordered_json::array();
    for (const auto& m : match.matched) {
      j["matched"].push_back({{"source_identity_id", m.source_identity_id},
                              {"reference_identity_id", m.reference_identity_id},
                              {"canonical_name", m.canonical_name}});
    }
    j["unmatched"] = match.unmatched;
    j["ambiguous"] = nlohmann::ordered_json::array();
    for (const auto& m : match.ambiguous) {
      j["ambiguous"].push_back({{"source_identity_id", m.source_identity_id},
                                {"canonical_name", m.canonical_name},
                                {"reference_identity_ids", m.reference_identity_ids}});
    }
    write_text_atomically(a.match_report, j.dump(2) + "\n");
  }
  write_text_atomically(a.out, dump_manifest(build.manifest));
  return kOk;
}

// --- gen-synthetic ----------------------------------------------------------

struct GenSyntheticArgs {
  std::string spec_path, out_probe, out_gallery, out_manifest, domain = "in";
  SyntheticSpec spec;
};

int gen_synthetic(GenSyntheticArgs a, std::ostream& err) {
  SyntheticSpec spec = a.spec_path.empty() ? a.spec : synthetic_spec_from_json(load_json(a.spec_path));
  validate(spec);
  const SyntheticData data = generate(spec);
  std::optional<ProbeManifest> manifest;
  if (!a.out_manifest.empty()) {
    manifest = synthetic_manifest(spec, data.probes, parse_domain_label(a.domain));
    manifest->provenance["gallery_fingerprint"] = fingerprint(data.gallery);
  }
  save_embedding_file(data.probes, a.out_probe);
  save_embedding_file(data.gallery, a.out_gallery);
  if (manifest) write_text_atomically(a.out_manifest, dump_manifest(*manifest));
  err << "generated " << data.probes.count() << " probe rows and " << data.gallery.count()
      << " gallery rows (dim " << spec.dim << ")\n";
  return kOk;
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string manifest, probe_embeddings, gallery, thresholds = "1,10,100", mode = "squared_l2", out;
  std::size_t parallelism = 0;
  bool quiet = false;
};

int evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  EvalConfig config;
  config.thresholds = parse_thresholds(a.thresholds);
  config.mode = parse_distance_mode(a.mode);
  const std::size_t parallelism = a.parallelism > 0 ? a.parallelism : default_parallelism();

  ProbeManifest manifest;
  try {
    manifest = manifest_from_json(load_json(a.manifest));
  } catch (const Error& e) {
    throw Error(e.kind(), a.manifest + ": " + e.what());
  }
  const auto probes = load_embedding_file(a.probe_embeddings);
  const auto gallery = load_embedding_file(a.gallery);

  ProgressFn progress;
  if (!a.quiet) {
    progress = [&err](std::size_t done, std::size_t total) {
      if (done == total || done % 10 == 0) err << "\revaluated " << done << "/" << total << " identities" << std::flush;
      if (done == total) err << '\n';
    };
  }
  const EvalResult result = evaluate_probe_set(manifest, probes, gallery, config, parallelism, progress);

  auto j = to_json(result);
  j["inputs"] = {{"manifest", a.manifest},
                 {"probe_embeddings", a.probe_embeddings},
                 {"gallery", a.gallery}};
  emit(a.out, j.dump(2) + "\n", out);
  return kOk;
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
  std::string in, out_of, format = "markdown", in_manifest, out_manifest, out;
};

EvalResult load_result(const std::string& path) {
  try {
    return eval_result_from_json(load_json(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

int report(const ReportArgs& a, std::ostream& out) {
  const EvalResult in = load_result(a.in);
  const EvalResult out_of = load_result(a.out_of);
  const GenderLookup in_genders =
      a.in_manifest.empty() ? gender_lookup(in) : gender_lookup(manifest_from_json(load_json(a.in_manifest)));
  const GenderLookup out_genders = a.out_manifest.empty()
                                       ? gender_lookup(out_of)
                                       : gender_lookup(manifest_from_json(load_json(a.out_manifest)));
  GroupedReport r = build_report(in, out_of, in_genders, out_genders);
  r.metadata.timestamp = source_date_timestamp();
  emit(a.out, render(r, parse_report_format(a.format)), out);
  return kOk;
}

// --- verify -----------------------------------------------------------------

std::string verify_one(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  char magic[4] = {};
  in.read(magic, sizeof magic);
  if (in.gcount() == 4 && std::equal(magic, magic + 4, kEmbeddingMagic)) {
    in.close();
    const auto set = load_embedding_file(path);
    return "embedding set, dim " + std::to_string(set.dim()) + ", " + std::to_string(set.count()) +
           " rows, " + fingerprint(set);
  }
  const auto j = load_json(path);
  if (j.is_object() && j.contains("entries")) {
    const auto m = manifest_from_json(j);
    return "probe manifest, " + std::string(to_string(m.domain_label)) + ", " +
           std::to_string(m.entries.size()) + " identities";
  }
  if (j.is_object() && j.contains("per_identity")) {
    const auto r = eval_result_from_json(j);
    return "evaluation result, " + std::to_string(r.counters.attempts) + " attempts";
  }
  if (j.is_object() && j.contains("n_identities")) {
    synthetic_spec_from_json(j);
    return "synthetic spec";
  }
  throw Error(ErrorKind::format, "unrecognized file type");
}

int verify(const std::vector<std::string>& files, std::ostream& out, std::ostream& err) {
  int status = kOk;
  for (const auto& f : files) {
    try {
      out << "OK " << f << ": " << verify_one(f) << '\n';
    } catch (const Error& e) {
      err << "FAIL " << f << ": [" << to_string(e.kind()) << "] " << e.what() << '\n';
      if (status == kOk) status = exit_code(e.kind());
    }
  }
  return status;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Closed-set identification audit over face embeddings", "idrank"};
  app.require_subcommand(1);

  BuildProbesArgs bp;
  auto* build_cmd = app.add_subcommand("build-probes", "Sample a probe manifest from identity lists");
  build_cmd->add_option("--source-identities", bp.source, "Identity CSV of the probe source")->required();
  build_cmd->add_option("--reference-identities", bp.reference, "Identity CSV of the training set")->required();
  build_cmd->add_option("--embeddings", bp.embeddings, "Embedding file of the probe source")->required();
  build_cmd->add_option("--domain", bp.domain, "in or out")->check(CLI::IsMember({"in", "out", "in_domain", "out_of_domain"}));
  build_cmd->add_option("--seed", bp.seed)->required();
  build_cmd->add_option("--identities-per-gender", bp.identities_per_gender)->check(CLI::PositiveNumber);
  build_cmd->add_option("--images-per-identity", bp.images_per_identity)->check(CLI::PositiveNumber);
  build_cmd->add_option("--match-report", bp.match_report, "Write the name-matching outcome as JSON");
  build_cmd->add_option("--out", bp.out)->required();

  GenSyntheticArgs gs;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Generate synthetic probe and gallery embeddings");
  gen_cmd->add_option("--spec", gs.spec_path, "Synthetic spec JSON (overrides the flags below)");
  gen_cmd->add_option("--dim", gs.spec.dim);
  gen_cmd->add_option("--n-identities", gs.spec.n_identities);
  gen_cmd->add_option("--images-per-identity", gs.spec.images_per_identity);
  gen_cmd->add_option("--n-distractors", gs.spec.n_distractors);
  gen_cmd->add_option("--sigma", gs.spec.intra_class_sigma);
  gen_cmd->add_option("--seed", gs.spec.seed);
  gen_cmd->add_flag("--normalize", gs.spec.normalize);
  gen_cmd->add_flag("--pure-noise", gs.spec.pure_noise);
  gen_cmd->add_option("--out-probe", gs.out_probe)->required();
  gen_cmd->add_option("--out-gallery", gs.out_gallery)->required();
  gen_cmd->add_option("--out-manifest", gs.out_manifest, "Also write a manifest covering every identity");
  gen_cmd->add_option("--domain", gs.domain, "Domain label for --out-manifest")->check(CLI::IsMember({"in", "out", "in_domain", "out_of_domain"}));

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Run needle-insertion ranking for a probe set");
  eval_cmd->add_option("--manifest", ev.manifest)->required();
  eval_cmd->add_option("--probe-embeddings", ev.probe_embeddings)->required();
  eval_cmd->add_option("--gallery", ev.gallery)->required();
  eval_cmd->add_option("--thresholds", ev.thresholds, "Comma-separated rank thresholds");
  eval_cmd->add_option("--parallelism", ev.parallelism, "Worker threads (default: IDRANK_THREADS or 1)");
  eval_cmd->add_option("--distance-mode", ev.mode)->check(CLI::IsMember({"l2", "squared_l2"}));
  eval_cmd->add_option("--out", ev.out, "Result JSON path (default: stdout)");
  eval_cmd->add_flag("--quiet", ev.quiet, "No progress on stderr");

  ReportArgs rp;
  auto* report_cmd = app.add_subcommand("report", "Compare in-domain and out-of-domain results");
  report_cmd->add_option("--in", rp.in, "In-domain result JSON")->required();
  report_cmd->add_option("--out-of", rp.out_of, "Out-of-domain result JSON")->required();
  report_cmd->add_option("--format", rp.format)->check(CLI::IsMember({"json", "csv", "markdown"}));
  report_cmd->add_option("--in-manifest", rp.in_manifest, "Gender labels for the in-domain result");
  report_cmd->add_option("--out-manifest", rp.out_manifest, "Gender labels for the out-of-domain result");
  report_cmd->add_option("--out", rp.out, "Report path (default: stdout)");

  std::vector<std::string> files;
  auto* verify_cmd = app.add_subcommand("verify", "Check file CRCs and invariants");
  verify_cmd->add_option("files", files)->required();

  std::vector<const char*> argv{"idrank"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*build_cmd) return build_probes(bp, err);
    if (*gen_cmd) return gen_synthetic(gs, err);
    if (*eval_cmd) return evaluate(ev, out, err);
    if (*report_cmd) return report(rp, out);
    if (*verify_cmd) return verify(files, out, err);
  } catch (const Error& e) {
    err << "idrank: " << to_string(e.kind()) << " error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "idrank: internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace idrank::cli
