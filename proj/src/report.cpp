#include "idrank/report.hpp"

#include <cstdio>
#include <sstream>

#include "idrank/error.hpp"

namespace idrank {

std::string_view to_string(ReportGroup g) noexcept {
  switch (g) {
    case ReportGroup::all: return "all";
    case ReportGroup::male: return "male";
    case ReportGroup::female: return "female";
  }
  return "all";
}

namespace {

__extension__ typedef __int128 Int128;

ReportGroup parse_group(std::string_view text) {
  if (text == "all") return ReportGroup::all;
  if (text == "male") return ReportGroup::male;
  if (text == "female") return ReportGroup::female;
  throw Error(ErrorKind::format, "unknown report group '" + std::string(text) + "'");
}

constexpr ReportGroup kGroups[] = {ReportGroup::all, ReportGroup::male, ReportGroup::female};
constexpr DomainLabel kDomains[] = {DomainLabel::in_domain, DomainLabel::out_of_domain};

struct Tally {
  std::map<std::size_t, std::uint64_t> hits;
  std::uint64_t attempts = 0;
};

std::map<ReportGroup, Tally> pool_by_group(const EvalResult& result, const GenderLookup& genders,
                                           std::string_view which) {
  std::map<ReportGroup, Tally> pooled;
  auto add = [&](ReportGroup g, const RankCounters& c) {
    auto& t = pooled[g];
    for (const auto& [k, n] : c.hits) t.hits[k] += n;
    t.attempts += c.attempts;
  };
  for (const auto& [id, r] : result.per_identity) {
    const auto it = genders.find(id);
    if (it == genders.end()) {
      throw Error(ErrorKind::validation, "identity '" + id + "' in the " + std::string(which) +
                                             " result is missing from its manifest");
    }
    add(ReportGroup::all, r.counters);
    if (it->second == Gender::male) add(ReportGroup::male, r.counters);
    if (it->second == Gender::female) add(ReportGroup::female, r.counters);
  }
  return pooled;
}

std::string format_scaled(Int128 num, Int128 den) {
  if (den <= 0) throw Error(ErrorKind::validation, "percentage with non-positive denominator");
  const bool negative = num < 0;
  if (negative) num = -num;
  const Int128 scaled = num * 10000;
  Int128 q = scaled / den;
  const Int128 r = scaled % den;
  if (2 * r > den || (2 * r == den && q % 2 == 1)) ++q;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%llu.%02llu", negative && q != 0 ? "-" : "",
                static_cast<unsigned long long>(q / 100), static_cast<unsigned long long>(q % 100));
  return buf;
}

std::string full_precision(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metric_name(std::size_t k) { return "rank_" + std::to_string(k); }

}  // namespace

std::string format_percent(std::int64_t num, std::int64_t den) { return format_scaled(num, den); }

std::string format_percent_gap(std::uint64_t h1, std::uint64_t a1, std::uint64_t h2,
                               std::uint64_t a2) {
  const Int128 num = static_cast<Int128>(h1) * a2 - static_cast<Int128>(h2) * a1;
  return format_scaled(num, static_cast<Int128>(a1) * a2);
}

const ReportCell* GroupedReport::find(DomainLabel domain, ReportGroup group, std::size_t k) const {
  for (const auto& c : cells) {
    if (c.domain == domain && c.group == group && c.k == k) return &c;
  }
  return nullptr;
}

const ReportGap* GroupedReport::find_gap(ReportGroup group, std::size_t k) const {
  for (const auto& g : gaps) {
    if (g.group == group && g.k == k) return &g;
  }
  return nullptr;
}

GenderLookup gender_lookup(const ProbeManifest& manifest) {
  GenderLookup out;
  for (const auto& e : manifest.entries) out[e.identity_id] = e.gender;
  return out;
}

GenderLookup gender_lookup(const EvalResult& result) {
  GenderLookup out;
  for (const auto& [id, r] : result.per_identity) out[id] = r.gender;
  return out;
}

GroupedReport build_report(const EvalResult& in_domain, const EvalResult& out_of_domain,
                           const GenderLookup& in_genders, const GenderLookup& out_genders) {
  if (in_domain.config.thresholds != out_of_domain.config.thresholds) {
    throw Error(ErrorKind::validation, "cannot compare results with different rank thresholds");
  }
  if (in_domain.config.gallery_fingerprint != out_of_domain.config.gallery_fingerprint) {
    throw Error(ErrorKind::validation, "cannot compare results from different galleries (" +
                                           in_domain.config.gallery_fingerprint + " vs " +
                                           out_of_domain.config.gallery_fingerprint + ")");
  }
  const auto& thresholds = in_domain.config.thresholds;
  const std::map<DomainLabel, std::map<ReportGroup, Tally>> pooled{
      {DomainLabel::in_domain, pool_by_group(in_domain, in_genders, "in-domain")},
      {DomainLabel::out_of_domain, pool_by_group(out_of_domain, out_genders, "out-of-domain")}};

  GroupedReport report;
  for (std::size_t k : thresholds) {
    for (DomainLabel domain : kDomains) {
      for (ReportGroup group : kGroups) {
        const auto& by_group = pooled.at(domain);
        const auto it = by_group.find(group);
        if (it == by_group.end() || it->second.attempts == 0) continue;
        const auto hits_it = it->second.hits.find(k);
        const std::uint64_t hits = hits_it == it->second.hits.end() ? 0 : hits_it->second;
        report.cells.push_back({domain, group, k, hits, it->second.attempts,
                                static_cast<double>(hits) / static_cast<double>(it->second.attempts)});
      }
    }
    for (ReportGroup group : kGroups) {
      const auto* in = report.find(DomainLabel::in_domain, group, k);
      const auto* out = report.find(DomainLabel::out_of_domain, group, k);
      if (in && out) report.gaps.push_back({group, k, in->accuracy - out->accuracy});
    }
  }
  report.metadata.in_domain_seed = in_domain.config.manifest_seed;
  report.metadata.out_of_domain_seed = out_of_domain.config.manifest_seed;
  report.metadata.gallery_fingerprint = in_domain.config.gallery_fingerprint;
  report.metadata.thresholds = thresholds;
  return report;
}

GroupedReport build_report(const EvalResult& in_domain, const EvalResult& out_of_domain,
                           const std::pair<const ProbeManifest&, const ProbeManifest&>& manifests) {
  return build_report(in_domain, out_of_domain, gender_lookup(manifests.first),
                      gender_lookup(manifests.second));
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "json") return ReportFormat::json;
  if (text == "csv") return ReportFormat::csv;
  if (text == "markdown" || text == "md") return ReportFormat::markdown;
  throw Error(ErrorKind::usage, "unknown report format '" + std::string(text) + "'");
}

nlohmann::ordered_json to_json(const GroupedReport& report) {
  nlohmann::ordered_json j;
  auto& cells = j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"domain", to_string(c.domain)},
                     {"group", to_string(c.group)},
                     {"k", c.k},
                     {"hits", c.hits},
                     {"attempts", c.attempts},
                     {"accuracy", c.accuracy}});
  }
  auto& gaps = j["gaps"] = nlohmann::ordered_json::array();
  for (const auto& g : report.gaps) {
    gaps.push_back({{"group", to_string(g.group)}, {"k", g.k}, {"gap", g.gap}});
  }
  auto& md = j["metadata"];
  md["in_domain_seed"] = report.metadata.in_domain_seed;
  md["out_of_domain_seed"] = report.metadata.out_of_domain_seed;
  md["gallery_fingerprint"] = report.metadata.gallery_fingerprint;
  md["thresholds"] = report.metadata.thresholds;
  if (report.metadata.timestamp) md["timestamp"] = *report.metadata.timestamp;
  else md["timestamp"] = nullptr;
  return j;
}

GroupedReport grouped_report_from_json(const nlohmann::json& j) {
  try {
    GroupedReport r;
    for (const auto& c : j.at("cells")) {
      r.cells.push_back({parse_domain_label(c.at("domain").get<std::string>()),
                         parse_group(c.at("group").get<std::string>()), c.at("k").get<std::size_t>(),
                         c.at("hits").get<std::uint64_t>(), c.at("attempts").get<std::uint64_t>(),
                         c.at("accuracy").get<double>()});
    }
    for (const auto& g : j.at("gaps")) {
      r.gaps.push_back({parse_group(g.at("group").get<std::string>()), g.at("k").get<std::size_t>(),
                        g.at("gap").get<double>()});
    }
    const auto& md = j.at("metadata");
    r.metadata.in_domain_seed = md.at("in_domain_seed").get<std::uint64_t>();
    r.metadata.out_of_domain_seed = md.at("out_of_domain_seed").get<std::uint64_t>();
    r.metadata.gallery_fingerprint = md.at("gallery_fingerprint").get<std::string>();
    r.metadata.thresholds = md.at("thresholds").get<std::vector<std::size_t>>();
    if (md.contains("timestamp") && !md.at("timestamp").is_null()) {
      r.metadata.timestamp = md.at("timestamp").get<std::string>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("malformed report JSON: ") + e.what());
  }
}

std::string render(const GroupedReport& report, ReportFormat format) {
  std::ostringstream out;
  switch (format) {
    case ReportFormat::json:
      out << to_json(report).dump(2) << '\n';
      break;
    case ReportFormat::csv:
      out << "metric,domain,group,accuracy\n";
      for (const auto& c : report.cells) {
        out << metric_name(c.k) << ',' << to_string(c.domain) << ',' << to_string(c.group) << ','
            << full_precision(c.accuracy) << '\n';
      }
      for (const auto& g : report.gaps) {
        out << metric_name(g.k) << ",gap," << to_string(g.group) << ',' << full_precision(g.gap)
            << '\n';
      }
      break;
    case ReportFormat::markdown: {
      const auto& ks = report.metadata.thresholds;
      auto cell_text = [&](DomainLabel d, ReportGroup g, std::size_t k) -> std::string {
        const auto* c = report.find(d, g, k);
        return c ? format_percent(static_cast<std::int64_t>(c->hits),
                                  static_cast<std::int64_t>(c->attempts))
                 : "-";
      };
      out << "| Metric | Probe Set | All | Males | Females |\n"
          << "|---|---|---|---|---|\n";
      for (std::size_t k : ks) {
        for (DomainLabel d : kDomains) {
          out << "| " << (d == DomainLabel::in_domain ? "Rank-" + std::to_string(k) + " Accuracy (%)" : "")
              << " | " << (d == DomainLabel::in_domain ? "In-Domain" : "Out-of-Domain");
          for (ReportGroup g : kGroups) out << " | " << cell_text(d, g, k);
          out << " |\n";
        }
      }
      out << "\n| Gap (in - out, pp) | All | Males | Females |\n"
          << "|---|---|---|---|\n";
      for (std::size_t k : ks) {
        out << "| Rank-" << k;
        for (ReportGroup g : kGroups) {
          const auto* in = report.find(DomainLabel::in_domain, g, k);
          const auto* o = report.find(DomainLabel::out_of_domain, g, k);
          out << " | "
              << (in && o ? format_percent_gap(in->hits, in->attempts, o->hits, o->attempts) : "-");
        }
        out << " |\n";
      }
      break;
    }
  }
  return out.str();
}

}  // namespace idrank
