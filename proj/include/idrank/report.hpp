#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "idrank/eval_engine.hpp"
#include "idrank/probe_builder.hpp"
#include "json.hpp"

namespace idrank {

enum class ReportGroup { all, male, female };
std::string_view to_string(ReportGroup g) noexcept;

/// One (domain, group, k) accuracy, kept with its pooled tallies.
struct ReportCell {
  DomainLabel domain = DomainLabel::in_domain;
  ReportGroup group = ReportGroup::all;
  std::size_t k = 1;
  std::uint64_t hits = 0;
  std::uint64_t attempts = 0;
  double accuracy = 0.0;
};

/// in-domain accuracy minus out-of-domain accuracy for one (group, k).
struct ReportGap {
  ReportGroup group = ReportGroup::all;
  std::size_t k = 1;
  double gap = 0.0;
};

struct ReportMetadata {
  std::uint64_t in_domain_seed = 0;
  std::uint64_t out_of_domain_seed = 0;
  std::string gallery_fingerprint;
  std::vector<std::size_t> thresholds;
  /// From SOURCE_DATE_EPOCH when set; absent otherwise so reruns match.
  std::optional<std::string> timestamp;
};

/// Table-shaped accuracies. Cells for a gender with no identities are
/// omitted; "all" cells pool hits and attempts across genders.
struct GroupedReport {
  std::vector<ReportCell> cells;
  std::vector<ReportGap> gaps;
  ReportMetadata metadata;

  const ReportCell* find(DomainLabel domain, ReportGroup group, std::size_t k) const;
  const ReportGap* find_gap(ReportGroup group, std::size_t k) const;
};

using GenderLookup = std::map<std::string, Gender>;

GenderLookup gender_lookup(const ProbeManifest& manifest);
/// Genders recorded in the per-identity results themselves.
GenderLookup gender_lookup(const EvalResult& result);

/// Refuses results with different thresholds or gallery fingerprints, and
/// identities absent from their lookup.
GroupedReport build_report(const EvalResult& in_domain, const EvalResult& out_of_domain,
                           const GenderLookup& in_genders, const GenderLookup& out_genders);
GroupedReport build_report(const EvalResult& in_domain, const EvalResult& out_of_domain,
                           const std::pair<const ProbeManifest&, const ProbeManifest&>& manifests);

enum class ReportFormat { json, csv, markdown };
ReportFormat parse_report_format(std::string_view text);

/// markdown: rows metric x domain, columns All/Males/Females, percentages to
/// two decimals rounded half-to-even, followed by the gap table.
/// csv (metric,domain,group,accuracy) and json keep full precision.
std::string render(const GroupedReport& report, ReportFormat format);

nlohmann::ordered_json to_json(const GroupedReport& report);
GroupedReport grouped_report_from_json(const nlohmann::json& j);

/// 100 * num / den rounded half-to-even to two decimals, computed exactly.
std::string format_percent(std::int64_t num, std::int64_t den);
/// Exact 100 * (h1/a1 - h2/a2) to two decimals, half-to-even.
std::string format_percent_gap(std::uint64_t h1, std::uint64_t a1, std::uint64_t h2,
                               std::uint64_t a2);

}  // namespace idrank
