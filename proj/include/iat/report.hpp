#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace iat {

struct MetricsReport
{
  std::string                   decode_mode;
  double                        perplexity_orig = 0.0;
  std::map<std::string, double> ppl_delta_by_kind;
  std::map<std::string, double> ppl_delta_std_by_kind;
  double                        ppl_delta_macro = 0.0;
  double                        distinct_1 = 0.0;
  double                        distinct_2 = 0.0;
  double                        distinct_3 = 0.0;
  double                        overlap_pct = 0.0;
  double                        stopword_pct = 0.0;
  std::size_t                   num_examples = 0;
  std::vector<std::uint64_t>    seeds_used;

  bool operator==(MetricsReport const &) const = default;
};

nlohmann::json to_json(MetricsReport const &r);
MetricsReport  report_from_json(nlohmann::json const &j);

// JSON with max_digits10 precision so reading it back is lossless.
std::string   report_json_text(MetricsReport const &r);
void          save_report(MetricsReport const &r, std::filesystem::path const &path);
MetricsReport load_report(std::filesystem::path const &path);

std::string report_csv_header(MetricsReport const &r);
std::string report_csv_row(MetricsReport const &r);
void        save_report_csv(MetricsReport const &r, std::filesystem::path const &path);

std::string report_summary(MetricsReport const &r);

} // namespace iat
