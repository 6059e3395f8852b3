#include "iat/report.hpp"
#include "iat/errors.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace iat {

nlohmann::json to_json(MetricsReport const &r)
{
  return {{"decode_mode", r.decode_mode},
          {"perplexity_orig", r.perplexity_orig},
          {"ppl_delta_by_kind", r.ppl_delta_by_kind},
          {"ppl_delta_std_by_kind", r.ppl_delta_std_by_kind},
          {"ppl_delta_macro", r.ppl_delta_macro},
          {"distinct_1", r.distinct_1},
          {"distinct_2", r.distinct_2},
          {"distinct_3", r.distinct_3},
          {"overlap_pct", r.overlap_pct},
          {"stopword_pct", r.stopword_pct},
          {"num_examples", r.num_examples},
          {"seeds_used", r.seeds_used}};
}

MetricsReport report_from_json(nlohmann::json const &j)
{
  MetricsReport r;
  try {
    r.decode_mode = j.at("decode_mode").get<std::string>();
    r.perplexity_orig = j.at("perplexity_orig").get<double>();
    r.ppl_delta_by_kind = j.at("ppl_delta_by_kind").get<std::map<std::string, double>>();
    r.ppl_delta_std_by_kind = j.at("ppl_delta_std_by_kind").get<std::map<std::string, double>>();
    r.ppl_delta_macro = j.at("ppl_delta_macro").get<double>();
    r.distinct_1 = j.at("distinct_1").get<double>();
    r.distinct_2 = j.at("distinct_2").get<double>();
    r.distinct_3 = j.at("distinct_3").get<double>();
    r.overlap_pct = j.at("overlap_pct").get<double>();
    r.stopword_pct = j.at("stopword_pct").get<double>();
    r.num_examples = j.at("num_examples").get<std::size_t>();
    r.seeds_used = j.at("seeds_used").get<std::vector<std::uint64_t>>();
  } catch (nlohmann::json::exception const &e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string report_json_text(MetricsReport const &r) { return to_json(r).dump(2) + "\n"; }

void save_report(MetricsReport const &r, std::filesystem::path const &path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write report " + path.string());
  }
  out << report_json_text(r);
}

MetricsReport load_report(std::filesystem::path const &path)
{
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open report " + path.string());
  }
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ParseError("malformed report " + path.string());
  }
  return report_from_json(j);
}

namespace {

std::string num(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

std::string report_csv_header(MetricsReport const &r)
{
  std::string h = "decode_mode,num_examples,perplexity_orig,ppl_delta_macro";
  for (auto const &[k, v] : r.ppl_delta_by_kind) {
    h += ",delta_" + k;
  }
  h += ",distinct_1,distinct_2,distinct_3,overlap_pct,stopword_pct";
  return h;
}

std::string report_csv_row(MetricsReport const &r)
{
  std::string row = r.decode_mode + "," + std::to_string(r.num_examples) + "," + num(r.perplexity_orig) + "," +
                    num(r.ppl_delta_macro);
  for (auto const &[k, v] : r.ppl_delta_by_kind) {
    row += "," + num(v);
  }
  for (double v : {r.distinct_1, r.distinct_2, r.distinct_3, r.overlap_pct, r.stopword_pct}) {
    row += "," + num(v);
  }
  return row;
}

void save_report_csv(MetricsReport const &r, std::filesystem::path const &path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write report " + path.string());
  }
  out << report_csv_header(r) << '\n' << report_csv_row(r) << '\n';
}

std::string report_summary(MetricsReport const &r)
{
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(4);
  ss << "mode            " << r.decode_mode << "\n"
     << "examples        " << r.num_examples << "\n"
     << "perplexity      " << r.perplexity_orig << "\n"
     << "ppl delta macro " << r.ppl_delta_macro << "\n";
  for (auto const &[k, v] : r.ppl_delta_by_kind) {
    ss << "  " << k << std::string(k.size() < 14 ? 14 - k.size() : 1, ' ') << v;
    if (auto it = r.ppl_delta_std_by_kind.find(k); it != r.ppl_delta_std_by_kind.end()) {
      ss << " (" << it->second << ")";
    }
    ss << "\n";
  }
  ss << "distinct-1/2/3  " << r.distinct_1 << " " << r.distinct_2 << " " << r.distinct_3 << "\n"
     << "overlap %       " << r.overlap_pct << "\n"
     << "stop-word %     " << r.stopword_pct << "\n";
  return ss.str();
}

} // namespace iat
