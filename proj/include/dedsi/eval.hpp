#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dedsi/corpus.hpp"
#include "dedsi/ensemble.hpp"
#include "dedsi/train.hpp"

namespace dedsi {

struct MetricsRecord {
  std::string arm;
  std::string shard = "all";
  std::string pool = "-";
  std::size_t k = 1;
  double accuracy = 0.0;  // hits / support
  std::size_t support = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

using Ranker = std::function<EnsembleResult(const std::string& query)>;

/// Hit counts at each requested depth; the ranker runs once per query.
inline std::vector<std::size_t> topk_hits(const Ranker& ranker, const std::vector<QueryDocPair>& test,
                                          const std::vector<std::size_t>& ks) {
  std::vector<std::size_t> hits(ks.size(), 0);
  for (const auto& p : test) {
    const auto result = ranker(p.query);
    const auto& r = result.ranked;
    auto pos = std::find_if(r.begin(), r.end(), [&](const RankedDoc& d) { return d.docid == p.docid; });
    if (pos == r.end()) continue;
    const auto rank = static_cast<std::size_t>(pos - r.begin());
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (rank < ks[i]) ++hits[i];
  }
  return hits;
}

inline std::vector<MetricsRecord> topk_accuracies(const Ranker& ranker, const std::vector<QueryDocPair>& test,
                                                  const std::vector<std::size_t>& ks, const MetricsRecord& label) {
  if (test.empty()) throw Error("topk_accuracy: empty test set");
  for (auto k : ks)
    if (k == 0) throw Error("topk_accuracy: k must be >= 1");
  const auto hits = topk_hits(ranker, test, ks);
  std::vector<MetricsRecord> out;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    MetricsRecord r = label;
    r.k = ks[i];
    r.support = test.size();
    r.accuracy = static_cast<double>(hits[i]) / static_cast<double>(test.size());
    out.push_back(std::move(r));
  }
  return out;
}

/// A query counts as a hit when its gold docid is among the top-k distinct
/// docids the ranker returns.
inline MetricsRecord topk_accuracy(const Ranker& ranker, const std::vector<QueryDocPair>& test, std::size_t k,
                                   const MetricsRecord& label = {}) {
  return topk_accuracies(ranker, test, {k}, label).front();
}

/// Ranker backed by one model: its beam normalized and ranked on its own.
template <RetrieverModel M>
Ranker single_model_ranker(const M& model, std::size_t beam_width, std::size_t k, ResultSource source = {}) {
  return [&model, beam_width, k, source](const std::string& q) {
    return merge_across_shards({model_result(model, q, beam_width, source)}, k, q);
  };
}

struct MeanStdev {
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation; 0 for fewer than 2 values
};

inline MeanStdev mean_stdev(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct PlotTable {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

struct Report {
  std::string experiment;
  std::string spec_hash;
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
  Json summary = Json::object();
  std::vector<PlotTable> plots;
};

inline constexpr std::string_view kMetricsHeader = "arm,shard,pool,k,accuracy,support,seed";

inline std::string format_double(double v) {
  std::ostringstream oss;
  oss.precision(17);
  oss << v;
  return oss.str();
}

inline Json to_json(const MetricsRecord& r) {
  return {{"arm", r.arm},          {"shard", r.shard},     {"pool", r.pool}, {"k", r.k},
          {"accuracy", r.accuracy}, {"support", r.support}, {"seed", r.seed}};
}

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records) {
  out << kMetricsHeader << '\n';
  for (const auto& r : records) {
    for (const auto* f : {&r.arm, &r.shard, &r.pool}) {
      if (f->find_first_of(",\n\"") != std::string::npos) throw Error(concat("metrics field '", *f, "' needs quoting"));
    }
    out << r.arm << ',' << r.shard << ',' << r.pool << ',' << r.k << ',' << format_double(r.accuracy) << ','
        << r.support << ',' << r.seed << '\n';
  }
}

inline std::vector<MetricsRecord> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw Error("metrics.csv: unexpected header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw Error(concat("metrics.csv: bad row '", line, "'"));
    out.push_back({f[0], f[1], f[2], std::stoul(f[3]), std::stod(f[4]), std::stoul(f[5]), std::stoull(f[6])});
  }
  return out;
}

inline std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(concat("cannot read '", path.string(), "'"));
  return read_metrics_csv(in);
}

inline Json report_json(const Report& report) {
  Json records = Json::array();
  for (const auto& r : report.records) records.push_back(to_json(r));
  return {{"experiment", report.experiment},
          {"spec_hash", report.spec_hash},
          {"seed", report.seed},
          {"records", records},
          {"summary", report.summary}};
}

/// Writes metrics.csv, metrics.json and one <name>.csv per plot table.
/// Returns the written paths in write order.
inline std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw Error(concat("cannot create '", out_dir.string(), "'"));
  std::vector<std::filesystem::path> written;

  const auto csv_path = out_dir / "metrics.csv";
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw Error(concat("cannot write '", csv_path.string(), "'"));
    write_metrics_csv(out, report.records);
    if (!out) throw Error(concat("write failed for '", csv_path.string(), "'"));
  }
  written.push_back(csv_path);

  const auto json_path = out_dir / "metrics.json";
  write_json_file(json_path, report_json(report), 2);
  written.push_back(json_path);

  for (const auto& plot : report.plots) {
    const auto path = out_dir / (plot.name + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(concat("cannot write '", path.string(), "'"));
    for (std::size_t i = 0; i < plot.columns.size(); ++i) out << (i ? "," : "") << plot.columns[i];
    out << '\n';
    for (const auto& row : plot.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << '\n';
    }
    written.push_back(path);
  }
  return written;
}

inline std::vector<std::filesystem::path> emit_report(const std::vector<MetricsRecord>& records,
                                                      const std::filesystem::path& out_dir) {
  Report r;
  r.records = records;
  return emit_report(r, out_dir);
}

}  // namespace dedsi
