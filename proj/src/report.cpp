#include "safl/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "safl/errors.hpp"

namespace safl {

std::vector<TraceRow> load_trace_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("report: cannot open trace " + path);
  std::vector<TraceRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    TraceRow r;
    r.round = j.at("round").get<int>();
    r.client = j.at("client").get<int>();
    r.raw = j.at("raw_scores").get<std::vector<double>>();
    r.normalized = j.at("normalized_scores").get<std::vector<double>>();
    r.selected = j.at("mask").at("selected").get<std::vector<int>>();
    r.tie = j.value("tie", false);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw IoError("report: trace is empty: " + path);
  return rows;
}

int infer_num_layers(const std::vector<TraceRow>& rows) {
  int layers = 0;
  for (const auto& r : rows) {
    layers = std::max(layers, static_cast<int>(r.raw.size()));
    for (int id : r.selected) layers = std::max(layers, id);
  }
  if (layers == 0) throw std::invalid_argument("report: cannot infer layer count from trace");
  return layers;
}

std::vector<BandRow> layer_frequency_bands(const std::vector<TraceRow>& rows, int num_layers) {
  if (num_layers < 1) throw std::invalid_argument("report: num_layers must be >= 1");
  static const char* kNames[4] = {"Lower", "Middle", "Higher", "Output"};
  const int bands = std::min(4, num_layers);

  std::vector<BandRow> out(bands);
  std::vector<int> band_of(num_layers);
  for (int b = 0; b < bands; ++b) {
    // Integer quartile boundaries, 0-based half-open.
    const int lo = b * num_layers / bands;
    const int hi = (b + 1) * num_layers / bands;
    out[b].name = bands == 4 ? kNames[b] : ("Band" + std::to_string(b + 1));
    out[b].layer_lo = lo + 1;
    out[b].layer_hi = hi;
    for (int l = lo; l < hi; ++l) band_of[l] = b;
  }

  std::vector<std::int64_t> selections(bands, 0);
  std::vector<double> raw_sum(bands, 0.0), norm_sum(bands, 0.0);
  std::vector<std::int64_t> score_count(bands, 0);
  std::int64_t total_selections = 0;
  for (const auto& r : rows) {
    for (int id : r.selected) {
      if (id < 1 || id > num_layers) {
        throw std::invalid_argument("report: selected layer id outside 1.." +
                                    std::to_string(num_layers));
      }
      ++selections[band_of[id - 1]];
      ++total_selections;
    }
    for (std::size_t l = 0; l < r.raw.size(); ++l) {
      const int b = band_of[l];
      raw_sum[b] += r.raw[l];
      norm_sum[b] += r.normalized[l];
      ++score_count[b];
    }
  }

  for (int b = 0; b < bands; ++b) {
    out[b].selection_percent =
        total_selections == 0 ? 0.0 : 100.0 * static_cast<double>(selections[b]) /
                                          static_cast<double>(total_selections);
    if (score_count[b] > 0) {
      out[b].avg_raw = raw_sum[b] / static_cast<double>(score_count[b]);
      out[b].avg_normalized = norm_sum[b] / static_cast<double>(score_count[b]);
    }
  }
  return out;
}

std::string render_band_table(const std::vector<BandRow>& bands) {
  char buf[160];
  std::string s = "Layer Group        Selection %   Avg Attention (raw)   Avg Attention (norm)\n";
  for (const auto& b : bands) {
    std::snprintf(buf, sizeof(buf), "%-8s (%2d-%2d)   %10.1f   %19.4f   %20.6f\n", b.name.c_str(),
                  b.layer_lo, b.layer_hi, b.selection_percent, b.avg_raw, b.avg_normalized);
    s += buf;
  }
  return s;
}

void write_band_csv(const std::string& path, const std::vector<BandRow>& bands) {
  std::ofstream os(path);
  if (!os) throw IoError("report: cannot open " + path);
  os << "band,layer_lo,layer_hi,selection_percent,avg_attention_raw,avg_attention_normalized\n";
  os.precision(17);
  for (const auto& b : bands) {
    os << b.name << "," << b.layer_lo << "," << b.layer_hi << "," << b.selection_percent << ","
       << b.avg_raw << "," << b.avg_normalized << "\n";
  }
  if (!os) throw IoError("report: write failed for " + path);
}

}  // namespace safl
