#pragma once

#include <string>
#include <vector>

namespace safl {

struct TraceRow {
  int round = 0;
  int client = 0;
  std::vector<double> raw;
  std::vector<double> normalized;
  std::vector<int> selected;
  bool tie = false;
};

std::vector<TraceRow> load_trace_jsonl(const std::string& path);

// Quartile band of the layer stack with its share of all selection events
// and the average attention score of its layers.
struct BandRow {
  std::string name;
  int layer_lo = 0;  // 1-based inclusive
  int layer_hi = 0;
  double selection_percent = 0.0;
  double avg_raw = 0.0;
  double avg_normalized = 0.0;
};

int infer_num_layers(const std::vector<TraceRow>& rows);

std::vector<BandRow> layer_frequency_bands(const std::vector<TraceRow>& rows, int num_layers);

std::string render_band_table(const std::vector<BandRow>& bands);

void write_band_csv(const std::string& path, const std::vector<BandRow>& bands);

}  // namespace safl
