#pragma once

#include <cstdint>
#include <vector>

namespace safl {

enum class WirePrecision { F64, F32 };

inline std::uint64_t value_bytes(WirePrecision w) { return w == WirePrecision::F64 ? 8 : 4; }

// One transmitted parameter-delta block. Dense deltas send every value;
// pruned deltas send the kept values plus a presence bitmap (one bit per
// entry) and an 8-byte count header.
struct LayerDelta {
  int layer_id = 0;  // 1-based
  std::vector<double> values;
  std::vector<std::uint32_t> kept;  // ascending kept indices when sparse
  bool sparse = false;
  WirePrecision wire = WirePrecision::F64;

  std::size_t transmitted_count() const { return sparse ? kept.size() : values.size(); }

  static std::uint64_t sparse_overhead_bytes(std::size_t dense_len) {
    return (dense_len + 7) / 8 + 8;
  }

  std::uint64_t byte_size() const {
    const std::uint64_t vb = value_bytes(wire);
    if (!sparse) return values.size() * vb;
    return kept.size() * vb + sparse_overhead_bytes(values.size());
  }
};

inline std::uint64_t dense_block_bytes(std::size_t count, WirePrecision w = WirePrecision::F64) {
  return count * value_bytes(w);
}

}  // namespace safl
