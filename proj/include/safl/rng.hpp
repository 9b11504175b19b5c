#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace safl {

// Counter-based deterministic random stream. The value sequence is a pure
// function of (seed, stream_id): no global state, safe to construct and use
// on any thread without perturbing other streams.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view stream_id);

  std::uint64_t next_u64();
  double next_uniform();   // [0, 1)
  double next_gaussian();  // standard normal
  int next_below(int n);   // uniform in [0, n), n > 0

  std::uint64_t seed() const { return seed_; }
  const std::string& stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::string stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace safl
