#pragma once

#include <stdexcept>
#include <string>

namespace safl {

// Non-finite loss during a federated round; carries enough context to name
// the failing client and step in diagnostics.
struct DivergenceError : std::runtime_error {
  DivergenceError(int client_id, int round, int step)
      : std::runtime_error("divergence: non-finite loss at client " + std::to_string(client_id) +
                           ", round " + std::to_string(round) + ", step " + std::to_string(step)),
        client_id(client_id),
        round(round),
        step(step) {}
  int client_id;
  int round;
  int step;
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace safl
