#pragma once

// Central-difference checks of every tape primitive, the full training loss on
// a random 3-part shape, and the network end to end.

#include "partasm/optim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace partasm::ad {

struct GradCheckEntry {
  std::string name;
  GradCheckReport report;
};

struct GradCheckSuite {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::string worst;
  double seconds = 0.0;
};

GradCheckSuite run_gradcheck_suite(std::uint64_t seed, double h = 1e-4);

}  // namespace partasm::ad
