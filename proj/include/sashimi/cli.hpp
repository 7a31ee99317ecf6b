#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "sashimi/model.hpp"

namespace sashimi::cli {

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2, kDivergence = 3 };

struct StabilityRow {
  std::size_t tier = 0;
  std::string layer;          // e.g. "down.0"
  std::string channel_group;  // "fwd" or "bwd"
  double spectral_radius = 0.0;  // max over channels
  double max_re_lambda = 0.0;
  bool hurwitz_by_construction = false;
};

// One row per SSM of the model.
std::vector<StabilityRow> stability_rows(const model::SashimiModel& m);
std::string stability_csv(const std::vector<StabilityRow>& rows);

// Full command line without the program name, e.g. {"hippo", "verify", ...}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sashimi::cli
