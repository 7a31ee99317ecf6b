#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "sashimi/data.hpp"
#include "sashimi/model.hpp"
#include "sashimi/quant.hpp"
#include "sashimi/train.hpp"

namespace sashimi::config {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  quant::QuantSpec quant;
  data::SyntheticSpec data;
  std::uint64_t seed = 0;
  std::size_t log_every = 10;
  std::string out = "model.ssmc";
};

// One `key = value` per line; '#' starts a comment. Keys are grouped as
// model.*, train.*, quant.*, data.* plus seed, log_every and out. Unknown keys
// and malformed values throw ConfigError naming the line.
RunConfig parse(const std::string& text);
RunConfig load(const std::filesystem::path& path);

}  // namespace sashimi::config
