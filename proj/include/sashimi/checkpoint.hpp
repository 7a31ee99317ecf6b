#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "sashimi/model.hpp"
#include "sashimi/quant.hpp"

namespace sashimi::ckpt {

inline constexpr char kMagic[4] = {'S', 'S', 'M', 'C'};
inline constexpr std::uint32_t kVersion = 1;

class UnsupportedVersionError : public std::runtime_error {
 public:
  explicit UnsupportedVersionError(std::uint32_t v)
      : std::runtime_error("unsupported checkpoint version " + std::to_string(v)), version(v) {}
  std::uint32_t version;
};

class CorruptCheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  model::SashimiModel model;
  quant::QuantSpec quant;
};

// Layout: "SSMC", u32 version, u64 manifest length, JSON manifest, then every
// tensor as little-endian f64 in directory order. Integers are little-endian.
std::string serialize(const Checkpoint& c);
Checkpoint deserialize(const std::string& bytes);

void save(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

}  // namespace sashimi::ckpt
