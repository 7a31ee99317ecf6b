#include "sashimi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "sashimi/rng.hpp"

namespace sashimi::ckpt {
namespace {

using nlohmann::json;

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CorruptCheckpointError("checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  return v;
}

json config_to_json(const model::ModelConfig& c) {
  return json{{"d_model", c.d_model},
              {"n_tiers", c.n_tiers},
              {"pool", c.pool},
              {"expand", c.expand},
              {"down_layers", c.down_layers},
              {"up_layers", c.up_layers},
              {"center_layers", c.center_layers},
              {"ffn_expand", c.ffn_expand},
              {"state_size", c.state_size},
              {"ssm_mode", ssm::mode_name(c.ssm_mode)},
              {"nonlinearity", model::nonlinearity_name(c.nonlinearity)},
              {"lambda_tying", model::tying_name(c.lambda_tying)},
              {"bidirectional", c.bidirectional},
              {"dt_min", c.dt_min},
              {"dt_max", c.dt_max},
              {"vocab", c.vocab}};
}

model::ModelConfig config_from_json(const json& j) {
  model::ModelConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_tiers = j.at("n_tiers").get<std::size_t>();
  c.pool = j.at("pool").get<std::size_t>();
  c.expand = j.at("expand").get<std::size_t>();
  c.down_layers = j.at("down_layers").get<std::size_t>();
  c.up_layers = j.at("up_layers").get<std::size_t>();
  c.center_layers = j.at("center_layers").get<std::size_t>();
  c.ffn_expand = j.at("ffn_expand").get<std::size_t>();
  c.state_size = j.at("state_size").get<std::size_t>();
  c.ssm_mode = ssm::parse_mode(j.at("ssm_mode").get<std::string>());
  c.nonlinearity = model::parse_nonlinearity(j.at("nonlinearity").get<std::string>());
  c.lambda_tying = model::parse_tying(j.at("lambda_tying").get<std::string>());
  c.bidirectional = j.at("bidirectional").get<bool>();
  c.dt_min = j.at("dt_min").get<double>();
  c.dt_max = j.at("dt_max").get<double>();
  c.vocab = j.at("vocab").get<std::size_t>();
  return c;
}

}  // namespace

std::string serialize(const Checkpoint& c) {
  json dir = json::array();
  std::uint64_t offset = 0;
  for (const auto& p : c.model.params()) {
    const std::uint64_t len = p.value.numel() * sizeof(double);
    dir.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"dtype", "f64le"}, {"offset", offset}, {"length", len}});
    offset += len;
  }
  const json manifest{{"model", config_to_json(c.model.config())},
                      {"rng", std::string(Rng::kAlgorithm)},
                      {"quant", {{"scheme", quant::scheme_name(c.quant.scheme)}, {"bits", c.quant.bits}, {"mu", c.quant.mu}}},
                      {"tensors", dir}};
  const std::string text = manifest.dump();

  std::string out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& p : c.model.params()) {
    for (double v : p.value.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint deserialize(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw CorruptCheckpointError("bad checkpoint magic");
  std::size_t pos = 4;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kVersion) throw UnsupportedVersionError(version);
  const auto mlen = get_le<std::uint64_t>(bytes, pos);
  if (mlen > bytes.size() - pos) throw CorruptCheckpointError("manifest length exceeds file");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(pos, mlen));
  } catch (const json::exception& e) {
    throw CorruptCheckpointError(std::string("manifest: ") + e.what());
  }
  pos += mlen;
  const std::size_t payload = pos;

  try {
    if (manifest.at("rng").get<std::string>() != Rng::kAlgorithm) {
      throw CorruptCheckpointError("checkpoint written with rng '" + manifest.at("rng").get<std::string>() + "'");
    }
    Checkpoint c;
    const auto& q = manifest.at("quant");
    c.quant.scheme = quant::parse_scheme(q.at("scheme").get<std::string>());
    c.quant.bits = q.at("bits").get<int>();
    c.quant.mu = q.at("mu").get<double>();
    Rng scratch(0);
    c.model = model::SashimiModel(config_from_json(manifest.at("model")), scratch);
    const auto& dir = manifest.at("tensors");
    if (dir.size() != c.model.params().size()) throw CorruptCheckpointError("tensor count does not match the config");
    for (const auto& entry : dir) {
      Tensor& t = c.model.tensor(entry.at("name").get<std::string>());
      if (entry.at("shape").get<Shape>() != t.shape()) {
        throw CorruptCheckpointError("shape mismatch for " + entry.at("name").get<std::string>());
      }
      if (entry.at("dtype").get<std::string>() != "f64le") throw CorruptCheckpointError("unsupported dtype");
      const auto off = entry.at("offset").get<std::uint64_t>();
      const auto len = entry.at("length").get<std::uint64_t>();
      if (len != t.numel() * sizeof(double) || off > bytes.size() - payload || len > bytes.size() - payload - off) {
        throw CorruptCheckpointError("bad extent for " + entry.at("name").get<std::string>());
      }
      std::size_t p = payload + off;
      for (auto& v : t.data()) v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, p));
    }
    return c;
  } catch (const json::exception& e) {
    throw CorruptCheckpointError(std::string("manifest: ") + e.what());
  }
}

void save(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize(c);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

}  // namespace sashimi::ckpt
