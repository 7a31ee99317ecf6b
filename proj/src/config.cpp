#include "sashimi/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace sashimi::config {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer");
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer");
  return out;
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("expected a number");
  return d;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true or false");
}

// "period:amplitude[:phase],..."
std::vector<data::Tone> to_tones(const std::string& v) {
  std::vector<data::Tone> tones;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::stringstream is(trim(item));
    std::string part;
    std::vector<double> f;
    while (std::getline(is, part, ':')) f.push_back(to_double(trim(part)));
    if (f.size() < 2 || f.size() > 3) throw std::invalid_argument("tone must be period:amplitude[:phase]");
    tones.push_back(data::Tone{f[0], f[1], f.size() == 3 ? f[2] : 0.0});
  }
  if (tones.empty()) throw std::invalid_argument("at least one tone required");
  return tones;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> m{
      {"model.d_model", [](RunConfig& c, const std::string& v) { c.model.d_model = to_size(v); }},
      {"model.n_tiers", [](RunConfig& c, const std::string& v) { c.model.n_tiers = to_size(v); }},
      {"model.pool", [](RunConfig& c, const std::string& v) { c.model.pool = to_size(v); }},
      {"model.expand", [](RunConfig& c, const std::string& v) { c.model.expand = to_size(v); }},
      {"model.down_layers", [](RunConfig& c, const std::string& v) { c.model.down_layers = to_size(v); }},
      {"model.up_layers", [](RunConfig& c, const std::string& v) { c.model.up_layers = to_size(v); }},
      {"model.center_layers", [](RunConfig& c, const std::string& v) { c.model.center_layers = to_size(v); }},
      {"model.ffn_expand", [](RunConfig& c, const std::string& v) { c.model.ffn_expand = to_size(v); }},
      {"model.state_size", [](RunConfig& c, const std::string& v) { c.model.state_size = to_size(v); }},
      {"model.ssm_mode", [](RunConfig& c, const std::string& v) { c.model.ssm_mode = ssm::parse_mode(v); }},
      {"model.nonlinearity",
       [](RunConfig& c, const std::string& v) { c.model.nonlinearity = model::parse_nonlinearity(v); }},
      {"model.lambda_tying", [](RunConfig& c, const std::string& v) { c.model.lambda_tying = model::parse_tying(v); }},
      {"model.bidirectional", [](RunConfig& c, const std::string& v) { c.model.bidirectional = to_bool(v); }},
      {"model.dt_min", [](RunConfig& c, const std::string& v) { c.model.dt_min = to_double(v); }},
      {"model.dt_max", [](RunConfig& c, const std::string& v) { c.model.dt_max = to_double(v); }},
      {"train.lr", [](RunConfig& c, const std::string& v) { c.train.lr = to_double(v); }},
      {"train.optimizer", [](RunConfig& c, const std::string& v) { c.train.optimizer = train::parse_optimizer(v); }},
      {"train.steps", [](RunConfig& c, const std::string& v) { c.train.steps = to_size(v); }},
      {"train.batch", [](RunConfig& c, const std::string& v) { c.train.batch = to_size(v); }},
      {"train.seq_len", [](RunConfig& c, const std::string& v) { c.train.seq_len = to_size(v); }},
      {"train.trainable", [](RunConfig& c, const std::string& v) { c.train.trainable = train::parse_trainable(v); }},
      {"quant.scheme", [](RunConfig& c, const std::string& v) { c.quant.scheme = quant::parse_scheme(v); }},
      {"quant.mu", [](RunConfig& c, const std::string& v) { c.quant.mu = to_double(v); }},
      {"data.kind", [](RunConfig& c, const std::string& v) { c.data.kind = data::parse_kind(v); }},
      {"data.length", [](RunConfig& c, const std::string& v) { c.data.length = to_size(v); }},
      {"data.tones", [](RunConfig& c, const std::string& v) { c.data.tones = to_tones(v); }},
      {"data.period", [](RunConfig& c, const std::string& v) { c.data.period = to_size(v); }},
      {"data.amplitude", [](RunConfig& c, const std::string& v) { c.data.amplitude = to_double(v); }},
      {"data.phi", [](RunConfig& c, const std::string& v) { c.data.phi = to_double(v); }},
      {"data.sigma", [](RunConfig& c, const std::string& v) { c.data.sigma = to_double(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); }},
      {"log_every", [](RunConfig& c, const std::string& v) { c.log_every = to_size(v); }},
      {"out", [](RunConfig& c, const std::string& v) { c.out = v; }},
  };
  return m;
}

}  // namespace

RunConfig parse(const std::string& text) {
  RunConfig c;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      it->second(c, value);
    } catch (const std::exception& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + key + ": " + e.what());
    }
  }
  try {
    c.model.validate();
    c.train.validate(c.model);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

}  // namespace sashimi::config
