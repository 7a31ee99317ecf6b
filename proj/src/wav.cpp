#include "sashimi/wav.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sashimi/tensor.hpp"

namespace sashimi::wav {
namespace {

void put16(std::string& o, std::uint16_t v) {
  o.push_back(static_cast<char>(v & 0xff));
  o.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get(const std::string& b, std::size_t pos, int n) {
  if (pos + static_cast<std::size_t>(n) > b.size()) throw std::runtime_error("wav: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::int16_t to_pcm16(double x) {
  if (std::isnan(x)) throw std::domain_error("wav: NaN sample");
  return static_cast<std::int16_t>(round_half_away(std::clamp(x, -1.0, 1.0) * 32767.0));
}

double from_pcm16(std::int16_t s) { return static_cast<double>(s) / 32767.0; }

std::string encode(std::span<const std::int16_t> samples) {
  const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
  std::string o = "RIFF";
  put32(o, 36 + data_len);
  o += "WAVEfmt ";
  put32(o, 16);
  put16(o, 1);  // PCM
  put16(o, 1);  // mono
  put32(o, kSampleRate);
  put32(o, kSampleRate * 2);
  put16(o, 2);
  put16(o, 16);
  o += "data";
  put32(o, data_len);
  for (auto s : samples) put16(o, static_cast<std::uint16_t>(s));
  return o;
}

std::vector<std::int16_t> decode(const std::string& b) {
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0) {
    throw std::runtime_error("wav: not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::string id = b.substr(pos, 4);
    const std::uint32_t len = get(b, pos + 4, 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (get(b, body, 2) != 1 || get(b, body + 2, 2) != 1 || get(b, body + 14, 2) != 16) {
        throw std::runtime_error("wav: only PCM16 mono is supported");
      }
      if (get(b, body + 4, 4) != kSampleRate) throw std::runtime_error("wav: sample rate must be 16000 Hz");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw std::runtime_error("wav: data chunk before fmt chunk");
      if (body + len > b.size() || len % 2 != 0) throw std::runtime_error("wav: data length does not match payload");
      std::vector<std::int16_t> out(len / 2);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::int16_t>(get(b, body + 2 * i, 2));
      return out;
    }
    pos = body + len + (len & 1);
  }
  throw std::runtime_error("wav: no data chunk");
}

void write(const std::filesystem::path& path, std::span<const std::int16_t> samples) {
  std::ofstream f(path, std::ios::binary);
  const std::string b = encode(samples);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

std::vector<std::int16_t> read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode(ss.str());
}

}  // namespace sashimi::wav
