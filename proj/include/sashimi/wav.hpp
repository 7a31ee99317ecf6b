#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sashimi::wav {

inline constexpr std::uint32_t kSampleRate = 16000;

// Clamp to [-1, 1], scale by 32767, round half away from zero.
std::int16_t to_pcm16(double x);
double from_pcm16(std::int16_t s);

// PCM16 mono 16 kHz RIFF/WAVE.
std::string encode(std::span<const std::int16_t> samples);
std::vector<std::int16_t> decode(const std::string& bytes);

void write(const std::filesystem::path& path, std::span<const std::int16_t> samples);
std::vector<std::int16_t> read(const std::filesystem::path& path);

}  // namespace sashimi::wav
