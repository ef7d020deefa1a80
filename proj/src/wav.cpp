#include "inconvad/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace inconvad {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

void Waveform::validate() const {
  if (samples.empty()) throw std::invalid_argument("waveform is empty");
  if (sample_rate_hz < 8000) throw std::invalid_argument("sample rate must be at least 8000 Hz");
  for (double s : samples)
    if (!std::isfinite(s)) throw std::invalid_argument("waveform contains non-finite samples");
}

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open wav file " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error(path + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw std::runtime_error(path + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw std::runtime_error(path + ": short fmt chunk");
      format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      if (format == kFormatExtensible && size >= 26) format = le16(bytes.data() + body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (format == 0) throw std::runtime_error(path + ": missing fmt chunk");
  if (!data) throw std::runtime_error(path + ": missing data chunk");
  if (channels != 1) throw std::runtime_error(path + ": expected mono audio, found " + std::to_string(channels) + " channels");

  Waveform w;
  w.sample_rate_hz = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_size / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = static_cast<std::int16_t>(le16(data + 2 * i));
      w.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_size / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t u = le32(data + 4 * i);
      float f;
      std::memcpy(&f, &u, 4);
      w.samples[i] = f;
    }
  } else {
    throw std::runtime_error(path + ": unsupported sample format (need 16-bit PCM or 32-bit float)");
  }
  w.validate();
  return w;
}

void write_wav_pcm16(const std::string& path, const Waveform& w) {
  w.validate();
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  put32(out, static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  put16(out, 2);
  put16(out, 16);
  out += "data";
  put32(out, 2 * n);
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lrint(std::clamp(c * 32768.0, -32768.0, 32767.0)));
    put16(out, static_cast<std::uint16_t>(q));
  }
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace inconvad
