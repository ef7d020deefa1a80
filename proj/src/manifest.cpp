#include "inconvad/manifest.hpp"

#include <filesystem>
#include <sstream>

#include "inconvad/config.hpp"

namespace inconvad::manifest {

namespace {

constexpr const char* kHeader = "id\tsplit\tspeaker\twav\ttokens\tv\ta\td\ty";

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

std::vector<Record> parse(const std::string& text) {
  std::vector<Record> out;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("id\t", 0) == 0) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 9)
      throw ManifestError("manifest line " + std::to_string(line_no) + ": expected 9 columns, got " +
                          std::to_string(cols.size()));
    Record r;
    r.id = cols[0];
    r.split = cols[1];
    r.speaker = cols[2];
    r.wav = cols[3];
    r.tokens = split_whitespace(cols[4]);
    if (r.id.empty()) throw ManifestError("manifest line " + std::to_string(line_no) + ": empty id");
    const bool any = cols[5] != "-" || cols[6] != "-" || cols[7] != "-";
    const bool all = cols[5] != "-" && cols[6] != "-" && cols[7] != "-";
    if (any != all) throw ManifestError("manifest record " + r.id + ": partial VAD label");
    try {
      if (all) r.vad = VadVector{parse_double(cols[5], "v"), parse_double(cols[6], "a"), parse_double(cols[7], "d")};
      if (cols[8] != "-") {
        const double y = parse_double(cols[8], "y");
        if (y != 0.0 && y != 1.0) throw ConfigError("y must be 0 or 1");
        r.y = static_cast<int>(y);
      }
    } catch (const ConfigError& e) {
      throw ManifestError("manifest record " + r.id + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string format(const std::vector<Record>& records) {
  std::ostringstream os;
  os << kHeader << '\n';
  for (const auto& r : records) {
    os << r.id << '\t' << r.split << '\t' << r.speaker << '\t' << r.wav << '\t' << join(r.tokens) << '\t';
    if (r.vad)
      os << format_double(r.vad->v) << '\t' << format_double(r.vad->a) << '\t' << format_double(r.vad->d);
    else
      os << "-\t-\t-";
    os << '\t' << (r.y ? std::to_string(*r.y) : std::string("-")) << '\n';
  }
  return os.str();
}

std::vector<Record> read(const std::string& path) {
  auto records = parse(read_text_file(path));
  const auto dir = std::filesystem::path(path).parent_path();
  for (auto& r : records) {
    const std::filesystem::path w(r.wav);
    if (!r.wav.empty() && w.is_relative()) r.wav = (dir / w).lexically_normal().string();
  }
  return records;
}

void write(const std::string& path, const std::vector<Record>& records) { write_text_file(path, format(records)); }

}  // namespace inconvad::manifest
