#include "inconvad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace inconvad::checkpoint {

namespace {

constexpr const char* kMagic = "inconvad-checkpoint";

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CheckpointError("truncated checkpoint");
  return v;
}

std::string read_line(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw CheckpointError("truncated checkpoint header");
  return line;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void save(const std::string& path, const KeyValues& config, const ag::ParamList& params) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write checkpoint: " + path);
  os << kMagic << "\nversion=1\n";
  for (const auto& [k, v] : config.entries()) {
    if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos)
      throw CheckpointError("config entries must be single-line");
    os << k << '=' << v << '\n';
  }
  os << "tensors=" << params.size() << "\n\n";
  for (const auto* p : params) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::uint32_t>(os, 2);
    put<std::uint64_t>(os, p->value.rows());
    put<std::uint64_t>(os, p->value.cols());
    for (double v : p->value.flat()) put<float>(os, static_cast<float>(v));
  }
  if (!os) throw CheckpointError("failed writing checkpoint: " + path);
}

Checkpoint read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  if (read_line(is) != kMagic) throw CheckpointError("not a checkpoint file: " + path);
  if (read_line(is) != "version=1") throw CheckpointError("unsupported checkpoint version");
  Checkpoint ck;
  std::size_t n_tensors = 0;
  bool have_count = false;
  for (;;) {
    const std::string line = read_line(is);
    if (line.empty()) break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed checkpoint header line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "tensors") {
      n_tensors = static_cast<std::size_t>(std::stoull(value));
      have_count = true;
    } else {
      ck.config.set(key, value);
    }
  }
  if (!have_count) throw CheckpointError("checkpoint header lacks tensors=");
  for (std::size_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    const auto len = get<std::uint32_t>(is);
    if (len > (1u << 16)) throw CheckpointError("implausible tensor name length");
    t.name.resize(len);
    if (!is.read(t.name.data(), len)) throw CheckpointError("truncated checkpoint");
    if (get<std::uint32_t>(is) != 2) throw CheckpointError("unsupported tensor rank in " + t.name);
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    if (rows * cols > (std::uint64_t{1} << 32)) throw CheckpointError("implausible tensor size in " + t.name);
    t.value = Matrix(rows, cols);
    for (double& v : t.value.flat()) v = static_cast<double>(get<float>(is));
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

void load_parameters(const Checkpoint& ckpt, const ag::ParamList& params) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
  if (by_name.size() != params.size())
    throw CheckpointError("checkpoint holds " + std::to_string(by_name.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  for (auto* p : params) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks tensor " + p->name);
    if (!it->second->value.same_shape(p->value)) throw CheckpointError("shape mismatch for tensor " + p->name);
  }
  for (auto* p : params) p->value = by_name[p->name]->value;
}

std::uint64_t checksum(const ag::ParamList& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto* p : params) {
    mix(p->name.data(), p->name.size());
    for (double v : p->value.flat()) mix(&v, sizeof v);
  }
  return h;
}

}  // namespace inconvad::checkpoint
