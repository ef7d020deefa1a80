#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "inconvad/types.hpp"

// Tab-separated pair manifests with a header row:
//   id split speaker wav tokens v a d y
// tokens are space-joined; missing labels are written as `-`. Relative wav
// paths are resolved against the manifest's directory.
namespace inconvad::manifest {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Record {
  std::string id;
  std::string split;
  std::string speaker;
  std::string wav;
  std::vector<std::string> tokens;
  std::optional<VadVector> vad;
  std::optional<int> y;
};

std::vector<Record> parse(const std::string& text);
std::string format(const std::vector<Record>& records);

// read() returns wav paths resolved against the manifest directory.
std::vector<Record> read(const std::string& path);
void write(const std::string& path, const std::vector<Record>& records);

}  // namespace inconvad::manifest
