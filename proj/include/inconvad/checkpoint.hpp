#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "inconvad/autograd.hpp"
#include "inconvad/config.hpp"

// Checkpoint file: a text header
//
//   inconvad-checkpoint
//   version=1
//   <config key=value lines>
//   tensors=N
//   <blank line>
//
// followed by N binary records (u32 name length, name bytes, u32 rank = 2,
// u64 rows, u64 cols, rows*cols little-endian fp32 values).
namespace inconvad::checkpoint {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct Checkpoint {
  KeyValues config;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

void save(const std::string& path, const KeyValues& config, const ag::ParamList& params);
Checkpoint read(const std::string& path);

// Copies every tensor into the parameter of the same name. Missing names,
// unknown names and shape mismatches throw.
void load_parameters(const Checkpoint& ckpt, const ag::ParamList& params);

// Order-sensitive FNV-1a digest of names and exact fp64 bit patterns.
std::uint64_t checksum(const ag::ParamList& params);

}  // namespace inconvad::checkpoint
