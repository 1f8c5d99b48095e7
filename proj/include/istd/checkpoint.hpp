#pragma once

#include <map>
#include <string>
#include <vector>

#include "istd/optim.hpp"

namespace istd {

// Checkpoint binary: magic "HNT1", u32 version, u32 config-blob length +
// UTF-8 config text, u32 tensor count, then per tensor u16 name length,
// name, u8 rank, u32 dims, raw 32-bit little-endian floats. Optimizer state
// rides along as "opt/"-prefixed tensors.

struct NamedTensor {
  std::string name;
  Tensor4f t;
};

struct CheckpointData {
  uint32_t version = 0;
  std::string config_blob;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamStore<float>& ps,
                     const AdamW<float>* opt, const std::string& config_blob);

CheckpointData load_checkpoint(const std::string& path);

// Copies tensors back into a freshly built model/optimizer, matching by
// name and validating dims.
void apply_checkpoint(const CheckpointData& data, ParamStore<float>& ps,
                      AdamW<float>* opt);

// key=value blob helpers (one pair per line, '#' comments ignored)
std::map<std::string, std::string> parse_kv(const std::string& blob);

}  // namespace istd
