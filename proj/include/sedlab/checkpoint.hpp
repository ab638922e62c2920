// Copyright 2026 The sedlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sedlab/crnn.hpp"
#include "sedlab/optim.hpp"

namespace sedlab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedBlob {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

/// Layout, little-endian:
///   "SEDLCKPT" | u32 version | u64 config hash
///   string model description | string norm-stats reference | u64 adam steps
///   u32 meta count, (string key, string value)*
///   u32 blob count, (u32 name length, name, u32 rank, u64 dims[rank], f32 data)*
/// Strings are u32 length + bytes. Blobs hold parameters under their own
/// names, BN buffers, and Adam moments as "adam.m.<name>" / "adam.v.<name>".
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::string model;
  std::string norm_stats;
  std::uint64_t adam_steps = 0;
  std::map<std::string, std::string> meta;
  std::vector<NamedBlob> blobs;

  const NamedBlob* find(const std::string& name) const;
};

Checkpoint make_checkpoint(Crnn<float>& model, const Adam<float>* adam, std::uint64_t config_hash,
                           const std::string& norm_stats_ref);

/// Restores parameters and buffers (and Adam state when `adam` is given).
/// Throws DataError when the model description or any blob shape differs.
void restore_checkpoint(const Checkpoint& ckpt, Crnn<float>& model, Adam<float>* adam = nullptr);

/// Written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sedlab
