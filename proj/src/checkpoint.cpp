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

#include "sedlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "sedlab/common.hpp"

namespace sedlab {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'E', 'D', 'L', 'C', 'K', 'P', 'T'};

template <typename U>
void put(std::ofstream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

void put_string(std::ofstream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw DataError("cannot open checkpoint " + path.string());
  }

  template <typename U>
  U get() {
    U v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(U));
    if (!in_) fail("truncated");
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 20)) fail("implausible string length");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) fail("truncated");
    return s;
  }

  void read(void* dst, std::size_t bytes) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (!in_) fail("truncated");
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  [[noreturn]] void fail(const std::string& why) {
    throw DataError("checkpoint " + path_.string() + ": " + why);
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

NamedBlob to_blob(const std::string& name, const Tensor<float>& t) {
  return {name, t.shape, t.data};
}

void from_blob(const Checkpoint& ckpt, const std::string& name, Tensor<float>& dst) {
  const NamedBlob* b = ckpt.find(name);
  if (!b) throw DataError("checkpoint is missing blob '" + name + "'");
  if (b->shape != dst.shape) {
    throw DataError("checkpoint blob '" + name + "' has shape " + shape_string(b->shape) + ", model expects " +
                    shape_string(dst.shape));
  }
  dst.data = b->data;
}

}  // namespace

const NamedBlob* Checkpoint::find(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return &b;
  return nullptr;
}

Checkpoint make_checkpoint(Crnn<float>& model, const Adam<float>* adam, std::uint64_t config_hash,
                           const std::string& norm_stats_ref) {
  Checkpoint c;
  c.config_hash = config_hash;
  c.model = model.config().describe();
  c.norm_stats = norm_stats_ref;
  auto params = model.params();
  for (auto* p : params) c.blobs.push_back(to_blob(p->name, p->value));
  for (auto& [name, t] : model.buffers()) c.blobs.push_back(to_blob(name, *t));
  if (adam) {
    c.adam_steps = adam->steps();
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.blobs.push_back(to_blob("adam.m." + params[i]->name, adam->first_moments()[i]));
      c.blobs.push_back(to_blob("adam.v." + params[i]->name, adam->second_moments()[i]));
    }
  }
  return c;
}

void restore_checkpoint(const Checkpoint& ckpt, Crnn<float>& model, Adam<float>* adam) {
  if (ckpt.model != model.config().describe()) {
    throw DataError("checkpoint model '" + ckpt.model + "' does not match '" + model.config().describe() + "'");
  }
  auto params = model.params();
  for (auto* p : params) from_blob(ckpt, p->name, p->value);
  for (auto& [name, t] : model.buffers()) from_blob(ckpt, name, *t);
  if (adam) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      from_blob(ckpt, "adam.m." + params[i]->name, adam->first_moments()[i]);
      from_blob(ckpt, "adam.v." + params[i]->name, adam->second_moments()[i]);
    }
    adam->set_steps(ckpt.adam_steps);
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, ckpt.config_hash);
    put_string(out, ckpt.model);
    put_string(out, ckpt.norm_stats);
    put<std::uint64_t>(out, ckpt.adam_steps);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
      put_string(out, k);
      put_string(out, v);
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.blobs.size()));
    for (const auto& b : ckpt.blobs) {
      put_string(out, b.name);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(b.shape.size()));
      for (auto d : b.shape) put<std::uint64_t>(out, d);
      out.write(reinterpret_cast<const char*>(b.data.data()),
                static_cast<std::streamsize>(b.data.size() * sizeof(float)));
    }
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) r.fail("bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  Checkpoint c;
  c.config_hash = r.get<std::uint64_t>();
  c.model = r.get_string();
  c.norm_stats = r.get_string();
  c.adam_steps = r.get<std::uint64_t>();
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.get_string();
    c.meta[k] = r.get_string();
  }
  const auto n_blobs = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_blobs; ++i) {
    NamedBlob b;
    b.name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) r.fail("implausible rank for '" + b.name + "'");
    std::size_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      b.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
      count *= b.shape.back();
    }
    if (count > (std::size_t{1} << 32)) r.fail("implausible blob size for '" + b.name + "'");
    b.data.resize(count);
    r.read(b.data.data(), count * sizeof(float));
    c.blobs.push_back(std::move(b));
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return c;
}

}  // namespace sedlab
