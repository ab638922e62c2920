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

#include "sedlab/wav.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace sedlab {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV io assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated WAV header");
  return v;
}

}  // namespace

void write_wav(const std::filesystem::path& path, const MultichannelAudio& audio) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  const auto channels = static_cast<std::uint16_t>(audio.channels);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(audio.frames * audio.channels * 4);
  os.write("RIFF", 4);
  put<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put<std::uint32_t>(os, 16);
  put<std::uint16_t>(os, 3);
  put<std::uint16_t>(os, channels);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(audio.sample_rate));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(audio.sample_rate) * channels * 4);
  put<std::uint16_t>(os, static_cast<std::uint16_t>(channels * 4));
  put<std::uint16_t>(os, 32);
  os.write("data", 4);
  put<std::uint32_t>(os, data_bytes);
  std::vector<float> interleaved(audio.frames * audio.channels);
  for (std::size_t n = 0; n < audio.frames; ++n)
    for (std::size_t c = 0; c < audio.channels; ++c)
      interleaved[n * audio.channels + c] = audio.channel(c)[n];
  os.write(reinterpret_cast<const char*>(interleaved.data()),
           static_cast<std::streamsize>(interleaved.size() * sizeof(float)));
  if (!os) throw DataError("failed writing " + path.string());
}

MultichannelAudio read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0) throw DataError(path.string() + ": not a RIFF file");
  get<std::uint32_t>(is);
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "WAVE", 4) != 0) throw DataError(path.string() + ": not a WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (is.read(tag, 4)) {
    auto size = get<std::uint32_t>(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = get<std::uint16_t>(is);
      channels = get<std::uint16_t>(is);
      rate = get<std::uint32_t>(is);
      get<std::uint32_t>(is);
      get<std::uint16_t>(is);
      bits = get<std::uint16_t>(is);
      is.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt || channels == 0) throw DataError(path.string() + ": data before fmt");
      const bool is_float = format == 3 && bits == 32;
      const bool is_pcm16 = format == 1 && bits == 16;
      if (!is_float && !is_pcm16) throw DataError(path.string() + ": unsupported sample format");
      const std::size_t bytes_per = bits / 8;
      const std::size_t frames = size / (bytes_per * channels);
      MultichannelAudio audio(channels, frames, static_cast<int>(rate));
      std::vector<char> raw(frames * channels * bytes_per);
      if (!is.read(raw.data(), static_cast<std::streamsize>(raw.size())))
        throw DataError(path.string() + ": truncated data chunk");
      for (std::size_t n = 0; n < frames; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
          const char* p = raw.data() + (n * channels + c) * bytes_per;
          float v;
          if (is_float) {
            std::memcpy(&v, p, 4);
          } else {
            std::int16_t s;
            std::memcpy(&s, p, 2);
            v = static_cast<float>(s) / 32768.0f;
          }
          audio.channel(c)[n] = v;
        }
      }
      return audio;
    } else {
      is.seekg(size + (size & 1u), std::ios::cur);
    }
  }
  throw DataError(path.string() + ": no data chunk");
}

}  // namespace sedlab
