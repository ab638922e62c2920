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

#include <filesystem>

#include "sedlab/scene.hpp"

namespace sedlab {

/// Writes IEEE float32 little-endian WAV (format tag 3), interleaved.
void write_wav(const std::filesystem::path& path, const MultichannelAudio& audio);

/// Reads float32 or 16-bit PCM WAV. Throws DataError on malformed files.
MultichannelAudio read_wav(const std::filesystem::path& path);

}  // namespace sedlab
