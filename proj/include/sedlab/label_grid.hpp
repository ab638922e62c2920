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

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "sedlab/common.hpp"

namespace sedlab {

/// Frame-by-class activity matrix at 100 ms resolution, row-major
/// (frame-major). Holds binary targets, soft (mixup) targets and model
/// probabilities alike.
struct LabelGrid {
  std::size_t frames = 0;
  std::size_t classes = 0;
  std::vector<float> values;

  LabelGrid() = default;
  LabelGrid(std::size_t t, std::size_t l, float fill = 0.0f)
      : frames(t), classes(l), values(t * l, fill) {}

  float& at(std::size_t t, std::size_t l) { return values[t * classes + l]; }
  float at(std::size_t t, std::size_t l) const { return values[t * classes + l]; }

  std::span<const float> row(std::size_t t) const {
    return {values.data() + t * classes, classes};
  }

  bool same_shape(const LabelGrid& o) const {
    return frames == o.frames && classes == o.classes;
  }

  /// Copies frames [begin, begin + count).
  LabelGrid slice(std::size_t begin, std::size_t count) const {
    if (begin + count > frames) throw std::out_of_range("LabelGrid::slice");
    LabelGrid out(count, classes);
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(begin * classes),
              values.begin() + static_cast<std::ptrdiff_t>((begin + count) * classes),
              out.values.begin());
    return out;
  }

  friend bool operator==(const LabelGrid&, const LabelGrid&) = default;
};

}  // namespace sedlab
