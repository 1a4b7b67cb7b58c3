#pragma once

#include "lvcvc/autodiff.hpp"
#include "lvcvc/rng.hpp"

namespace lvcvc::ad {

inline Mat normal_init(int rows, int cols, float stddev, Rng& rng) {
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i)
      m(i, j) = stddev * static_cast<float>(rng.normal());
  return m;
}

// Convolution / linear weight with std 1/sqrt(fan_in), scaled by gain.
inline Mat fan_in_init(int rows, int fan_in, Rng& rng, float gain = 1.0f) {
  return normal_init(rows, fan_in, gain / std::sqrt(static_cast<float>(fan_in)), rng);
}

}  // namespace lvcvc::ad
