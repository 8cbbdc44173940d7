#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace mer {

inline constexpr std::size_t kNumEmotions = 6;

// Fixed index order used by every tensor, CSV column and wire format.
inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "anger", "disgust", "fear", "happiness", "sadness", "surprise"};

using EmotionVector = std::array<double, kNumEmotions>;

}  // namespace mer
