#pragma once

#include <cstdint>
#include <vector>

namespace rfgen {

enum class TissueClass : std::uint8_t { Background = 0, Tissue = 1, CSF = 2 };

struct SegmentationMask {
  int width = 0;
  int height = 0;
  std::vector<TissueClass> labels;

  SegmentationMask() = default;
  SegmentationMask(int w, int h, TissueClass fill = TissueClass::Background)
      : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}

  TissueClass& operator()(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  TissueClass operator()(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const SegmentationMask&) const = default;
};

}  // namespace rfgen
