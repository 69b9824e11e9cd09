#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "archsim/tensor.hpp"

namespace archsim {

enum class Split : std::uint8_t { kTrain = 0, kEval = 1 };

/// Labeled image set, NHWC in [0,1], with per-example split tags.
struct Dataset {
  std::string name;
  Tensor images;  // (N, H, W, C)
  std::vector<int> labels;
  std::vector<Split> split;
  std::size_t num_classes = 0;
  std::string provenance;  // JSON text: idx-file path or synthetic recipe

  std::size_t size() const { return labels.size(); }
  std::size_t height() const { return images.dim(1); }
  std::size_t width() const { return images.dim(2); }
  std::size_t channels() const { return images.dim(3); }

  std::vector<std::size_t> indices(Split s) const;
  /// New dataset holding only the given rows (split tags carried along).
  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset select(Split s) const;

  /// Checks label range, shapes, [0,1] pixel range and finiteness.
  void validate() const;
};

/// Bilinear resize of an (N,H,W,C) batch, half-pixel centers, no
/// antialiasing (same convention as align_corners=false).
Tensor resize_bilinear(const Tensor& batch, std::size_t height, std::size_t width);

}  // namespace archsim
