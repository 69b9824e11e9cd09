#include "archsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "archsim/errors.hpp"

namespace archsim {

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset d;
  d.name = name;
  d.num_classes = num_classes;
  d.provenance = provenance;
  d.images = images.gather_rows(rows);
  d.labels.reserve(rows.size());
  d.split.reserve(rows.size());
  for (auto r : rows) {
    d.labels.push_back(labels.at(r));
    d.split.push_back(split.at(r));
  }
  return d;
}

Dataset Dataset::select(Split s) const {
  const auto rows = indices(s);
  if (rows.empty()) throw ValidationError("dataset '" + name + "' has no examples in the requested split");
  return subset(rows);
}

void Dataset::validate() const {
  if (labels.empty()) throw ValidationError("dataset '" + name + "' is empty");
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw ShapeError(-1, "dataset images " + shape_string(images.shape()) + " do not match " +
                             std::to_string(labels.size()) + " labels");
  }
  if (split.size() != labels.size()) throw ValidationError("split tags do not match labels");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) throw ValidationError("label out of range");
  for (float v : images.data()) {
    if (!std::isfinite(v)) throw NonFiniteError(-1, "dataset pixel is not finite");
    if (v < 0.0f || v > 1.0f) throw ValidationError("dataset pixel outside [0,1]");
  }
}

Tensor resize_bilinear(const Tensor& batch, std::size_t height, std::size_t width) {
  if (batch.rank() != 4) throw ShapeError(-1, "resize expects (N,H,W,C), got " + shape_string(batch.shape()));
  const std::size_t n = batch.dim(0), h = batch.dim(1), w = batch.dim(2), c = batch.dim(3);
  if (h == height && w == width) return batch;
  Tensor out({n, height, width, c});
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  auto coord = [](double dst, double scale, std::size_t limit, std::size_t& i0, std::size_t& i1, float& frac) {
    double src = (dst + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    i0 = std::min(static_cast<std::size_t>(std::floor(src)), limit - 1);
    i1 = std::min(i0 + 1, limit - 1);
    frac = static_cast<float>(src - static_cast<double>(i0));
  };
  for (std::size_t oy = 0; oy < height; ++oy) {
    std::size_t y0, y1;
    float fy;
    coord(static_cast<double>(oy), sy, h, y0, y1, fy);
    for (std::size_t ox = 0; ox < width; ++ox) {
      std::size_t x0, x1;
      float fx;
      coord(static_cast<double>(ox), sx, w, x0, x1, fx);
      for (std::size_t b = 0; b < n; ++b) {
        const float* p00 = batch.raw() + ((b * h + y0) * w + x0) * c;
        const float* p01 = batch.raw() + ((b * h + y0) * w + x1) * c;
        const float* p10 = batch.raw() + ((b * h + y1) * w + x0) * c;
        const float* p11 = batch.raw() + ((b * h + y1) * w + x1) * c;
        float* q = out.raw() + ((b * height + oy) * width + ox) * c;
        for (std::size_t k = 0; k < c; ++k) {
          const float top = p00[k] + (p01[k] - p00[k]) * fx;
          const float bot = p10[k] + (p11[k] - p10[k]) * fx;
          q[k] = top + (bot - top) * fy;
        }
      }
    }
  }
  return out;
}

}  // namespace archsim
