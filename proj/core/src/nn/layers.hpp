#pragma once

// Layer implementations behind nn::Network. Tensors are NHWC; dense and the
// norm layers act on the last dimension.

#include <memory>
#include <vector>

#include "archsim/nn/network.hpp"

namespace archsim::nn {

class Layer {
 public:
  Layer(LayerSpec spec, Shape in) : spec_(std::move(spec)), in_(std::move(in)) {}
  virtual ~Layer() = default;

  const LayerSpec& spec() const noexcept { return spec_; }
  const Shape& in() const noexcept { return in_; }
  const Shape& out() const noexcept { return out_; }

  virtual std::vector<ParamInfo> declare() const { return {}; }

  /// `y` is preallocated to (N, out...). `cache` may be null (no tape).
  virtual void forward(const Tensor& x, Tensor& y, const Tensor* const* p, LayerCache* cache, Mode mode) const = 0;

  /// `dx` is preallocated and zeroed to (N, in...). `g` is null when
  /// parameter gradients are not requested; otherwise gradients are added.
  virtual void backward(const Tensor& x, const Tensor& y, const Tensor& dy, Tensor& dx, const Tensor* const* p,
                        const LayerCache& cache, Mode mode, Tensor* const* g) const = 0;

  virtual void update_buffers(const LayerCache& /*cache*/, const Tensor& /*x*/, Tensor* const* /*p*/) const {}

 protected:
  LayerSpec spec_;
  Shape in_;
  Shape out_;
};

/// Creates the layer for `spec` given its per-example input shape; throws
/// ShapeError(index) when the shapes do not chain.
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& in, std::size_t index);

}  // namespace archsim::nn
