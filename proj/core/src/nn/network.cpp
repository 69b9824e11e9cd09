#include "archsim/nn/network.hpp"

#include <cstdio>
#include <map>

#include "archsim/errors.hpp"
#include "layers.hpp"

namespace archsim::nn {

Network::~Network() = default;

std::shared_ptr<const Network> Network::build(const std::vector<LayerSpec>& layers, const Shape& input_shape) {
  std::shared_ptr<Network> net(new Network());
  net->input_shape_ = input_shape;
  net->shapes_.push_back(input_shape);
  net->residual_partner_.assign(layers.size(), -1);
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& spec = layers[i];
    const Shape& in = net->shapes_.back();
    if (spec.kind == LayerKind::kResidualEnd) {
      if (open.empty()) throw ShapeError(static_cast<std::ptrdiff_t>(i), "residual-end without residual-begin");
      const std::size_t begin = open.back();
      open.pop_back();
      if (net->shapes_[begin] != in) {
        throw ShapeError(static_cast<std::ptrdiff_t>(i), "residual branch changes shape " +
                                                             shape_string(net->shapes_[begin]) + " -> " +
                                                             shape_string(in));
      }
      net->residual_partner_[i] = static_cast<std::ptrdiff_t>(begin);
      net->residual_partner_[begin] = static_cast<std::ptrdiff_t>(i);
    } else if (spec.kind == LayerKind::kResidualBegin) {
      open.push_back(i);
    }
    auto layer = make_layer(spec, in, i);
    net->param_offset_.push_back(net->params_.size());
    auto decl = layer->declare();
    net->param_count_.push_back(decl.size());
    for (auto& p : decl) {
      char prefix[32];
      std::snprintf(prefix, sizeof(prefix), "%02zu.", i);
      p.name = std::string(prefix) + std::string(to_string(spec.kind)) + "." + p.name;
      p.layer = i;
      net->params_.push_back(std::move(p));
    }
    net->shapes_.push_back(layer->out());
    net->layers_.push_back(std::move(layer));
  }
  if (!open.empty()) {
    throw ShapeError(static_cast<std::ptrdiff_t>(open.back()), "residual-begin without residual-end");
  }
  return net;
}

std::vector<const Tensor*> Network::bind(const WeightMap& weights) const {
  std::vector<const Tensor*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) {
    auto it = weights.find(p.name);
    if (it == weights.end()) throw ValidationError("missing weight '" + p.name + "'");
    if (it->second.shape() != p.shape) {
      throw ShapeError(static_cast<std::ptrdiff_t>(p.layer), "weight '" + p.name + "' has shape " +
                                                                 shape_string(it->second.shape()) + ", expected " +
                                                                 shape_string(p.shape));
    }
    out.push_back(&it->second);
  }
  return out;
}

namespace {

Shape with_batch(std::size_t n, const Shape& s) {
  Shape out{n};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

}  // namespace

Tensor Network::forward(const Tensor& batch, const WeightMap& weights, Mode mode, Tape* tape) const {
  Shape expected_batch = with_batch(batch.rank() ? batch.dim(0) : 0, input_shape_);
  Tensor x;
  if (batch.shape() == input_shape_) {
    x = batch.reshaped(with_batch(1, input_shape_));
  } else if (batch.shape() == expected_batch) {
    x = batch;
  } else {
    throw ShapeError(0, "input " + shape_string(batch.shape()) + " does not match " + shape_string(input_shape_));
  }
  const auto bound = bind(weights);
  const std::size_t n = x.dim(0);
  if (tape) {
    tape->mode = mode;
    tape->activations.clear();
    tape->caches.assign(layers_.size(), {});
    tape->activations.reserve(layers_.size() + 1);
  }
  std::vector<Tensor> residual_inputs(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& layer = *layers_[i];
    Tensor y(with_batch(n, shapes_[i + 1]));
    const Tensor* const* p = bound.data() + param_offset_[i];
    if (layer.spec().kind == LayerKind::kResidualBegin) residual_inputs[i] = x;
    layer.forward(x, y, p, tape ? &tape->caches[i] : nullptr, mode);
    if (layer.spec().kind == LayerKind::kResidualEnd) {
      const Tensor& skip = residual_inputs[static_cast<std::size_t>(residual_partner_[i])];
      for (std::size_t j = 0; j < y.size(); ++j) y[j] += skip[j];
    }
    if (!y.all_finite()) throw NonFiniteError(static_cast<std::ptrdiff_t>(i), "non-finite activation");
    if (tape) tape->activations.push_back(std::move(x));
    x = std::move(y);
  }
  if (tape) tape->activations.push_back(x);
  return x;
}

Tensor Network::backward(const Tensor& grad_out, const WeightMap& weights, const Tape& tape,
                         std::vector<Tensor>* param_grads) const {
  if (tape.activations.size() != layers_.size() + 1) throw ValidationError("tape does not match network");
  if (grad_out.shape() != tape.activations.back().shape()) {
    throw ShapeError(static_cast<std::ptrdiff_t>(layers_.size()) - 1, "output gradient shape mismatch");
  }
  const auto bound = bind(weights);
  std::vector<Tensor*> grad_ptrs;
  if (param_grads) {
    param_grads->assign(params_.size(), Tensor());
    grad_ptrs.resize(params_.size(), nullptr);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      if (params_[k].role == ParamRole::kBuffer) continue;
      (*param_grads)[k] = Tensor(params_[k].shape);
      grad_ptrs[k] = &(*param_grads)[k];
    }
  }
  std::map<std::size_t, Tensor> skip_grads;
  Tensor g = grad_out;
  for (std::size_t ii = layers_.size(); ii-- > 0;) {
    const Layer& layer = *layers_[ii];
    const Tensor& x = tape.activations[ii];
    Tensor dx(x.shape());
    if (layer.spec().kind == LayerKind::kResidualEnd) {
      skip_grads[static_cast<std::size_t>(residual_partner_[ii])] = g;
      dx = std::move(g);
    } else if (layer.spec().kind == LayerKind::kResidualBegin) {
      Tensor& s = skip_grads.at(ii);
      for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = g[j] + s[j];
    } else {
      Tensor* const* gp = param_grads ? grad_ptrs.data() + param_offset_[ii] : nullptr;
      layer.backward(x, tape.activations[ii + 1], g, dx, bound.data() + param_offset_[ii], tape.caches[ii], tape.mode,
                     gp);
    }
    g = std::move(dx);
  }
  return g;
}

void Network::update_running_stats(const Tape& tape, WeightMap& weights) const {
  if (tape.mode != Mode::kTraining) return;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i]->spec().kind != LayerKind::kBatchNorm) continue;
    std::vector<Tensor*> p;
    for (std::size_t k = 0; k < param_count_[i]; ++k) p.push_back(&weights.at(params_[param_offset_[i] + k].name));
    layers_[i]->update_buffers(tape.caches[i], tape.activations[i], p.data());
  }
}

}  // namespace archsim::nn
