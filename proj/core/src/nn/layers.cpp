#include "layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "../gemm.hpp"
#include "archsim/errors.hpp"

namespace archsim::nn {

namespace {

using detail::gemm_nn;
using detail::gemm_nt;
using detail::gemm_tn_acc;

constexpr float kNormEps = 1e-5f;
constexpr float kBnMomentum = 0.1f;

std::size_t batch_of(const Tensor& t) { return t.dim(0); }

std::size_t leading(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) n *= s[i];
  return n;
}

// ---------------------------------------------------------------- dense

class Dense final : public Layer {
 public:
  Dense(const LayerSpec& s, const Shape& in, std::size_t idx) : Layer(s, in) {
    if (s.channels == 0) throw ShapeError(static_cast<std::ptrdiff_t>(idx), "dense needs channels > 0");
    out_ = in;
    out_.back() = s.channels;
    din_ = in.back();
  }

  std::vector<ParamInfo> declare() const override {
    return {{"weight", {din_, spec_.channels}, ParamRole::kWeight, din_},
            {"bias", {spec_.channels}, ParamRole::kBias, din_}};
  }

  void forward(const Tensor& x, Tensor& y, const Tensor* const* p, LayerCache*, Mode) const override {
    const std::size_t rows = batch_of(x) * leading(in_);
    const std::size_t n = spec_.channels;
    const float* b = p[1]->raw();
    float* yp = y.raw();
    for (std::size_t r = 0; r < rows; ++r) std::memcpy(yp + r * n, b, n * sizeof(float));
    gemm_nn(rows, n, din_, x.raw(), p[0]->raw(), yp, true);
  }

  void backward(const Tensor& x, const Tensor&, const Tensor& dy, Tensor& dx, const Tensor* const* p,
                const LayerCache&, Mode, Tensor* const* g) const override {
    const std::size_t rows = batch_of(x) * leading(in_);
    const std::size_t n = spec_.channels;
    gemm_nt(rows, din_, n, dy.raw(), p[0]->raw(), dx.raw(), true);
    if (g) {
      gemm_tn_acc(rows, n, din_, x.raw(), dy.raw(), g[0]->raw());
      float* gb = g[1]->raw();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) gb[j] += dy[r * n + j];
    }
  }

 private:
  std::size_t din_ = 0;
};

// ---------------------------------------------------------------- conv2d

class Conv2d final : public Layer {
 public:
  Conv2d(const LayerSpec& s, const Shape& in, std::size_t idx) : Layer(s, in) {
    const auto li = static_cast<std::ptrdiff_t>(idx);
    if (in.size() != 3) throw ShapeError(li, "conv2d expects (H,W,C) input, got " + shape_string(in));
    k_ = s.kernel;
    stride_ = s.stride ? s.stride : 1;
    pad_ = s.padding;
    groups_ = s.groups ? s.groups : 1;
    if (s.kind == LayerKind::kPatchify) {
      stride_ = k_;
      pad_ = 0;
      groups_ = 1;
      if (k_ == 0 || in[0] % k_ != 0 || in[1] % k_ != 0) {
        throw ShapeError(li, "patchify size must divide the input " + shape_string(in));
      }
    }
    if (k_ == 0 || s.channels == 0) throw ShapeError(li, "conv2d needs kernel and channels");
    h_ = in[0];
    w_ = in[1];
    cin_ = in[2];
    cout_ = s.channels;
    if (cin_ % groups_ != 0 || cout_ % groups_ != 0) {
      throw ShapeError(li, "groups " + std::to_string(groups_) + " must divide in/out channels");
    }
    if (h_ + 2 * pad_ < k_ || w_ + 2 * pad_ < k_) throw ShapeError(li, "kernel larger than padded input");
    ho_ = (h_ + 2 * pad_ - k_) / stride_ + 1;
    wo_ = (w_ + 2 * pad_ - k_) / stride_ + 1;
    cin_g_ = cin_ / groups_;
    cout_g_ = cout_ / groups_;
    out_ = {ho_, wo_, cout_};
  }

  std::vector<ParamInfo> declare() const override {
    const std::size_t fan = k_ * k_ * cin_g_;
    return {{"weight", {k_, k_, cin_g_, cout_}, ParamRole::kWeight, fan},
            {"bias", {cout_}, ParamRole::kBias, fan}};
  }

  void forward(const Tensor& x, Tensor& y, const Tensor* const* p, LayerCache*, Mode) const override {
    const std::size_t n = batch_of(x);
    float* yp = y.raw();
    const float* b = p[1]->raw();
    const std::size_t rows = n * ho_ * wo_;
    for (std::size_t r = 0; r < rows; ++r) std::memcpy(yp + r * cout_, b, cout_ * sizeof(float));
    if (groups_ == 1) {
      const auto cols = im2col(x);
      gemm_nn(rows, cout_, k_ * k_ * cin_, cols.data(), p[0]->raw(), yp, true);
      return;
    }
    const float* wt = p[0]->raw();
    const float* xp = x.raw();
    for_each_tap(n, [&](std::size_t orow, std::size_t irow, std::size_t tap) {
      float* yr = yp + orow * cout_;
      const float* xr = xp + irow * cin_;
      const float* wr = wt + tap * cin_g_ * cout_;
      for (std::size_t g = 0; g < groups_; ++g) {
        for (std::size_t ci = 0; ci < cin_g_; ++ci) {
          const float xv = xr[g * cin_g_ + ci];
          const float* wc = wr + ci * cout_ + g * cout_g_;
          float* yc = yr + g * cout_g_;
          for (std::size_t co = 0; co < cout_g_; ++co) yc[co] += xv * wc[co];
        }
      }
    });
  }

  void backward(const Tensor& x, const Tensor&, const Tensor& dy, Tensor& dx, const Tensor* const* p,
                const LayerCache&, Mode, Tensor* const* g) const override {
    const std::size_t n = batch_of(x);
    const std::size_t rows = n * ho_ * wo_;
    const float* dyp = dy.raw();
    if (g) {
      float* gb = g[1]->raw();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cout_; ++c) gb[c] += dyp[r * cout_ + c];
    }
    if (groups_ == 1) {
      const std::size_t kk = k_ * k_ * cin_;
      std::vector<float> dcols(rows * kk);
      gemm_nt(rows, kk, cout_, dyp, p[0]->raw(), dcols.data(), false);
      col2im(dcols, dx);
      if (g) {
        const auto cols = im2col(x);
        gemm_tn_acc(rows, cout_, kk, cols.data(), dyp, g[0]->raw());
      }
      return;
    }
    const float* wt = p[0]->raw();
    const float* xp = x.raw();
    float* dxp = dx.raw();
    float* gw = g ? g[0]->raw() : nullptr;
    for_each_tap(n, [&](std::size_t orow, std::size_t irow, std::size_t tap) {
      const float* dyr = dyp + orow * cout_;
      const float* xr = xp + irow * cin_;
      float* dxr = dxp + irow * cin_;
      const float* wr = wt + tap * cin_g_ * cout_;
      for (std::size_t gi = 0; gi < groups_; ++gi) {
        const float* dyc = dyr + gi * cout_g_;
        for (std::size_t ci = 0; ci < cin_g_; ++ci) {
          const float* wc = wr + ci * cout_ + gi * cout_g_;
          float acc = 0.0f;
          for (std::size_t co = 0; co < cout_g_; ++co) acc += wc[co] * dyc[co];
          dxr[gi * cin_g_ + ci] += acc;
          if (gw) {
            const float xv = xr[gi * cin_g_ + ci];
            float* gc = gw + tap * cin_g_ * cout_ + ci * cout_ + gi * cout_g_;
            for (std::size_t co = 0; co < cout_g_; ++co) gc[co] += xv * dyc[co];
          }
        }
      }
    });
  }

 private:
  // Calls f(output_row, input_row, tap) for every in-bounds kernel tap.
  template <typename F>
  void for_each_tap(std::size_t n, F&& f) const {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t oh = 0; oh < ho_; ++oh)
        for (std::size_t ow = 0; ow < wo_; ++ow) {
          const std::size_t orow = (b * ho_ + oh) * wo_ + ow;
          for (std::size_t kh = 0; kh < k_; ++kh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride_ + kh) - static_cast<std::ptrdiff_t>(pad_);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h_)) continue;
            for (std::size_t kw = 0; kw < k_; ++kw) {
              const std::ptrdiff_t iw =
                  static_cast<std::ptrdiff_t>(ow * stride_ + kw) - static_cast<std::ptrdiff_t>(pad_);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w_)) continue;
              f(orow, (b * h_ + static_cast<std::size_t>(ih)) * w_ + static_cast<std::size_t>(iw), kh * k_ + kw);
            }
          }
        }
  }

  std::vector<float> im2col(const Tensor& x) const {
    const std::size_t n = batch_of(x);
    const std::size_t kk = k_ * k_ * cin_;
    std::vector<float> cols(n * ho_ * wo_ * kk, 0.0f);
    const float* xp = x.raw();
    for_each_tap(n, [&](std::size_t orow, std::size_t irow, std::size_t tap) {
      std::memcpy(cols.data() + orow * kk + tap * cin_, xp + irow * cin_, cin_ * sizeof(float));
    });
    return cols;
  }

  void col2im(const std::vector<float>& dcols, Tensor& dx) const {
    const std::size_t n = batch_of(dx);
    const std::size_t kk = k_ * k_ * cin_;
    float* dxp = dx.raw();
    for_each_tap(n, [&](std::size_t orow, std::size_t irow, std::size_t tap) {
      const float* src = dcols.data() + orow * kk + tap * cin_;
      float* dst = dxp + irow * cin_;
      for (std::size_t c = 0; c < cin_; ++c) dst[c] += src[c];
    });
  }

  std::size_t k_ = 0, stride_ = 1, pad_ = 0, groups_ = 1;
  std::size_t h_ = 0, w_ = 0, cin_ = 0, cout_ = 0, ho_ = 0, wo_ = 0, cin_g_ = 0, cout_g_ = 0;
};

// ---------------------------------------------------------------- norms

class BatchNorm final : public Layer {
 public:
  BatchNorm(const LayerSpec& s, const Shape& in) : Layer(s, in) {
    out_ = in;
    c_ = in.back();
  }

  std::vector<ParamInfo> declare() const override {
    ParamInfo var{"running_var", {c_}, ParamRole::kBuffer, 0};
    var.init_ones = true;
    return {{"gamma", {c_}, ParamRole::kNormScale, 0},
            {"beta", {c_}, ParamRole::kNormShift, 0},
            {"running_mean", {c_}, ParamRole::kBuffer, 0},
            var};
  }

  void forward(const Tensor& x, Tensor& y, const Tensor* const* p, LayerCache* cache, Mode mode) const override {
    const std::size_t rows = batch_of(x) * leading(in_);
    std::vector<float> mean(c_), var(c_);
    if (mode == Mode::kTraining) {
      batch_stats(x, rows, mean, var);
    } else {
      std::copy_n(p[2]->raw(), c_, mean.begin());
      std::copy_n(p[3]->raw(), c_, var.begin());
    }
    const float* gamma = p[0]->raw();
    const float* beta = p[1]->raw();
    std::vector<float> inv(c_);
    for (std::size_t c = 0; c < c_; ++c) inv[c] = 1.0f / std::sqrt(var[c] + kNormEps);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < c_; ++c) {
        const float xh = (x[r * c_ + c] - mean[c]) * inv[c];
        y[r * c_ + c] = gamma[c] * xh + beta[c];
      }
    if (cache) {
      cache->a = std::move(mean);
      cache->b = std::move(var);
      cache->c = std::move(inv);
    }
  }

  void backward(const Tensor& x, const Tensor&, const Tensor& dy, Tensor& dx, const Tensor* const* p,
                const LayerCache& cache, Mode mode, Tensor* const* g) const override {
    const std::size_t rows = batch_of(x) * leading(in_);
    const float* gamma = p[0]->raw();
    const auto& mean = cache.a;
    const auto& inv = cache.c;
    std::vector<double> sum_dy(c_, 0.0), sum_dy_xh(c_, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < c_; ++c) {
        const float xh = (x[r * c_ + c] - mean[c]) * inv[c];
        sum_dy[c] += dy[r * c_ + c];
        sum_dy_xh[c] += static_cast<double>(dy[r * c_ + c]) * xh;
      }
    if (g) {
      for (std::size_t c = 0; c < c_; ++c) {
        (*g[0])[c] += static_cast<float>(sum_dy_xh[c]);
        (*g[1])[c] += static_cast<float>(sum_dy[c]);
      }
    }
    if (mode == Mode::kInference) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < c_; ++c) dx[r * c_ + c] += dy[r * c_ + c] * gamma[c] * inv[c];
      return;
    }
    const float rn = static_cast<float>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < c_; ++c) {
        const float xh = (x[r * c_ + c] - mean[c]) * inv[c];
        const float term = rn * dy[r * c_ + c] - static_cast<float>(sum_dy[c]) - xh * static_cast<float>(sum_dy_xh[c]);
        dx[r * c_ + c] += gamma[c] * inv[c] * term / rn;
      }
  }

  void update_buffers(const LayerCache& cache, const Tensor& x, Tensor* const* p) const override {
    const std::size_t rows = batch_of(x) * leading(in_);
    const float unbias = rows > 1 ? static_cast<float>(rows) / static_cast<float>(rows - 1) : 1.0f;
    for (std::size_t c = 0; c < c_; ++c) {
      (*p[2])[c] = (1.0f - kBnMomentum) * (*p[2])[c] + kBnMomentum * cache.a[c];
      (*p[3])[c] = (1.0f - kBnMomentum) * (*p[3])[c] + kBnMomentum * cache.b[c] * unbias;
    }
  }

 private:
  void batch_stats(const Tensor& x, std::size_t rows, std::vector<float>& mean, std::vector<float>& var) const {
    std::vector<double> s(c_, 0.0), ss(c_, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < c_; ++c) s[c] += x[r * c_ + c];
    for (std::size_t c = 0; c < c_; ++c) mean[c] = static_cast<float>(s[c] / static_cast<double>(rows));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < c_; ++c) {
        const double d = x[r * c_ + c] - mean[c];
        ss[c] += d * d;
      }
    for (std::size_t c = 0; c < c_; ++c) var[c] = static_cast<float>(ss[c] / static_cast<double>(rows));
  }

  std::size_t c_ = 0;
};

class LayerNorm final : public Layer {
 public:
  LayerNorm(const LayerSpec& s, const Shape& in) : Layer(s, in) {
    out_ = in;
    d_ = in.back();
  }

  std::vector<ParamInfo> declare() const override {
    return {{"gamma", {d_}, ParamRole::kNormScale, 0}, {"beta", {d_}, ParamRole::kNormShift, 0}};
  }

  void forward(const Tensor& x, Tensor& y, const Tensor* const* p, LayerCache* cache, Mode) const override {
    const std::size_t rows = batch_of(x) * leading(in_);
    const float* gamma = p[0]->raw();
    const float* beta = p[1]->raw();
    std::vector<float> inv(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const float* xr = x.raw() + r * d_;
      float mean = 0.0f;
      for (std::size_t j = 0; j < d_; ++j) mean += xr[j];
      mean /= static_cast<float>(d_);
      float var = 0.0f;
      for (std::size_t j = 0; j < d_; ++j) var += (xr[j] - mean) * (xr[j] - mean);
      var /= static_cast<float>(d_);
      inv[r] = 1.0f / std::sqrt(var + kNormEps);
      float* yr = y.raw() + r * d_;
      for (std::size_t j = 0; j < d_; ++j) yr[j] = gamma[j] * (xr[j] - mean) * inv[r] + beta[j];
    }
    if (cache) cache->c = std::move(inv);
  }

  void backward(const Tensor& x, const Tensor&, const Tensor& dy, Tensor& dx, const Tensor* const* p,
                const LayerCache& cache, Mode, Tensor* const* g) const override {
    const std::size_t rows = batch_of(x) * leading(in_);
    const float* gamma = p[0]->raw();
    std::vector<float> xh(d_), dxh(d_);
    for (std::size_t r = 0; r < rows; ++r) {
      const float* xr = x.raw() + r * d_;
      const float* dyr = dy.raw() + r * d_;
      float mean = 0.0f;
      for (std::size_t j = 0; j < d_; ++j) mean += xr[j];
      mean /= static_cast<float>(d_);
      const float inv = cache.c[r];
      float s1 = 0.0f, s2 = 0.0f;
      for (std::size_t j = 0; j < d_; ++j) {
        xh[j] = (xr[j] - mean) * inv;
        dxh[j] = dyr[j] * gamma[j];
        s1 += dxh[j];
        s2 += dxh[j] * xh[j];
      }
      float* dxr = dx.raw() + r * d_;
      const float dn = static_cast<float>(d_);
      for (std::size_t j = 0; j < d_; ++j) dxr[j] += inv * (dn * dxh[j] - s1 - xh[j] * s2) / dn;
      if (g) {
        for (std::size_t j = 0; j < d_; ++j) {
          (*g[0])[j] += dyr[j] * xh[j];
          (*g[1])[j] += dyr[j];
        }
      }
    }
  }

 private:
  std::size_t d_ = 0;
};

// ---------------------------------------------------------------- pointwise

class Activation final : public Layer {
 public:
  Activation(const LayerSpec& s, const Shape& in) : Layer(s, in) { out_ = in; }

  void forward(const Tensor& x, Tensor& y, const Tensor* const*, LayerCache*, Mode) const override {
    const std::size_t n = x.size();
    const float* xp = x.raw();
    float* yp = y.raw();
    switch (spec_.kind) {
      case LayerKind::kRelu:
        for (std::size_t i = 0; i < n; ++i) yp[i] = xp[i] > 0.0f ? xp[i] : 0.0f;
        break;
      case LayerKind::kLeakyRelu: {
        const float a = spec_.negative_slope;
        for (std::size_t i = 0; i < n; ++i) yp[i] = xp[i] > 0.0f ? xp[i] : a * xp[i];
        break;
      }
      case LayerKind::kGelu:
        for (std::size_t i = 0; i < n; ++i) yp[i] = gelu(xp[i]);
        break;
      case LayerKind::kSilu:
        for (std::size_t i = 0; i < n; ++i) yp[i] = xp[i] * sigmoid(xp[i]);
        break;
      default:
        break;
    }
  }

  void backward(const Tensor& x, const Tensor&, const Tensor& dy, Tensor& dx, const Tensor* const*,
                const LayerCache&, Mode, Tensor* const*) const override {
    const std::size_t n = x.size();
    const float* xp = x.raw();
    const float* dyp = dy.raw();
    float* dxp = dx.raw();
    switch (spec_.kind) {
      case LayerKind::kRelu:
        for (std::size_t i = 0; i < n; ++i) dxp[i] += xp[i] > 0.0f ? dyp[i] : 0.0f;
        break;
      case LayerKind::kLeakyRelu: {
        const float a = spec_.negative_slope;
        for (std::size_t i = 0; i < n; ++i) dxp[i] += xp[i] > 0.0f ? dyp[i] : a * dyp[i];
        break;
      }
      case LayerKind::kGelu:
        for (std::size_t i = 0; i < n; ++i) dxp[i] += dyp[i] * gelu_grad(xp[i]);
        break;
      case LayerKind::kSilu:
        for (std::size_t i = 0; i < n; ++i) {
          const float s = sigmoid(xp[i]);
          dxp[i] += dyp[i] * (s + xp[i] * s * (1.0f - s));
        }
        break;
      default:
        break;
    }
  }

  static float sigmoid(float v) { return 1.0f / (1.0f + std::exp(-v)); }

  // tanh approximation of GeLU.
  static float gelu(float v) {
    constexpr float c = 0.7978845608028654f;
    const float t = std::tanh(c * (v + 0.044715f * v * v * v));
    return 0.5f * v * (1.0f + t);
  }

  static float gelu_grad(float v) {
    constexpr float c = 0.7978845608028654f;
    const float t = std::tanh(c * (v + 0.044715f * v * v * v));
    return 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * c * (1.0f + 3.0f * 0.044715f * v * v);
  }
};

// ---------------------------------------------------------------- pooling

class Pool final : public Layer {
 public:
  Pool(const LayerSpec& s, const Shape& in, std::size_t idx) : Layer(s, in) {
    const auto li = static_cast<std::ptrdiff_t>(idx);
    if (in.size() != 3) throw ShapeError(li, "pooling expects (H,W,C) input, got " + shape_string(in));
    k_ = s.kernel;
    stride_ = s.stride ? s.stride : s.kernel;
    if (k_ == 0) throw ShapeError(li, "pooling needs a kernel");
    if (in[0] < k_ || in[1] < k_) throw ShapeError(li, "pool kernel larger than input");
    h_ = in[0];
    w_ = in[1];
    c_ = in[2];
    ho_ = (h_ - k_) / stride_ + 1;
    wo_ = (w_ - k_) / stride_ + 1;
    out_ = {ho_, wo_, c_};
  }

  void forward(const Tensor& x, Tensor& y, const Tensor* const*, LayerCache*, Mode) const override {
    const bool is_max = spec_.kind == LayerKind::kMaxPool;
    const float inv = 1.0f / static_cast<float>(k_ * k_);
    visit(batch_of(x), [&](std::size_t out_idx, auto&& window) {
      float acc = is_max ? -INFINITY : 0.0f;
      window([&](std::size_t in_idx) {
        const float v = x[in_idx];
        if (is_max) {
          if (v > acc) acc = v;
        } else {
          acc += v;
        }
      });
      y[out_idx] = is_max ? acc : acc * inv;
    });
  }

  void backward(const Tensor& x, const Tensor&, const Tensor& dy, Tensor& dx, const Tensor* const*,
                const LayerCache&, Mode, Tensor* const*) const override {
    const bool is_max = spec_.kind == LayerKind::kMaxPool;
    const float inv = 1.0f / static_cast<float>(k_ * k_);
    visit(batch_of(x), [&](std::size_t out_idx, auto&& window) {
      if (is_max) {
        float best = -INFINITY;
        std::size_t arg = 0;
        window([&](std::size_t in_idx) {
          if (x[in_idx] > best) {
            best = x[in_idx];
            arg = in_idx;
          }
        });
        dx[arg] += dy[out_idx];
      } else {
        const float gv = dy[out_idx] * inv;
        window([&](std::size_t in_idx) { dx[in_idx] += gv; });
      }
    });
  }

 private:
  template <typename F>
  void visit(std::size_t n, F&& f) const {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t oh = 0; oh < ho_; ++oh)
        for (std::size_t ow = 0; ow < wo_; ++ow)
          for (std::size_t c = 0; c < c_; ++c) {
            const std::size_t out_idx = ((b * ho_ + oh) * wo_ + ow) * c_ + c;
            auto window = [&](auto&& g) {
              for (std::size_t kh = 0; kh < k_; ++kh)
                for (std::size_t kw = 0; kw < k_; ++kw)
                  g(((b * h_ + oh * stride_ + kh) * w_ + ow * stride_ + kw) * c_ + c);
            };
            f(out_idx, window);
          }
  }

  std::size_t k_ = 0, stride_ = 0, h_ = 0, w_ = 0, c_ = 0, ho_ = 0, wo_ = 0;
};

class GlobalAvgPool final : public Layer {
 public:
  GlobalAvgPool(const LayerSpec& s, const Shape& in, std::size_t idx) : Layer(s, in) {
    if (in.size() < 2) {
      throw ShapeError(static_cast<std::ptrdiff_t>(idx), "global-avg-pool expects spatial input, got " + shape_string(in));
    }
    c_ = in.back();
    t_ = leading(in);
    out_ = {c_};
  }

  void forward(const Tensor& x, Tensor& y, const Tensor* const*, LayerCache*, Mode) const override {
    const std::size_t n = batch_of(x);
    const float inv = 1.0f / static_cast<float>(t_);
    for (std::size_t b = 0; b < n; ++b) {
      float* yr = y.raw() + b * c_;
      for (std::size_t c = 0; c < c_; ++c) yr[c] = 0.0f;
      for (std::size_t t = 0; t < t_; ++t) {
        const float* xr = x.raw() + (b * t_ + t) * c_;
        for (std::size_t c = 0; c < c_; ++c) yr[c] += xr[c];
      }
      for (std::size_t c = 0; c < c_; ++c) yr[c] *= inv;
    }
  }

  void backward(const Tensor& x, const Tensor&, const Tensor& dy, Tensor& dx, const Tensor* const*,
                const LayerCache&, Mode, Tensor* const*) const override {
    const std::size_t n = batch_of(x);
    const float inv = 1.0f / static_cast<float>(t_);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t t = 0; t < t_; ++t)
        for (std::size_t c = 0; c < c_; ++c) dx[(b * t_ + t) * c_ + c] += dy[b * c_ + c] * inv;
  }

 private:
  std::size_t c_ = 0, t_ = 0;
};

// ---------------------------------------------------------------- reshape / identity

class Identity final : public Layer {
 public:
  Identity(const LayerSpec& s, const Shape& in, Shape out) : Layer(s, in) { out_ = std::move(out); }

  void forward(const Tensor& x, Tensor& y, const Tensor* const*, LayerCache*, Mode) const override {
    std::copy(x.data().begin(), x.data().end(), y.data().begin());
  }

  void backward(const Tensor&, const Tensor&, const Tensor& dy, Tensor& dx, const Tensor* const*, const LayerCache&,
                Mode, Tensor* const*) const override {
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  }
};

// ---------------------------------------------------------------- attention

class SelfAttention final : public Layer {
 public:
  SelfAttention(const LayerSpec& s, const Shape& in, std::size_t idx) : Layer(s, in) {
    if (in.size() < 2) {
      throw ShapeError(static_cast<std::ptrdiff_t>(idx), "self-attention expects tokens, got " + shape_string(in));
    }
    out_ = in;
    c_ = in.back();
    t_ = leading(in);
    d_ = s.token_dim ? s.token_dim : c_;
    scale_ = 1.0f / std::sqrt(static_cast<float>(d_));
  }

  std::vector<ParamInfo> declare() const override {
    return {{"wq", {c_, d_}, ParamRole::kWeight, c_},
            {"wk", {c_, d_}, ParamRole::kWeight, c_},
            {"wv", {c_, d_}, ParamRole::kWeight, c_},
            {"wo", {d_, c_}, ParamRole::kWeight, d_},
            {"bo", {c_}, ParamRole::kBias, d_}};
  }

  // Forward runs in double internally: the score/softmax/mix chain otherwise
  // amplifies f32 rounding enough to be visible in finite differences.
  void forward(const Tensor& x, Tensor& y, const Tensor* const* p, LayerCache* cache, Mode) const override {
    const std::size_t n = batch_of(x);
    const std::size_t td = t_ * d_, tt = t_ * t_;
    std::vector<double> q(td), k(td), v(td), o(td), pr(tt);
    if (cache) {
      cache->a.assign(n * 4 * td, 0.0f);
      cache->b.assign(n * tt, 0.0f);
    }
    const float* wq = p[0]->raw();
    const float* wk = p[1]->raw();
    const float* wv = p[2]->raw();
    const float* wo = p[3]->raw();
    const float* bo = p[4]->raw();
    for (std::size_t b = 0; b < n; ++b) {
      const float* xb = x.raw() + b * t_ * c_;
      std::fill(q.begin(), q.end(), 0.0);
      std::fill(k.begin(), k.end(), 0.0);
      std::fill(v.begin(), v.end(), 0.0);
      for (std::size_t i = 0; i < t_; ++i)
        for (std::size_t c = 0; c < c_; ++c) {
          const double xv = xb[i * c_ + c];
          for (std::size_t j = 0; j < d_; ++j) {
            q[i * d_ + j] += xv * wq[c * d_ + j];
            k[i * d_ + j] += xv * wk[c * d_ + j];
            v[i * d_ + j] += xv * wv[c * d_ + j];
          }
        }
      for (std::size_t i = 0; i < t_; ++i) {
        double* row = pr.data() + i * t_;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < t_; ++j) {
          double acc = 0.0;
          for (std::size_t e = 0; e < d_; ++e) acc += q[i * d_ + e] * k[j * d_ + e];
          row[j] = acc * scale_;
          mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < t_; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (std::size_t j = 0; j < t_; ++j) row[j] /= sum;
      }
      std::fill(o.begin(), o.end(), 0.0);
      for (std::size_t i = 0; i < t_; ++i)
        for (std::size_t j = 0; j < t_; ++j) {
          const double pij = pr[i * t_ + j];
          for (std::size_t e = 0; e < d_; ++e) o[i * d_ + e] += pij * v[j * d_ + e];
        }
      float* yb = y.raw() + b * t_ * c_;
      for (std::size_t i = 0; i < t_; ++i)
        for (std::size_t c = 0; c < c_; ++c) {
          double acc = bo[c];
          for (std::size_t e = 0; e < d_; ++e) acc += o[i * d_ + e] * wo[e * c_ + c];
          yb[i * c_ + c] = static_cast<float>(acc);
        }
      if (cache) {
        float* dst = cache->a.data() + b * 4 * td;
        for (std::size_t i = 0; i < td; ++i) {
          dst[i] = static_cast<float>(q[i]);
          dst[td + i] = static_cast<float>(k[i]);
          dst[2 * td + i] = static_cast<float>(v[i]);
          dst[3 * td + i] = static_cast<float>(o[i]);
        }
        float* pd = cache->b.data() + b * tt;
        for (std::size_t i = 0; i < tt; ++i) pd[i] = static_cast<float>(pr[i]);
      }
    }
  }

  void backward(const Tensor& x, const Tensor&, const Tensor& dy, Tensor& dx, const Tensor* const* p,
                const LayerCache& cache, Mode, Tensor* const* g) const override {
    const std::size_t n = batch_of(x);
    const std::size_t td = t_ * d_, tt = t_ * t_;
    std::vector<float> d_o(td), d_p(tt), d_q(td), d_k(td), d_v(td);
    for (std::size_t b = 0; b < n; ++b) {
      const float* xb = x.raw() + b * t_ * c_;
      const float* q = cache.a.data() + b * 4 * td;
      const float* k = q + td;
      const float* v = k + td;
      const float* o = v + td;
      const float* pr = cache.b.data() + b * tt;
      const float* dyb = dy.raw() + b * t_ * c_;
      float* dxb = dx.raw() + b * t_ * c_;

      gemm_nt(t_, d_, c_, dyb, p[3]->raw(), d_o.data(), false);
      gemm_nt(t_, t_, d_, d_o.data(), v, d_p.data(), false);
      std::fill(d_v.begin(), d_v.end(), 0.0f);
      gemm_tn_acc(t_, d_, t_, pr, d_o.data(), d_v.data());
      for (std::size_t i = 0; i < t_; ++i) {
        const float* prow = pr + i * t_;
        float* drow = d_p.data() + i * t_;
        float dot = 0.0f;
        for (std::size_t j = 0; j < t_; ++j) dot += drow[j] * prow[j];
        for (std::size_t j = 0; j < t_; ++j) drow[j] = prow[j] * (drow[j] - dot) * scale_;
      }
      gemm_nn(t_, d_, t_, d_p.data(), k, d_q.data(), false);
      std::fill(d_k.begin(), d_k.end(), 0.0f);
      gemm_tn_acc(t_, d_, t_, d_p.data(), q, d_k.data());

      gemm_nt(t_, c_, d_, d_q.data(), p[0]->raw(), dxb, true);
      gemm_nt(t_, c_, d_, d_k.data(), p[1]->raw(), dxb, true);
      gemm_nt(t_, c_, d_, d_v.data(), p[2]->raw(), dxb, true);
      if (g) {
        gemm_tn_acc(t_, d_, c_, xb, d_q.data(), g[0]->raw());
        gemm_tn_acc(t_, d_, c_, xb, d_k.data(), g[1]->raw());
        gemm_tn_acc(t_, d_, c_, xb, d_v.data(), g[2]->raw());
        gemm_tn_acc(t_, c_, d_, o, dyb, g[3]->raw());
        for (std::size_t i = 0; i < t_; ++i)
          for (std::size_t c = 0; c < c_; ++c) (*g[4])[c] += dyb[i * c_ + c];
      }
    }
  }

 private:
  std::size_t c_ = 0, t_ = 0, d_ = 0;
  float scale_ = 1.0f;
};

// ---------------------------------------------------------------- squeeze-excite

class SqueezeExcite final : public Layer {
 public:
  SqueezeExcite(const LayerSpec& s, const Shape& in, std::size_t idx) : Layer(s, in) {
    if (in.size() < 2) {
      throw ShapeError(static_cast<std::ptrdiff_t>(idx), "squeeze-excite expects spatial input, got " + shape_string(in));
    }
    out_ = in;
    c_ = in.back();
    t_ = leading(in);
    const std::size_t r = s.reduction_ratio ? s.reduction_ratio : 4;
    h_ = s.hidden_dim ? s.hidden_dim : std::max<std::size_t>(1, c_ / r);
  }

  std::vector<ParamInfo> declare() const override {
    return {{"w1", {c_, h_}, ParamRole::kWeight, c_},
            {"b1", {h_}, ParamRole::kBias, c_},
            {"w2", {h_, c_}, ParamRole::kWeight, h_},
            {"b2", {c_}, ParamRole::kBias, h_}};
  }

  void forward(const Tensor& x, Tensor& y, const Tensor* const* p, LayerCache* cache, Mode) const override {
    const std::size_t n = batch_of(x);
    std::vector<float> local;
    std::vector<float>& st = cache ? cache->a : local;
    st.assign(n * (2 * c_ + h_), 0.0f);  // per example: s (C), z (H), e (C)
    for (std::size_t b = 0; b < n; ++b) {
      float* s = st.data() + b * (2 * c_ + h_);
      float* z = s + c_;
      float* e = z + h_;
      excite(x.raw() + b * t_ * c_, p, s, z, e);
      const float* xb = x.raw() + b * t_ * c_;
      float* yb = y.raw() + b * t_ * c_;
      for (std::size_t t = 0; t < t_; ++t)
        for (std::size_t c = 0; c < c_; ++c) yb[t * c_ + c] = xb[t * c_ + c] * e[c];
    }
  }

  void backward(const Tensor& x, const Tensor&, const Tensor& dy, Tensor& dx, const Tensor* const* p,
                const LayerCache& cache, Mode, Tensor* const* g) const override {
    const std::size_t n = batch_of(x);
    const float* w1 = p[0]->raw();
    const float* w2 = p[2]->raw();
    std::vector<float> de(c_), dpre2(c_), dz(h_), ds(c_);
    for (std::size_t b = 0; b < n; ++b) {
      const float* s = cache.a.data() + b * (2 * c_ + h_);
      const float* z = s + c_;
      const float* e = z + h_;
      const float* xb = x.raw() + b * t_ * c_;
      const float* dyb = dy.raw() + b * t_ * c_;
      float* dxb = dx.raw() + b * t_ * c_;
      std::fill(de.begin(), de.end(), 0.0f);
      for (std::size_t t = 0; t < t_; ++t)
        for (std::size_t c = 0; c < c_; ++c) {
          de[c] += dyb[t * c_ + c] * xb[t * c_ + c];
          dxb[t * c_ + c] += dyb[t * c_ + c] * e[c];
        }
      for (std::size_t c = 0; c < c_; ++c) dpre2[c] = de[c] * e[c] * (1.0f - e[c]);
      for (std::size_t j = 0; j < h_; ++j) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < c_; ++c) acc += w2[j * c_ + c] * dpre2[c];
        dz[j] = z[j] > 0.0f ? acc : 0.0f;
      }
      for (std::size_t c = 0; c < c_; ++c) {
        float acc = 0.0f;
        for (std::size_t j = 0; j < h_; ++j) acc += w1[c * h_ + j] * dz[j];
        ds[c] = acc / static_cast<float>(t_);
      }
      for (std::size_t t = 0; t < t_; ++t)
        for (std::size_t c = 0; c < c_; ++c) dxb[t * c_ + c] += ds[c];
      if (g) {
        for (std::size_t c = 0; c < c_; ++c)
          for (std::size_t j = 0; j < h_; ++j) (*g[0])[c * h_ + j] += s[c] * dz[j];
        for (std::size_t j = 0; j < h_; ++j) (*g[1])[j] += dz[j];
        for (std::size_t j = 0; j < h_; ++j)
          for (std::size_t c = 0; c < c_; ++c) (*g[2])[j * c_ + c] += z[j] * dpre2[c];
        for (std::size_t c = 0; c < c_; ++c) (*g[3])[c] += dpre2[c];
      }
    }
  }

 private:
  void excite(const float* xb, const Tensor* const* p, float* s, float* z, float* e) const {
    for (std::size_t c = 0; c < c_; ++c) s[c] = 0.0f;
    for (std::size_t t = 0; t < t_; ++t)
      for (std::size_t c = 0; c < c_; ++c) s[c] += xb[t * c_ + c];
    for (std::size_t c = 0; c < c_; ++c) s[c] /= static_cast<float>(t_);
    const float* w1 = p[0]->raw();
    const float* b1 = p[1]->raw();
    const float* w2 = p[2]->raw();
    const float* b2 = p[3]->raw();
    for (std::size_t j = 0; j < h_; ++j) {
      float acc = b1[j];
      for (std::size_t c = 0; c < c_; ++c) acc += s[c] * w1[c * h_ + j];
      z[j] = acc > 0.0f ? acc : 0.0f;
    }
    for (std::size_t c = 0; c < c_; ++c) {
      float acc = b2[c];
      for (std::size_t j = 0; j < h_; ++j) acc += z[j] * w2[j * c_ + c];
      e[c] = 1.0f / (1.0f + std::exp(-acc));
    }
  }

  std::size_t c_ = 0, t_ = 0, h_ = 0;
};

}  // namespace

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& in, std::size_t index) {
  switch (spec.kind) {
    case LayerKind::kDense:
      return std::make_unique<Dense>(spec, in, index);
    case LayerKind::kConv2d:
    case LayerKind::kPatchify:
      return std::make_unique<Conv2d>(spec, in, index);
    case LayerKind::kBatchNorm:
      return std::make_unique<BatchNorm>(spec, in);
    case LayerKind::kLayerNorm:
      return std::make_unique<LayerNorm>(spec, in);
    case LayerKind::kRelu:
    case LayerKind::kGelu:
    case LayerKind::kSilu:
    case LayerKind::kLeakyRelu:
      return std::make_unique<Activation>(spec, in);
    case LayerKind::kMaxPool:
    case LayerKind::kAvgPool:
      return std::make_unique<Pool>(spec, in, index);
    case LayerKind::kGlobalAvgPool:
      return std::make_unique<GlobalAvgPool>(spec, in, index);
    case LayerKind::kFlatten:
      return std::make_unique<Identity>(spec, in, Shape{shape_size(in)});
    case LayerKind::kResidualBegin:
    case LayerKind::kResidualEnd:
      return std::make_unique<Identity>(spec, in, in);
    case LayerKind::kSelfAttention1h:
      return std::make_unique<SelfAttention>(spec, in, index);
    case LayerKind::kSqueezeExcite:
      return std::make_unique<SqueezeExcite>(spec, in, index);
  }
  throw ShapeError(static_cast<std::ptrdiff_t>(index), "unsupported layer kind");
}

}  // namespace archsim::nn
