#include "archsim/nn/model.hpp"

#include <algorithm>
#include <cmath>

#include "archsim/errors.hpp"
#include "archsim/rng.hpp"

namespace archsim::nn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning-rate must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight-decay must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0,1)");
  if (epochs <= 0) throw ValidationError("epochs must be positive");
  if (batch_size == 0) throw ValidationError("batch-size must be positive");
  if (teacher && !teacher->meta().trained) throw ValidationError("distillation teacher is not trained");
}

double TrainConfig::learning_rate_at(int epoch) const {
  if (schedule == Schedule::kCosine) {
    constexpr double kPi = 3.14159265358979323846;
    return learning_rate * 0.5 * (1.0 + std::cos(kPi * static_cast<double>(epoch) / static_cast<double>(epochs)));
  }
  // Step decay: x0.1 at 50% and again at 75% of the epochs.
  double lr = learning_rate;
  if (2 * epoch >= epochs) lr *= 0.1;
  if (4 * epoch >= 3 * epochs) lr *= 0.1;
  return lr;
}

Model::Model(ModelSpec spec, WeightMap weights, TrainingMeta meta)
    : spec_(std::move(spec)), weights_(std::move(weights)), meta_(std::move(meta)) {
  validate(spec_);
  network_ = Network::build(spec_.layers, spec_.input.shape());
  for (const auto& p : network_->params()) {
    auto it = weights_.find(p.name);
    if (it == weights_.end()) throw ValidationError("model '" + spec_.name + "' lacks weight '" + p.name + "'");
    if (it->second.shape() != p.shape) {
      throw ShapeError(static_cast<std::ptrdiff_t>(p.layer), "weight '" + p.name + "' shape mismatch");
    }
    if (!it->second.all_finite()) throw NonFiniteError(static_cast<std::ptrdiff_t>(p.layer), "weight '" + p.name + "' not finite");
  }
  if (weights_.size() != network_->params().size()) {
    throw ValidationError("model '" + spec_.name + "' has unexpected extra weights");
  }
}

Model Model::renamed(std::string name) const {
  ModelSpec s = spec_;
  s.name = std::move(name);
  return Model(std::move(s), weights_, meta_);
}

WeightMap init_weights(const ModelSpec& spec, std::uint64_t seed) {
  auto net = Network::build(spec.layers, spec.input.shape());
  WeightMap w;
  for (const auto& p : net->params()) {
    Tensor t(p.shape);
    switch (p.role) {
      case ParamRole::kWeight: {
        Rng rng(seed, "init/" + p.name);
        const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(p.fan_in, 1)));
        for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
        break;
      }
      case ParamRole::kNormScale:
        t.fill(1.0f);
        break;
      case ParamRole::kBuffer:
        t.fill(p.init_ones ? 1.0f : 0.0f);
        break;
      default:
        break;
    }
    w.emplace(p.name, std::move(t));
  }
  return w;
}

Tensor fit_to_model(const Model& model, const Tensor& batch) {
  const auto& res = model.resolution();
  if (batch.rank() != 4) throw ShapeError(0, "expected an (N,H,W,C) batch, got " + shape_string(batch.shape()));
  if (batch.dim(3) != res.channels) throw ShapeError(0, "channel count does not match model input");
  return resize_bilinear(batch, res.height, res.width);
}

Tensor forward(const Model& model, const Tensor& batch) {
  return model.network().forward(batch, model.weights(), Mode::kInference);
}

std::vector<int> predict(const Model& model, const Tensor& batch, std::size_t chunk) {
  const Tensor x = fit_to_model(model, batch);
  const std::size_t n = x.dim(0);
  const std::size_t k = model.num_classes();
  std::vector<int> out;
  out.reserve(n);
  for (std::size_t b = 0; b < n; b += chunk) {
    const Tensor logits = forward(model, x.slice_rows(b, std::min(n, b + chunk)));
    for (std::size_t i = 0; i < logits.dim(0); ++i) {
      const float* row = logits.raw() + i * k;
      out.push_back(static_cast<int>(std::max_element(row, row + k) - row));
    }
  }
  return out;
}

double accuracy(const Model& model, const Tensor& images, std::span<const int> labels) {
  const auto pred = predict(model, images);
  if (pred.size() != labels.size()) throw ValidationError("label count does not match images");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

namespace {

// Softmax cross-entropy: returns the summed loss, writes dL/dlogits.
double softmax_xent(const Tensor& logits, std::span<const int> labels, Tensor& grad, float scale) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw ValidationError("label count does not match batch");
  grad = Tensor(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw ValidationError("label out of range");
    const float* z = logits.raw() + i * k;
    const float mx = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(z[j] - mx));
    total += std::log(sum) - static_cast<double>(z[y] - mx);
    float* g = grad.raw() + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(z[j] - mx)) / sum;
      g[j] = static_cast<float>((p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) * scale);
    }
  }
  return total;
}

}  // namespace

Tensor input_gradient(const Model& model, const Tensor& batch, std::span<const int> labels) {
  Tape tape;
  const Tensor logits = model.network().forward(batch, model.weights(), Mode::kInference, &tape);
  Tensor g;
  softmax_xent(logits, labels, g, 1.0f);
  Tensor dx = model.network().backward(g, model.weights(), tape, nullptr);
  if (batch.rank() == model.network().input_shape().size()) dx.reshape(batch.shape());
  return dx;
}

LossAndGrads loss_and_gradients(const Network& net, const WeightMap& weights, const Tensor& batch,
                                std::span<const int> labels, Mode mode) {
  LossAndGrads out;
  const Tensor logits = net.forward(batch, weights, mode, &out.tape);
  Tensor g;
  const double n = static_cast<double>(logits.dim(0));
  out.loss = softmax_xent(logits, labels, g, static_cast<float>(1.0 / n)) / n;
  out.input_grad = net.backward(g, weights, out.tape, &out.param_grads);
  return out;
}

namespace {

Model run_sgd(const ModelSpec& spec, WeightMap weights, const Dataset& dataset, const TrainConfig& cfg,
              const EpochCallback& on_epoch) {
  cfg.validate();
  validate(spec);
  if (dataset.num_classes != spec.num_classes) throw ValidationError("dataset class count does not match spec");
  if (dataset.channels() != spec.input.channels) throw ValidationError("dataset channels do not match spec");
  auto net = Network::build(spec.layers, spec.input.shape());

  const Dataset train_set = dataset.select(Split::kTrain);
  const Tensor images = resize_bilinear(train_set.images, spec.input.height, spec.input.width);
  std::vector<int> labels = train_set.labels;
  TrainingMeta meta;
  if (cfg.teacher) {
    labels = predict(*cfg.teacher, train_set.images);
    meta.label_mode = "teacher-hard-distill";
    meta.teacher = cfg.teacher->name();
  }

  std::vector<Tensor> velocity;
  for (const auto& p : net->params()) velocity.emplace_back(p.shape);

  const std::size_t n = images.dim(0);
  const std::size_t bs = std::min(cfg.batch_size, n);
  Rng shuffle_rng(cfg.seed, "shuffle");
  if (on_epoch) on_epoch(0, Model(spec, weights, meta));
  std::size_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate_at(epoch);
    const auto order = shuffle_rng.permutation(n);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b + bs <= n || (b < n && batches == 0); b += bs) {
      const std::size_t e = std::min(n, b + bs);
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(b),
                                    order.begin() + static_cast<std::ptrdiff_t>(e));
      const Tensor x = images.gather_rows(rows);
      std::vector<int> y;
      y.reserve(rows.size());
      for (auto r : rows) y.push_back(labels[r]);
      LossAndGrads lg;
      try {
        lg = loss_and_gradients(*net, weights, x, y, Mode::kTraining);
      } catch (const NonFiniteError& err) {
        throw TrainingDiverged(epoch, step, err.what());
      }
      if (!std::isfinite(lg.loss)) throw TrainingDiverged(epoch, step, "loss is not finite");
      net->update_running_stats(lg.tape, weights);
      const auto& params = net->params();
      for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].role == ParamRole::kBuffer) continue;
        Tensor& w = weights.at(params[k].name);
        Tensor& v = velocity[k];
        const Tensor& g = lg.param_grads[k];
        const float wd = params[k].role == ParamRole::kWeight ? static_cast<float>(cfg.weight_decay) : 0.0f;
        const float mu = static_cast<float>(cfg.momentum);
        const float rate = static_cast<float>(lr);
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = mu * v[i] + g[i] + wd * w[i];
          w[i] -= rate * v[i];
        }
        if (!w.all_finite()) throw TrainingDiverged(epoch, step, "weight '" + params[k].name + "' became non-finite");
      }
      epoch_loss += lg.loss;
      ++batches;
      ++step;
    }
    meta.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    if (on_epoch) on_epoch(epoch + 1, Model(spec, weights, meta));
  }

  meta.trained = true;
  meta.seed = cfg.seed;
  meta.learning_rate = cfg.learning_rate;
  meta.weight_decay = cfg.weight_decay;
  meta.momentum = cfg.momentum;
  meta.epochs = cfg.epochs;
  meta.schedule = cfg.schedule;
  meta.batch_size = cfg.batch_size;
  Model trained(spec, std::move(weights), meta);
  meta.train_accuracy = accuracy(trained, train_set.images, train_set.labels);
  const auto eval_rows = dataset.indices(Split::kEval);
  if (!eval_rows.empty()) {
    const Dataset eval = dataset.subset(eval_rows);
    meta.eval_accuracy = accuracy(trained, eval.images, eval.labels);
  } else {
    meta.eval_accuracy = meta.train_accuracy;
  }
  return Model(spec, trained.weights(), meta);
}

}  // namespace

Model train(const ModelSpec& spec, const Dataset& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(spec);
  return run_sgd(spec, init_weights(spec, cfg.seed), dataset, cfg, on_epoch);
}

Model fine_tune(const Model& model, const Dataset& dataset, const TrainConfig& cfg) {
  return run_sgd(model.spec(), model.weights(), dataset, cfg, {});
}

}  // namespace archsim::nn
