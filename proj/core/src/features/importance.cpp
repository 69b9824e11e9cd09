#include "archsim/features/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "archsim/errors.hpp"
#include "archsim/log.hpp"
#include "archsim/rng.hpp"

namespace archsim::features {

DiffVector hamming_diff(const ArchFeatureRecord& a, const ArchFeatureRecord& b) {
  DiffVector d{};
  for (std::size_t i = 0; i < kNumComponents; ++i) {
    if (a.values[i].empty() || b.values[i].empty()) {
      throw ValidationError("architecture record lacks component " + std::string(kComponentNames[i]));
    }
    d[i] = a.values[i] != b.values[i];
  }
  return d;
}

std::vector<PairFeatureRow> pair_rows(const sat::SimilarityMatrix& sm,
                                      const std::map<std::string, ArchFeatureRecord>& records) {
  std::vector<PairFeatureRow> rows;
  for (std::size_t i = 0; i < sm.size(); ++i) {
    for (std::size_t j = i + 1; j < sm.size(); ++j) {
      if (std::isnan(sm.values[i][j])) continue;
      auto ra = records.find(sm.names[i]), rb = records.find(sm.names[j]);
      if (ra == records.end() || rb == records.end()) {
        throw ValidationError("no architecture record for '" + (ra == records.end() ? sm.names[i] : sm.names[j]) + "'");
      }
      rows.push_back({sm.names[i], sm.names[j], hamming_diff(ra->second, rb->second), sm.values[i][j]});
    }
  }
  return rows;
}

void GbmConfig::validate() const {
  if (stages <= 0 || max_depth <= 0 || min_samples_split < 2 || min_samples_leaf < 1 || !(learning_rate > 0.0)) {
    throw ValidationError("boosting stages, depth, min samples and learning rate must be positive");
  }
}

double predict_tree(const Tree& tree, std::span<const double> x) {
  int node = 0;
  while (tree[node].feature >= 0) {
    node = x[static_cast<std::size_t>(tree[node].feature)] <= tree[node].threshold ? tree[node].left : tree[node].right;
  }
  return tree[node].value;
}

double Regressor::predict(std::span<const double> x) const {
  double f = base;
  for (const auto& t : trees) f += learning_rate * predict_tree(t, x);
  return f;
}

std::vector<double> Regressor::predict(const std::vector<std::vector<double>>& x) const {
  std::vector<double> out;
  out.reserve(x.size());
  for (const auto& row : x) out.push_back(predict(row));
  return out;
}

std::vector<bool> Regressor::used_features() const {
  std::vector<bool> used(num_features, false);
  for (const auto& t : trees)
    for (const auto& n : t)
      if (n.feature >= 0) used[static_cast<std::size_t>(n.feature)] = true;
  return used;
}

double r2_score(std::span<const double> y, std::span<const double> pred) {
  if (y.size() != pred.size() || y.empty()) throw ValidationError("R^2 needs matching nonempty inputs");
  const double m = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sse += (y[i] - pred[i]) * (y[i] - pred[i]);
    sst += (y[i] - m) * (y[i] - m);
  }
  if (sst == 0.0) return sse == 0.0 ? 1.0 : 0.0;
  return 1.0 - sse / sst;
}

namespace {

struct Builder {
  const std::vector<std::vector<double>>& x;
  const std::vector<double>& r;
  const GbmConfig& cfg;
  std::vector<std::size_t> feature_order;
  Tree tree;

  int grow(std::vector<std::size_t> idx, int depth) {
    const int id = static_cast<int>(tree.size());
    tree.emplace_back();
    double sum = 0.0, sq = 0.0;
    for (auto i : idx) {
      sum += r[i];
      sq += r[i] * r[i];
    }
    const double n = static_cast<double>(idx.size());
    tree[id].value = sum / n;
    const double sse = sq - sum * sum / n;
    if (depth >= cfg.max_depth || idx.size() < cfg.min_samples_split || !(sse > 0.0)) return id;

    int best_feature = -1;
    double best_gain = 1e-12 * sse, best_threshold = 0.0;
    std::vector<std::size_t> sorted;
    for (auto f : feature_order) {
      sorted = idx;
      std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) { return x[a][f] < x[b][f]; });
      double left = 0.0;
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        left += r[sorted[k]];
        const double xl = x[sorted[k]][f], xr = x[sorted[k + 1]][f];
        if (!(xl < xr)) continue;
        const std::size_t nl = k + 1, nr = sorted.size() - nl;
        if (nl < cfg.min_samples_leaf || nr < cfg.min_samples_leaf) continue;
        const double right = sum - left;
        const double gain = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr) - sum * sum / n;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (xl + xr);
        }
      }
    }
    if (best_feature < 0) return id;
    std::vector<std::size_t> li, ri;
    for (auto i : idx) (x[i][static_cast<std::size_t>(best_feature)] <= best_threshold ? li : ri).push_back(i);
    tree[id].feature = best_feature;
    tree[id].threshold = best_threshold;
    const int l = grow(std::move(li), depth + 1);
    tree[id].left = l;
    const int rr = grow(std::move(ri), depth + 1);
    tree[id].right = rr;
    return id;
  }
};

std::vector<std::size_t> canonical_order(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });
  return order;
}

void check_matrix(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  if (x.empty() || x.size() != y.size()) throw ValidationError("feature rows and targets must match and be nonempty");
  for (const auto& row : x)
    if (row.size() != x[0].size()) throw ValidationError("ragged feature matrix");
}

}  // namespace

Tree fit_tree(const std::vector<std::vector<double>>& x, const std::vector<double>& residual, const GbmConfig& cfg) {
  check_matrix(x, residual);
  Builder b{x, residual, cfg, {}, {}};
  Rng rng(cfg.seed, "feature-order");
  b.feature_order = rng.permutation(x[0].size());
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  b.grow(std::move(idx), 0);
  return b.tree;
}

Regressor fit_gbm(const std::vector<std::vector<double>>& x_in, const std::vector<double>& y_in, const GbmConfig& cfg) {
  cfg.validate();
  check_matrix(x_in, y_in);
  const auto order = canonical_order(x_in, y_in);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (auto i : order) {
    x.push_back(x_in[i]);
    y.push_back(y_in[i]);
  }
  Regressor model;
  model.num_features = x[0].size();
  model.learning_rate = cfg.learning_rate;
  model.base = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  const bool constant = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
  if (constant) {
    warn("regression target is constant; boosting fits no trees");
    model.base = y[0];
    model.train_r2 = 1.0;
    return model;
  }
  std::vector<double> f(y.size(), model.base), residual(y.size());
  for (int s = 0; s < cfg.stages; ++s) {
    for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - f[i];
    GbmConfig stage = cfg;
    stage.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(s));
    model.trees.push_back(fit_tree(x, residual, stage));
    for (std::size_t i = 0; i < y.size(); ++i) f[i] += cfg.learning_rate * predict_tree(model.trees.back(), x[i]);
  }
  model.train_r2 = r2_score(y, f);
  return model;
}

void rows_to_matrix(const std::vector<PairFeatureRow>& rows, std::vector<std::vector<double>>& x,
                    std::vector<double>& y) {
  x.clear();
  y.clear();
  for (const auto& r : rows) {
    x.emplace_back(r.diff.begin(), r.diff.end());
    y.push_back(r.target);
  }
}

Regressor fit_gbm(const std::vector<PairFeatureRow>& rows, const GbmConfig& cfg) {
  if (rows.size() < 30) throw ValidationError("boosting needs at least 30 pair rows, got " + std::to_string(rows.size()));
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  rows_to_matrix(rows, x, y);
  return fit_gbm(x, y, cfg);
}

double permuted_r2_drop(const Regressor& model, const std::vector<std::vector<double>>& x,
                        const std::vector<double>& y, std::size_t feature, std::span<const std::size_t> perm) {
  const double baseline = r2_score(y, model.predict(x));
  auto shuffled = x;
  for (std::size_t i = 0; i < x.size(); ++i) shuffled[i][feature] = x[perm[i]][feature];
  return baseline - r2_score(y, model.predict(shuffled));
}

std::vector<double> permutation_importance(const Regressor& model, const std::vector<std::vector<double>>& x_in,
                                           const std::vector<double>& y_in, int repeats, std::uint64_t seed) {
  check_matrix(x_in, y_in);
  if (repeats <= 0) throw ValidationError("permutation repeats must be positive");
  const auto order = canonical_order(x_in, y_in);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (auto i : order) {
    x.push_back(x_in[i]);
    y.push_back(y_in[i]);
  }
  const std::size_t p = x[0].size();
  std::vector<double> importance(p, 0.0);
  for (std::size_t f = 0; f < p; ++f) {
    double total = 0.0;
    for (int r = 0; r < repeats; ++r) {
      Rng rng(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(f)), static_cast<std::uint64_t>(r)), "permute");
      const auto perm = rng.permutation(x.size());
      total += permuted_r2_drop(model, x, y, f, perm);
    }
    importance[f] = total / repeats;
  }
  return importance;
}

std::vector<double> permutation_importance(const Regressor& model, const std::vector<PairFeatureRow>& rows,
                                           int repeats, std::uint64_t seed) {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  rows_to_matrix(rows, x, y);
  return permutation_importance(model, x, y, repeats, seed);
}

}  // namespace archsim::features
