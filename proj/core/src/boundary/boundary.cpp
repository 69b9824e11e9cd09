#include "archsim/boundary/boundary.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <optional>

#include "archsim/errors.hpp"
#include "archsim/log.hpp"
#include "archsim/parallel.hpp"
#include "archsim/rng.hpp"

namespace archsim::boundary {

using nlohmann::json;

std::vector<std::string> planar_families() { return {"mlp-relu", "mlp-gelu", "rbf-ish", "piecewise-linear"}; }

nn::ModelSpec planar_spec(const std::string& family, std::size_t width) {
  using nn::LayerKind;
  using nn::LayerSpec;
  nn::ModelSpec s;
  s.name = family;
  s.family = family;
  s.input = {1, 2, 1};
  s.num_classes = 2;
  const auto flat = LayerSpec::of(LayerKind::kFlatten);
  if (family == "mlp-relu") {
    s.layers = {flat, LayerSpec::dense(width), LayerSpec::of(LayerKind::kRelu), LayerSpec::dense(width),
                LayerSpec::of(LayerKind::kRelu), LayerSpec::dense(2)};
  } else if (family == "mlp-gelu") {
    s.layers = {flat, LayerSpec::dense(width), LayerSpec::of(LayerKind::kGelu), LayerSpec::dense(width),
                LayerSpec::of(LayerKind::kGelu), LayerSpec::dense(2)};
  } else if (family == "rbf-ish") {
    s.layers = {flat, LayerSpec::dense(2 * width), LayerSpec::of(LayerKind::kSilu), LayerSpec::dense(2)};
  } else if (family == "piecewise-linear") {
    s.layers = {flat, LayerSpec::dense(std::max<std::size_t>(2, width / 2)), LayerSpec::leaky_relu(0.1f),
                LayerSpec::dense(2)};
  } else {
    throw ValidationError("unknown planar family '" + family + "'");
  }
  nn::validate(s);
  return s;
}

nn::Model linear_planar(const std::string& name, double nx, double ny, double offset) {
  nn::ModelSpec s;
  s.name = name;
  s.family = "linear";
  s.input = {1, 2, 1};
  s.num_classes = 2;
  s.layers = {nn::LayerSpec::of(nn::LayerKind::kFlatten), nn::LayerSpec::dense(2)};
  auto net = nn::Network::build(s.layers, s.input.shape());
  nn::WeightMap w;
  const auto& params = net->params();
  Tensor weight(params[0].shape), bias(params[1].shape);
  // logit1 - logit0 = 2 (n . x - offset)
  weight[0 * 2 + 1] = static_cast<float>(nx);
  weight[1 * 2 + 1] = static_cast<float>(ny);
  weight[0 * 2 + 0] = static_cast<float>(-nx);
  weight[1 * 2 + 0] = static_cast<float>(-ny);
  bias[1] = static_cast<float>(-offset);
  bias[0] = static_cast<float>(offset);
  w.emplace(params[0].name, std::move(weight));
  w.emplace(params[1].name, std::move(bias));
  nn::TrainingMeta meta;
  meta.trained = true;
  return nn::Model(std::move(s), std::move(w), meta);
}

void check_planar(const nn::Model& m) {
  const auto& r = m.resolution();
  if (r.height != 1 || r.width != 2 || r.channels != 1 || m.num_classes() != 2) {
    throw ValidationError("model '" + m.name() + "' is not a planar two-class model");
  }
}

Dataset planar_dataset(std::uint64_t seed, std::size_t n) {
  if (n < 4) throw ValidationError("planar dataset needs at least 4 points");
  constexpr double kPi = 3.14159265358979323846;
  Dataset d;
  d.name = "planar-sine";
  d.num_classes = 2;
  d.provenance = json{{"format", "planar"}, {"seed", seed}, {"n", n}}.dump();
  d.images = Tensor({n, 1, 2, 1});
  d.labels.resize(n);
  d.split.resize(n);
  Rng rng(seed, "planar");
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(), y = rng.uniform();
    d.images[2 * i] = static_cast<float>(x);
    d.images[2 * i + 1] = static_cast<float>(y);
    d.labels[i] = y > 0.5 + 0.2 * std::sin(2 * kPi * x) ? 1 : 0;
    d.split[i] = i % 2 ? Split::kEval : Split::kTrain;
  }
  return d;
}

namespace {

Tensor points_tensor(const std::vector<double>& xy) {
  const std::size_t n = xy.size() / 2;
  std::vector<float> v(xy.begin(), xy.end());
  return Tensor::from_data({n, 1, 2, 1}, std::move(v));
}

std::vector<int> grid_predictions(const nn::Model& m, const Box& b, std::size_t grid_n, unsigned threads) {
  std::vector<int> out(grid_n * grid_n);
  parallel_for(grid_n, threads, [&](std::size_t row) {
    std::vector<double> xy;
    xy.reserve(2 * grid_n);
    const double y = b.y0 + (static_cast<double>(row) + 0.5) / static_cast<double>(grid_n) * (b.y1 - b.y0);
    for (std::size_t c = 0; c < grid_n; ++c) {
      xy.push_back(b.x0 + (static_cast<double>(c) + 0.5) / static_cast<double>(grid_n) * (b.x1 - b.x0));
      xy.push_back(y);
    }
    const auto p = nn::predict(m, points_tensor(xy), grid_n);
    std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(row * grid_n));
  });
  return out;
}

double disagreement_of(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i];
  return static_cast<double>(diff) / static_cast<double>(a.size());
}

void check_domain(const Box& b) {
  if (!(b.x1 > b.x0) || !(b.y1 > b.y0) || !std::isfinite(b.area())) {
    throw ValidationError("boundary domain has zero area");
  }
}

}  // namespace

double boundary_disagreement(const nn::Model& f, const nn::Model& g, const Box& domain, std::size_t grid_n,
                             unsigned threads) {
  check_planar(f);
  check_planar(g);
  check_domain(domain);
  if (grid_n < 100) throw ValidationError("grid-n must be at least 100");
  return disagreement_of(grid_predictions(f, domain, grid_n, threads), grid_predictions(g, domain, grid_n, threads));
}

namespace {

using Triplet = std::array<std::size_t, 3>;

// Random non-collinear sample triplets; the first k of a longer draw equal
// a draw of k with the same seed.
std::vector<Triplet> draw_triplets(const Tensor& samples, std::size_t count, std::uint64_t seed) {
  const std::size_t n = samples.dim(0), d = samples.row_size();
  Rng rng(seed, "triplets");
  std::vector<Triplet> out;
  for (std::size_t t = 0; t < count; ++t) {
    bool found = false;
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
      const Triplet tr{rng.below(n), rng.below(n), rng.below(n)};
      if (tr[0] == tr[1] || tr[1] == tr[2] || tr[0] == tr[2]) continue;
      const float* pa = samples.raw() + tr[0] * d;
      const float* pb = samples.raw() + tr[1] * d;
      const float* pc = samples.raw() + tr[2] * d;
      double nb = 0.0, nc = 0.0, dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double ab = static_cast<double>(pb[k]) - pa[k], ac = static_cast<double>(pc[k]) - pa[k];
        nb += ab * ab;
        nc += ac * ac;
        dot += ab * ac;
      }
      // Gram determinant: squared area of the spanned parallelogram.
      if (nb * nc - dot * dot > 1e-12 * std::max(1.0, nb * nc)) {
        out.push_back(tr);
        found = true;
      }
    }
    if (!found) throw ValidationError("could not draw a non-collinear triplet in 100 attempts");
  }
  return out;
}

std::size_t triangle_size(std::size_t grid_n) { return grid_n * (grid_n + 1) / 2; }

// Barycentric grid points of triplets [begin, end) as rows shaped like the samples.
Tensor triangle_points(const Tensor& samples, const std::vector<Triplet>& triplets, std::size_t begin, std::size_t end,
                       std::size_t grid_n) {
  const std::size_t d = samples.row_size();
  const double step = 1.0 / static_cast<double>(grid_n - 1);
  Shape shape = samples.shape();
  shape[0] = (end - begin) * triangle_size(grid_n);
  Tensor out(shape);
  float* dst = out.raw();
  for (std::size_t t = begin; t < end; ++t) {
    const float* pa = samples.raw() + triplets[t][0] * d;
    const float* pb = samples.raw() + triplets[t][1] * d;
    const float* pc = samples.raw() + triplets[t][2] * d;
    for (std::size_t i = 0; i < grid_n; ++i) {
      for (std::size_t j = 0; i + j < grid_n; ++j) {
        const double u = static_cast<double>(i) * step, v = static_cast<double>(j) * step;
        for (std::size_t k = 0; k < d; ++k) {
          *dst++ = static_cast<float>(pa[k] + u * (static_cast<double>(pb[k]) - pa[k]) +
                                      v * (static_cast<double>(pc[k]) - pa[k]));
        }
      }
    }
  }
  return out;
}

// Predictions on every triangle grid point, rendered a few triangles at a time.
std::vector<int> triangle_predictions(const nn::Model& m, const Tensor& samples, const std::vector<Triplet>& triplets,
                                      std::size_t grid_n) {
  std::vector<int> out;
  out.reserve(triplets.size() * triangle_size(grid_n));
  for (std::size_t t = 0; t < triplets.size(); t += 32) {
    const auto p = nn::predict(m, triangle_points(samples, triplets, t, std::min(triplets.size(), t + 32), grid_n));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void check_triplet_args(const Tensor& samples, std::size_t num_triplets, std::size_t grid_n) {
  if (samples.rank() < 2 || samples.dim(0) < 3) throw ValidationError("triplet similarity needs at least 3 samples");
  if (num_triplets == 0 || grid_n < 2) throw ValidationError("triplet similarity needs triplets and grid-n >= 2");
}

}  // namespace

double triplet_plane_similarity(const nn::Model& f, const nn::Model& g, const Tensor& samples, std::size_t num_triplets,
                                std::size_t grid_n, std::uint64_t seed) {
  check_triplet_args(samples, num_triplets, grid_n);
  const auto pf = nn::predict(f, samples);
  const auto pg = nn::predict(g, samples);
  const bool varied = std::any_of(pf.begin(), pf.end(), [&](int p) { return p != pf[0]; }) ||
                      std::any_of(pg.begin(), pg.end(), [&](int p) { return p != pg[0]; });
  if (!varied) throw ValidationError("triplet similarity needs samples with at least 2 predicted classes");
  const auto triplets = draw_triplets(samples, num_triplets, seed);
  // Every triangle has the same number of grid points, so the mean over
  // triangles equals the pooled agreement.
  return 1.0 - disagreement_of(triangle_predictions(f, samples, triplets, grid_n),
                               triangle_predictions(g, samples, triplets, grid_n));
}

double flip_radius(const nn::Model& m, const Tensor& point, const MinFlipConfig& cfg) {
  const int label = nn::predict(m, point)[0];
  const int labels[] = {label};
  const Tensor grad = nn::input_gradient(m, point, labels);
  float dir[2];
  for (int k = 0; k < 2; ++k) dir[k] = grad[k] > 0.0f ? 1.0f : (grad[k] < 0.0f ? -1.0f : 0.0f);
  if (dir[0] == 0.0f && dir[1] == 0.0f) return -1.0;
  auto flips = [&](double r) {
    Tensor p = point;
    p[0] = static_cast<float>(std::clamp(point[0] + r * dir[0], cfg.domain.x0, cfg.domain.x1));
    p[1] = static_cast<float>(std::clamp(point[1] + r * dir[1], cfg.domain.y0, cfg.domain.y1));
    return nn::predict(m, p)[0] != label;
  };
  double lo = 0.0, hi = cfg.max_radius;
  if (!flips(hi)) return -1.0;
  for (int h = 0; h < cfg.halvings; ++h) {
    const double mid = 0.5 * (lo + hi);
    (flips(mid) ? hi : lo) = mid;
  }
  if (hi - lo > cfg.tolerance) return -1.0;
  return hi;
}

MinFlipResult min_flip_similarity(const nn::Model& f, const nn::Model& g, const Tensor& samples,
                                  const MinFlipConfig& cfg) {
  check_planar(f);
  check_planar(g);
  MinFlipResult r;
  double total = 0.0;
  for (std::size_t i = 0; i < samples.dim(0); ++i) {
    const Tensor p = samples.slice_rows(i, i + 1);
    const double df = flip_radius(f, p, cfg);
    const double dg = flip_radius(g, p, cfg);
    if (df < 0.0 || dg < 0.0) {
      ++r.skipped;
      continue;
    }
    total += std::abs(df - dg);
    ++r.used;
  }
  r.dissimilarity = r.used ? total / static_cast<double>(r.used) : std::numeric_limits<double>::quiet_NaN();
  r.similarity = -r.dissimilarity;
  return r;
}

const MethodRank& RankReport::method(const std::string& name) const {
  for (const auto& m : methods)
    if (m.method == name) return m;
  throw ValidationError("rank report has no method '" + name + "'");
}

std::string RankReport::to_json() const {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json ms = json::array();
  for (const auto& m : methods) {
    json vals = json::array();
    for (double v : m.values) vals.push_back(num(v));
    ms.push_back({{"method", m.method},
                  {"spearman-vs-oracle", num(m.spearman)},
                  {"spearman-std", num(m.spearman_std)},
                  {"degenerate", m.degenerate},
                  {"values", vals}});
  }
  json o = json::array();
  for (double v : oracle) o.push_back(num(v));
  return json{{"models", models},
              {"pairs", pairs},
              {"oracle-disagreement", o},
              {"sat-epsilon", epsilon},
              {"min-flip", {{"used", min_flip_used}, {"skipped", min_flip_skipped}}},
              {"methods", ms}}
             .dump(2) +
         "\n";
}

namespace {

bool all_tie(const std::vector<double>& v) {
  for (double x : v)
    if (!(x == v[0])) return false;
  return true;
}

// Spearman over the pairs where both values are finite; NaN when either
// side is constant.
double finite_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> a, b;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isfinite(x[i]) && std::isfinite(y[i])) {
      a.push_back(x[i]);
      b.push_back(y[i]);
    }
  }
  if (a.size() < 3 || all_tie(a) || all_tie(b)) return std::numeric_limits<double>::quiet_NaN();
  return stats::spearman(a, b);
}

double sample_std(const std::vector<double>& v) {
  std::vector<double> f;
  for (double x : v)
    if (std::isfinite(x)) f.push_back(x);
  return f.size() < 2 ? 0.0 : stats::stddev(f);
}

std::vector<std::size_t> random_positions(std::size_t pool, std::size_t count, std::uint64_t seed) {
  Rng rng(seed, "positions");
  auto perm = rng.permutation(pool);
  perm.resize(std::min(count, pool));
  std::sort(perm.begin(), perm.end());
  return perm;
}

struct PairIndex {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  explicit PairIndex(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
};

double median_gap_epsilon(const std::vector<double>& oracle, const Box& domain, double scale) {
  std::vector<double> gaps;
  for (double d : oracle) gaps.push_back(d * domain.area() / (domain.x1 - domain.x0));
  std::sort(gaps.begin(), gaps.end());
  const std::size_t n = gaps.size();
  const double median = n % 2 ? gaps[n / 2] : 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]);
  if (!(median > 0.0)) {
    warn("planar SAT: median boundary gap is zero; using epsilon 1e-3");
    return 1e-3;
  }
  return scale * median;
}

std::vector<double> oracle_values(std::span<const nn::Model> models, const PairIndex& idx, const Box& domain,
                                  std::size_t grid_n, unsigned threads) {
  std::vector<std::vector<int>> grids(models.size());
  parallel_for(models.size(), threads, [&](std::size_t i) { grids[i] = grid_predictions(models[i], domain, grid_n, 1); });
  std::vector<double> out;
  for (auto [i, j] : idx.pairs) out.push_back(disagreement_of(grids[i], grids[j]));
  return out;
}

std::vector<double> sat_values(const sat::TransferTable& table, const PairIndex& idx,
                               std::span<const std::size_t> positions) {
  std::vector<double> out;
  for (auto [i, j] : idx.pairs) {
    const auto c = table.counts(i, j, positions);
    out.push_back(c.eligible ? sat::sat_value(c, 0.01) : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

}  // namespace

RankReport rank_benchmark(std::span<const nn::Model> models, const Dataset& data, const RankConfig& cfg,
                          const Box& domain) {
  if (models.size() < 8) throw ValidationError("rank benchmark needs at least 8 planar models");
  for (const auto& m : models) check_planar(m);
  check_domain(domain);
  const PairIndex idx(models.size());
  RankReport rep;
  for (const auto& m : models) rep.models.push_back(m.name());
  for (auto [i, j] : idx.pairs) rep.pairs.push_back(models[i].name() + "|" + models[j].name());
  rep.oracle = oracle_values(models, idx, domain, cfg.grid_n, cfg.threads);
  rep.epsilon = median_gap_epsilon(rep.oracle, domain, cfg.epsilon_scale);

  auto add = [&](std::string name, std::vector<double> values, const std::vector<std::vector<double>>& resampled) {
    MethodRank m;
    m.method = std::move(name);
    m.degenerate = all_tie(values);
    m.spearman = m.degenerate ? std::numeric_limits<double>::quiet_NaN() : finite_spearman(values, rep.oracle);
    std::vector<double> rhos;
    for (const auto& r : resampled) rhos.push_back(finite_spearman(r, rep.oracle));
    m.spearman_std = sample_std(rhos);
    m.values = std::move(values);
    rep.methods.push_back(std::move(m));
  };

  {
    MethodRank o;
    o.method = "oracle";
    o.values = rep.oracle;
    o.degenerate = all_tie(rep.oracle);
    o.spearman = o.degenerate ? std::numeric_limits<double>::quiet_NaN() : 1.0;
    rep.methods.push_back(std::move(o));
  }

  const auto pool = data.indices(Split::kEval);
  if (pool.empty()) throw ValidationError("rank benchmark needs eval points");
  const auto table = sat::build_transfer_table(models, data, pool, planar_attack(rep.epsilon, cfg.attack_iterations, cfg.seed),
                                               cfg.threads);
  const auto sub_size = static_cast<std::size_t>(std::max<long long>(1, std::llround(cfg.eval_fraction * static_cast<double>(pool.size()))));
  std::vector<std::vector<double>> sat_resampled;
  for (std::size_t r = 0; r < cfg.resamples; ++r) {
    sat_resampled.push_back(sat_values(table, idx, random_positions(pool.size(), sub_size, derive_seed(cfg.seed, r))));
  }
  add("sat", sat_values(table, idx, {}), sat_resampled);

  const Dataset eval = data.subset(pool);
  auto triplet_run = [&](std::uint64_t seed) {
    std::vector<double> out(idx.pairs.size());
    parallel_for(idx.pairs.size(), cfg.threads, [&](std::size_t p) {
      out[p] = triplet_plane_similarity(models[idx.pairs[p].first], models[idx.pairs[p].second], eval.images,
                                        cfg.num_triplets, cfg.triplet_grid, seed);
    });
    return out;
  };
  std::vector<std::vector<double>> trip_resampled;
  for (std::size_t r = 0; r < cfg.resamples; ++r) trip_resampled.push_back(triplet_run(derive_seed(cfg.seed, r)));
  add("triplet-plane", triplet_run(cfg.seed), trip_resampled);

  if (cfg.with_min_flip) {
    MinFlipConfig mf;
    mf.domain = domain;
    mf.max_radius = std::max(domain.x1 - domain.x0, domain.y1 - domain.y0);
    // Flip radii depend on one model at a time, so compute them once per
    // model and sample.
    auto radii_for = [&](std::uint64_t seed) {
      const auto pos = random_positions(eval.size(), cfg.min_flip_samples, seed);
      std::vector<std::vector<double>> radii(models.size(), std::vector<double>(pos.size()));
      parallel_for(models.size(), cfg.threads, [&](std::size_t m) {
        for (std::size_t k = 0; k < pos.size(); ++k) {
          radii[m][k] = flip_radius(models[m], eval.images.slice_rows(pos[k], pos[k] + 1), mf);
        }
      });
      return radii;
    };
    auto flip_values = [&](const std::vector<std::vector<double>>& radii, std::size_t* used, std::size_t* skipped) {
      std::vector<double> out;
      for (auto [i, j] : idx.pairs) {
        double total = 0.0;
        std::size_t n = 0;
        for (std::size_t k = 0; k < radii[i].size(); ++k) {
          if (radii[i][k] < 0.0 || radii[j][k] < 0.0) {
            if (skipped) ++*skipped;
            continue;
          }
          total += std::abs(radii[i][k] - radii[j][k]);
          ++n;
        }
        if (used) *used += n;
        out.push_back(n ? -total / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN());
      }
      return out;
    };
    std::vector<std::vector<double>> flip_resampled;
    for (std::size_t r = 0; r < cfg.resamples; ++r) {
      flip_resampled.push_back(flip_values(radii_for(derive_seed(cfg.seed ^ 0x5bd1e995ULL, r)), nullptr, nullptr));
    }
    add("min-flip", flip_values(radii_for(cfg.seed), &rep.min_flip_used, &rep.min_flip_skipped), flip_resampled);
  }
  return rep;
}

std::vector<StabilityRow> stability_study(std::span<const nn::Model> models, const Dataset& data,
                                          const StabilityConfig& cfg) {
  if (models.size() < 2) throw ValidationError("stability study needs at least 2 models");
  if (cfg.seeds < 2) throw ValidationError("stability study needs at least 2 seeds");
  const PairIndex idx(models.size());
  const auto pool = data.indices(Split::kEval);
  for (auto s : cfg.sat_sizes) {
    if (s == 0 || s > pool.size()) throw ValidationError("stability study: subsample size outside [1, |eval|]");
  }
  const auto table = sat::build_transfer_table(models, data, pool, cfg.attack, cfg.threads);
  const Dataset eval = data.subset(pool);

  auto summarize = [&](const std::vector<std::vector<double>>& runs, StabilityRow& row) {
    std::vector<double> means, stds;
    for (std::size_t p = 0; p < idx.pairs.size(); ++p) {
      std::vector<double> v;
      for (const auto& r : runs)
        if (std::isfinite(r[p])) v.push_back(r[p]);
      if (v.size() < 2) continue;
      means.push_back(stats::mean(v));
      stds.push_back(stats::stddev(v));
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.std_percent = stds.empty() ? nan : stats::mean(stds);
    const double spread = means.size() >= 2 ? stats::stddev(means) : 0.0;
    row.relative_std = spread > 0.0 ? row.std_percent / spread : nan;
  };

  const double points_per_triangle = static_cast<double>(triangle_size(cfg.triplet_grid));
  std::vector<StabilityRow> out;
  std::vector<std::size_t> trip_budgets;
  for (auto size : cfg.sat_sizes) {
    std::vector<std::vector<double>> runs;
    for (std::size_t r = 0; r < cfg.seeds; ++r) {
      const auto pos = random_positions(pool.size(), size, derive_seed(cfg.seed, r));
      std::vector<double> v;
      for (auto [i, j] : idx.pairs) {
        const auto c = table.counts(i, j, pos);
        v.push_back(c.eligible ? sat::raw_transfer(c, 0.0) : std::numeric_limits<double>::quiet_NaN());
      }
      runs.push_back(std::move(v));
    }
    StabilityRow sat_row{"sat", size, 2.0 * static_cast<double>(size) * (cfg.attack.iterations + 1.0), 0.0, 0.0};
    summarize(runs, sat_row);
    out.push_back(sat_row);

    trip_budgets.push_back(
        static_cast<std::size_t>(std::max(1.0, std::round(sat_row.evaluations / (2.0 * points_per_triangle)))));
  }
  if (!cfg.with_triplets) return out;

  // Triangles depend only on the seed, so each model labels the longest
  // draw once and every budget reads a prefix.
  check_triplet_args(eval.images, 1, cfg.triplet_grid);
  const std::size_t longest = *std::max_element(trip_budgets.begin(), trip_budgets.end());
  const std::size_t per = triangle_size(cfg.triplet_grid);
  std::vector<std::vector<std::vector<int>>> preds(cfg.seeds);
  for (std::size_t r = 0; r < cfg.seeds; ++r) {
    const auto triplets = draw_triplets(eval.images, longest, derive_seed(cfg.seed, r));
    preds[r].resize(models.size());
    parallel_for(models.size(), cfg.threads, [&](std::size_t m) {
      preds[r][m] = triangle_predictions(models[m], eval.images, triplets, cfg.triplet_grid);
    });
  }
  for (std::size_t b = 0; b < trip_budgets.size(); ++b) {
    const std::size_t count = trip_budgets[b] * per;
    std::vector<std::vector<double>> runs(cfg.seeds);
    for (std::size_t r = 0; r < cfg.seeds; ++r) {
      for (auto [i, j] : idx.pairs) {
        std::size_t agree = 0;
        for (std::size_t k = 0; k < count; ++k) agree += preds[r][i][k] == preds[r][j][k];
        runs[r].push_back(100.0 * static_cast<double>(agree) / static_cast<double>(count));
      }
    }
    StabilityRow row{"triplet-plane", trip_budgets[b], 2.0 * static_cast<double>(count), 0.0, 0.0};
    summarize(runs, row);
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(2 * b + 1), row);
  }
  return out;
}

double planar_epsilon(std::span<const nn::Model> models, const Box& domain, double scale, std::size_t grid_n,
                      unsigned threads) {
  for (const auto& m : models) check_planar(m);
  check_domain(domain);
  return median_gap_epsilon(oracle_values(models, PairIndex(models.size()), domain, grid_n, threads), domain, scale);
}

attacks::AttackConfig planar_attack(double eps, int iterations, std::uint64_t seed) {
  attacks::AttackConfig a;
  a.epsilon = eps;
  a.iterations = iterations;
  a.step_size = 2.5 * eps / static_cast<double>(iterations);
  a.seed = seed;
  return a;
}

std::vector<nn::Model> planar_zoo(const Dataset& data, std::size_t per_family, std::uint64_t seed, unsigned threads) {
  if (per_family == 0) throw ValidationError("planar zoo needs at least one model per family");
  static constexpr int kEpochs[] = {3, 8, 20, 40};
  std::vector<nn::ModelSpec> specs;
  std::vector<nn::TrainConfig> cfgs;
  for (const auto& family : planar_families()) {
    for (std::size_t v = 0; v < per_family; ++v) {
      nn::ModelSpec s = planar_spec(family, 8 + 8 * (v % 2));
      s.name = family + "-" + std::to_string(v);
      nn::TrainConfig c;
      c.seed = derive_seed(derive_seed(seed, family), v);
      c.epochs = kEpochs[v % 4];
      c.learning_rate = 0.1;
      c.weight_decay = 0.0;
      c.batch_size = 32;
      specs.push_back(std::move(s));
      cfgs.push_back(c);
    }
  }
  std::vector<std::optional<nn::Model>> out(specs.size());
  parallel_for(specs.size(), threads, [&](std::size_t i) { out[i].emplace(nn::train(specs[i], data, cfgs[i])); });
  std::vector<nn::Model> models;
  for (auto& m : out) models.push_back(std::move(*m));
  return models;
}

}  // namespace archsim::boundary
