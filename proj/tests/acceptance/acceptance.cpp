// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "archsim/boundary/boundary.hpp"
#include "archsim/ensemble/ensemble.hpp"
#include "archsim/features/importance.hpp"
#include "archsim/features/keywords.hpp"
#include "archsim/io/files.hpp"
#include "archsim/log.hpp"
#include "archsim/rng.hpp"
#include "archsim/sat/sat.hpp"
#include "archsim/spectral/spectral.hpp"
#include "archsim/stats.hpp"
#include "archsim/zoo/zoo.hpp"
#include "gradient_sweep.hpp"

using namespace archsim;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Options {
  fs::path cache_dir = "acceptance-cache";
  fs::path work_dir = "acceptance-work";
  fs::path cli;
  unsigned threads = 1;
  std::vector<int> only;
};

// ------------------------------------------------------------------ desk zoo

struct Desk {
  zoo::ZooManifest manifest;
  Dataset data;
  std::vector<nn::Model> models;
  std::vector<std::string> family, variation;
  sat::SatConfig cfg;
  std::vector<std::size_t> rows;
  sat::TransferTable pgd;
  sat::SimilarityMatrix sm;
  double build_seconds = 0.0, pgd_seconds = 0.0;
};

Desk& desk(const Options& opt) {
  static std::optional<Desk> d;
  if (d) return *d;
  d.emplace();
  auto t0 = std::chrono::steady_clock::now();
  d->manifest = zoo::default_manifest(3, 0);
  d->data = zoo::synth_shapes(zoo::SynthRecipe::from_json(d->manifest.dataset));
  fs::create_directories(opt.cache_dir);
  auto built = zoo::build_zoo(d->manifest, d->data, opt.cache_dir, opt.threads);
  d->models = std::move(built.models);
  for (const auto& m : d->models) {
    for (const auto& e : d->manifest.entries) {
      if (e.spec.name == m.name()) {
        d->family.push_back(e.family);
        d->variation.push_back(e.variation);
      }
    }
  }
  d->build_seconds = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  d->cfg.threads = opt.threads;
  d->rows = sat::eval_subset(d->data, d->cfg.eval_fraction, d->cfg.seed);
  d->pgd = sat::build_transfer_table(d->models, d->data, d->rows, d->cfg.attack, opt.threads);
  d->sm = sat::matrix_from_table(d->pgd, d->cfg);
  d->pgd_seconds = seconds_since(t0);
  std::printf("# desk zoo: %zu models (%.0fs), PGD transfer table on %zu inputs (%.0fs)\n", d->models.size(),
              d->build_seconds, d->rows.size(), d->pgd_seconds);
  std::fflush(stdout);
  return *d;
}

std::vector<double> upper(const std::vector<std::vector<double>>& m) {
  std::vector<double> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j) out.push_back(m[i][j]);
  return out;
}

// ------------------------------------------------------------------ 1

Outcome gradient_oracle(const Options&) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = testing::gradient_sweep(5, 2024);
  const double secs = seconds_since(t0);
  std::map<nn::LayerKind, int> per_kind;
  double worst_in = 0.0, worst_p = 0.0;
  std::string worst;
  bool ok = true;
  for (const auto& c : cases) {
    per_kind[c.kind]++;
    const double e = std::max(c.result.input_rel_error, c.result.param_rel_error);
    if (!(c.result.input_rel_error < 1e-3) || !(c.result.param_rel_error < 1e-3)) ok = false;
    if (e > std::max(worst_in, worst_p)) worst = c.description;
    worst_in = std::max(worst_in, c.result.input_rel_error);
    worst_p = std::max(worst_p, c.result.param_rel_error);
  }
  std::size_t kinds = 0;
  for (auto k : nn::kAllLayerKinds) {
    if (k == nn::LayerKind::kResidualEnd) continue;  // paired with residual-begin in every case
    if (per_kind[k] < 5) ok = false;
    ++kinds;
  }
  ok = ok && secs < 120.0;
  return {ok, std::to_string(cases.size()) + " cases over " + std::to_string(kinds) + " kinds (residual pair joint), max input rel err " +
                  fmt("%.2e", worst_in) + ", max param rel err " + fmt("%.2e", worst_p) + " [" + worst + "], " +
                  fmt("%.1f", secs) + "s (limit 120s)"};
}

// ------------------------------------------------------------------ 2

Outcome sat_algebra(const Options& opt) {
  auto close = [](double a, double b) { return std::fabs(a - b) <= 1e-12; };
  const double ceil_v = sat::sat_value({50, 50, 50}, 0.01);
  const double floor_v = sat::sat_value({50, 0, 0}, 0.01);
  const double mixed = sat::sat_value({100, 30, 50}, 0.01);  // 80 / 200 = 40%
  bool ok = close(ceil_v, std::log(100.0)) && close(floor_v, std::log(0.01)) && close(mixed, std::log(40.0));
  auto& d = desk(opt);
  std::size_t asym = 0;
  for (std::size_t i = 0; i < d.sm.size(); ++i)
    for (std::size_t j = 0; j < d.sm.size(); ++j) {
      const double a = d.sm.values[i][j], b = d.sm.values[j][i];
      if (std::memcmp(&a, &b, sizeof a) != 0) ++asym;
    }
  ok = ok && asym == 0;
  return {ok, "ln100 " + fmt("%.12f", ceil_v) + ", ln0.01 " + fmt("%.12f", floor_v) + ", ln40 " + fmt("%.12f", mixed) +
                  ", asymmetric entries on the " + std::to_string(d.sm.size()) + "x" + std::to_string(d.sm.size()) +
                  " desk matrix: " + std::to_string(asym)};
}

// ------------------------------------------------------------------ 3

Outcome self_maximality(const Options& opt) {
  auto& d = desk(opt);
  const double slack = 0.05;
  std::size_t gated = 0, violations = 0;
  double min_gap_gated = INFINITY, min_gap_all = INFINITY;
  for (std::size_t i = 0; i < d.sm.size(); ++i) {
    double off = -INFINITY;
    for (std::size_t j = 0; j < d.sm.size(); ++j)
      if (j != i && std::isfinite(d.sm.values[i][j])) off = std::max(off, d.sm.values[i][j]);
    const double gap = d.sm.values[i][i] - off;
    min_gap_all = std::min(min_gap_all, gap);
    if (d.pgd.self_success(i) >= 0.99) {
      ++gated;
      min_gap_gated = std::min(min_gap_gated, gap);
      if (!(gap > slack)) ++violations;
    }
  }
  return {gated > 0 && violations == 0,
          std::to_string(gated) + " models with self-success >= 0.99, min diagonal gap among them " +
              fmt("%.3f", min_gap_gated) + " (slack 0.05); min gap over all " + std::to_string(d.sm.size()) +
              " models " + fmt("%.3f", min_gap_all)};
}

// ------------------------------------------------------------------ 4

Outcome ordering(const Options& opt) {
  auto& d = desk(opt);
  double sum[3] = {0, 0, 0};
  int cnt[3] = {0, 0, 0};
  for (std::size_t i = 0; i < d.sm.size(); ++i)
    for (std::size_t j = i + 1; j < d.sm.size(); ++j) {
      if (!std::isfinite(d.sm.values[i][j])) continue;
      const int k = d.family[i] != d.family[j]                                ? 2
                    : (d.variation[i] == "seed" && d.variation[j] == "seed") ? 0
                                                                              : 1;
      sum[k] += d.sm.values[i][j];
      cnt[k]++;
    }
  const double seed = sum[0] / cnt[0], hp = sum[1] / cnt[1], cross = sum[2] / cnt[2];

  // Runtime: a fresh 10-model zoo at 32x32, trained and compared end to end.
  const auto t0 = std::chrono::steady_clock::now();
  const auto m10 = zoo::default_manifest(2, 0);
  const auto built = zoo::build_zoo(m10, d.data, std::nullopt, opt.threads);
  const auto t10 = sat::build_transfer_table(built.models, d.data, d.rows, d.cfg.attack, opt.threads);
  sat::matrix_from_table(t10, d.cfg);
  const double secs = seconds_since(t0);

  const bool ok = seed - hp > 0.2 && hp - cross > 0.2 && secs < 1200.0 && built.models.size() == 10;
  return {ok, "seed " + fmt("%.3f", seed) + " (" + std::to_string(cnt[0]) + " pairs) > hparam " + fmt("%.3f", hp) + " (" +
                  std::to_string(cnt[1]) + ") > cross " + fmt("%.3f", cross) + " (" + std::to_string(cnt[2]) +
                  "), margins " + fmt("%.3f", seed - hp) + " / " + fmt("%.3f", hp - cross) +
                  " (need > 0.2); 10-model zoo train + SAT " + fmt("%.0f", secs) + "s with " +
                  std::to_string(opt.threads) + " thread(s) (limit 1200s)"};
}

// ------------------------------------------------------------------ 5

Outcome pgd_vs_mifgsm(const Options& opt) {
  auto& d = desk(opt);
  const auto t0 = std::chrono::steady_clock::now();
  const auto table = sat::build_transfer_table(d.models, d.data, d.rows, attacks::AttackConfig::mifgsm(8.0 / 255.0, 10),
                                               opt.threads);
  const auto mi = sat::matrix_from_table(table, d.cfg);
  const double r = stats::pearson(upper(d.sm.values), upper(mi.values));
  return {r > 0.8, "Pearson " + fmt("%.3f", r) + " over " + std::to_string(upper(mi.values).size()) +
                       " pairs (need > 0.8), MI-FGSM 10 steps, " + fmt("%.0f", seconds_since(t0)) + "s"};
}

// ------------------------------------------------------------------ 6

Outcome one_vs_two_sided(const Options& opt) {
  auto& d = desk(opt);
  std::vector<double> one, two;
  for (std::size_t i = 0; i < d.sm.size(); ++i)
    for (std::size_t j = i + 1; j < d.sm.size(); ++j) {
      one.push_back(sat::one_sided_value(d.pgd.one_sided_counts(i, j), d.cfg.epsilon_floor));
      two.push_back(d.sm.values[i][j]);
    }
  const double r = stats::pearson(one, two);
  return {r > 0.6, "Pearson " + fmt("%.3f", r) + " over " + std::to_string(one.size()) + " pairs (need > 0.6)"};
}

// ------------------------------------------------------------------ 7

Outcome stability(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = boundary::planar_dataset(7, 10000);
  const auto models = boundary::planar_zoo(data, 3, 0, opt.threads);
  boundary::StabilityConfig cfg;
  const double eps = boundary::planar_epsilon(models, boundary::Box{}, 0.5, 200, opt.threads);
  cfg.attack = boundary::planar_attack(eps, 20, 0);
  cfg.threads = opt.threads;
  const auto rows = boundary::stability_study(models, data, cfg);
  std::vector<double> sat_std, trip_std;
  std::ostringstream detail;
  detail << models.size() << " planar models, eps " << fmt("%.4f", eps) << ";";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    (r.method == "sat" ? sat_std : trip_std).push_back(r.std_percent);
    detail << " " << r.method << "@" << r.budget << "=" << fmt("%.3f", r.std_percent) << "%";
  }
  bool ok = sat_std.size() == 3 && trip_std.size() == 3;
  for (std::size_t i = 0; ok && i < 3; ++i) {
    if (i > 0 && !(sat_std[i] < sat_std[i - 1])) ok = false;
    if (!(sat_std[i] < trip_std[i])) ok = false;
  }
  detail << "; " << fmt("%.0f", seconds_since(t0)) << "s";
  return {ok, detail.str()};
}

// ------------------------------------------------------------------ 8

Outcome boundary_lab(const Options& opt) {
  const boundary::Box square{-1.0, -1.0, 1.0, 1.0};
  const auto f = boundary::linear_planar("x0", 1.0, 0.0, 0.0);
  double worst = 0.0;
  for (double t : {0.1, 0.25, 0.5, 0.8}) {
    const auto g = boundary::linear_planar("xt", 1.0, 0.0, t);
    worst = std::max(worst, std::fabs(boundary::boundary_disagreement(f, g, square, 2000, opt.threads) - t / 2.0));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = boundary::planar_dataset(0, 2000);
  const auto models = boundary::planar_zoo(data, 3, 0, opt.threads);
  boundary::RankConfig cfg;
  cfg.threads = opt.threads;
  const auto rep = boundary::rank_benchmark(models, data, cfg);
  const double rho = rep.method("sat").spearman;
  const double trip = rep.method("triplet-plane").spearman;
  const bool ok = worst < 1e-3 && models.size() >= 8 && rep.pairs.size() >= 28 && rho <= -0.5;
  return {ok, std::to_string(models.size()) + " planar models, " + std::to_string(rep.pairs.size()) +
                  " pairs, Spearman(SAT, oracle) " + fmt("%.3f", rho) + " (need <= -0.5), triplet |rho| " +
                  fmt("%.3f", std::fabs(trip)) + ", eps " + fmt("%.4f", rep.epsilon) +
                  "; linear pair max |disagreement - t/2| " + fmt("%.2e", worst) + " (need < 1e-3); " +
                  fmt("%.0f", seconds_since(t0)) + "s"};
}

// ------------------------------------------------------------------ 9

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (ab.emplace(a[i], b[i]).first->second != b[i]) return false;
    if (ba.emplace(b[i], a[i]).first->second != a[i]) return false;
  }
  return true;
}

Outcome clustering(const Options& opt) {
  std::ostringstream detail;
  bool ok = true;
  // Planted blocks of sizes 5 and 7.
  {
    const std::size_t n = 12;
    std::vector<int> truth(n);
    for (std::size_t i = 0; i < n; ++i) truth[i] = i < 5 ? 0 : 1;
    Rng rng(99, "planted");
    linalg::Matrix a = linalg::zeros(n, n);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) {
      names.push_back("m" + std::to_string(i));
      for (std::size_t j = i + 1; j < n; ++j)
        a[i][j] = a[j][i] = truth[i] == truth[j] ? rng.uniform(60.0, 90.0) : rng.uniform(0.0, 5.0);
    }
    spectral::ClusterConfig cc;
    cc.k = 2;
    const auto c = spectral::spectral_cluster(a, names, cc);
    const bool planted = same_partition(c.labels, truth);
    ok = ok && planted;
    detail << "planted 5+7 blocks " << (planted ? "recovered" : "NOT recovered");
  }
  auto& d = desk(opt);
  // 4 families x 2 seeds at K = 4.
  {
    std::vector<std::size_t> sel;
    std::vector<std::string> names, tags;
    for (std::size_t i = 0; i < d.models.size(); ++i) {
      if (d.family[i] == "mlp" || d.variation[i] != "seed") continue;
      sel.push_back(i);
      names.push_back(d.models[i].name());
      tags.push_back(d.family[i]);
    }
    linalg::Matrix a = linalg::zeros(sel.size(), sel.size());
    for (std::size_t x = 0; x < sel.size(); ++x)
      for (std::size_t y = 0; y < sel.size(); ++y)
        if (x != y) a[x][y] = d.sm.raw[sel[x]][sel[y]];
    spectral::ClusterConfig cc;
    cc.k = 4;
    cc.threads = opt.threads;
    const auto c = spectral::spectral_cluster(a, names, cc);
    const double purity = spectral::cluster_purity(c.labels, tags);
    std::set<std::string> fams(tags.begin(), tags.end());
    ok = ok && purity >= 0.8 && fams.size() == 4 && sel.size() >= 8;
    detail << "; desk " << fams.size() << " families x 2 seeds (" << sel.size() << " models) K=4 purity "
           << fmt("%.3f", purity) << " (need >= 0.8)";
  }
  // Scale invariance and permutation equivariance on the full desk adjacency.
  {
    const auto adj = spectral::adjacency_from_sat(d.sm);
    spectral::ClusterConfig cc;
    cc.k = 5;
    cc.threads = opt.threads;
    const auto base = spectral::spectral_cluster(adj, cc);
    bool scale_ok = true;
    for (double s : {0.25, 3.0, 1000.0}) {
      auto scaled = adj;
      for (auto& row : scaled.weights)
        for (auto& v : row) v *= s;
      scale_ok = scale_ok && spectral::spectral_cluster(scaled, cc).labels == base.labels;
    }
    const std::size_t n = adj.names.size();
    bool perm_ok = true;
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto perm = Rng(seed, "perm").permutation(n);
      spectral::Adjacency p;
      p.weights = linalg::zeros(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        p.names.push_back(adj.names[perm[i]]);
        for (std::size_t j = 0; j < n; ++j) p.weights[i][j] = adj.weights[perm[i]][perm[j]];
      }
      const auto c = spectral::spectral_cluster(p, cc);
      std::vector<int> back(n);
      for (std::size_t i = 0; i < n; ++i) back[perm[i]] = c.labels[i];
      perm_ok = perm_ok && same_partition(back, base.labels);
    }
    ok = ok && scale_ok && perm_ok;
    detail << "; scale x{0.25,3,1000} labels " << (scale_ok ? "identical" : "DIFFER") << "; 3 permutations "
           << (perm_ok ? "equivariant" : "NOT equivariant");
  }
  return {ok, detail.str()};
}

// ------------------------------------------------------------------ 10

std::vector<features::PairFeatureRow> planted_rows(std::size_t n, std::uint64_t seed, double noise,
                                                   const std::vector<std::size_t>& constant) {
  Rng rng(seed, "acceptance-rows");
  std::vector<features::PairFeatureRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = rows[i];
    r.a = "a" + std::to_string(i);
    r.b = "b" + std::to_string(i);
    for (std::size_t c = 0; c < features::kNumComponents; ++c) r.diff[c] = static_cast<std::uint8_t>(rng.below(2));
    for (auto c : constant) r.diff[c] = 0;
    r.target = 3.0 * r.diff[features::kBaseArchitecture] + noise * rng.normal();
  }
  return rows;
}

Outcome importance(const Options&) {
  using namespace features;
  const std::vector<std::size_t> constant{kGroupConv, kFinalPooling};
  int first = 0;
  double worst_unused = 0.0;
  std::size_t unused_total = 0;
  for (std::uint64_t run = 0; run < 10; ++run) {
    const auto rows = planted_rows(200, run, 0.1, constant);
    GbmConfig cfg;
    cfg.seed = run;
    const auto model = fit_gbm(rows, cfg);
    const auto imp = permutation_importance(model, rows, 10, run);
    const auto top = std::max_element(imp.begin(), imp.end()) - imp.begin();
    if (static_cast<std::size_t>(top) == kBaseArchitecture) ++first;
    const auto used = model.used_features();
    for (std::size_t c = 0; c < kNumComponents; ++c) {
      if (used[c]) continue;
      ++unused_total;
      worst_unused = std::max(worst_unused, std::fabs(imp[c]));
    }
  }
  const auto train = planted_rows(300, 100, 0.1, {});
  const auto test = planted_rows(100, 200, 0.1, {});
  GbmConfig cfg;  // 500 / 12 / 4 / 0.02
  const auto model = fit_gbm(train, cfg);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  rows_to_matrix(test, x, y);
  const double r2 = r2_score(y, model.predict(x));
  const bool ok = first == 10 && unused_total >= 20 && worst_unused < 1e-6 && r2 > 0.95;
  return {ok, "planted feature first in " + std::to_string(first) + "/10 runs; " + std::to_string(unused_total) +
                  " unused feature scores, max |importance| " + fmt("%.1e", worst_unused) + " (need < 1e-6); held-out R^2 " +
                  fmt("%.4f", r2) + " at 500/12/4/0.02 (need > 0.95)"};
}

// ------------------------------------------------------------------ 11

Outcome ensembles(const Options& opt) {
  auto& d = desk(opt);
  const Dataset eval = d.data.select(Split::kEval);
  const auto cache = ensemble::compute_logits(d.models, eval.images, eval.labels, opt.threads);
  std::ostringstream detail;
  bool ok = true;

  double dup_err = 0.0;
  for (std::size_t i = 0; i < cache.num_models(); ++i) {
    const std::vector<std::size_t> twice{i, i}, thrice{i, i, i};
    dup_err = std::max({dup_err, std::fabs(ensemble::evaluate(cache, twice).err_reduction_rate),
                        std::fabs(ensemble::evaluate(cache, thrice).err_reduction_rate)});
  }
  ok = ok && dup_err == 0.0;
  detail << "duplicated members max |ERR| " << dup_err;

  const auto corr = ensemble::similarity_vs_ensemble(d.sm, cache);
  ok = ok && !corr.degenerate && corr.pearson.coefficient < 0.0;
  detail << "; Pearson(SAT, 2-ensemble ERR) " << fmt("%.3f", corr.pearson.coefficient) << " over " << corr.x.size()
         << " pairs";

  spectral::ClusterConfig cc;
  cc.k = 5;
  cc.threads = opt.threads;
  const auto clusters = spectral::spectral_cluster(spectral::adjacency_from_sat(d.sm), cc);
  for (std::size_t n : {2, 3}) {
    const auto one = ensemble::diversity_protocol(cache, clusters, n, 1, 100, derive_seed(0, n * 100 + 1));
    const auto all = ensemble::diversity_protocol(cache, clusters, n, n, 100, derive_seed(0, n * 100 + n));
    ok = ok && one.feasible && all.feasible && all.mean_err > one.mean_err;
    detail << "; N=" << n << " ERR k=N " << fmt("%.4f", all.mean_err) << " vs k=1 " << fmt("%.4f", one.mean_err);
  }

  std::size_t increases = 0;
  for (std::uint64_t r = 0; r < 20; ++r) {
    const auto order = Rng(r, "all-wrong").permutation(cache.num_models());
    double prev = 2.0;
    for (std::size_t s = 1; s <= order.size(); ++s) {
      const std::vector<std::size_t> members(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(s));
      const double w = ensemble::evaluate(cache, members).all_wrong_ratio;
      if (w > prev) ++increases;
      prev = w;
    }
  }
  ok = ok && increases == 0;
  detail << "; all-wrong ratio increases along 20 random growth orders: " << increases;
  return {ok, detail.str()};
}

// ------------------------------------------------------------------ 12

Outcome tfidf(const Options& opt) {
  using namespace features;
  std::ostringstream detail;
  bool ok = true;
  auto& d = desk(opt);
  std::map<std::string, ArchFeatureRecord> records;
  for (const auto& m : d.models) records.emplace(m.name(), m.spec().arch_features);

  // Global document frequencies over the desk zoo.
  std::map<std::string, std::size_t> df;
  for (const auto& [name, r] : records)
    for (const auto& t : record_tokens(r)) df[t]++;
  const std::size_t n_docs = records.size();

  spectral::ClusterConfig cc;
  cc.k = 5;
  const auto clusters = spectral::spectral_cluster(spectral::adjacency_from_sat(d.sm), cc);
  const auto kw = tfidf_keywords(clusters, records, 5);
  std::size_t universal_hits = 0, shape_bad = 0;
  for (std::size_t c = 0; c < kw.size(); ++c) {
    std::set<std::string> candidates;
    for (std::size_t i = 0; i < clusters.size(); ++i)
      if (clusters.labels[i] == static_cast<int>(c))
        for (const auto& t : record_tokens(records.at(clusters.names[i])))
          if (df[t] < n_docs) candidates.insert(t);
    if (kw[c].size() != std::min<std::size_t>(5, candidates.size())) ++shape_bad;
    for (const auto& k : kw[c])
      if (df[k.token] == n_docs) ++universal_hits;
  }
  std::size_t universal = 0;
  for (const auto& [t, n] : df) universal += n == n_docs;
  ok = ok && kw.size() == cc.k && shape_bad == 0 && universal_hits == 0 && universal > 0;
  detail << universal << " tokens shared by all " << n_docs << " desk documents, " << universal_hits
         << " of them returned; " << kw.size() << " clusters, " << shape_bad << " with a non top-5 list";

  // A cluster of three identical records among varied ones.
  {
    std::map<std::string, ArchFeatureRecord> recs;
    std::vector<std::string> names;
    std::vector<int> labels;
    const auto& base = records.begin()->second;
    for (int i = 0; i < 3; ++i) {
      names.push_back("same" + std::to_string(i));
      recs.emplace(names.back(), base);
      labels.push_back(0);
    }
    for (const auto& [name, r] : records) {
      names.push_back(name);
      recs.emplace(name, r);
      labels.push_back(1);
    }
    spectral::ClusterAssignment a;
    a.names = names;
    a.labels = labels;
    a.config.k = 2;
    std::map<std::string, std::size_t> gdf;
    for (const auto& [name, r] : recs)
      for (const auto& t : record_tokens(r)) gdf[t]++;
    const auto got = tfidf_keywords(a, recs, 5);
    // Expected: the base record's tokens ordered by global rarity, ties by token.
    auto tokens = record_tokens(base);
    std::erase_if(tokens, [&](const std::string& t) { return gdf[t] == recs.size(); });
    std::sort(tokens.begin(), tokens.end(),
              [&](const std::string& x, const std::string& y) { return gdf[x] != gdf[y] ? gdf[x] < gdf[y] : x < y; });
    tokens.resize(std::min<std::size_t>(5, tokens.size()));
    std::vector<std::string> got0;
    for (const auto& k : got[0]) got0.push_back(k.token);
    const bool rare_ok = got0 == tokens;
    ok = ok && rare_ok;
    detail << "; identical-record cluster returns its rarest tokens: " << (rare_ok ? "yes" : "NO");
  }
  return {ok, detail.str()};
}

// ------------------------------------------------------------------ 13

std::map<std::string, std::string> primary_artifacts(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root);
    if (rel.filename() == "run.json" || *rel.begin() == "cache") continue;
    out[rel.generic_string()] = io::read_text(e.path());
  }
  return out;
}

Outcome end_to_end(const Options& opt) {
  if (opt.cli.empty() || !fs::exists(opt.cli)) return {false, "CLI binary not found: " + opt.cli.string()};
  const std::vector<std::string> stages{"train-zoo", "sat-matrix", "cluster", "importance", "keywords", "ensemble", "report"};
  auto run = [&](const fs::path& out, const std::string& zoo_flags) {
    fs::remove_all(out);
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& s : stages) {
      std::string cmd = "\"" + opt.cli.string() + "\" --seed 0 --threads " + std::to_string(opt.threads) +
                        " --out-dir \"" + out.string() + "\" " + s;
      if (s == "train-zoo") cmd += " " + zoo_flags;
      cmd += " > \"" + (out.parent_path() / (out.filename().string() + "." + s + ".log")).string() + "\" 2>&1";
      fs::create_directories(out);
      if (std::system(cmd.c_str()) != 0) return std::make_pair(false, seconds_since(t0));
    }
    return std::make_pair(true, seconds_since(t0));
  };
  fs::create_directories(opt.work_dir);
  fs::remove_all(opt.work_dir / "cache-a");
  const auto first = run(opt.work_dir / "run-a", "--cache-dir \"" + (opt.work_dir / "cache-a").string() + "\"");
  const auto second = run(opt.work_dir / "run-b", "--no-cache");
  if (!first.first || !second.first) return {false, "a pipeline stage exited nonzero; see logs in " + opt.work_dir.string()};
  const auto a = primary_artifacts(opt.work_dir / "run-a");
  const auto b = primary_artifacts(opt.work_dir / "run-b");
  std::size_t differ = 0;
  std::string first_diff;
  for (const auto& [k, v] : a) {
    const auto it = b.find(k);
    if (it == b.end() || it->second != v) {
      if (first_diff.empty()) first_diff = k;
      ++differ;
    }
  }
  differ += b.size() > a.size() ? b.size() - a.size() : 0;
  const bool report_ok = a.count("report/report.json") > 0;
  const double worst = std::max(first.second, second.second);
  const bool ok = differ == 0 && report_ok && worst < 2700.0;
  return {ok, std::to_string(a.size()) + " primary artifacts compared, " + std::to_string(differ) + " differ" +
                  (first_diff.empty() ? "" : " (first: " + first_diff + ")") + "; cold pipeline " +
                  fmt("%.0f", first.second) + "s and " + fmt("%.0f", second.second) + "s with " +
                  std::to_string(opt.threads) + " thread(s) (limit 2700s)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"archsim acceptance suite"};
  Options opt;
  app.add_option("--cache-dir", opt.cache_dir, "desk zoo model cache")->capture_default_str();
  app.add_option("--work-dir", opt.work_dir, "scratch directory for the end-to-end runs")->capture_default_str();
  app.add_option("--cli", opt.cli, "archsim binary for the end-to-end criterion");
  app.add_option("--threads", opt.threads)->capture_default_str();
  app.add_option("--only", opt.only, "criterion numbers to run");
  CLI11_PARSE(app, argc, argv);

  set_warning_handler([](const std::string&) {});
  const std::vector<std::pair<const char*, std::function<Outcome(const Options&)>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"SAT algebra and symmetry", sat_algebra},
      {"self-maximality", self_maximality},
      {"seed > hparam > cross-family ordering", ordering},
      {"PGD vs MI-FGSM agreement", pgd_vs_mifgsm},
      {"one-sided vs two-sided agreement", one_vs_two_sided},
      {"subsample stability", stability},
      {"boundary ground truth", boundary_lab},
      {"spectral clustering", clustering},
      {"component importance", importance},
      {"ensembles", ensembles},
      {"TF-IDF keywords", tfidf},
      {"end-to-end reproducibility", end_to_end},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!opt.only.empty() && std::find(opt.only.begin(), opt.only.end(), id) == opt.only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second(opt);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
