#include "archsim/ensemble/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <numeric>
#include <set>

#include "archsim/errors.hpp"
#include "archsim/parallel.hpp"
#include "archsim/rng.hpp"

namespace archsim::ensemble {

std::size_t LogitCache::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw ValidationError("model '" + name + "' has no cached logits");
}

LogitCache compute_logits(std::span<const nn::Model> zoo, const Tensor& images, std::span<const int> labels,
                          unsigned threads) {
  if (labels.empty()) throw ValidationError("ensemble evaluation set is empty");
  LogitCache cache;
  cache.labels.assign(labels.begin(), labels.end());
  cache.num_classes = zoo.empty() ? 0 : zoo[0].num_classes();
  for (const auto& m : zoo) {
    if (m.num_classes() != cache.num_classes) throw ValidationError("ensemble members disagree on class count");
    cache.names.push_back(m.name());
  }
  cache.logits.resize(zoo.size());
  parallel_for(zoo.size(), threads, [&](std::size_t i) {
    const Tensor x = nn::fit_to_model(zoo[i], images);
    auto& out = cache.logits[i];
    out.reserve(x.dim(0) * cache.num_classes);
    for (std::size_t b = 0; b < x.dim(0); b += 256) {
      const Tensor l = nn::forward(zoo[i], x.slice_rows(b, std::min(x.dim(0), b + 256)));
      out.insert(out.end(), l.values().begin(), l.values().end());
    }
  });
  return cache;
}

namespace {

int argmax(const double* z, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < k; ++c)
    if (z[c] > z[best]) best = c;
  return static_cast<int>(best);
}

}  // namespace

EnsembleResult evaluate(const LogitCache& cache, std::span<const std::size_t> members) {
  if (members.empty()) throw ValidationError("an ensemble needs at least one member");
  const std::size_t n = cache.num_examples(), k = cache.num_classes;
  EnsembleResult r;
  std::vector<std::vector<bool>> wrong(members.size(), std::vector<bool>(n));
  for (std::size_t m = 0; m < members.size(); ++m) {
    r.members.push_back(cache.names.at(members[m]));
    const auto& lg = cache.logits[members[m]];
    std::size_t errors = 0;
    std::vector<double> z(k);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) z[c] = lg[i * k + c];
      wrong[m][i] = argmax(z.data(), k) != cache.labels[i];
      errors += wrong[m][i];
    }
    r.member_errors.push_back(static_cast<double>(errors) / static_cast<double>(n));
  }
  std::size_t ens_errors = 0, all_wrong = 0;
  std::vector<double> z(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(z.begin(), z.end(), 0.0);
    bool every = true;
    for (std::size_t m = 0; m < members.size(); ++m) {
      const float* row = cache.logits[members[m]].data() + i * k;
      for (std::size_t c = 0; c < k; ++c) z[c] += row[c];
      every = every && wrong[m][i];
    }
    for (auto& v : z) v /= static_cast<double>(members.size());
    ens_errors += argmax(z.data(), k) != cache.labels[i];
    all_wrong += every;
  }
  r.top1_error = static_cast<double>(ens_errors) / static_cast<double>(n);
  r.all_wrong_ratio = static_cast<double>(all_wrong) / static_cast<double>(n);
  const double mean_err = std::accumulate(r.member_errors.begin(), r.member_errors.end(), 0.0) /
                          static_cast<double>(r.member_errors.size());
  r.err_reduction_rate = mean_err > 0.0 ? 1.0 - r.top1_error / mean_err : 0.0;
  return r;
}

EnsembleResult ensemble_error(std::span<const nn::Model> members, const Dataset& data) {
  if (members.size() < 2) throw ValidationError("an ensemble needs at least two members");
  const auto rows = data.indices(Split::kEval);
  if (rows.empty()) throw ValidationError("ensemble evaluation set is empty");
  const Dataset eval = data.subset(rows);
  const auto cache = compute_logits(members, eval.images, eval.labels);
  std::vector<std::size_t> all(members.size());
  std::iota(all.begin(), all.end(), 0);
  return evaluate(cache, all);
}

namespace {

struct Pool {
  std::vector<std::size_t> model;  // cache index per clustered model
  std::vector<int> cluster;
  int num_clusters = 0;
};

Pool make_pool(const LogitCache& cache, const spectral::ClusterAssignment& clusters) {
  Pool p;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    p.model.push_back(cache.index_of(clusters.names[i]));
    p.cluster.push_back(clusters.labels[i]);
    p.num_clusters = std::max(p.num_clusters, clusters.labels[i] + 1);
  }
  return p;
}

std::size_t clusters_spanned(const Pool& p, const std::vector<std::size_t>& subset) {
  std::set<int> seen;
  for (auto i : subset) seen.insert(p.cluster[i]);
  return seen.size();
}

bool feasible(const Pool& p, std::size_t n, std::size_t k) {
  if (k == 0 || k > n || n > p.model.size() || k > static_cast<std::size_t>(p.num_clusters)) return false;
  std::vector<std::size_t> sizes(static_cast<std::size_t>(p.num_clusters), 0);
  for (int c : p.cluster) ++sizes[static_cast<std::size_t>(c)];
  std::sort(sizes.rbegin(), sizes.rend());
  std::size_t total = 0;
  for (std::size_t i = 0; i < k; ++i) total += sizes[i];
  return sizes[k - 1] > 0 && total >= n;
}

double subset_err(const LogitCache& cache, const Pool& p, const std::vector<std::size_t>& subset) {
  std::vector<std::size_t> members;
  for (auto i : subset) members.push_back(p.model[i]);
  return evaluate(cache, members).err_reduction_rate;
}

std::vector<std::size_t> random_subset(Rng& rng, std::size_t pool, std::size_t n) {
  auto perm = rng.permutation(pool);
  perm.resize(n);
  std::sort(perm.begin(), perm.end());
  return perm;
}

std::vector<std::size_t> constructive_subset(Rng& rng, const Pool& p, std::size_t n, std::size_t k) {
  for (;;) {
    auto order = rng.permutation(static_cast<std::size_t>(p.num_clusters));
    order.resize(k);
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < p.model.size(); ++i)
      for (std::size_t c = 0; c < k; ++c)
        if (static_cast<std::size_t>(p.cluster[i]) == order[c]) members[c].push_back(i);
    std::size_t total = 0;
    bool empty = false;
    for (const auto& m : members) {
      total += m.size();
      empty = empty || m.empty();
    }
    if (empty || total < n) continue;
    std::vector<std::size_t> subset, rest;
    for (auto& m : members) {
      const std::size_t pick = rng.below(m.size());
      subset.push_back(m[pick]);
      for (std::size_t j = 0; j < m.size(); ++j)
        if (j != pick) rest.push_back(m[j]);
    }
    rng.shuffle(rest);
    for (std::size_t j = 0; subset.size() < n; ++j) subset.push_back(rest[j]);
    std::sort(subset.begin(), subset.end());
    return subset;
  }
}

}  // namespace

DiversityResult diversity_protocol(const LogitCache& cache, const spectral::ClusterAssignment& clusters,
                                   std::size_t n, std::size_t k, std::size_t trials, std::uint64_t seed) {
  const Pool p = make_pool(cache, clusters);
  DiversityResult r;
  r.n = n;
  r.k = k;
  r.feasible = feasible(p, n, k);
  if (!r.feasible || trials == 0) return r;
  Rng rng(seed, "diversity");
  const std::size_t cap = 1000 * trials;
  std::size_t attempts = 0;
  double total = 0.0;
  r.sampling = "rejection";
  while (r.trials < trials) {
    std::vector<std::size_t> subset;
    if (attempts < cap) {
      ++attempts;
      subset = random_subset(rng, p.model.size(), n);
      if (clusters_spanned(p, subset) != k) continue;
    } else {
      r.sampling = "constructive";
      subset = constructive_subset(rng, p, n, k);
    }
    total += subset_err(cache, p, subset);
    ++r.trials;
  }
  r.mean_err = total / static_cast<double>(r.trials);
  Rng base(seed, "diversity-random");
  double base_total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) base_total += subset_err(cache, p, random_subset(base, p.model.size(), n));
  r.random_mean_err = base_total / static_cast<double>(trials);
  return r;
}

DiversityResult diversity_exhaustive(const LogitCache& cache, const spectral::ClusterAssignment& clusters,
                                     std::size_t n, std::size_t k) {
  const Pool p = make_pool(cache, clusters);
  DiversityResult r;
  r.n = n;
  r.k = k;
  r.sampling = "exhaustive";
  r.feasible = feasible(p, n, k);
  if (!r.feasible) return r;
  const std::size_t m = p.model.size();
  std::vector<std::size_t> subset(n);
  std::iota(subset.begin(), subset.end(), 0);
  double total = 0.0, all_total = 0.0;
  std::size_t all_count = 0;
  for (;;) {
    const double err = subset_err(cache, p, subset);
    all_total += err;
    ++all_count;
    if (clusters_spanned(p, subset) == k) {
      total += err;
      ++r.trials;
    }
    std::size_t i = n;
    while (i > 0 && subset[i - 1] == m - n + i - 1) --i;
    if (i == 0) break;
    ++subset[i - 1];
    for (std::size_t j = i; j < n; ++j) subset[j] = subset[j - 1] + 1;
  }
  r.mean_err = total / static_cast<double>(r.trials);
  r.random_mean_err = all_total / static_cast<double>(all_count);
  return r;
}

CorrelationReport correlate(std::vector<std::string> labels, std::vector<double> x, std::vector<double> y) {
  CorrelationReport r;
  r.labels = std::move(labels);
  r.x = std::move(x);
  r.y = std::move(y);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.pearson = {nan, nan, r.x.size()};
  r.spearman = {nan, nan, r.x.size()};
  if (r.x.size() < 3) {
    r.degenerate = true;
    return r;
  }
  r.pearson = stats::pearson_test(r.x, r.y);
  r.spearman = stats::spearman_test(r.x, r.y);
  r.degenerate = std::isnan(r.pearson.coefficient);
  return r;
}

CorrelationReport similarity_vs_ensemble(const sat::SimilarityMatrix& sm, const LogitCache& cache) {
  std::vector<std::string> labels;
  std::vector<double> sat, err;
  for (std::size_t i = 0; i < sm.size(); ++i) {
    for (std::size_t j = i + 1; j < sm.size(); ++j) {
      if (std::isnan(sm.values[i][j])) continue;
      const std::size_t members[] = {cache.index_of(sm.names[i]), cache.index_of(sm.names[j])};
      labels.push_back(sm.names[i] + "|" + sm.names[j]);
      sat.push_back(sm.values[i][j]);
      err.push_back(evaluate(cache, members).err_reduction_rate);
    }
  }
  if (sat.size() < 8) {
    throw ValidationError("similarity/ensemble correlation needs at least 8 pairs, got " + std::to_string(sat.size()));
  }
  return correlate(std::move(labels), std::move(sat), std::move(err));
}

DistillReport distill_similarity_study(const nn::ModelSpec& student, std::span<const nn::Model> teachers,
                                       const Dataset& data, const nn::TrainConfig& train_cfg,
                                       const sat::SatConfig& sat_cfg) {
  std::set<std::string> families;
  for (const auto& t : teachers) families.insert(t.spec().family);
  if (teachers.size() < 6 || families.size() < 2) {
    throw ValidationError("distillation study needs at least 6 teachers from at least 2 families");
  }
  DistillReport rep;
  rep.student_spec = student.name;
  nn::TrainConfig scratch_cfg = train_cfg;
  scratch_cfg.teacher = nullptr;
  const nn::Model scratch = nn::train(student, data, scratch_cfg);
  rep.scratch_accuracy = scratch.meta().eval_accuracy;

  const auto rows = sat::eval_subset(data, sat_cfg.eval_fraction, sat_cfg.seed);
  std::vector<DistillRow> out(teachers.size());
  parallel_for(teachers.size(), sat_cfg.threads, [&](std::size_t i) {
    nn::TrainConfig cfg = train_cfg;
    cfg.teacher = std::make_shared<const nn::Model>(teachers[i]);
    nn::ModelSpec spec = student;
    spec.name = student.name + "<-" + teachers[i].name();
    const nn::Model s = nn::train(spec, data, cfg);
    const std::vector<nn::Model> pair{teachers[i], s};
    const auto table = sat::build_transfer_table(pair, data, rows, sat_cfg.attack, 1);
    const auto counts = table.counts(0, 1);
    DistillRow& r = out[i];
    r.teacher = teachers[i].name();
    r.teacher_family = teachers[i].spec().family;
    r.same_family = teachers[i].spec().family == student.family;
    r.teacher_accuracy = teachers[i].meta().eval_accuracy;
    r.student_accuracy = s.meta().eval_accuracy;
    r.sat = counts.eligible ? sat::sat_value(counts, sat_cfg.epsilon_floor) : std::numeric_limits<double>::quiet_NaN();
    r.below_scratch = r.teacher_accuracy < rep.scratch_accuracy;
  });
  rep.rows = std::move(out);

  auto split = [&](int which) {
    std::vector<std::string> labels;
    std::vector<double> x, y;
    for (const auto& r : rep.rows) {
      if (std::isnan(r.sat)) continue;
      if (which == 1 && !r.same_family) continue;
      if (which == 2 && r.same_family) continue;
      labels.push_back(r.teacher);
      x.push_back(which == 3 ? r.teacher_accuracy : r.sat);
      y.push_back(r.student_accuracy);
    }
    return correlate(std::move(labels), std::move(x), std::move(y));
  };
  rep.overall = split(0);
  rep.same_family = split(1);
  rep.cross_family = split(2);
  rep.teacher_control = split(3);
  return rep;
}

CorrelationReport cross_dataset_study(std::span<const nn::Model> zoo, const sat::SimilarityMatrix& sm,
                                      const Dataset& second, const nn::TrainConfig& finetune, unsigned threads) {
  std::vector<std::optional<nn::Model>> tuned(zoo.size());
  parallel_for(zoo.size(), threads, [&](std::size_t i) { tuned[i].emplace(nn::fine_tune(zoo[i], second, finetune)); });
  std::vector<nn::Model> models;
  for (auto& t : tuned) models.push_back(std::move(*t));
  const Dataset eval = second.select(Split::kEval);
  const auto cache = compute_logits(models, eval.images, eval.labels, threads);
  return similarity_vs_ensemble(sm, cache);
}

}  // namespace archsim::ensemble
