#include <doctest.h>

#include <cmath>
#include <numeric>

#include "archsim/ensemble/ensemble.hpp"
#include "archsim/errors.hpp"
#include "archsim/rng.hpp"

using namespace archsim;
using namespace archsim::ensemble;

namespace {

LogitCache random_cache(std::size_t models, std::size_t examples, std::size_t classes, std::uint64_t seed) {
  LogitCache c;
  c.num_classes = classes;
  Rng rng(seed, "cache");
  for (std::size_t i = 0; i < examples; ++i) c.labels.push_back(static_cast<int>(rng.below(classes)));
  for (std::size_t m = 0; m < models; ++m) {
    c.names.push_back("m" + std::to_string(m));
    std::vector<float> l(examples * classes);
    for (std::size_t i = 0; i < examples; ++i)
      for (std::size_t k = 0; k < classes; ++k)
        l[i * classes + k] = static_cast<float>(rng.normal() + (static_cast<int>(k) == c.labels[i] ? 0.8 : 0.0));
    c.logits.push_back(std::move(l));
  }
  return c;
}

spectral::ClusterAssignment clusters_of(const LogitCache& c, std::vector<int> labels) {
  spectral::ClusterAssignment a;
  a.names = c.names;
  a.labels = std::move(labels);
  return a;
}

int argmax_ref(const std::vector<double>& z) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(z.size()); ++k)
    if (z[k] > z[best]) best = k;
  return best;
}

}  // namespace

TEST_CASE("duplicated members have zero error reduction") {
  auto c = random_cache(1, 200, 5, 1);
  c.names.push_back("copy");
  c.logits.push_back(c.logits[0]);
  const std::vector<std::size_t> both{0, 1};
  const auto r = evaluate(c, both);
  CHECK(r.err_reduction_rate == 0.0);
  CHECK(r.top1_error == r.member_errors[0]);
  CHECK(r.all_wrong_ratio == r.member_errors[0]);
}

TEST_CASE("ensemble error matches a direct logit average") {
  const auto c = random_cache(4, 150, 4, 2);
  const std::vector<std::size_t> members{0, 2, 3};
  const auto r = evaluate(c, members);
  std::size_t wrong = 0, all_wrong = 0;
  std::vector<double> member_wrong(3, 0);
  for (std::size_t i = 0; i < 150; ++i) {
    std::vector<double> z(4, 0.0);
    bool every = true;
    for (std::size_t m = 0; m < 3; ++m) {
      std::vector<double> own(4);
      for (std::size_t k = 0; k < 4; ++k) {
        own[k] = c.logits[members[m]][i * 4 + k];
        z[k] += own[k] / 3.0;
      }
      const bool w = argmax_ref(own) != c.labels[i];
      member_wrong[m] += w;
      every = every && w;
    }
    wrong += argmax_ref(z) != c.labels[i];
    all_wrong += every;
  }
  CHECK(r.top1_error == doctest::Approx(wrong / 150.0));
  CHECK(r.all_wrong_ratio == doctest::Approx(all_wrong / 150.0));
  const double mean = (member_wrong[0] + member_wrong[1] + member_wrong[2]) / 450.0;
  CHECK(r.err_reduction_rate == doctest::Approx(1.0 - (wrong / 150.0) / mean));
}

TEST_CASE("argmax ties go to the lowest class") {
  LogitCache c;
  c.num_classes = 3;
  c.names = {"a", "b"};
  c.labels = {1, 0};
  c.logits = {{0, 1, 1, 2, 2, 0}, {0, 1, 1, 2, 2, 0}};
  const std::vector<std::size_t> both{0, 1};
  const auto r = evaluate(c, both);
  CHECK(r.top1_error == 0.0);
  CHECK(r.err_reduction_rate == 0.0);
}

TEST_CASE("all-wrong ratio never increases when members are added") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto c = random_cache(6, 300, 3, seed);
    const auto order = Rng(seed, "order").permutation(6);
    double prev = 1.0;
    for (std::size_t size = 1; size <= 6; ++size) {
      const std::vector<std::size_t> members(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size));
      const double r = evaluate(c, members).all_wrong_ratio;
      CHECK(r <= prev);
      prev = r;
    }
  }
}

TEST_CASE("diversity feasibility follows cluster sizes") {
  const auto c = random_cache(6, 50, 3, 3);
  const auto cl = clusters_of(c, {0, 0, 0, 1, 1, 2});
  CHECK(diversity_protocol(c, cl, 3, 1, 10, 0).feasible);
  CHECK(!diversity_protocol(c, cl, 4, 1, 10, 0).feasible);
  CHECK(diversity_protocol(c, cl, 3, 3, 10, 0).feasible);
  CHECK(!diversity_protocol(c, cl, 2, 3, 10, 0).feasible);
  CHECK(!diversity_protocol(c, cl, 3, 4, 10, 0).feasible);
}

TEST_CASE("exhaustive protocol averages every qualifying subset") {
  const auto c = random_cache(6, 120, 3, 4);
  const auto cl = clusters_of(c, {0, 0, 1, 1, 2, 2});
  for (std::size_t k = 1; k <= 2; ++k) {
    const auto r = diversity_exhaustive(c, cl, 2, k);
    double total = 0.0, all = 0.0;
    std::size_t count = 0, pairs = 0;
    for (std::size_t a = 0; a < 6; ++a)
      for (std::size_t b = a + 1; b < 6; ++b) {
        const std::vector<std::size_t> m{a, b};
        const double err = evaluate(c, m).err_reduction_rate;
        all += err;
        ++pairs;
        if ((cl.labels[a] == cl.labels[b] ? 1u : 2u) != k) continue;
        total += err;
        ++count;
      }
    CHECK(r.trials == count);
    CHECK(r.mean_err == doctest::Approx(total / count));
    CHECK(r.random_mean_err == doctest::Approx(all / pairs));
  }
}

TEST_CASE("sampled protocol is seeded and spans exactly k clusters") {
  const auto c = random_cache(8, 100, 3, 5);
  const auto cl = clusters_of(c, {0, 0, 0, 1, 1, 1, 2, 2});
  const auto a = diversity_protocol(c, cl, 3, 2, 40, 9);
  const auto b = diversity_protocol(c, cl, 3, 2, 40, 9);
  CHECK(a.mean_err == b.mean_err);
  CHECK(a.trials == 40);
  CHECK(a.sampling == "rejection");
  // Exhaustive and sampled estimates target the same mean.
  CHECK(std::abs(a.mean_err - diversity_exhaustive(c, cl, 3, 2).mean_err) < 0.1);
}

TEST_CASE("correlation reports") {
  const auto r = correlate({"a", "b", "c", "d"}, {1, 2, 3, 4}, {2, 4, 6, 8.5});
  CHECK(!r.degenerate);
  CHECK(r.pearson.coefficient > 0.99);
  CHECK(r.spearman.coefficient == doctest::Approx(1.0));
  CHECK(correlate({"a", "b", "c"}, {1, 1, 1}, {1, 2, 3}).degenerate);
  CHECK(correlate({"a", "b"}, {1, 2}, {1, 2}).degenerate);
}

TEST_CASE("similarity against ensembles pairs every comparable model pair") {
  const auto c = random_cache(5, 100, 3, 6);
  sat::SimilarityMatrix sm;
  sm.names = c.names;
  sm.values.assign(5, std::vector<double>(5, 1.0));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) sm.values[i][j] = static_cast<double>(i + j);
  const auto r = similarity_vs_ensemble(sm, c);
  CHECK(r.x.size() == 10);
  CHECK(r.labels.front() == "m0|m1");
  sm.values[0][1] = sm.values[1][0] = std::nan("");
  CHECK(similarity_vs_ensemble(sm, c).x.size() == 9);
  sm.names.resize(4);
  sm.values.resize(4);
  for (auto& row : sm.values) row.resize(4);
  CHECK_THROWS_AS(similarity_vs_ensemble(sm, c), ValidationError);
}
