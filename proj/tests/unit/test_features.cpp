#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "archsim/arch_record.hpp"
#include "archsim/errors.hpp"
#include "archsim/features/importance.hpp"
#include "archsim/features/keywords.hpp"
#include "archsim/rng.hpp"

using namespace archsim;
using namespace archsim::features;

namespace {

// Rows whose target depends on one component; `constant` components never vary.
std::vector<PairFeatureRow> synthetic_rows(std::size_t n, std::uint64_t seed, double noise,
                                           const std::vector<std::size_t>& constant = {}) {
  Rng rng(seed, "rows");
  std::vector<PairFeatureRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = rows[i];
    r.a = "a" + std::to_string(i);
    r.b = "b" + std::to_string(i);
    for (std::size_t c = 0; c < kNumComponents; ++c) r.diff[c] = static_cast<std::uint8_t>(rng.below(2));
    for (auto c : constant) r.diff[c] = 0;
    r.target = 3.0 * r.diff[kBaseArchitecture] + noise * rng.normal();
  }
  return rows;
}

ArchFeatureRecord record(std::initializer_list<const char*> values) {
  ArchFeatureRecord r;
  std::size_t i = 0;
  for (const char* v : values) r.values[i++] = v;
  return r;
}

ArchFeatureRecord cnn_record() {
  return record({"CNN", "3s1", "32x32", "BN", "Yes", "ReLU", "Yes", "No", "No", "No", "No", "GAP", "-"});
}
ArchFeatureRecord vit_record() {
  return record({"Transformer", "4s4", "32x32", "LN", "No", "GeLU", "No", "Yes", "No", "No", "No", "CLS token", "-"});
}

}  // namespace

TEST_CASE("hamming difference vectors") {
  const auto d = hamming_diff(cnn_record(), vit_record());
  CHECK(d[kBaseArchitecture] == 1);
  CHECK(d[kInputResolution] == 0);
  CHECK(d[kChannelWiseAttention] == 0);
  CHECK(std::accumulate(d.begin(), d.end(), 0) == 8);
  const auto same = hamming_diff(cnn_record(), cnn_record());
  CHECK(std::accumulate(same.begin(), same.end(), 0) == 0);
  ArchFeatureRecord partial = cnn_record();
  partial.values[kActivation].clear();
  CHECK_THROWS_AS(hamming_diff(partial, cnn_record()), ValidationError);
}

TEST_CASE("vocabulary accepts the component table and patterns") {
  const auto v = FeatureVocabulary::standard();
  v.check(cnn_record());
  v.check(vit_record());
  CHECK(v.contains(kStemLayer, "3s2/3/3"));
  CHECK(v.contains(kInputResolution, "224x224"));
  auto bad = cnn_record();
  bad.values[kNormalization] = "WeirdNorm";
  CHECK_THROWS_AS(v.check(bad), ValidationError);
  CHECK(component_index("group-conv") == kGroupConv);
  CHECK_THROWS_AS(component_index("nope"), ValidationError);
}

TEST_CASE("a depth-one tree finds the exhaustive best split") {
  Rng rng(9, "stump");
  std::vector<std::vector<double>> x(40, std::vector<double>(3));
  std::vector<double> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    for (auto& v : x[i]) v = std::floor(rng.uniform(0.0, 8.0));
    y[i] = x[i][1] * 0.7 + rng.uniform(-1.0, 1.0);
  }
  GbmConfig cfg;
  cfg.max_depth = 1;
  const Tree t = fit_tree(x, y, cfg);
  REQUIRE(t.size() == 3);
  auto sse_of = [&](std::size_t f, double thr) {
    double sl = 0, sr = 0, nl = 0, nr = 0;
    for (std::size_t i = 0; i < 40; ++i) (x[i][f] <= thr ? (sl += y[i], nl += 1) : (sr += y[i], nr += 1));
    double sse = 0;
    for (std::size_t i = 0; i < 40; ++i) {
      const double m = x[i][f] <= thr ? sl / nl : sr / nr;
      sse += (y[i] - m) * (y[i] - m);
    }
    return sse;
  };
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < 3; ++f)
    for (double thr = 0.5; thr < 7.0; thr += 1.0) best = std::min(best, sse_of(f, thr));
  CHECK(sse_of(static_cast<std::size_t>(t[0].feature), t[0].threshold) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("boosting fits a noiseless table exactly with a unit rate") {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        x.push_back({double(a), double(b), double(c)});
        y.push_back(a * 2.0 + b * c);
      }
  GbmConfig cfg;
  cfg.stages = 1;
  cfg.learning_rate = 1.0;
  cfg.min_samples_split = 2;
  const auto m = fit_gbm(x, y, cfg);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(m.predict(x[i]) == doctest::Approx(y[i]));
  CHECK(m.train_r2 == doctest::Approx(1.0));
}

TEST_CASE("fit does not depend on row order") {
  auto rows = synthetic_rows(60, 1, 0.3);
  GbmConfig cfg;
  cfg.stages = 30;
  const auto m1 = fit_gbm(rows, cfg);
  std::reverse(rows.begin(), rows.end());
  const auto m2 = fit_gbm(rows, cfg);
  CHECK(m1.train_r2 == m2.train_r2);
  const auto i1 = permutation_importance(m1, rows, 3, 5);
  std::rotate(rows.begin(), rows.begin() + 17, rows.end());
  CHECK(permutation_importance(m2, rows, 3, 5) == i1);
}

TEST_CASE("the planted feature ranks first and unused features score zero") {
  GbmConfig cfg;  // 500 stages, depth 12, split 4, rate 0.02
  const std::vector<std::size_t> constant{kGroupConv, kFinalPooling};
  int first = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto rows = synthetic_rows(200, seed, 0.1, constant);
    cfg.seed = seed;
    const auto model = fit_gbm(rows, cfg);
    const auto imp = permutation_importance(model, rows, 10, seed);
    const auto top = std::max_element(imp.begin(), imp.end()) - imp.begin();
    first += top == static_cast<std::ptrdiff_t>(kBaseArchitecture);
    const auto used = model.used_features();
    for (std::size_t c = 0; c < kNumComponents; ++c)
      if (!used[c]) CHECK(std::abs(imp[c]) < 1e-6);
    for (auto c : constant) CHECK(!used[c]);
  }
  CHECK(first == 10);
}

TEST_CASE("held-out fit with default hyperparameters") {
  const auto train = synthetic_rows(300, 21, 0.1);
  const auto test = synthetic_rows(100, 22, 0.1);
  const auto model = fit_gbm(train, GbmConfig{});
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  rows_to_matrix(test, x, y);
  CHECK(r2_score(y, model.predict(x)) > 0.95);
}

TEST_CASE("too few rows and bad configs are rejected") {
  CHECK_THROWS_AS(fit_gbm(synthetic_rows(29, 0, 0.1), GbmConfig{}), ValidationError);
  GbmConfig bad;
  bad.min_samples_split = 1;
  CHECK_THROWS_AS(fit_gbm(synthetic_rows(40, 0, 0.1), bad), ValidationError);
  auto flat = synthetic_rows(40, 0, 0.0);
  for (auto& r : flat) r.target = 1.5;
  const auto m = fit_gbm(flat, GbmConfig{});
  CHECK(m.trees.empty());
  CHECK(m.predict(std::vector<double>(kNumComponents, 0.0)) == 1.5);
}

namespace {

spectral::ClusterAssignment assignment(std::vector<std::string> names, std::vector<int> labels) {
  spectral::ClusterAssignment a;
  a.names = std::move(names);
  a.labels = std::move(labels);
  return a;
}

}  // namespace

TEST_CASE("tokens shared by every document are never keywords") {
  std::map<std::string, ArchFeatureRecord> recs{{"c1", cnn_record()}, {"c2", cnn_record()}, {"v1", vit_record()}};
  const auto kw = tfidf_keywords(assignment({"c1", "c2", "v1"}, {0, 0, 1}), recs, 5);
  REQUIRE(kw.size() == 2);
  for (const auto& cluster : kw) {
    CHECK(cluster.size() <= 5);
    for (const auto& k : cluster) {
      CHECK(k.token != "input-resolution=32x32");
      CHECK(k.token != "channel-wise-attention=No");
      CHECK(k.score > 0.0);
    }
    CHECK(std::is_sorted(cluster.begin(), cluster.end(),
                         [](const Keyword& a, const Keyword& b) { return a.score > b.score; }));
  }
}

TEST_CASE("a cluster of identical records yields its globally rarest tokens") {
  auto odd = cnn_record();
  odd.values[kActivation] = "SiLU";
  odd.values[kChannelWiseAttention] = "Yes";
  std::map<std::string, ArchFeatureRecord> recs{
      {"a", odd}, {"b", odd}, {"c", cnn_record()}, {"d", cnn_record()}, {"e", cnn_record()}, {"f", vit_record()}};
  const auto kw = tfidf_keywords(assignment({"a", "b", "c", "d", "e", "f"}, {0, 0, 1, 1, 1, 2}), recs, 5);
  // Tokens of `odd` by document frequency: SiLU (2), cw-attention Yes (2),
  // then the tokens shared with the other CNNs (5).
  REQUIRE(kw[0].size() == 5);
  CHECK(kw[0][0].token == "activation=SiLU");
  CHECK(kw[0][1].token == "channel-wise-attention=Yes");
  CHECK(kw[0][0].score == doctest::Approx(std::log(3.0) / 13.0));
  CHECK(kw[0][2].score == doctest::Approx(std::log(6.0 / 5.0) / 13.0));
  CHECK(record_tokens(odd).size() == kNumComponents);
}

TEST_CASE("keywords need a record per clustered model") {
  std::map<std::string, ArchFeatureRecord> recs{{"a", cnn_record()}};
  CHECK_THROWS_AS(tfidf_keywords(assignment({"a", "b"}, {0, 1}), recs, 5), ValidationError);
}
