#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "archsim/attacks/attack.hpp"
#include "archsim/errors.hpp"
#include "archsim/io/files.hpp"
#include "archsim/sat/sat.hpp"
#include "fixtures.hpp"

using namespace archsim;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> stream(std::size_t n, std::size_t ones) {
  std::vector<std::uint8_t> v(n, 0);
  std::fill(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(ones), 1);
  return v;
}

struct Pair {
  Dataset data = testing::tiny_shapes();
  nn::Model a = testing::trained(testing::tiny_mlp("mlp-a"), data, 1);
  nn::Model b = testing::trained(testing::tiny_cnn("cnn-b"), data, 2);
};

const Pair& pair() {
  static const Pair p;
  return p;
}

sat::SatConfig quick_sat() {
  sat::SatConfig c;
  c.eval_fraction = 0.5;
  c.attack.iterations = 5;
  c.attack.epsilon = 0.1;
  c.attack.step_size = 0.03;
  return c;
}

}  // namespace

TEST_CASE("indicator arithmetic") {
  const double floor = 0.01;
  CHECK(sat::sat_from_indicators(stream(50, 50), stream(50, 50), floor) == std::log(100.0));
  CHECK(sat::sat_from_indicators(stream(50, 0), stream(50, 0), floor) == std::log(0.01));
  // (30 + 50) / (2 * 100) = 40 %
  CHECK(sat::sat_from_indicators(stream(100, 30), stream(100, 50), floor) == std::log(40.0));
  CHECK(sat::sat_from_indicators(stream(100, 50), stream(100, 30), floor) ==
        sat::sat_from_indicators(stream(100, 30), stream(100, 50), floor));
  CHECK(sat::sat_value({1000, 0, 0}, 0.5) == std::log(0.5));
  CHECK_THROWS_AS(sat::sat_value({0, 0, 0}, floor), ValidationError);
  CHECK_THROWS_AS(sat::sat_from_indicators(stream(3, 1), stream(4, 1), floor), ValidationError);
  CHECK(sat::one_sided_value({10, 5, 9}, floor) == std::log(50.0));
}

TEST_CASE("score is bounded by the floor and the ceiling") {
  for (std::size_t n : {1u, 7u, 64u}) {
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t j = 0; j <= n; j += 3) {
        const double s = sat::sat_from_indicators(stream(n, i), stream(n, j), 0.01);
        CHECK(s >= std::log(0.01));
        CHECK(s <= std::log(100.0));
      }
    }
  }
}

TEST_CASE("config validation") {
  sat::SatConfig c;
  c.validate();
  c.epsilon_floor = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.eval_fraction = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.attack.iterations = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("eval subsets are seeded, sorted and drawn from the eval split") {
  const auto& d = pair().data;
  const auto s1 = sat::eval_subset(d, 0.1, 4);
  CHECK(s1 == sat::eval_subset(d, 0.1, 4));
  CHECK(s1 != sat::eval_subset(d, 0.1, 5));
  CHECK(std::is_sorted(s1.begin(), s1.end()));
  CHECK(s1.size() == static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(d.indices(Split::kEval).size()))));
  for (auto r : s1) CHECK(d.split[r] == Split::kEval);
}

TEST_CASE("attacks stay inside the epsilon ball and the pixel range") {
  const auto& p = pair();
  const Tensor x = p.data.images.slice_rows(0, 12);
  const std::vector<int> y(p.data.labels.begin(), p.data.labels.begin() + 12);
  for (auto method : {attacks::Method::kPgd, attacks::Method::kMifgsm, attacks::Method::kFgsm}) {
    attacks::AttackConfig cfg;
    cfg.method = method;
    cfg.epsilon = 0.05;
    if (method == attacks::Method::kFgsm) cfg = attacks::AttackConfig::fgsm(0.05);
    const auto adv = attacks::attack(p.a, x, y, cfg);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::abs(adv.adversarial[i] - adv.clean[i]) <= 0.05f + 1e-6f);
      CHECK(adv.adversarial[i] >= 0.0f);
      CHECK(adv.adversarial[i] <= 1.0f);
    }
  }
}

TEST_CASE("perturbations depend only on the example identity") {
  const auto& p = pair();
  const Tensor x = p.data.images.slice_rows(0, 10);
  const std::vector<int> y(p.data.labels.begin(), p.data.labels.begin() + 10);
  std::vector<std::size_t> ids(10);
  for (std::size_t i = 0; i < 10; ++i) ids[i] = 100 + i;
  attacks::AttackConfig cfg;
  cfg.iterations = 4;
  const auto full = attacks::attack(p.a, x, y, cfg, ids);
  const std::vector<std::size_t> pick{2, 7};
  const std::vector<std::size_t> pick_ids{102, 107};
  const std::vector<int> pick_y{y[2], y[7]};
  const auto part = attacks::attack(p.a, x.gather_rows(pick), pick_y, cfg, pick_ids);
  CHECK(part.adversarial == full.subset(pick).adversarial);
}

TEST_CASE("strong attacks fool the source model") {
  const auto& p = pair();
  attacks::AttackConfig cfg;
  cfg.epsilon = 0.3;
  cfg.iterations = 20;
  cfg.step_size = 0.05;
  const Tensor x = p.data.images.slice_rows(0, 30);
  const std::vector<int> y(p.data.labels.begin(), p.data.labels.begin() + 30);
  CHECK(attacks::attack_success_rate(p.a, attacks::attack(p.a, x, y, cfg)) > 0.9);
  cfg.epsilon = 0.0;
  const auto none = attacks::attack(p.a, x, y, cfg);
  CHECK(none.adversarial == none.clean);
}

TEST_CASE("similarity matrices are symmetric and round-trip") {
  const auto& p = pair();
  const std::vector<nn::Model> zoo{p.a, p.b};
  const auto sm = sat::sat_matrix(zoo, p.data, quick_sat());
  REQUIRE(sm.size() == 2);
  CHECK(sm.values[0][1] == sm.values[1][0]);
  CHECK(sm.values[0][1] <= std::log(100.0));
  CHECK(sm.values[0][0] > sm.values[0][1]);
  CHECK(sat::sat(p.a, p.b, p.data, quick_sat()) == sm.values[0][1]);

  const fs::path dir = fs::temp_directory_path() / "archsim-sat-test";
  fs::create_directories(dir);
  sat::save_similarity(sm, dir / "sat.csv");
  const auto back = sat::load_similarity(dir / "sat.csv");
  CHECK(back.names == sm.names);
  CHECK(back.values == sm.values);
  sat::save_similarity(back, dir / "again.csv");
  CHECK(io::read_text(dir / "sat.csv") == io::read_text(dir / "again.csv"));

  auto sidecar = io::read_text(dir / "sat.json");
  const auto at = sidecar.find("archsim-sat/1");
  REQUIRE(at != std::string::npos);
  sidecar.replace(at, 13, "archsim-sat/9");
  io::write_atomic(dir / "sat.json", sidecar);
  CHECK_THROWS_AS(sat::load_similarity(dir / "sat.csv"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("transfer table subsets agree with direct computation") {
  const auto& p = pair();
  const std::vector<nn::Model> zoo{p.a, p.b};
  auto cfg = quick_sat();
  const auto rows = sat::eval_subset(p.data, 0.5, 0);
  const auto table = sat::build_transfer_table(zoo, p.data, rows, cfg.attack);
  std::vector<std::size_t> positions;
  std::vector<std::size_t> sub_rows;
  for (std::size_t i = 0; i < rows.size(); i += 2) {
    positions.push_back(i);
    sub_rows.push_back(rows[i]);
  }
  const auto direct = sat::build_transfer_table(zoo, p.data, sub_rows, cfg.attack);
  const auto c1 = table.counts(0, 1, positions);
  const auto c2 = direct.counts(0, 1);
  CHECK(c1.eligible == c2.eligible);
  CHECK(c1.a_fooled == c2.a_fooled);
  CHECK(c1.b_fooled == c2.b_fooled);
  const auto one = table.one_sided_counts(0, 1);
  const auto both = table.counts(0, 1);
  CHECK(one.eligible == both.eligible);
  CHECK(one.a_fooled == both.b_fooled);
}

TEST_CASE("models with no jointly correct inputs are incomparable") {
  const auto& p = pair();
  // A constant predictor that is always wrong on class-0 inputs only sees
  // class-0 rows here.
  std::vector<std::size_t> rows;
  for (auto r : p.data.indices(Split::kEval))
    if (p.data.labels[r] == 0) rows.push_back(r);
  auto spec = testing::tiny_mlp("const");
  nn::WeightMap w = nn::init_weights(spec, 0);
  for (auto& [name, t] : w) t.fill(0.0f);
  w.at("03.dense.bias")[1] = 1.0f;
  nn::TrainingMeta meta;
  meta.trained = true;
  const nn::Model wrong(spec, w, meta);
  const std::vector<nn::Model> zoo{p.a, wrong};
  const auto table = sat::build_transfer_table(zoo, p.data, rows, quick_sat().attack);
  const auto sm = sat::matrix_from_table(table, quick_sat());
  CHECK(std::isnan(sm.values[0][1]));
  CHECK(sm.exclusions.size() == 1);
}
