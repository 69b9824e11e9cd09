#include <doctest.h>

#include <cmath>

#include "archsim/boundary/boundary.hpp"
#include "archsim/errors.hpp"
#include "archsim/rng.hpp"

using namespace archsim;
using namespace archsim::boundary;

TEST_CASE("parallel linear boundaries: disagreement is t/2 on [-1,1]^2") {
  const Box square{-1, -1, 1, 1};
  const auto f = linear_planar("f", 1.0, 0.0, 0.0);
  for (double t : {0.1, 0.37, 0.5, 0.93}) {
    const auto g = linear_planar("g", 1.0, 0.0, t);
    CHECK(std::abs(boundary_disagreement(f, g, square, 2000) - t / 2.0) < 1e-3);
  }
  CHECK(boundary_disagreement(f, f, square, 100) == 0.0);
}

TEST_CASE("a tilted boundary matches the analytic area") {
  // x = 0.5 against x = 0.5 + s (y - 0.5) on the unit square: area s / 4.
  const auto f = linear_planar("f", 1.0, 0.0, 0.5);
  const double s = 0.4;
  const auto g = linear_planar("g", 1.0, -s, 0.5 - 0.5 * s);
  CHECK(std::abs(boundary_disagreement(f, g, {}, 1000) - s / 4.0) < 2e-3);
}

TEST_CASE("disagreement arguments are validated") {
  const auto f = linear_planar("f", 1.0, 0.0, 0.0);
  CHECK_THROWS_AS(boundary_disagreement(f, f, {}, 50), ValidationError);
  CHECK_THROWS_AS(boundary_disagreement(f, f, Box{0, 0, 0, 1}, 100), ValidationError);
}

TEST_CASE("min-flip distance between shifted linear models equals the shift") {
  const auto f = linear_planar("f", 1.0, 0.0, 0.3);
  const auto g = linear_planar("g", 1.0, 0.0, 0.5);
  Tensor pts({20, 1, 2, 1});
  Rng rng(1, "pts");
  for (std::size_t i = 0; i < 20; ++i) {
    pts[2 * i] = static_cast<float>(rng.uniform(0.0, 0.25));
    pts[2 * i + 1] = static_cast<float>(rng.uniform(0.0, 1.0));
  }
  const auto r = min_flip_similarity(f, g, pts);
  CHECK(r.used == 20);
  CHECK(r.dissimilarity == doctest::Approx(0.2).epsilon(1e-4));
  CHECK(r.similarity == -r.dissimilarity);

  Tensor one({1, 1, 2, 1});
  one[0] = 0.1f;
  one[1] = 0.5f;
  CHECK(flip_radius(f, one, {}) == doctest::Approx(0.2).epsilon(1e-4));
  // A boundary beyond the search radius is reported as no flip.
  MinFlipConfig tight;
  tight.max_radius = 0.1;
  CHECK(flip_radius(g, one, tight) < 0.0);
}

TEST_CASE("triplet planes: identical models agree everywhere") {
  const auto data = planar_dataset(0, 200);
  const auto f = linear_planar("f", 1.0, 0.3, 0.6);
  const auto g = linear_planar("g", -1.0, 0.2, -0.4);
  CHECK(triplet_plane_similarity(f, f, data.images, 20, 8, 0) == 1.0);
  const double s = triplet_plane_similarity(f, g, data.images, 20, 8, 0);
  CHECK(s >= 0.0);
  CHECK(s < 1.0);
  CHECK(s == triplet_plane_similarity(f, g, data.images, 20, 8, 0));
}

TEST_CASE("planar dataset and model checks") {
  const auto d = planar_dataset(3, 400);
  CHECK(d.size() == 400);
  CHECK(d.indices(Split::kEval).size() == 200);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double x = d.images[2 * i], y = d.images[2 * i + 1];
    CHECK(d.labels[i] == (y > 0.5 + 0.2 * std::sin(2 * 3.14159265358979 * x) ? 1 : 0));
  }
  for (const auto& fam : planar_families()) {
    auto spec = planar_spec(fam);
    spec.name = fam;
    nn::validate(spec);
  }
  nn::ModelSpec wrong = planar_spec(planar_families()[0]);
  wrong.name = "w";
  wrong.num_classes = 3;
  wrong.layers.back() = nn::LayerSpec::dense(3);
  CHECK_THROWS_AS(check_planar(nn::Model(wrong, nn::init_weights(wrong, 0))), ValidationError);
}

TEST_CASE("planar epsilon scales with the median gap") {
  std::vector<nn::Model> ms{linear_planar("a", 1, 0, 0.2), linear_planar("b", 1, 0, 0.3),
                            linear_planar("c", 1, 0, 0.6)};
  // Gaps 0.1, 0.4, 0.3 on the unit square: median 0.3.
  CHECK(planar_epsilon(ms, {}, 1.0, 1000) == doctest::Approx(0.3).epsilon(1e-2));
  CHECK(planar_epsilon(ms, {}, 2.0, 1000) == doctest::Approx(0.6).epsilon(1e-2));
}
