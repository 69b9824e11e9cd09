#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "archsim/data.hpp"
#include "archsim/nn/model.hpp"
#include "archsim/sat/sat.hpp"
#include "archsim/stats.hpp"

namespace archsim::boundary {

/// Axis-aligned box in the plane.
struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
  double area() const { return (x1 - x0) * (y1 - y0); }
};

std::vector<std::string> planar_families();  // mlp-relu, mlp-gelu, rbf-ish, piecewise-linear
/// Two-class model on (1,2,1) inputs.
nn::ModelSpec planar_spec(const std::string& family, std::size_t width = 16);
/// Linear model whose class-1 region is normal . x > offset.
nn::Model linear_planar(const std::string& name, double nx, double ny, double offset);
/// Throws ValidationError unless the model takes (1,2,1) input and has 2 classes.
void check_planar(const nn::Model& m);

/// Points uniform in the unit square, class 1 above a sine curve; half the
/// points are tagged eval.
Dataset planar_dataset(std::uint64_t seed, std::size_t n = 2000);

/// Fraction of grid-n x grid-n cell centres where the argmax predictions differ.
double boundary_disagreement(const nn::Model& f, const nn::Model& g, const Box& domain = {}, std::size_t grid_n = 200,
                             unsigned threads = 1);

/// Mean label agreement over random triangles spanned by sample triplets,
/// each evaluated on a barycentric grid. Samples may be planar points or
/// images; the triangle lies in input space either way.
double triplet_plane_similarity(const nn::Model& f, const nn::Model& g, const Tensor& samples, std::size_t num_triplets,
                                std::size_t grid_n, std::uint64_t seed);

struct MinFlipConfig {
  double max_radius = 1.0;
  int halvings = 30;
  double tolerance = 1e-6;  // bracket width that counts as converged
  Box domain;
};

struct MinFlipResult {
  double dissimilarity = 0.0;  // mean |delta_f - delta_g| over used samples
  double similarity = 0.0;     // -dissimilarity
  std::size_t used = 0;
  std::size_t skipped = 0;
};

/// Per sample, the smallest L-inf radius along each model's own signed
/// gradient direction that flips that model, found by bisection.
MinFlipResult min_flip_similarity(const nn::Model& f, const nn::Model& g, const Tensor& samples,
                                  const MinFlipConfig& cfg = {});
/// Flip radius of one model at one point; negative when no flip is found.
double flip_radius(const nn::Model& m, const Tensor& point, const MinFlipConfig& cfg);

struct RankConfig {
  std::size_t grid_n = 200;
  std::size_t num_triplets = 50;
  std::size_t triplet_grid = 12;
  std::size_t resamples = 10;
  double eval_fraction = 0.5;
  double epsilon_scale = 2.0;  // PGD budget as a multiple of the median gap
  int attack_iterations = 20;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool with_min_flip = true;
  std::size_t min_flip_samples = 100;
};

struct MethodRank {
  std::string method;
  std::vector<double> values;  // one per pair
  double spearman = 0.0;       // against oracle disagreement
  double spearman_std = 0.0;   // over seed resamples
  bool degenerate = false;     // values all tie
};

struct RankReport {
  std::vector<std::string> models;
  std::vector<std::string> pairs;
  std::vector<double> oracle;
  double epsilon = 0.0;  // PGD budget used for planar SAT
  std::vector<MethodRank> methods;
  std::size_t min_flip_skipped = 0;
  std::size_t min_flip_used = 0;

  const MethodRank& method(const std::string& name) const;
  std::string to_json() const;
};

/// Oracle-vs-method rank study over all model pairs (>= 8 planar models).
/// SAT uses epsilon_scale x the median inter-boundary gap as epsilon, where a pair's
/// gap is its disagreement area divided by the domain width.
RankReport rank_benchmark(std::span<const nn::Model> models, const Dataset& data, const RankConfig& cfg,
                          const Box& domain = {});

struct StabilityRow {
  std::string method;        // "sat" or "triplet-plane"
  std::size_t budget = 0;    // eval subsample size or number of triplets
  double evaluations = 0.0;  // model passes per pair (forward and backward count alike)
  double std_percent = 0.0;  // mean per-pair std over seeds, in percent
  double relative_std = 0.0; // the same std divided by the spread of pair means
};

struct StabilityConfig {
  std::vector<std::size_t> sat_sizes{500, 1000, 2500};
  std::size_t seeds = 10;
  std::size_t triplet_grid = 12;
  bool with_triplets = true;
  attacks::AttackConfig attack;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Seed-to-seed spread of SAT over eval subsamples (raw transfer percent)
/// and of the triplet-plane baseline (agreement percent) at the triplet
/// count whose cost matches each SAT size. SAT costs 2 n (iterations + 1)
/// passes per pair, a triplet 2 x its grid points.
std::vector<StabilityRow> stability_study(std::span<const nn::Model> models, const Dataset& data,
                                          const StabilityConfig& cfg);

/// Planar PGD budget: scale x the median over pairs of the oracle gap
/// (disagreement area divided by the domain width).
double planar_epsilon(std::span<const nn::Model> models, const Box& domain, double scale, std::size_t grid_n = 200,
                      unsigned threads = 1);
attacks::AttackConfig planar_attack(double epsilon, int iterations, std::uint64_t seed);

/// Planar zoo: every family at several seeds and training lengths.
std::vector<nn::Model> planar_zoo(const Dataset& data, std::size_t per_family = 3, std::uint64_t seed = 0,
                                  unsigned threads = 1);

}  // namespace archsim::boundary
