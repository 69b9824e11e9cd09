#include "archsim/spectral/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "archsim/errors.hpp"
#include "archsim/io/files.hpp"
#include "archsim/parallel.hpp"
#include "archsim/rng.hpp"

namespace archsim::spectral {

Adjacency adjacency_from_sat(const sat::SimilarityMatrix& sm, AdjacencyScale scale) {
  const std::size_t n = sm.size();
  const double shift = -std::log(sm.config.epsilon_floor);
  auto weight = [&](std::size_t i, std::size_t j) {
    if (scale == AdjacencyScale::kPercent) return sm.raw[i][j];
    return sm.values[i][j] + shift;
  };
  std::vector<bool> keep(n, true);
  for (;;) {
    std::size_t worst = n, worst_missing = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!keep[i]) continue;
      std::size_t missing = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && keep[j] && std::isnan(weight(i, j))) ++missing;
      if (missing > worst_missing) {
        worst = i;
        worst_missing = missing;
      }
    }
    if (worst == n) break;
    keep[worst] = false;
  }
  Adjacency adj;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) {
      idx.push_back(i);
      adj.names.push_back(sm.names[i]);
    } else {
      adj.dropped.push_back(sm.names[i]);
    }
  }
  adj.weights = linalg::zeros(idx.size(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = 0; b < idx.size(); ++b) {
      if (a == b) continue;
      const double w = weight(idx[a], idx[b]);
      if (w < 0.0) throw Error("internal", "negative adjacency entry between " + adj.names[a] + " and " + adj.names[b]);
      adj.weights[a][b] = w;
    }
  return adj;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::vector<int> first_appearance(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out;
  for (int l : labels) {
    auto it = remap.find(l);
    if (it == remap.end()) it = remap.emplace(l, static_cast<int>(remap.size())).first;
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, int max_iterations) {
  const std::size_t n = points.size();
  if (k == 0 || k > n) throw ValidationError("K-means needs 1 <= K <= number of points");
  Rng rng(seed, "kmeans++");
  Matrix centers;
  centers.push_back(points[rng.below(n)]);
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(points[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (r < d2[i]) {
          pick = i;
          break;
        }
        r -= d2[i];
      }
    } else {
      pick = rng.below(n);
    }
    centers.push_back(points[pick]);
  }

  std::vector<int> labels(n, -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(points[i], centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(points[i], centers[c]);
        if (d < bd) {
          bd = d;
          best = static_cast<int>(c);
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    const std::size_t dim = points[0].size();
    Matrix sum = linalg::zeros(k, dim);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[labels[i]];
      for (std::size_t d = 0; d < dim; ++d) sum[labels[i]][d] += points[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) continue;  // keep the previous center
      for (std::size_t d = 0; d < dim; ++d) centers[c][d] = sum[c][d] / static_cast<double>(count[c]);
    }
  }
  KMeansResult out;
  out.labels = labels;
  for (std::size_t i = 0; i < n; ++i) out.objective += sq_dist(points[i], centers[labels[i]]);
  return out;
}

ClusterAssignment spectral_cluster(const Matrix& adjacency, const std::vector<std::string>& names,
                                   const ClusterConfig& cfg) {
  const std::size_t n0 = adjacency.size();
  if (names.size() != n0) throw ValidationError("adjacency size does not match names");
  if (cfg.restarts <= 0) throw ValidationError("restarts must be positive");
  for (std::size_t i = 0; i < n0; ++i) {
    if (adjacency[i].size() != n0) throw ValidationError("adjacency must be square");
    for (std::size_t j = 0; j < n0; ++j) {
      const double w = adjacency[i][j];
      if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("adjacency entries must be finite and nonnegative");
      if (w != adjacency[j][i]) throw ValidationError("adjacency must be symmetric");
    }
  }
  ClusterAssignment out;
  out.config = cfg;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n0; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n0; ++j) deg += adjacency[i][j];
    if (deg > 0.0) {
      idx.push_back(i);
      out.names.push_back(names[i]);
    } else {
      out.dropped.push_back(names[i]);
    }
  }
  const std::size_t n = idx.size();
  if (cfg.k == 0 || cfg.k > n) {
    throw ValidationError("K=" + std::to_string(cfg.k) + " must lie in [1, " + std::to_string(n) + "] connected nodes");
  }
  std::vector<double> inv_sqrt(n);
  for (std::size_t a = 0; a < n; ++a) {
    double deg = 0.0;
    for (std::size_t b = 0; b < n; ++b) deg += adjacency[idx[a]][idx[b]];
    inv_sqrt[a] = 1.0 / std::sqrt(deg);
  }
  Matrix m = linalg::zeros(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) m[a][b] = inv_sqrt[a] * adjacency[idx[a]][idx[b]] * inv_sqrt[b];
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < a; ++b) m[a][b] = m[b][a];  // exact symmetry

  const auto eig = linalg::symmetric_eigen(m);
  out.eigenvalues.assign(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(cfg.k));
  out.embedding = linalg::zeros(n, cfg.k);
  for (std::size_t a = 0; a < n; ++a) {
    double norm = 0.0;
    for (std::size_t c = 0; c < cfg.k; ++c) norm += eig.vectors[a][c] * eig.vectors[a][c];
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < cfg.k; ++c) out.embedding[a][c] = norm > 0.0 ? eig.vectors[a][c] / norm : 0.0;
  }

  std::vector<KMeansResult> runs(static_cast<std::size_t>(cfg.restarts));
  parallel_for(runs.size(), cfg.threads, [&](std::size_t r) {
    runs[r] = kmeans(out.embedding, cfg.k, derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
  });
  std::size_t best = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    out.restart_objectives.push_back(runs[r].objective);
    if (runs[r].objective < runs[best].objective) best = r;
  }
  out.objective = runs[best].objective;
  out.labels = first_appearance(runs[best].labels);
  return out;
}

ClusterAssignment spectral_cluster(const Adjacency& adjacency, const ClusterConfig& cfg) {
  auto out = spectral_cluster(adjacency.weights, adjacency.names, cfg);
  out.dropped.insert(out.dropped.begin(), adjacency.dropped.begin(), adjacency.dropped.end());
  return out;
}

DistanceMap spectral_distance_map(const ClusterAssignment& a) {
  std::vector<std::size_t> order(a.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a.labels[x] < a.labels[y]; });
  DistanceMap m;
  for (auto i : order) {
    m.names.push_back(a.names[i]);
    m.labels.push_back(a.labels[i]);
  }
  m.distances = linalg::zeros(order.size(), order.size());
  for (std::size_t x = 0; x < order.size(); ++x)
    for (std::size_t y = 0; y < order.size(); ++y)
      m.distances[x][y] = std::sqrt(sq_dist(a.embedding[order[x]], a.embedding[order[y]]));
  return m;
}

double cluster_purity(const std::vector<int>& labels, const std::vector<std::string>& tags) {
  if (labels.size() != tags.size() || labels.empty()) throw ValidationError("purity needs one tag per label");
  std::map<int, std::map<std::string, std::size_t>> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) ++counts[labels[i]][tags[i]];
  std::size_t majority = 0;
  for (const auto& [label, by_tag] : counts) {
    std::size_t best = 0;
    for (const auto& [tag, c] : by_tag) best = std::max(best, c);
    majority += best;
  }
  return static_cast<double>(majority) / static_cast<double>(labels.size());
}

void save_assignment(const ClusterAssignment& a, const std::filesystem::path& path) {
  using nlohmann::json;
  json j;
  j["format"] = "archsim-clusters/1";
  j["names"] = a.names;
  j["labels"] = a.labels;
  j["embedding"] = a.embedding;
  j["eigenvalues"] = a.eigenvalues;
  j["kmeans-objective"] = a.objective;
  j["config"] = {{"k", a.config.k}, {"restarts", a.config.restarts}, {"seed", a.config.seed}};
  j["dropped"] = a.dropped;
  io::write_atomic(path, j.dump(2) + "\n");
}

ClusterAssignment load_assignment(const std::filesystem::path& path) {
  using nlohmann::json;
  try {
    const json j = json::parse(io::read_text(path));
    if (j.value("format", std::string()) != "archsim-clusters/1") {
      throw FormatError(path.string() + ": expected format archsim-clusters/1");
    }
    ClusterAssignment a;
    a.names = j.at("names").get<std::vector<std::string>>();
    a.labels = j.at("labels").get<std::vector<int>>();
    a.embedding = j.at("embedding").get<Matrix>();
    a.eigenvalues = j.value("eigenvalues", std::vector<double>{});
    a.objective = j.at("kmeans-objective").get<double>();
    a.config.k = j.at("config").at("k").get<std::size_t>();
    a.config.restarts = j.at("config").at("restarts").get<int>();
    a.config.seed = j.at("config").at("seed").get<std::uint64_t>();
    a.dropped = j.value("dropped", std::vector<std::string>{});
    if (a.labels.size() != a.names.size()) throw FormatError(path.string() + ": label count does not match names");
    return a;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_distance_map(const DistanceMap& m, const std::filesystem::path& csv_path) {
  std::ostringstream csv;
  csv << "model";
  for (const auto& n : m.names) csv << ',' << n;
  csv << '\n';
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    csv << m.names[i];
    for (double d : m.distances[i]) csv << ',' << io::format_number(d);
    csv << '\n';
  }
  io::write_atomic(csv_path, csv.str());
}

}  // namespace archsim::spectral
