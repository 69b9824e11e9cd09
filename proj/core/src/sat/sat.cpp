#include "archsim/sat/sat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "archsim/errors.hpp"
#include "archsim/io/files.hpp"
#include "archsim/parallel.hpp"
#include "archsim/rng.hpp"

namespace archsim::sat {

void SatConfig::validate() const {
  if (!(epsilon_floor > 0.0 && epsilon_floor < 100.0)) throw ValidationError("epsilon floor must lie in (0,100)");
  if (!(eval_fraction > 0.0 && eval_fraction <= 1.0)) throw ValidationError("eval fraction must lie in (0,1]");
  attack.validate();
}

double raw_transfer(const PairCounts& c, double epsilon_floor) {
  if (c.eligible == 0) throw ValidationError("no jointly-correct inputs");
  const double pct = 100.0 * static_cast<double>(c.a_fooled + c.b_fooled) / (2.0 * static_cast<double>(c.eligible));
  return std::max(epsilon_floor, pct);
}

double sat_value(const PairCounts& c, double epsilon_floor) { return std::log(raw_transfer(c, epsilon_floor)); }

double one_sided_value(const PairCounts& c, double epsilon_floor) {
  if (c.eligible == 0) throw ValidationError("no jointly-correct inputs");
  const double pct = 100.0 * static_cast<double>(c.a_fooled) / static_cast<double>(c.eligible);
  return std::log(std::max(epsilon_floor, pct));
}

double sat_from_indicators(std::span<const std::uint8_t> a_on_b, std::span<const std::uint8_t> b_on_a,
                           double epsilon_floor) {
  if (a_on_b.size() != b_on_a.size()) throw ValidationError("indicator streams differ in length");
  PairCounts c;
  c.eligible = a_on_b.size();
  for (std::size_t i = 0; i < a_on_b.size(); ++i) {
    c.a_fooled += a_on_b[i] != 0;
    c.b_fooled += b_on_a[i] != 0;
  }
  return sat_value(c, epsilon_floor);
}

std::vector<std::size_t> eval_subset(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("eval fraction must lie in (0,1]");
  const auto pool = data.indices(Split::kEval);
  if (pool.empty()) throw ValidationError("dataset '" + data.name + "' has no eval split");
  const auto want = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool.size()))));
  Rng rng(seed, "eval-subset");
  const auto perm = rng.permutation(pool.size());
  std::vector<std::size_t> out;
  out.reserve(want);
  for (std::size_t i = 0; i < want; ++i) out.push_back(pool[perm[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> eligible_set(const nn::Model& a, const nn::Model& b, const Dataset& eval) {
  const auto pa = nn::predict(a, eval.images);
  const auto pb = nn::predict(b, eval.images);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    if (pa[i] == eval.labels[i] && pb[i] == eval.labels[i]) out.push_back(i);
  }
  return out;
}

namespace {

template <typename F>
void for_positions(std::size_t pool, std::span<const std::size_t> positions, F&& f) {
  if (positions.empty()) {
    for (std::size_t p = 0; p < pool; ++p) f(p);
  } else {
    for (auto p : positions) f(p);
  }
}

}  // namespace

PairCounts TransferTable::counts(std::size_t a, std::size_t b, std::span<const std::size_t> positions) const {
  PairCounts c;
  for_positions(pool_size(), positions, [&](std::size_t p) {
    if (!correct[a][p] || !correct[b][p]) return;
    ++c.eligible;
    c.a_fooled += pred[a][b][p] != labels[p];
    c.b_fooled += pred[b][a][p] != labels[p];
  });
  return c;
}

PairCounts TransferTable::one_sided_counts(std::size_t source, std::size_t target,
                                           std::span<const std::size_t> positions) const {
  PairCounts c;
  for_positions(pool_size(), positions, [&](std::size_t p) {
    if (!correct[source][p] || !correct[target][p]) return;
    ++c.eligible;
    c.a_fooled += pred[target][source][p] != labels[p];
  });
  return c;
}

std::size_t TransferTable::agreement(std::size_t a, std::size_t b) const {
  std::size_t n = 0;
  for (std::size_t p = 0; p < pool_size(); ++p) {
    if (!correct[a][p] || !correct[b][p]) continue;
    const int pa = pred[a][b][p], pb = pred[b][a][p];
    n += pa != labels[p] && pb != labels[p] && pa == pb;
  }
  return n;
}

double TransferTable::self_success(std::size_t m) const {
  std::size_t n = 0, fooled = 0;
  for (std::size_t p = 0; p < pool_size(); ++p) {
    if (!correct[m][p]) continue;
    ++n;
    fooled += pred[m][m][p] != labels[p];
  }
  return n ? static_cast<double>(fooled) / static_cast<double>(n) : 0.0;
}

TransferTable build_transfer_table(std::span<const nn::Model> zoo, const Dataset& data,
                                   std::span<const std::size_t> rows, const attacks::AttackConfig& attack,
                                   unsigned threads, std::vector<attacks::AdvBatch>* keep) {
  attack.validate();
  const std::size_t m = zoo.size();
  TransferTable t;
  t.rows.assign(rows.begin(), rows.end());
  for (auto r : rows) t.labels.push_back(data.labels.at(r));
  const Tensor images = data.images.gather_rows(rows);
  for (const auto& model : zoo) t.names.push_back(model.name());

  t.correct.assign(m, std::vector<std::uint8_t>(rows.size(), 0));
  parallel_for(m, threads, [&](std::size_t i) {
    const auto pred = nn::predict(zoo[i], images);
    for (std::size_t p = 0; p < rows.size(); ++p) t.correct[i][p] = pred[p] == t.labels[p];
  });

  std::vector<attacks::AdvBatch> advs(m);
  std::vector<std::vector<std::size_t>> attacked(m);
  parallel_for(m, threads, [&](std::size_t s) {
    for (std::size_t p = 0; p < rows.size(); ++p)
      if (t.correct[s][p]) attacked[s].push_back(p);
    if (attacked[s].empty()) return;
    std::vector<std::size_t> ids;
    std::vector<int> labels;
    for (auto p : attacked[s]) {
      ids.push_back(t.rows[p]);
      labels.push_back(t.labels[p]);
    }
    advs[s] = attacks::attack(zoo[s], images.gather_rows(attacked[s]), labels, attack, ids);
  });

  t.pred.assign(m, std::vector<std::vector<int>>(m, std::vector<int>(rows.size(), -1)));
  parallel_for(m * m, threads, [&](std::size_t k) {
    const std::size_t target = k / m, source = k % m;
    if (attacked[source].empty()) return;
    const auto pred = nn::predict(zoo[target], advs[source].adversarial);
    for (std::size_t i = 0; i < attacked[source].size(); ++i) t.pred[target][source][attacked[source][i]] = pred[i];
  });
  if (keep) *keep = std::move(advs);
  return t;
}

std::size_t SimilarityMatrix::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw ValidationError("model '" + name + "' not in similarity matrix");
}

SimilarityMatrix matrix_from_table(const TransferTable& table, const SatConfig& cfg,
                                   std::span<const std::size_t> positions) {
  const std::size_t m = table.num_models();
  SimilarityMatrix sm;
  sm.names = table.names;
  sm.config = cfg;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  sm.values.assign(m, std::vector<double>(m, nan));
  sm.raw.assign(m, std::vector<double>(m, nan));
  sm.eligible.assign(m, std::vector<std::size_t>(m, 0));
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a; b < m; ++b) {
      const PairCounts c = table.counts(a, b, positions);
      sm.eligible[a][b] = sm.eligible[b][a] = c.eligible;
      if (c.eligible == 0) {
        if (a != b) sm.exclusions.emplace_back(table.names[a], table.names[b]);
        continue;
      }
      const double raw = raw_transfer(c, cfg.epsilon_floor);
      sm.raw[a][b] = sm.raw[b][a] = raw;
      sm.values[a][b] = sm.values[b][a] = std::log(raw);
    }
  }
  return sm;
}

double sat(const nn::Model& a, const nn::Model& b, const Dataset& data, const SatConfig& cfg) {
  cfg.validate();
  const auto rows = eval_subset(data, cfg.eval_fraction, cfg.seed);
  const std::vector<nn::Model> pair{a, b};
  const auto table = build_transfer_table(pair, data, rows, cfg.attack, cfg.threads);
  const PairCounts c = table.counts(0, 1);
  if (c.eligible == 0) throw IncomparablePair(a.name(), b.name());
  return sat_value(c, cfg.epsilon_floor);
}

SimilarityMatrix sat_matrix(std::span<const nn::Model> zoo, const Dataset& data, const SatConfig& cfg) {
  cfg.validate();
  if (zoo.size() < 2) throw ValidationError("a similarity matrix needs at least two models");
  const auto rows = eval_subset(data, cfg.eval_fraction, cfg.seed);
  return matrix_from_table(build_transfer_table(zoo, data, rows, cfg.attack, cfg.threads), cfg);
}

std::vector<double> sat_one_sided(const nn::Model& fresh, std::span<const nn::Model> zoo, const Dataset& data,
                                  const SatConfig& cfg) {
  cfg.validate();
  const auto rows = eval_subset(data, cfg.eval_fraction, cfg.seed);
  const Tensor images = data.images.gather_rows(rows);
  std::vector<int> labels;
  for (auto r : rows) labels.push_back(data.labels[r]);
  const auto fresh_pred = nn::predict(fresh, images);
  std::vector<std::size_t> attacked;
  for (std::size_t p = 0; p < rows.size(); ++p)
    if (fresh_pred[p] == labels[p]) attacked.push_back(p);
  std::vector<std::size_t> ids;
  std::vector<int> attacked_labels;
  for (auto p : attacked) {
    ids.push_back(rows[p]);
    attacked_labels.push_back(labels[p]);
  }
  const auto adv = attacks::attack(fresh, images.gather_rows(attacked), attacked_labels, cfg.attack, ids);
  std::vector<double> out(zoo.size());
  parallel_for(zoo.size(), cfg.threads, [&](std::size_t z) {
    const auto clean = nn::predict(zoo[z], images.gather_rows(attacked));
    const auto on_adv = nn::predict(zoo[z], adv.adversarial);
    PairCounts c;
    for (std::size_t i = 0; i < attacked.size(); ++i) {
      if (clean[i] != attacked_labels[i]) continue;
      ++c.eligible;
      c.a_fooled += on_adv[i] != attacked_labels[i];
    }
    if (c.eligible == 0) throw IncomparablePair(fresh.name(), zoo[z].name());
    out[z] = one_sided_value(c, cfg.epsilon_floor);
  });
  return out;
}

std::size_t misclassification_agreement(const nn::Model& a, const nn::Model& b, const attacks::AdvBatch& adv_a,
                                        const attacks::AdvBatch& adv_b) {
  if (adv_a.example_ids != adv_b.example_ids || adv_a.labels != adv_b.labels) {
    throw ValidationError("adversarial batches do not cover the same examples");
  }
  const auto a_on_b = nn::predict(a, adv_b.adversarial);
  const auto b_on_a = nn::predict(b, adv_a.adversarial);
  std::size_t n = 0;
  for (std::size_t i = 0; i < adv_a.size(); ++i) {
    const int y = adv_a.labels[i];
    n += a_on_b[i] != y && b_on_a[i] != y && a_on_b[i] == b_on_a[i];
  }
  return n;
}

namespace {

using nlohmann::json;

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p.replace_extension(".json");
  return p;
}

json attack_json(const attacks::AttackConfig& a) {
  return {{"method", std::string(attacks::to_string(a.method))},
          {"epsilon", a.epsilon},
          {"step-size", a.step_size},
          {"iterations", a.iterations},
          {"momentum-decay", a.momentum_decay},
          {"seed", a.seed}};
}

json matrix_json(const std::vector<std::vector<double>>& m) {
  json out = json::array();
  for (const auto& row : m) {
    json r = json::array();
    for (double v : row) r.push_back(std::isnan(v) ? json(nullptr) : json(v));
    out.push_back(r);
  }
  return out;
}

std::vector<std::vector<double>> matrix_from(const json& j) {
  std::vector<std::vector<double>> out;
  for (const auto& row : j) {
    std::vector<double> r;
    for (const auto& v : row) r.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void save_similarity(const SimilarityMatrix& sm, const std::filesystem::path& csv_path) {
  std::ostringstream csv;
  csv << "model";
  for (const auto& n : sm.names) csv << ',' << n;
  csv << '\n';
  for (std::size_t i = 0; i < sm.size(); ++i) {
    csv << sm.names[i];
    for (std::size_t j = 0; j < sm.size(); ++j) csv << ',' << io::format_number(sm.values[i][j]);
    csv << '\n';
  }
  json j;
  j["format"] = kSatFormat;
  j["names"] = sm.names;
  j["config"] = {{"epsilon-floor", sm.config.epsilon_floor},
                 {"eval-fraction", sm.config.eval_fraction},
                 {"seed", sm.config.seed},
                 {"log", "natural"},
                 {"resize-rule", "bilinear"},
                 {"attack", attack_json(sm.config.attack)}};
  j["raw-transfer"] = matrix_json(sm.raw);
  j["eligible"] = sm.eligible;
  json ex = json::array();
  for (const auto& [a, b] : sm.exclusions) ex.push_back({a, b});
  j["exclusions"] = ex;
  io::write_atomic(csv_path, csv.str());
  io::write_atomic(sidecar_path(csv_path), j.dump(2) + "\n");
}

SimilarityMatrix load_similarity(const std::filesystem::path& csv_path) {
  SimilarityMatrix sm;
  std::istringstream csv(io::read_text(csv_path));
  std::string line;
  if (!std::getline(csv, line)) throw FormatError(csv_path.string() + ": empty similarity file");
  auto header = split_csv(line);
  if (header.empty() || header[0] != "model") throw FormatError(csv_path.string() + ": missing header");
  sm.names.assign(header.begin() + 1, header.end());
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != sm.names.size() + 1) throw FormatError(csv_path.string() + ": ragged row");
    if (cells[0] != sm.names[sm.values.size()]) throw FormatError(csv_path.string() + ": row order differs from header");
    std::vector<double> row;
    for (std::size_t k = 1; k < cells.size(); ++k) row.push_back(io::parse_number(cells[k]));
    sm.values.push_back(std::move(row));
  }
  if (sm.values.size() != sm.names.size()) throw FormatError(csv_path.string() + ": matrix is not square");
  for (std::size_t i = 0; i < sm.size(); ++i)
    for (std::size_t k = 0; k < i; ++k) {
      const double a = sm.values[i][k], b = sm.values[k][i];
      if (!(a == b || (std::isnan(a) && std::isnan(b)))) throw FormatError(csv_path.string() + ": matrix is not symmetric");
    }
  const auto side = sidecar_path(csv_path);
  if (std::filesystem::exists(side)) {
    json j;
    try {
      j = json::parse(io::read_text(side));
      if (j.value("format", std::string()) != kSatFormat) throw FormatError(side.string() + ": expected " + kSatFormat);
      const auto& c = j.at("config");
      sm.config.epsilon_floor = c.at("epsilon-floor").get<double>();
      sm.config.eval_fraction = c.at("eval-fraction").get<double>();
      sm.config.seed = c.at("seed").get<std::uint64_t>();
      const auto& a = c.at("attack");
      sm.config.attack.method = attacks::method_from_string(a.at("method").get<std::string>());
      sm.config.attack.epsilon = a.at("epsilon").get<double>();
      sm.config.attack.step_size = a.at("step-size").get<double>();
      sm.config.attack.iterations = a.at("iterations").get<int>();
      sm.config.attack.momentum_decay = a.at("momentum-decay").get<double>();
      sm.config.attack.seed = a.at("seed").get<std::uint64_t>();
      sm.raw = matrix_from(j.at("raw-transfer"));
      sm.eligible = j.at("eligible").get<std::vector<std::vector<std::size_t>>>();
      for (const auto& e : j.at("exclusions")) sm.exclusions.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    } catch (const json::exception& e) {
      throw FormatError(side.string() + ": " + e.what());
    }
  } else {
    sm.raw.assign(sm.size(), std::vector<double>(sm.size()));
    sm.eligible.assign(sm.size(), std::vector<std::size_t>(sm.size(), 0));
    for (std::size_t i = 0; i < sm.size(); ++i)
      for (std::size_t k = 0; k < sm.size(); ++k) sm.raw[i][k] = std::exp(sm.values[i][k]);
  }
  return sm;
}

}  // namespace archsim::sat
