#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "archsim/boundary/boundary.hpp"
#include "archsim/ensemble/ensemble.hpp"
#include "archsim/features/importance.hpp"
#include "archsim/features/keywords.hpp"
#include "archsim/io/files.hpp"
#include "archsim/log.hpp"
#include "archsim/nn/serialize.hpp"
#include "archsim/rng.hpp"
#include "archsim/sat/sat.hpp"
#include "archsim/spectral/spectral.hpp"
#include "archsim/zoo/zoo.hpp"
#include "render.hpp"

namespace archsim::cli {

namespace {

using json = nlohmann::json;

ordered_json num(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

std::string cell(double v) { return io::format_number(v); }

void write_text(RunRecord& rec, const fs::path& path, const std::string& text) {
  io::write_atomic(path, text);
  rec.outputs.push_back(path);
}

void write_json(RunRecord& rec, const fs::path& path, const ordered_json& j) { write_text(rec, path, j.dump(2) + "\n"); }

// Summary table in the requested format; svg output uses `svg` when given.
void write_summary(const Global& g, RunRecord& rec, const fs::path& dir, const Table& t, const std::string& svg = "") {
  if (g.format == "csv") {
    write_text(rec, dir / "summary.csv", to_csv(t));
  } else if (g.format == "svg") {
    write_text(rec, dir / "summary.svg", svg.empty() ? to_svg(t) : stack_svg({svg, to_svg(t)}));
  } else {
    write_json(rec, dir / "summary.json", to_json(t));
  }
}

fs::path require(const fs::path& p) {
  if (!fs::exists(p)) throw MissingArtifact(p);
  return p;
}

fs::path zoo_dir(const Global& g, const std::optional<fs::path>& o) { return o ? *o : g.out_dir / "zoo"; }
fs::path sat_path(const Global& g, const std::optional<fs::path>& o) { return o ? *o : g.out_dir / "sat" / "sat.csv"; }
fs::path clusters_path(const Global& g, const std::optional<fs::path>& o) {
  return o ? *o : g.out_dir / "clusters" / "clusters.json";
}

ordered_json read_artifact(const fs::path& path, const std::string& format) {
  require(path);
  ordered_json j;
  try {
    j = ordered_json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  const std::string got = j.value("format", std::string());
  if (got != format) {
    throw FormatError(path.string() + ": schema version mismatch, expected " + format + " but found '" + got + "'");
  }
  return j;
}

sat::SimilarityMatrix load_sat(RunRecord& rec, const fs::path& path) {
  require(path);
  rec.inputs.push_back(path);
  return sat::load_similarity(path);
}

spectral::ClusterAssignment load_clusters(RunRecord& rec, const fs::path& path) {
  require(path);
  rec.inputs.push_back(path);
  return spectral::load_assignment(path);
}

ZooIndex load_zoo(RunRecord& rec, const fs::path& dir) {
  auto index = load_zoo_index(dir);
  rec.inputs.push_back(dir / "zoo.json");
  return index;
}

}  // namespace

double parse_fraction(const std::string& text) {
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) return io::parse_number(text);
    const double a = io::parse_number(text.substr(0, slash));
    const double b = io::parse_number(text.substr(slash + 1));
    if (b == 0.0) throw ValidationError("division by zero in '" + text + "'");
    return a / b;
  } catch (const FormatError&) {
    throw ValidationError("expected a number or a fraction such as 8/255, got '" + text + "'");
  }
}

attacks::AttackConfig AttackFlags::resolve(std::uint64_t seed) const {
  attacks::AttackConfig c;
  c.method = attacks::method_from_string(method);
  c.epsilon = parse_fraction(epsilon);
  c.step_size = step;
  c.iterations = iterations;
  c.momentum_decay = momentum;
  c.seed = seed;
  if (c.method == attacks::Method::kFgsm) {
    c.iterations = 1;
    c.step_size = c.epsilon > 0.0 ? c.epsilon : step;
  }
  c.validate();
  return c;
}

ordered_json AttackFlags::to_json() const {
  return {{"method", method}, {"epsilon", epsilon}, {"step", step}, {"iterations", iterations}, {"momentum", momentum}};
}

fs::path stage_dir(const Global& g, const std::string& command) {
  static const std::map<std::string, std::string> dirs{
      {"train-zoo", "zoo"},         {"attack", "attacks"},   {"sat-matrix", "sat"},   {"cluster", "clusters"},
      {"importance", "importance"}, {"keywords", "keywords"}, {"ensemble", "ensemble"}, {"distill", "distill"},
      {"boundary-lab", "boundary"}, {"report", "report"}};
  return g.out_dir / dirs.at(command);
}

std::map<std::string, features::ArchFeatureRecord> ZooIndex::records() const {
  std::map<std::string, features::ArchFeatureRecord> out;
  for (const auto& m : models) out.emplace(m.name, m.record);
  return out;
}

ZooIndex load_zoo_index(const fs::path& dir) {
  const auto j = read_artifact(dir / "zoo.json", kZooIndexFormat);
  ZooIndex index;
  index.dir = dir;
  try {
    for (const auto& m : j.at("models")) {
      ZooIndexEntry e;
      e.name = m.at("name").get<std::string>();
      e.family = m.at("family").get<std::string>();
      e.variation = m.at("variation").get<std::string>();
      e.file = m.at("file").get<std::string>();
      e.eval_accuracy = m.at("eval-accuracy").get<double>();
      for (const auto& [k, v] : m.at("arch-features").items()) e.record[features::component_index(k)] = v.get<std::string>();
      index.models.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError((dir / "zoo.json").string() + ": " + e.what());
  }
  return index;
}

std::vector<nn::Model> load_zoo_models(const ZooIndex& index) {
  std::vector<nn::Model> out;
  for (const auto& e : index.models) out.push_back(nn::load_model(require(index.dir / e.file)));
  return out;
}

Dataset load_zoo_dataset(const ZooIndex& index) { return zoo::load_dataset(require(index.dir / "dataset.json")); }

// ---------------------------------------------------------------- train-zoo

void train_zoo(const Global& g, const TrainZooOptions& o, RunRecord& rec) {
  zoo::ZooManifest manifest;
  if (o.manifest) {
    rec.inputs.push_back(require(*o.manifest));
    manifest = zoo::ZooManifest::from_json(io::read_text(*o.manifest));
  } else {
    manifest = zoo::default_manifest(o.variants, g.seed);
  }
  std::string dataset_ref;
  if (o.dataset) {
    rec.inputs.push_back(require(*o.dataset));
    auto j = json::parse(io::read_text(*o.dataset));
    if (j.value("format", std::string()) == "idx") {
      for (const char* key : {"train-images", "train-labels", "eval-images", "eval-labels"}) {
        if (!j.contains(key)) throw FormatError(o.dataset->string() + ": missing '" + key + "'");
        j[key] = fs::absolute(o.dataset->parent_path() / j[key].get<std::string>()).lexically_normal().string();
      }
    }
    dataset_ref = j.dump(2) + "\n";
    manifest.dataset = j.dump();
  } else {
    dataset_ref = json::parse(manifest.dataset).dump(2) + "\n";
  }
  rec.config["manifest"] = o.manifest ? o.manifest->string() : "default";
  rec.config["variants"] = o.variants;
  rec.config["dataset"] = o.dataset ? o.dataset->string() : "manifest";
  const fs::path dir = stage_dir(g, "train-zoo");
  fs::create_directories(dir / "models");
  write_text(rec, dir / "dataset.json", dataset_ref);
  const Dataset data = zoo::load_dataset(dir / "dataset.json");

  std::optional<fs::path> cache;
  if (!o.no_cache) cache = o.cache_dir ? *o.cache_dir : g.out_dir / "cache";
  rec.config["cache-dir"] = cache ? ordered_json(cache->string()) : ordered_json(nullptr);
  if (cache) fs::create_directories(*cache);
  const auto built = zoo::build_zoo(manifest, data, cache, g.threads);

  ordered_json hits = ordered_json::array();
  for (const auto& row : built.report.rows) {
    if (row.cached) hits.push_back(row.name);
  }
  rec.config["cache-hits"] = hits;
  write_text(rec, dir / "manifest.json", manifest.to_json());
  write_text(rec, dir / "report.json", built.report.to_json());
  ordered_json models = ordered_json::array();
  Table t{"zoo", {"model", "family", "variation", "eval-accuracy", "accepted", "reason"}, {}};
  for (const auto& row : built.report.rows) {
    t.rows.push_back({row.name, row.family, row.variation, cell(row.eval_accuracy), row.accepted ? "yes" : "no", row.reason});
  }
  for (const auto& m : built.models) {
    const fs::path file = fs::path("models") / (m.name() + ".model.json");
    nn::save_model(m, dir / file);
    rec.outputs.push_back(dir / file);
    std::string family, variation;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      if (manifest.entries[i].spec.name == m.name()) {
        family = manifest.entries[i].family;
        variation = manifest.entries[i].variation;
      }
    }
    ordered_json rec_j = ordered_json::object();
    for (std::size_t c = 0; c < features::kNumComponents; ++c) {
      rec_j[std::string(features::kComponentNames[c])] = m.spec().arch_features.values[c];
    }
    models.push_back({{"name", m.name()},
                      {"family", family},
                      {"variation", variation},
                      {"file", file.generic_string()},
                      {"eval-accuracy", m.meta().eval_accuracy},
                      {"arch-features", rec_j}});
  }
  write_json(rec, dir / "zoo.json",
             {{"format", kZooIndexFormat}, {"dataset", "dataset.json"}, {"models", models}});
  write_summary(g, rec, dir, t);
  if (built.models.size() < 2) throw ValidationError("fewer than two models passed the accuracy filters");
}

// ---------------------------------------------------------------- attack

void attack(const Global& g, const AttackOptions& o, RunRecord& rec) {
  const auto cfg = o.attack.resolve(g.seed);
  rec.config["zoo"] = zoo_dir(g, o.zoo).string();
  rec.config["model"] = o.model;
  rec.config["attack"] = o.attack.to_json();
  rec.config["eval-fraction"] = o.eval_fraction;
  const auto index = load_zoo(rec, zoo_dir(g, o.zoo));
  const auto it = std::find_if(index.models.begin(), index.models.end(), [&](const auto& e) { return e.name == o.model; });
  if (it == index.models.end()) throw ValidationError("model '" + o.model + "' is not in the zoo");
  const auto model = nn::load_model(require(index.dir / it->file));
  const auto data = load_zoo_dataset(index);
  const auto rows = sat::eval_subset(data, o.eval_fraction, g.seed);
  std::vector<int> labels;
  for (auto r : rows) labels.push_back(data.labels[r]);
  const auto adv = attacks::attack(model, data.images.gather_rows(rows), labels, cfg, rows);
  const fs::path dir = stage_dir(g, "attack");
  fs::create_directories(dir);
  const fs::path path = dir / (o.model + ".adv.json");
  attacks::save_adv(adv, path);
  for (const char* ext : {"", ".clean.f32", ".adv.f32", ".labels.csv"}) rec.outputs.push_back(path.string() + ext);
  const double success = attacks::attack_success_rate(model, adv);
  write_summary(g, rec, dir,
                Table{"attack", {"model", "method", "epsilon", "examples", "success-rate"},
                      {{o.model, o.attack.method, cell(cfg.epsilon), std::to_string(adv.size()), cell(success)}}});
}

// ---------------------------------------------------------------- sat-matrix

void sat_matrix(const Global& g, const SatMatrixOptions& o, RunRecord& rec) {
  sat::SatConfig cfg;
  cfg.attack = o.attack.resolve(g.seed);
  cfg.eval_fraction = o.eval_fraction;
  cfg.epsilon_floor = o.epsilon_floor;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  cfg.validate();
  rec.config["zoo"] = zoo_dir(g, o.zoo).string();
  rec.config["attack"] = o.attack.to_json();
  rec.config["eval-fraction"] = o.eval_fraction;
  rec.config["epsilon-floor"] = o.epsilon_floor;
  const auto index = load_zoo(rec, zoo_dir(g, o.zoo));
  const auto models = load_zoo_models(index);
  if (models.size() < 2) throw ValidationError("a similarity matrix needs at least two models");
  const auto data = load_zoo_dataset(index);
  const auto rows = sat::eval_subset(data, cfg.eval_fraction, cfg.seed);
  const auto table = sat::build_transfer_table(models, data, rows, cfg.attack, g.threads);
  const auto sm = sat::matrix_from_table(table, cfg);

  const fs::path dir = stage_dir(g, "sat-matrix");
  fs::create_directories(dir);
  sat::save_similarity(sm, dir / "sat.csv");
  rec.outputs.push_back(dir / "sat.csv");
  rec.outputs.push_back(dir / "sat.json");

  // Per-model diagnostics and one-sided scores (source attacks, target judged).
  ordered_json diag = ordered_json::array();
  Table t{"sat-matrix", {"model", "self-success", "mean-off-diagonal-sat"}, {}};
  const std::size_t n = sm.size();
  std::vector<std::vector<double>> one(n, std::vector<double>(n, std::nan("")));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const auto c = table.one_sided_counts(a, b);
      if (c.eligible > 0) one[a][b] = sat::one_sided_value(c, cfg.epsilon_floor);
    }
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < n; ++b)
      if (b != a && std::isfinite(sm.values[a][b])) total += sm.values[a][b], ++count;
    const double mean = count ? total / static_cast<double>(count) : std::nan("");
    diag.push_back({{"model", sm.names[a]}, {"self-success", table.self_success(a)}, {"mean-off-diagonal", num(mean)}});
    t.rows.push_back({sm.names[a], cell(table.self_success(a)), cell(mean)});
  }
  ordered_json one_j = ordered_json::array();
  for (const auto& row : one) {
    ordered_json r = ordered_json::array();
    for (double v : row) r.push_back(num(v));
    one_j.push_back(r);
  }
  write_json(rec, dir / "diagnostics.json",
             {{"format", "archsim-sat-diagnostics/1"},
              {"names", sm.names},
              {"models", diag},
              {"one-sided", {{"rows", "source"}, {"columns", "target"}, {"values", one_j}}}});
  write_summary(g, rec, dir, t, heatmap_svg("SAT (ln %)", sm.names, sm.values));
}

// ---------------------------------------------------------------- cluster

void cluster(const Global& g, const ClusterOptions& o, RunRecord& rec) {
  if (o.adjacency != "percent" && o.adjacency != "shifted-log") {
    throw ValidationError("--adjacency must be percent or shifted-log");
  }
  rec.config["sat"] = sat_path(g, o.sat).string();
  rec.config["k"] = o.k;
  rec.config["restarts"] = o.restarts;
  rec.config["adjacency"] = o.adjacency;
  const auto sm = load_sat(rec, sat_path(g, o.sat));
  const auto adj = spectral::adjacency_from_sat(
      sm, o.adjacency == "percent" ? spectral::AdjacencyScale::kPercent : spectral::AdjacencyScale::kShiftedLog);
  spectral::ClusterConfig cfg;
  cfg.k = o.k;
  cfg.restarts = o.restarts;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  const auto a = spectral::spectral_cluster(adj, cfg);
  const auto map = spectral::spectral_distance_map(a);

  const fs::path dir = stage_dir(g, "cluster");
  fs::create_directories(dir);
  spectral::save_assignment(a, dir / "clusters.json");
  rec.outputs.push_back(dir / "clusters.json");
  spectral::save_distance_map(map, dir / "distance-map.csv");
  rec.outputs.push_back(dir / "distance-map.csv");
  Table t{"clusters", {"model", "cluster"}, {}};
  for (std::size_t i = 0; i < a.size(); ++i) t.rows.push_back({a.names[i], std::to_string(a.labels[i])});
  write_summary(g, rec, dir, t, heatmap_svg("spectral distance", map.names, map.distances));
}

// ---------------------------------------------------------------- importance

void importance(const Global& g, const ImportanceOptions& o, RunRecord& rec) {
  features::GbmConfig cfg;
  cfg.stages = o.stages;
  cfg.max_depth = o.max_depth;
  cfg.min_samples_split = o.min_samples_split;
  cfg.min_samples_leaf = o.min_samples_leaf;
  cfg.learning_rate = o.learning_rate;
  cfg.seed = g.seed;
  cfg.validate();
  if (o.repeats <= 0) throw ValidationError("--repeats must be positive");
  rec.config["sat"] = sat_path(g, o.sat).string();
  rec.config["zoo"] = zoo_dir(g, o.zoo).string();
  rec.config["gbm"] = {{"stages", o.stages},
                       {"max-depth", o.max_depth},
                       {"min-samples-split", o.min_samples_split},
                       {"min-samples-leaf", o.min_samples_leaf},
                       {"learning-rate", o.learning_rate}};
  rec.config["repeats"] = o.repeats;
  const auto sm = load_sat(rec, sat_path(g, o.sat));
  const auto index = load_zoo(rec, zoo_dir(g, o.zoo));
  const auto rows = features::pair_rows(sm, index.records());
  const auto model = features::fit_gbm(rows, cfg);
  const auto imp = features::permutation_importance(model, rows, o.repeats, g.seed);
  const auto used = model.used_features();

  std::vector<std::size_t> order(imp.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return imp[a] > imp[b]; });
  ordered_json comps = ordered_json::array();
  Table t{"importance", {"component", "importance", "used"}, {}};
  std::vector<Bar> bars;
  for (auto c : order) {
    const std::string name(features::kComponentNames[c]);
    comps.push_back({{"component", name}, {"importance", imp[c]}, {"used", static_cast<bool>(used[c])}});
    t.rows.push_back({name, cell(imp[c]), used[c] ? "yes" : "no"});
    bars.push_back({name, imp[c]});
  }
  const fs::path dir = stage_dir(g, "importance");
  fs::create_directories(dir);
  write_json(rec, dir / "importance.json",
             {{"format", "archsim-importance/1"},
              {"pairs", rows.size()},
              {"train-r2", model.train_r2},
              {"components", comps}});
  write_summary(g, rec, dir, t, bar_chart_svg("permutation importance (R^2 drop)", bars));
}

// ---------------------------------------------------------------- keywords

void keywords(const Global& g, const KeywordsOptions& o, RunRecord& rec) {
  rec.config["clusters"] = clusters_path(g, o.clusters).string();
  rec.config["zoo"] = zoo_dir(g, o.zoo).string();
  rec.config["top-k"] = o.top_k;
  const auto a = load_clusters(rec, clusters_path(g, o.clusters));
  const auto index = load_zoo(rec, zoo_dir(g, o.zoo));
  const auto kw = features::tfidf_keywords(a, index.records(), o.top_k);
  ordered_json clusters = ordered_json::array();
  Table t{"keywords", {"cluster", "members", "keywords"}, {}};
  for (std::size_t c = 0; c < kw.size(); ++c) {
    std::vector<std::string> members;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a.labels[i] == static_cast<int>(c)) members.push_back(a.names[i]);
    ordered_json words = ordered_json::array();
    std::string joined;
    for (const auto& k : kw[c]) {
      words.push_back({{"token", k.token}, {"score", k.score}});
      joined += (joined.empty() ? "" : "; ") + k.token;
    }
    std::string member_list;
    for (const auto& m : members) member_list += (member_list.empty() ? "" : " ") + m;
    clusters.push_back({{"cluster", c}, {"members", members}, {"keywords", words}});
    t.rows.push_back({std::to_string(c), member_list, joined});
  }
  const fs::path dir = stage_dir(g, "keywords");
  fs::create_directories(dir);
  write_json(rec, dir / "keywords.json", {{"format", "archsim-keywords/1"}, {"top-k", o.top_k}, {"clusters", clusters}});
  write_summary(g, rec, dir, t);
}

// ---------------------------------------------------------------- ensemble

void ensemble(const Global& g, const EnsembleOptions& o, RunRecord& rec) {
  if (o.sizes.empty()) throw ValidationError("--sizes needs at least one ensemble size");
  rec.config["zoo"] = zoo_dir(g, o.zoo).string();
  rec.config["sat"] = sat_path(g, o.sat).string();
  rec.config["clusters"] = clusters_path(g, o.clusters).string();
  rec.config["sizes"] = o.sizes;
  rec.config["trials"] = o.trials;
  rec.config["orders"] = o.orders;
  const auto index = load_zoo(rec, zoo_dir(g, o.zoo));
  const auto sm = load_sat(rec, sat_path(g, o.sat));
  const auto a = load_clusters(rec, clusters_path(g, o.clusters));
  const auto models = load_zoo_models(index);
  const auto data = load_zoo_dataset(index);
  const Dataset eval = data.select(Split::kEval);
  const auto cache = ensemble::compute_logits(models, eval.images, eval.labels, g.threads);

  const auto corr = ensemble::similarity_vs_ensemble(sm, cache);
  ordered_json points = ordered_json::array();
  for (std::size_t i = 0; i < corr.x.size(); ++i) points.push_back({{"pair", corr.labels[i]}, {"sat", corr.x[i]}, {"err", corr.y[i]}});

  ordered_json diversity = ordered_json::array();
  Table t{"ensemble", {"n", "k", "feasible", "trials", "mean-err", "random-mean-err", "sampling"}, {}};
  std::vector<Bar> bars;
  for (std::size_t n : o.sizes) {
    for (std::size_t k = 1; k <= n; ++k) {
      const auto d = ensemble::diversity_protocol(cache, a, n, k, o.trials, derive_seed(g.seed, n * 100 + k));
      diversity.push_back({{"n", n},
                           {"k", k},
                           {"feasible", d.feasible},
                           {"trials", d.trials},
                           {"mean-err", d.feasible ? num(d.mean_err) : ordered_json(nullptr)},
                           {"random-mean-err", d.feasible ? num(d.random_mean_err) : ordered_json(nullptr)},
                           {"sampling", d.sampling}});
      t.rows.push_back({std::to_string(n), std::to_string(k), d.feasible ? "yes" : "no", std::to_string(d.trials),
                        d.feasible ? cell(d.mean_err) : "NA", d.feasible ? cell(d.random_mean_err) : "NA", d.sampling});
      if (d.feasible) bars.push_back({"N=" + std::to_string(n) + " k=" + std::to_string(k), d.mean_err});
    }
  }

  // All-wrong ratio along random member orders (prefix ensembles).
  const std::size_t m = cache.num_models();
  std::vector<double> all_wrong(m, 0.0);
  for (std::size_t r = 0; r < o.orders; ++r) {
    const auto order = Rng(derive_seed(g.seed, r), "all-wrong").permutation(m);
    for (std::size_t s = 1; s <= m; ++s) {
      const std::vector<std::size_t> members(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(s));
      all_wrong[s - 1] += ensemble::evaluate(cache, members).all_wrong_ratio / static_cast<double>(o.orders);
    }
  }
  ordered_json aw = ordered_json::array();
  for (std::size_t s = 0; s < m; ++s) aw.push_back({{"size", s + 1}, {"all-wrong-ratio", all_wrong[s]}});

  const fs::path dir = stage_dir(g, "ensemble");
  fs::create_directories(dir);
  write_json(rec, dir / "ensemble.json",
             {{"format", "archsim-ensemble/1"},
              {"examples", cache.num_examples()},
              {"sat-vs-err",
               {{"pearson", num(corr.pearson.coefficient)},
                {"pearson-p", num(corr.pearson.p_value)},
                {"spearman", num(corr.spearman.coefficient)},
                {"spearman-p", num(corr.spearman.p_value)},
                {"degenerate", corr.degenerate},
                {"points", points}}},
              {"diversity", diversity},
              {"all-wrong", aw}});
  std::vector<Point> pts;
  for (std::size_t i = 0; i < corr.x.size(); ++i) pts.push_back({corr.x[i], corr.y[i]});
  write_summary(g, rec, dir, t,
                stack_svg({scatter_svg("2-ensemble ERR vs SAT", "SAT", "ERR", pts),
                           bar_chart_svg("mean ERR by clusters spanned", bars)}));
}

// ---------------------------------------------------------------- distill

void distill(const Global& g, const DistillOptions& o, RunRecord& rec) {
  rec.config["zoo"] = zoo_dir(g, o.zoo).string();
  rec.config["student"] = o.student;
  rec.config["epochs"] = o.epochs;
  rec.config["learning-rate"] = o.learning_rate;
  rec.config["batch-size"] = o.batch_size;
  rec.config["attack"] = o.attack.to_json();
  rec.config["eval-fraction"] = o.eval_fraction;
  const auto index = load_zoo(rec, zoo_dir(g, o.zoo));
  const auto teachers = load_zoo_models(index);
  const auto data = load_zoo_dataset(index);
  const auto families = zoo::family_names();
  if (std::find(families.begin(), families.end(), o.student) == families.end()) {
    throw ValidationError("unknown student family '" + o.student + "'");
  }
  auto spec = zoo::family_spec(o.student, data.height(), data.channels(), data.num_classes);
  spec.name = "student-" + o.student;
  nn::TrainConfig train;
  train.seed = derive_seed(g.seed, "student");
  train.epochs = o.epochs;
  train.learning_rate = o.learning_rate;
  train.batch_size = o.batch_size;
  sat::SatConfig sc;
  sc.attack = o.attack.resolve(g.seed);
  sc.eval_fraction = o.eval_fraction;
  sc.seed = g.seed;
  sc.threads = g.threads;
  const auto r = ensemble::distill_similarity_study(spec, teachers, data, train, sc);

  auto corr_json = [](const ensemble::CorrelationReport& c) {
    return ordered_json{{"n", c.x.size()},
                        {"pearson", num(c.pearson.coefficient)},
                        {"pearson-p", num(c.pearson.p_value)},
                        {"spearman", num(c.spearman.coefficient)},
                        {"degenerate", c.degenerate}};
  };
  ordered_json rows = ordered_json::array();
  Table t{"distill", {"teacher", "family", "same-family", "teacher-accuracy", "student-accuracy", "sat"}, {}};
  for (const auto& row : r.rows) {
    rows.push_back({{"teacher", row.teacher},
                    {"teacher-family", row.teacher_family},
                    {"same-family", row.same_family},
                    {"teacher-accuracy", row.teacher_accuracy},
                    {"student-accuracy", row.student_accuracy},
                    {"sat", row.sat},
                    {"teacher-below-scratch", row.below_scratch}});
    t.rows.push_back({row.teacher, row.teacher_family, row.same_family ? "yes" : "no", cell(row.teacher_accuracy),
                      cell(row.student_accuracy), cell(row.sat)});
  }
  const fs::path dir = stage_dir(g, "distill");
  fs::create_directories(dir);
  write_json(rec, dir / "distill.json",
             {{"format", "archsim-distill/1"},
              {"student", o.student},
              {"scratch-accuracy", r.scratch_accuracy},
              {"rows", rows},
              {"overall", corr_json(r.overall)},
              {"same-family", corr_json(r.same_family)},
              {"cross-family", corr_json(r.cross_family)},
              {"teacher-accuracy-control", corr_json(r.teacher_control)}});
  std::vector<Point> pts;
  for (const auto& row : r.rows) pts.push_back({row.sat, row.student_accuracy});
  write_summary(g, rec, dir, t, scatter_svg("student accuracy vs teacher SAT", "SAT", "accuracy", pts));
}

// ---------------------------------------------------------------- boundary-lab

void boundary_lab(const Global& g, const BoundaryOptions& o, RunRecord& rec) {
  rec.config["per-family"] = o.per_family;
  rec.config["points"] = o.points;
  rec.config["grid"] = o.grid;
  rec.config["triplets"] = o.triplets;
  rec.config["triplet-grid"] = o.triplet_grid;
  rec.config["resamples"] = o.resamples;
  rec.config["epsilon-scale"] = o.epsilon_scale;
  rec.config["attack-iterations"] = o.attack_iterations;
  rec.config["min-flip"] = o.min_flip;
  rec.config["stability"] = o.stability;
  const auto data = boundary::planar_dataset(g.seed, o.points);
  const auto models = boundary::planar_zoo(data, o.per_family, g.seed, g.threads);
  boundary::RankConfig cfg;
  cfg.grid_n = o.grid;
  cfg.num_triplets = o.triplets;
  cfg.triplet_grid = o.triplet_grid;
  cfg.resamples = o.resamples;
  cfg.epsilon_scale = o.epsilon_scale;
  cfg.attack_iterations = o.attack_iterations;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  cfg.with_min_flip = o.min_flip;
  const auto r = boundary::rank_benchmark(models, data, cfg);
  const fs::path dir = stage_dir(g, "boundary-lab");
  fs::create_directories(dir);
  auto rank = ordered_json::parse(r.to_json());
  rank["format"] = "archsim-boundary-rank/1";
  write_json(rec, dir / "rank.json", rank);
  Table t{"boundary-lab", {"method", "spearman-vs-oracle", "spearman-std", "degenerate"}, {}};
  for (const auto& m : r.methods) {
    t.rows.push_back({m.method, cell(m.spearman), cell(m.spearman_std), m.degenerate ? "yes" : "no"});
  }
  if (o.stability) {
    boundary::StabilityConfig sc;
    sc.attack = boundary::planar_attack(r.epsilon, o.attack_iterations, g.seed);
    sc.seed = g.seed;
    sc.threads = g.threads;
    sc.triplet_grid = o.triplet_grid;
    const auto big = boundary::planar_dataset(derive_seed(g.seed, "stability"), 2 * 2500 * 2);
    const auto rows = boundary::stability_study(models, big, sc);
    ordered_json s = ordered_json::array();
    for (const auto& row : rows) {
      s.push_back({{"method", row.method},
                   {"budget", row.budget},
                   {"evaluations", row.evaluations},
                   {"std-percent", row.std_percent},
                   {"relative-std", row.relative_std}});
    }
    write_json(rec, dir / "stability.json", {{"format", "archsim-stability/1"}, {"rows", s}});
  }
  write_summary(g, rec, dir, t);
}

// ---------------------------------------------------------------- report

void report(const Global& g, const ReportOptions& o, RunRecord& rec) {
  const fs::path sat_p = sat_path(g, o.sat), clusters_p = clusters_path(g, o.clusters);
  const fs::path keywords_p = o.keywords ? *o.keywords : g.out_dir / "keywords" / "keywords.json";
  const fs::path importance_p = o.importance ? *o.importance : g.out_dir / "importance" / "importance.json";
  const fs::path ensemble_p = o.ensemble ? *o.ensemble : g.out_dir / "ensemble" / "ensemble.json";
  rec.config["sat"] = sat_p.string();
  rec.config["clusters"] = clusters_p.string();
  rec.config["keywords"] = keywords_p.string();
  rec.config["importance"] = importance_p.string();
  rec.config["ensemble"] = ensemble_p.string();

  const auto sm = load_sat(rec, sat_p);
  const auto a = load_clusters(rec, clusters_p);
  const auto kw = read_artifact(keywords_p, "archsim-keywords/1");
  const auto imp = read_artifact(importance_p, "archsim-importance/1");
  const auto ens = read_artifact(ensemble_p, "archsim-ensemble/1");
  rec.inputs.push_back(keywords_p);
  rec.inputs.push_back(importance_p);
  rec.inputs.push_back(ensemble_p);

  Table keywords_t{"cluster keywords", {"cluster", "models", "top-5 keywords"}, {}};
  for (const auto& c : kw.at("clusters")) {
    std::string members, words;
    for (const auto& m : c.at("members")) members += (members.empty() ? "" : " ") + m.get<std::string>();
    for (const auto& k : c.at("keywords")) words += (words.empty() ? "" : "; ") + k.at("token").get<std::string>();
    keywords_t.rows.push_back({std::to_string(c.at("cluster").get<int>()), members, words});
  }
  const auto map = spectral::spectral_distance_map(a);
  Table distance_t{"spectral distance map", {"model"}, {}};
  distance_t.header.insert(distance_t.header.end(), map.names.begin(), map.names.end());
  for (std::size_t i = 0; i < map.names.size(); ++i) {
    std::vector<std::string> row{map.names[i]};
    for (double d : map.distances[i]) row.push_back(cell(d));
    distance_t.rows.push_back(std::move(row));
  }
  Table importance_t{"component importance", {"component", "importance", "used"}, {}};
  std::vector<Bar> bars;
  for (const auto& c : imp.at("components")) {
    const double v = c.at("importance").get<double>();
    importance_t.rows.push_back({c.at("component").get<std::string>(), cell(v), c.at("used").get<bool>() ? "yes" : "no"});
    bars.push_back({c.at("component").get<std::string>(), v});
  }
  Table ensembles_t{"ensembles", {"panel", "n", "k", "value"}, {}};
  const auto& corr = ens.at("sat-vs-err");
  auto jcell = [](const ordered_json& v) { return v.is_null() ? std::string("NA") : cell(v.get<double>()); };
  ensembles_t.rows.push_back({"sat-vs-err-pearson", "2", "", jcell(corr.at("pearson"))});
  ensembles_t.rows.push_back({"sat-vs-err-spearman", "2", "", jcell(corr.at("spearman"))});
  std::vector<Bar> div_bars;
  for (const auto& d : ens.at("diversity")) {
    const auto n = std::to_string(d.at("n").get<std::size_t>()), k = std::to_string(d.at("k").get<std::size_t>());
    ensembles_t.rows.push_back({"diversity-mean-err", n, k, jcell(d.at("mean-err"))});
    if (!d.at("mean-err").is_null()) div_bars.push_back({"N=" + n + " k=" + k, d.at("mean-err").get<double>()});
  }
  for (const auto& w : ens.at("all-wrong")) {
    ensembles_t.rows.push_back({"all-wrong-ratio", std::to_string(w.at("size").get<std::size_t>()), "", jcell(w.at("all-wrong-ratio"))});
  }
  std::vector<Point> pts;
  for (const auto& p : corr.at("points")) pts.push_back({p.at("sat").get<double>(), p.at("err").get<double>()});

  const fs::path dir = stage_dir(g, "report");
  fs::create_directories(dir);
  ordered_json sections = ordered_json::object();
  sections["cluster-keywords"] = to_json(keywords_t);
  sections["distance-map"] = to_json(distance_t);
  sections["component-importance"] = to_json(importance_t);
  sections["ensembles"] = to_json(ensembles_t);
  write_json(rec, dir / "report.json",
             {{"format", "archsim-report/1"}, {"models", sm.names}, {"clusters", a.config.k}, {"sections", sections}});
  if (g.format == "csv") {
    write_text(rec, dir / "cluster-keywords.csv", to_csv(keywords_t));
    write_text(rec, dir / "distance-map.csv", to_csv(distance_t));
    write_text(rec, dir / "component-importance.csv", to_csv(importance_t));
    write_text(rec, dir / "ensembles.csv", to_csv(ensembles_t));
  } else if (g.format == "svg") {
    write_text(rec, dir / "cluster-keywords.svg", to_svg(keywords_t));
    write_text(rec, dir / "distance-map.svg", heatmap_svg(distance_t.title, map.names, map.distances));
    write_text(rec, dir / "component-importance.svg", bar_chart_svg(importance_t.title, bars));
    write_text(rec, dir / "ensembles.svg",
               stack_svg({scatter_svg("2-ensemble ERR vs SAT", "SAT", "ERR", pts),
                          bar_chart_svg("mean ERR by clusters spanned", div_bars)}));
  }
}

}  // namespace archsim::cli
