#include <chrono>
#include <ctime>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "archsim/io/files.hpp"
#include "archsim/log.hpp"
#include "commands.hpp"

using namespace archsim;
using namespace archsim::cli;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ordered_json file_entries(const std::vector<fs::path>& paths) {
  ordered_json out = ordered_json::array();
  for (const auto& p : paths) {
    ordered_json e{{"path", p.generic_string()}};
    if (fs::is_regular_file(p)) e["fnv1a"] = io::content_hash(io::read_text(p));
    out.push_back(e);
  }
  return out;
}

void add_attack_flags(CLI::App* app, AttackFlags& a) {
  app->add_option("--attack", a.method, "pgd | mifgsm | fgsm")->capture_default_str();
  app->add_option("--epsilon", a.epsilon, "L-inf budget, decimal or fraction")->capture_default_str();
  app->add_option("--step", a.step, "step size")->capture_default_str();
  app->add_option("--iterations", a.iterations)->capture_default_str();
  app->add_option("--momentum", a.momentum, "MI-FGSM decay")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"archsim: similarity by attack transferability"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Global g;
  g.threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--seed", g.seed, "master seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "run root; each command writes its own subdirectory")->capture_default_str();
  app.add_option("--threads", g.threads, "worker cap")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--format", g.format, "summary format")->check(CLI::IsMember({"csv", "json", "svg"}))->capture_default_str();

  TrainZooOptions tz;
  auto* c_tz = app.add_subcommand("train-zoo", "train the model zoo");
  c_tz->add_option("--manifest", tz.manifest, "zoo manifest JSON (default: built-in desk manifest)");
  c_tz->add_option("--dataset", tz.dataset, "dataset reference JSON (synth recipe or idx files)");
  c_tz->add_option("--variants", tz.variants, "models per family in the built-in manifest")->capture_default_str();
  c_tz->add_option("--cache-dir", tz.cache_dir, "trained model cache (default <out-dir>/cache)");
  c_tz->add_flag("--no-cache", tz.no_cache);

  AttackOptions at;
  auto* c_at = app.add_subcommand("attack", "attack one zoo model on the evaluation subset");
  c_at->add_option("--zoo", at.zoo, "zoo directory (default <out-dir>/zoo)");
  c_at->add_option("--model", at.model)->required();
  add_attack_flags(c_at, at.attack);
  c_at->add_option("--eval-fraction", at.eval_fraction)->capture_default_str();

  SatMatrixOptions sm;
  auto* c_sm = app.add_subcommand("sat-matrix", "pairwise SAT over the zoo");
  c_sm->add_option("--zoo", sm.zoo, "zoo directory (default <out-dir>/zoo)");
  add_attack_flags(c_sm, sm.attack);
  c_sm->add_option("--eval-fraction", sm.eval_fraction)->capture_default_str();
  c_sm->add_option("--epsilon-floor", sm.epsilon_floor, "floor inside the log")->capture_default_str();

  ClusterOptions cl;
  auto* c_cl = app.add_subcommand("cluster", "spectral clustering of a SAT matrix");
  c_cl->add_option("--sat", cl.sat, "sat.csv (default <out-dir>/sat/sat.csv)");
  c_cl->add_option("--k", cl.k)->capture_default_str();
  c_cl->add_option("--restarts", cl.restarts)->capture_default_str();
  c_cl->add_option("--adjacency", cl.adjacency)->check(CLI::IsMember({"percent", "shifted-log"}))->capture_default_str();

  ImportanceOptions im;
  auto* c_im = app.add_subcommand("importance", "component importance via boosted trees");
  c_im->add_option("--sat", im.sat, "sat.csv (default <out-dir>/sat/sat.csv)");
  c_im->add_option("--zoo", im.zoo, "zoo directory (default <out-dir>/zoo)");
  c_im->add_option("--stages", im.stages)->capture_default_str();
  c_im->add_option("--max-depth", im.max_depth)->capture_default_str();
  c_im->add_option("--min-samples-split", im.min_samples_split)->capture_default_str();
  c_im->add_option("--min-samples-leaf", im.min_samples_leaf)->capture_default_str();
  c_im->add_option("--learning-rate", im.learning_rate)->capture_default_str();
  c_im->add_option("--repeats", im.repeats, "permutation repeats")->capture_default_str();

  KeywordsOptions kw;
  auto* c_kw = app.add_subcommand("keywords", "TF-IDF keywords per cluster");
  c_kw->add_option("--clusters", kw.clusters, "clusters.json (default <out-dir>/clusters/clusters.json)");
  c_kw->add_option("--zoo", kw.zoo, "zoo directory (default <out-dir>/zoo)");
  c_kw->add_option("--top-k", kw.top_k)->capture_default_str();

  EnsembleOptions en;
  auto* c_en = app.add_subcommand("ensemble", "ensemble error analyses");
  c_en->add_option("--zoo", en.zoo, "zoo directory (default <out-dir>/zoo)");
  c_en->add_option("--sat", en.sat, "sat.csv (default <out-dir>/sat/sat.csv)");
  c_en->add_option("--clusters", en.clusters, "clusters.json (default <out-dir>/clusters/clusters.json)");
  c_en->add_option("--sizes", en.sizes, "ensemble sizes N for the diversity protocol")->capture_default_str();
  c_en->add_option("--trials", en.trials)->capture_default_str();
  c_en->add_option("--orders", en.orders, "random member orders for the all-wrong curve")->capture_default_str();

  DistillOptions di;
  auto* c_di = app.add_subcommand("distill", "distill one student from every teacher");
  c_di->add_option("--zoo", di.zoo, "zoo directory (default <out-dir>/zoo)");
  c_di->add_option("--student", di.student, "student family")->capture_default_str();
  c_di->add_option("--epochs", di.epochs)->capture_default_str();
  c_di->add_option("--learning-rate", di.learning_rate)->capture_default_str();
  c_di->add_option("--batch-size", di.batch_size)->capture_default_str();
  add_attack_flags(c_di, di.attack);
  c_di->add_option("--eval-fraction", di.eval_fraction)->capture_default_str();

  BoundaryOptions bl;
  auto* c_bl = app.add_subcommand("boundary-lab", "planar decision-boundary ground truth");
  c_bl->add_option("--per-family", bl.per_family)->capture_default_str();
  c_bl->add_option("--points", bl.points)->capture_default_str();
  c_bl->add_option("--grid", bl.grid)->capture_default_str();
  c_bl->add_option("--triplets", bl.triplets)->capture_default_str();
  c_bl->add_option("--triplet-grid", bl.triplet_grid)->capture_default_str();
  c_bl->add_option("--resamples", bl.resamples)->capture_default_str();
  c_bl->add_option("--epsilon-scale", bl.epsilon_scale, "attack budget as a multiple of the median boundary gap")
      ->capture_default_str();
  c_bl->add_option("--attack-iterations", bl.attack_iterations)->capture_default_str();
  c_bl->add_flag("--min-flip,!--no-min-flip", bl.min_flip)->capture_default_str();
  c_bl->add_flag("--stability", bl.stability, "also run the subsample stability study");

  ReportOptions rp;
  auto* c_rp = app.add_subcommand("report", "render tables and figures from stored artifacts");
  c_rp->add_option("--sat", rp.sat);
  c_rp->add_option("--clusters", rp.clusters);
  c_rp->add_option("--keywords", rp.keywords);
  c_rp->add_option("--importance", rp.importance);
  c_rp->add_option("--ensemble", rp.ensemble);

  std::string command = "archsim";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (!app.get_subcommands().empty()) command = app.get_subcommands().front()->get_name();
    std::cerr << ordered_json{{"error", {{"kind", "usage"}, {"message", e.what()}, {"command", command}}}}.dump() << "\n";
    return 2;
  }
  command = app.get_subcommands().front()->get_name();

  ordered_json warnings = ordered_json::array();
  std::mutex warn_mu;
  set_warning_handler([&](const std::string& m) {
    std::lock_guard lock(warn_mu);
    warnings.push_back(m);
    std::cerr << "warning: " << m << "\n";
  });

  RunRecord rec;
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  ordered_json error = nullptr;
  int code = 0;
  try {
    if (command == "train-zoo") train_zoo(g, tz, rec);
    else if (command == "attack") attack(g, at, rec);
    else if (command == "sat-matrix") sat_matrix(g, sm, rec);
    else if (command == "cluster") cluster(g, cl, rec);
    else if (command == "importance") importance(g, im, rec);
    else if (command == "keywords") keywords(g, kw, rec);
    else if (command == "ensemble") ensemble(g, en, rec);
    else if (command == "distill") distill(g, di, rec);
    else if (command == "boundary-lab") boundary_lab(g, bl, rec);
    else report(g, rp, rec);
  } catch (const Error& e) {
    error = {{"kind", e.kind()}, {"message", e.what()}, {"command", command}};
    code = 1;
  } catch (const std::exception& e) {
    error = {{"kind", "internal"}, {"message", e.what()}, {"command", command}};
    code = 1;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ordered_json run{{"format", "archsim-run/1"},
                   {"command", command},
                   {"status", code == 0 ? "ok" : "error"},
                   {"global",
                    {{"seed", g.seed}, {"out-dir", g.out_dir.generic_string()}, {"threads", g.threads}, {"format", g.format}}},
                   {"config", rec.config},
                   {"inputs", file_entries(rec.inputs)},
                   {"outputs", file_entries(rec.outputs)},
                   {"warnings", warnings},
                   {"started", started},
                   {"finished", utc_now()},
                   {"seconds", seconds},
                   {"error", error}};
  try {
    const fs::path dir = stage_dir(g, command);
    fs::create_directories(dir);
    io::write_atomic(dir / "run.json", run.dump(2) + "\n");
  } catch (const std::exception& e) {
    if (code == 0) error = {{"kind", "io"}, {"message", e.what()}, {"command", command}};
    code = 1;
  }
  if (code != 0) {
    std::cerr << ordered_json{{"error", error}}.dump() << "\n";
    return code;
  }
  std::cout << command << ": ok (" << rec.outputs.size() << " artifacts in " << stage_dir(g, command).generic_string()
            << ")\n";
  return 0;
}
