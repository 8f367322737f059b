#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "gmct/benchmark_suite.hpp"
#include "gmct/contrastive.hpp"
#include "gmct/datagen.hpp"
#include "gmct/engine.hpp"
#include "gmct/guidance.hpp"
#include "gmct/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gmct::cli {

json default_config() {
  return json{
      {"grammar", "A"},
      {"seed", nullptr},
      {"output", "gmct-out"},
      {"jobs", 1},
      {"mcts",
       {{"variant", "amex"},
        {"backprop", "max"},
        {"c", 10.0},
        {"sim_init", 160},
        {"discount", 1.0},
        {"tie_break", "lowest-id"},
        {"reuse_subtree", false}}},
      {"reward",
       {{"max_depth", 10},
        {"max_nodes", 25},
        {"max_constants", 5},
        {"mse_cutoff", 2.0},
        {"normalization", "std"},
        {"epsilon", 1e-12},
        {"solved_reward", kSolvedReward}}},
      {"fit",
       {{"enabled", true},
        {"restarts", 3},
        {"init_value", 1.0},
        {"max_iters", 200},
        {"tol", 1e-9},
        {"perturb_scale", 0.5}}},
      {"model",
       {{"dataset_encoder", "none"},
        {"tree_encoder", "none"},
        {"hidden", 64},
        {"embedding", 32},
        {"rows", 100},
        {"positions", 25},
        {"learning_rate", 1e-3}}},
      {"train",
       {{"mode", "supervised"},
        {"iterations", 200},
        {"problems_per_iteration", 50},
        {"cold_start", 10},
        {"updates_per_iteration", 20},
        {"batch_size", 64},
        {"buffer_capacity", 50000},
        {"gamma", 1.0},
        {"resume", ""}}},
      {"generate",
       {{"n", 500},
        {"n_rows", 100},
        {"x_min", -5.0},
        {"x_max", 5.0},
        {"const_min", 0.5},
        {"const_max", 5.0},
        {"min_range_width", 2.0}}},
      {"search", {{"dataset", ""}, {"k", 10}, {"budget", 10000}, {"checkpoint", ""}}},
      {"benchmark",
       {{"suite", "nguyen"},
        {"grammars", {"B", "C"}},
        {"variants", {"classic", "amex"}},
        {"seeds", {0, 1, 2, 3, 4}},
        {"subset", json::array()},
        {"budget", 100000},
        {"sim_init", 20000},
        {"max_constants", 2},
        {"tie_break", "random"}}},
      {"contrastive",
       {{"iterations", 300},
        {"lambda", 0.1},
        {"sources_per_batch", 8},
        {"heldout_sources", 16},
        {"eval_every", 10}}},
      {"dump_priors",
       {{"checkpoint", ""}, {"manifest", ""}, {"n", 4}, {"states", json::array()}, {"brute_force_limit", 5000}}},
  };
}

namespace {

// --- config plumbing -------------------------------------------------------

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("malformed config " + path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

template <typename T>
T get(const json& cfg, const char* section, const char* key) {
  try {
    return cfg.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key ") + section + "." + key + ": " + e.what());
  }
}

fs::path resolve_grammar(const std::string& name) {
  const fs::path direct(name);
  if (fs::exists(direct)) return direct;
  for (const fs::path dir : {fs::path("grammars"), fs::path(GMCT_DEFAULT_GRAMMAR_DIR)}) {
    if (fs::exists(dir / name)) return dir / name;
    if (fs::exists(dir / (name + ".cfg"))) return dir / (name + ".cfg");
  }
  throw UsageError("grammar file not found: " + name);
}

Grammar load_grammar(const std::string& name) {
  const fs::path path = resolve_grammar(name);
  try {
    return Grammar::load(path);
  } catch (const GrammarError& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

std::string grammar_label(const std::string& name) { return fs::path(name).stem().string(); }

Variant parse_variant(const std::string& s) {
  if (s == "amex") return Variant::AmEx;
  if (s == "classic") return Variant::Classic;
  throw UsageError("unknown MCTS variant '" + s + "' (amex|classic)");
}

Backprop parse_backprop(const std::string& s) {
  if (s == "max") return Backprop::Max;
  if (s == "mean") return Backprop::Mean;
  throw UsageError("unknown backprop '" + s + "' (max|mean)");
}

TieBreak parse_tie_break(const std::string& s) {
  if (s == "lowest-id") return TieBreak::LowestId;
  if (s == "random") return TieBreak::Random;
  throw UsageError("unknown tie break '" + s + "' (lowest-id|random)");
}

Normalization parse_normalization(const std::string& s) {
  if (s == "std") return Normalization::Std;
  if (s == "range") return Normalization::Range;
  if (s == "none") return Normalization::None;
  throw UsageError("unknown normalization '" + s + "' (std|range|none)");
}

std::uint64_t seed_of(const json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

EngineConfig engine_config(const json& cfg) {
  EngineConfig e;
  e.mcts.variant = parse_variant(get<std::string>(cfg, "mcts", "variant"));
  e.mcts.backprop = parse_backprop(get<std::string>(cfg, "mcts", "backprop"));
  e.mcts.c_puct = get<double>(cfg, "mcts", "c");
  e.mcts.sim_init = get<int>(cfg, "mcts", "sim_init");
  e.mcts.discount = get<double>(cfg, "mcts", "discount");
  e.mcts.tie_break = parse_tie_break(get<std::string>(cfg, "mcts", "tie_break"));
  e.reuse_subtree = get<bool>(cfg, "mcts", "reuse_subtree");
  e.reward.limits.max_depth = get<int>(cfg, "reward", "max_depth");
  e.reward.limits.max_nodes = get<int>(cfg, "reward", "max_nodes");
  e.reward.limits.max_constants = get<int>(cfg, "reward", "max_constants");
  e.reward.mse_cutoff = get<double>(cfg, "reward", "mse_cutoff");
  e.reward.normalization = parse_normalization(get<std::string>(cfg, "reward", "normalization"));
  e.reward.epsilon = get<double>(cfg, "reward", "epsilon");
  e.fit_constants = get<bool>(cfg, "fit", "enabled");
  e.fit.restarts = get<int>(cfg, "fit", "restarts");
  e.fit.init_value = get<double>(cfg, "fit", "init_value");
  e.fit.max_iters = get<int>(cfg, "fit", "max_iters");
  e.fit.tol = get<double>(cfg, "fit", "tol");
  e.fit.perturb_scale = get<double>(cfg, "fit", "perturb_scale");
  e.fit.seed = seed_of(cfg);
  try {
    validate(e.mcts);
  } catch (const std::invalid_argument& ex) {
    throw UsageError(ex.what());
  }
  if (e.reward.limits.max_nodes <= 2 || e.reward.limits.max_depth <= 0 || e.reward.limits.max_constants < 0 ||
      !(e.reward.mse_cutoff > 0.0)) {
    throw UsageError("reward thresholds must be positive");
  }
  return e;
}

ModelConfig model_config(const json& cfg) {
  ModelConfig m;
  try {
    m.dataset_encoder = parse_dataset_encoder(get<std::string>(cfg, "model", "dataset_encoder"));
    m.tree_encoder = parse_tree_encoder(get<std::string>(cfg, "model", "tree_encoder"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  m.hidden = get<int>(cfg, "model", "hidden");
  m.embedding = get<int>(cfg, "model", "embedding");
  m.rows = get<int>(cfg, "model", "rows");
  m.positions = get<int>(cfg, "model", "positions");
  m.adam.learning_rate = get<double>(cfg, "model", "learning_rate");
  m.seed = seed_of(cfg);
  return m;
}

GenConstraints gen_constraints(const json& cfg) {
  GenConstraints g;
  g.limits.max_depth = get<int>(cfg, "reward", "max_depth");
  g.limits.max_nodes = get<int>(cfg, "reward", "max_nodes");
  g.limits.max_constants = get<int>(cfg, "reward", "max_constants");
  g.n_rows = get<int>(cfg, "generate", "n_rows");
  g.x_min = get<double>(cfg, "generate", "x_min");
  g.x_max = get<double>(cfg, "generate", "x_max");
  g.const_min = get<double>(cfg, "generate", "const_min");
  g.const_max = get<double>(cfg, "generate", "const_max");
  g.min_range_width = get<double>(cfg, "generate", "min_range_width");
  if (g.n_rows < 2 || g.x_max <= g.x_min || g.const_max < g.const_min) throw UsageError("invalid generation ranges");
  return g;
}

fs::path prepare_output(const json& cfg) {
  const fs::path out = cfg.at("output").get<std::string>();
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw UsageError("cannot create output directory " + out.string() + ": " + ec.message());
  write_json(cfg, out / "effective_config.json");
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "0..4" or "0,2,5"
json parse_seeds(const std::string& s) {
  json out = json::array();
  if (auto dots = s.find(".."); dots != std::string::npos) {
    try {
      const long lo = std::stol(s.substr(0, dots));
      const long hi = std::stol(s.substr(dots + 2));
      if (lo < 0 || hi < lo) throw UsageError("bad seed range '" + s + "'");
      for (long v = lo; v <= hi; ++v) out.push_back(v);
    } catch (const std::logic_error&) {
      throw UsageError("bad seed range '" + s + "'");
    }
    return out;
  }
  for (const auto& item : split_list(s)) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::logic_error&) {
      throw UsageError("bad seed '" + item + "'");
    }
  }
  return out;
}

// --- subcommands -----------------------------------------------------------

int cmd_generate(const json& cfg, std::ostream& out) {
  const Grammar grammar = load_grammar(cfg.at("grammar"));
  const int n = get<int>(cfg, "generate", "n");
  if (n <= 0) throw UsageError("generate.n must be positive");
  const fs::path dir = prepare_output(cfg);
  const auto problems = generate_problems(grammar, n, gen_constraints(cfg), seed_of(cfg));
  DatasetManifest manifest;
  manifest.grammar = grammar_label(cfg.at("grammar"));
  manifest.seed = seed_of(cfg);
  fs::create_directories(dir / "datasets");
  for (const auto& p : problems) {
    const std::string rel = "datasets/" + p.dataset.id + ".csv";
    save_csv(p.dataset, dir / rel);
    manifest.entries.push_back({p.dataset.id, rel, p.tree.prefix_string(), p.constants});
  }
  write_manifest(manifest, dir / "manifest.json");
  out << "wrote " << problems.size() << " datasets and " << (dir / "manifest.json").string() << '\n';
  return kExitOk;
}

int cmd_search(const json& cfg, std::ostream& out) {
  const std::string dataset_path = get<std::string>(cfg, "search", "dataset");
  if (dataset_path.empty()) throw UsageError("search needs a dataset (--dataset)");
  if (!fs::exists(dataset_path)) throw UsageError("dataset not found: " + dataset_path);
  TabularDataset ds;
  try {
    ds = load_csv(dataset_path);
  } catch (const DatasetError& e) {
    throw UsageError(e.what());
  }
  const Grammar grammar = load_grammar(cfg.at("grammar"));
  const EngineConfig engine = engine_config(cfg);
  const int budget = get<int>(cfg, "search", "budget");
  const int k = get<int>(cfg, "search", "k");
  if (budget <= 0 || k <= 0) throw UsageError("search.budget and search.k must be positive");
  const double solved = get<double>(cfg, "reward", "solved_reward");
  const fs::path dir = prepare_output(cfg);

  const UniformGuidance uniform;
  std::unique_ptr<GuidanceModel> model;
  const std::string checkpoint = get<std::string>(cfg, "search", "checkpoint");
  if (!checkpoint.empty() && !fs::exists(checkpoint)) throw UsageError("checkpoint not found: " + checkpoint);
  if (!checkpoint.empty()) model = std::make_unique<GuidanceModel>(GuidanceModel::load(checkpoint, grammar));
  std::unique_ptr<NetworkGuidance> net;
  if (model) net = std::make_unique<NetworkGuidance>(*model);
  const Guidance& guidance = net ? static_cast<const Guidance&>(*net) : uniform;

  StateScorer scorer(ds, engine.reward, engine.fit, engine.fit_constants);
  const SolveStats stats = solve_problem(grammar, guidance, ds, engine, budget, seed_of(cfg), solved, &scorer);
  KBest kbest(static_cast<std::size_t>(k));
  collect_kbest(kbest, scorer);

  out << "# search dataset=" << dataset_path << " grammar=" << grammar_label(cfg.at("grammar"))
      << " variant=" << get<std::string>(cfg, "mcts", "variant") << " backprop=" << get<std::string>(cfg, "mcts", "backprop")
      << " c=" << get<double>(cfg, "mcts", "c") << " sim_init=" << get<int>(cfg, "mcts", "sim_init") << '\n';
  out << "# sims=" << stats.sims << " explored_states=" << stats.explored_states << " solved=" << (stats.solved ? 1 : 0)
      << '\n';
  json report;
  report["sims_run"] = stats.sims;
  report["explored_states"] = stats.explored_states;
  report["terminals_found"] = scorer.cache_size();
  report["best_reward"] = stats.best_reward;
  report["best_equation_prefix"] = stats.best_equation;
  report["wall_time_ms"] = stats.wall_ms;
  report["kbest"] = json::array();
  int rank = 1;
  for (const auto& c : kbest.entries()) {
    out << rank++ << '\t' << std::fixed << std::setprecision(6) << c.reward << '\t' << c.prefix;
    if (!c.constants.empty()) {
      out << "\tc=";
      for (std::size_t i = 0; i < c.constants.size(); ++i) out << (i ? "," : "") << c.constants[i];
    }
    out << '\n';
    report["kbest"].push_back({{"prefix", c.prefix}, {"constants", c.constants}, {"reward", c.reward}});
  }
  out.unsetf(std::ios::fixed);
  write_json(report, dir / "report.json");
  return stats.solved ? kExitOk : kExitBudget;
}

int cmd_train(const json& cfg, std::ostream& out) {
  const Grammar grammar = load_grammar(cfg.at("grammar"));
  TrainConfig tc;
  try {
    tc.mode = parse_train_mode(get<std::string>(cfg, "train", "mode"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  tc.iterations = get<int>(cfg, "train", "iterations");
  tc.problems_per_iteration = get<int>(cfg, "train", "problems_per_iteration");
  tc.cold_start = get<int>(cfg, "train", "cold_start");
  tc.updates_per_iteration = get<int>(cfg, "train", "updates_per_iteration");
  tc.batch_size = get<int>(cfg, "train", "batch_size");
  tc.buffer_capacity = get<std::size_t>(cfg, "train", "buffer_capacity");
  tc.gamma = get<double>(cfg, "train", "gamma");
  tc.engine = engine_config(cfg);
  tc.generation = gen_constraints(cfg);
  tc.seed = seed_of(cfg);
  if (tc.iterations < 0 || tc.problems_per_iteration <= 0 || tc.batch_size <= 0 || tc.buffer_capacity == 0) {
    throw UsageError("invalid training schedule");
  }

  const fs::path dir = prepare_output(cfg);
  const std::string resume = get<std::string>(cfg, "train", "resume");
  int start = 0;
  std::unique_ptr<GuidanceModel> model;
  if (!resume.empty()) {
    const fs::path from(resume);
    if (!fs::exists(from / "model.json") || !fs::exists(from / "train_state.json")) {
      throw UsageError("nothing to resume in " + from.string());
    }
    model = std::make_unique<GuidanceModel>(GuidanceModel::load(from / "model.json", grammar));
    start = read_json(from / "train_state.json").at("completed_iterations").get<int>();
    if (fs::exists(from / "metrics.csv") && fs::absolute(from) != fs::absolute(dir)) {
      fs::copy_file(from / "metrics.csv", dir / "metrics.csv", fs::copy_options::overwrite_existing);
    }
  } else {
    model = std::make_unique<GuidanceModel>(grammar, model_config(cfg));
    write_metrics_csv({}, dir / "metrics.csv");
  }

  const TrainingReport report = run_training(grammar, *model, tc, start, [&](const IterationMetrics& m) {
    write_metrics_csv({m}, dir / "metrics.csv", true);
    out << "iteration " << m.iteration << " steps=" << m.train_steps << " records=" << m.records;
    if (m.train_steps > 0) out << " policy_ce=" << m.policy_ce << " value_mse=" << m.value_mse;
    out << '\n';
  });
  model->save(dir / "model.json");
  write_json({{"completed_iterations", std::max(start, tc.iterations)}, {"mode", to_string(tc.mode)}},
             dir / "train_state.json");
  out << "trained " << report.total_train_steps << " steps; checkpoint " << (dir / "model.json").string() << '\n';
  return kExitOk;
}

int cmd_benchmark(const json& cfg, std::ostream& out) {
  const std::string suite_name = get<std::string>(cfg, "benchmark", "suite");
  std::vector<BenchmarkEquation> suite;
  if (suite_name == "nguyen") {
    suite = nguyen_suite();
  } else if (fs::exists(suite_name)) {
    suite = load_suite(suite_name);
  } else {
    throw UsageError("unknown suite '" + suite_name + "' (nguyen or a manifest path)");
  }
  try {
    suite = select_subset(suite, cfg.at("benchmark").at("subset").get<std::vector<std::string>>());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::vector<BenchmarkVariant> variants;
  for (const auto& v : cfg.at("benchmark").at("variants").get<std::vector<std::string>>()) {
    EngineConfig e = engine_config(cfg);
    e.mcts.variant = parse_variant(v);
    e.mcts.sim_init = get<int>(cfg, "benchmark", "sim_init");
    e.mcts.tie_break = parse_tie_break(get<std::string>(cfg, "benchmark", "tie_break"));
    validate(e.mcts);
    variants.push_back({v, e.mcts});
  }
  const auto seeds = cfg.at("benchmark").at("seeds").get<std::vector<std::uint64_t>>();
  const auto grammars = cfg.at("benchmark").at("grammars").get<std::vector<std::string>>();
  if (variants.empty() || seeds.empty() || grammars.empty()) throw UsageError("benchmark needs grammars, variants and seeds");
  BenchmarkConfig bc;
  bc.budget = get<int>(cfg, "benchmark", "budget");
  bc.engine = engine_config(cfg);
  bc.engine.reward.limits.max_constants = get<int>(cfg, "benchmark", "max_constants");
  bc.jobs = cfg.at("jobs").get<int>();
  if (bc.budget <= 0) throw UsageError("benchmark.budget must be positive");

  std::vector<std::pair<std::string, Grammar>> loaded;
  for (const auto& g : grammars) loaded.emplace_back(grammar_label(g), load_grammar(g));
  const fs::path dir = prepare_output(cfg);
  std::vector<BenchmarkRow> rows;
  for (const auto& [label, grammar] : loaded) {
    auto part = run_benchmark(suite, grammar, label, variants, seeds, bc);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  write_results_csv(rows, dir / "results.csv");
  const auto summary = summarize(rows, bc.budget);
  write_summary_csv(summary, dir / "summary.csv");
  out << "equation\tgrammar\tvariant\tmean\tstd\tfailed\n";
  for (const auto& s : summary) {
    out << s.equation_id << '\t' << s.grammar << '\t' << s.variant << '\t' << s.mean << '\t' << s.stddev << '\t'
        << s.failed << '/' << s.runs << '\n';
  }
  out << "wrote " << rows.size() << " rows to " << (dir / "results.csv").string() << '\n';
  return kExitOk;
}

int cmd_contrastive(const json& cfg, std::ostream& out) {
  const Grammar grammar = load_grammar(cfg.at("grammar"));
  ModelConfig mc = model_config(cfg);
  if (mc.dataset_encoder == DatasetEncoderKind::None) throw UsageError("contrastive training needs a dataset encoder");
  const int iterations = get<int>(cfg, "contrastive", "iterations");
  const double lambda = get<double>(cfg, "contrastive", "lambda");
  const int per_batch = get<int>(cfg, "contrastive", "sources_per_batch");
  const int heldout_n = get<int>(cfg, "contrastive", "heldout_sources");
  const int every = std::max(1, get<int>(cfg, "contrastive", "eval_every"));
  if (iterations < 0 || per_batch < 2 || heldout_n < 2 || lambda < 0.0) throw UsageError("invalid contrastive settings");
  const GenConstraints gen = gen_constraints(cfg);
  const std::uint64_t seed = seed_of(cfg);
  const fs::path dir = prepare_output(cfg);

  GuidanceModel model(grammar, mc);
  auto datasets_of = [](const std::vector<Problem>& ps) {
    std::vector<TabularDataset> out;
    for (const auto& p : ps) out.push_back(p.dataset);
    return out;
  };
  const ContrastiveBatch heldout =
      make_contrastive_batch(datasets_of(generate_problems(grammar, heldout_n, gen, seed ^ 0xfeedULL, "h")));
  std::ofstream csv(dir / "contrastive.csv");
  csv << "iteration,loss,mean_self,mean_other,heldout_same,heldout_cross\n";
  for (int it = 0; it < iterations; ++it) {
    const auto batch = make_contrastive_batch(
        datasets_of(generate_problems(grammar, per_batch, gen, seed * 7919ULL + static_cast<std::uint64_t>(it), "b")));
    const ContrastiveResult r = contrastive_step(model, batch, lambda);
    csv << it << ',' << r.loss << ',' << r.mean_self << ',' << r.mean_other;
    if (it % every == 0 || it + 1 == iterations) {
      const SimilaritySummary s = summarize_similarity(model, heldout);
      csv << ',' << s.same_source << ',' << s.cross_source;
      out << "iteration " << it << " loss=" << r.loss << " heldout same=" << s.same_source
          << " cross=" << s.cross_source << '\n';
    } else {
      csv << ",,";
    }
    csv << '\n';
  }
  model.save(dir / "model.json");
  return kExitOk;
}

int cmd_dump_priors(const json& cfg, std::ostream& out) {
  const Grammar grammar = load_grammar(cfg.at("grammar"));
  const EngineConfig engine = engine_config(cfg);
  const std::string checkpoint = get<std::string>(cfg, "dump_priors", "checkpoint");
  std::unique_ptr<GuidanceModel> model;
  if (!checkpoint.empty()) {
    if (!fs::exists(checkpoint)) throw UsageError("checkpoint not found: " + checkpoint);
    model = std::make_unique<GuidanceModel>(GuidanceModel::load(checkpoint, grammar));
  }
  const UniformGuidance uniform;
  std::unique_ptr<NetworkGuidance> net;
  if (model) net = std::make_unique<NetworkGuidance>(*model);
  const Guidance& guidance = net ? static_cast<const Guidance&>(*net) : uniform;

  std::vector<TabularDataset> datasets;
  const std::string manifest_path = get<std::string>(cfg, "dump_priors", "manifest");
  if (!manifest_path.empty()) {
    if (!fs::exists(manifest_path)) throw UsageError("manifest not found: " + manifest_path);
    const DatasetManifest m = read_manifest(manifest_path);
    for (const auto& e : m.entries) {
      datasets.push_back(load_csv(fs::path(manifest_path).parent_path() / e.path, e.id));
      datasets.back().source_skeleton = e.skeleton;
    }
  } else {
    for (auto& p : generate_problems(grammar, get<int>(cfg, "dump_priors", "n"), gen_constraints(cfg), seed_of(cfg))) {
      datasets.push_back(std::move(p.dataset));
    }
  }
  std::vector<PriorProblem> problems;
  for (const auto& d : datasets) problems.push_back({d.id, &d});
  std::vector<SearchState> states;
  for (const auto& s : cfg.at("dump_priors").at("states").get<std::vector<std::string>>()) {
    try {
      states.push_back({SyntaxTree::from_prefix(std::string_view(s)), ""});
    } catch (const std::exception& e) {
      throw UsageError("bad state '" + s + "': " + e.what());
    }
  }
  if (states.empty()) states.push_back(grammar.initial_state());

  const fs::path dir = prepare_output(cfg);
  const auto rows = dump_priors(grammar, guidance, problems, states, engine,
                                get<std::size_t>(cfg, "dump_priors", "brute_force_limit"));
  std::ofstream csv(dir / "priors.csv");
  csv << "problem,state,kind";
  for (int r = 0; r < grammar.num_rules(); ++r) csv << ",r" << r;
  csv << '\n';
  for (const auto& row : rows) {
    csv << row.problem << ",\"" << row.state << "\",prior";
    for (double p : row.prior) csv << ',' << p;
    csv << '\n';
    if (row.qsa) {
      csv << row.problem << ",\"" << row.state << "\",qsa";
      for (double q : *row.qsa) csv << ',' << q;
      csv << '\n';
    }
    if (!row.notice.empty()) out << row.problem << ": " << row.notice << '\n';
  }
  out << "wrote " << rows.size() << " prior rows to " << (dir / "priors.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"grammar-guided Monte-Carlo tree search for equation discovery", "gmct"};
  app.require_subcommand(1);

  json overrides = json::object();
  auto set = [&overrides](const std::string& pointer) {
    return [&overrides, pointer](const auto& value) { overrides[json::json_pointer(pointer)] = value; };
  };
  std::string config_path;
  std::vector<std::pair<CLI::App*, std::string>> subs;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file; flags override it");
    sub->add_option_function<std::uint64_t>("--seed", set("/seed"), "global seed (fallback: GMCT_SEED)");
    sub->add_option_function<std::string>("--grammar", set("/grammar"), "grammar file or name (A, B, C, ...)");
    sub->add_option_function<std::string>("--output,-o", set("/output"), "output directory");
    sub->add_option_function<int>("--jobs,-j", set("/jobs"), "worker threads")->check(CLI::PositiveNumber);
  };
  auto mcts_flags = [&](CLI::App* sub) {
    sub->add_option_function<std::string>("--variant", set("/mcts/variant"), "amex|classic");
    sub->add_option_function<std::string>("--backprop", set("/mcts/backprop"), "max|mean");
    sub->add_option_function<double>("--c", set("/mcts/c"), "PUCT exploration constant");
    sub->add_option_function<int>("--sim-init", set("/mcts/sim_init"), "simulations at the empty tree");
    sub->add_option_function<std::string>("--tie-break", set("/mcts/tie_break"), "lowest-id|random");
    sub->add_flag_function("--reuse-subtree", [&](std::int64_t) { overrides["mcts"]["reuse_subtree"] = true; },
                           "keep the chosen subtree between outer steps");
    sub->add_option_function<int>("--max-constants", set("/reward/max_constants"), "constant-slot limit");
    sub->add_flag_function("--no-fit", [&](std::int64_t) { overrides["fit"]["enabled"] = false; },
                           "score constants at their initial value instead of fitting");
  };
  auto model_flags = [&](CLI::App* sub) {
    sub->add_option_function<std::string>("--encoder,--dataset-encoder", set("/model/dataset_encoder"),
                                          "none|flat-mlp|pooled-set");
    sub->add_option_function<std::string>("--tree-encoder", set("/model/tree_encoder"), "none|padded-onehot-mlp");
  };

  CLI::App* gen = app.add_subcommand("generate", "sample equations and datasets from a grammar");
  common(gen);
  gen->add_option_function<int>("--n", set("/generate/n"), "number of problems");
  gen->add_option_function<int>("--rows", set("/generate/n_rows"), "rows per dataset");
  gen->add_option_function<int>("--max-constants", set("/reward/max_constants"), "constant-slot limit");

  CLI::App* search = app.add_subcommand("search", "search equations for a CSV dataset and report the k best");
  common(search);
  mcts_flags(search);
  search->add_option_function<std::string>("--dataset,-d", set("/search/dataset"), "CSV with x0..,y columns");
  search->add_option_function<int>("--k", set("/search/k"), "report size");
  search->add_option_function<int>("--budget", set("/search/budget"), "simulation budget");
  search->add_option_function<std::string>("--checkpoint", set("/search/checkpoint"), "model guiding the search");

  CLI::App* train = app.add_subcommand("train", "train the guidance network");
  common(train);
  mcts_flags(train);
  model_flags(train);
  train->add_option_function<std::string>("--mode", set("/train/mode"), "supervised|mcts|uniform");
  train->add_option_function<int>("--iterations", set("/train/iterations"), "training iterations");
  train->add_option_function<int>("--problems", set("/train/problems_per_iteration"), "problems per iteration");
  train->add_option_function<int>("--cold-start", set("/train/cold_start"), "iterations without updates");
  train->add_option_function<int>("--updates", set("/train/updates_per_iteration"), "updates per iteration");
  train->add_option_function<int>("--batch-size", set("/train/batch_size"), "training batch size");
  train->add_option_function<std::string>("--resume", set("/train/resume"), "continue from a previous output dir");

  CLI::App* bench = app.add_subcommand("benchmark", "uniform-prior benchmark on a suite");
  common(bench);
  bench->add_option_function<std::string>("--suite", set("/benchmark/suite"), "nguyen or suite JSON path");
  bench->add_option_function<std::string>(
      "--grammars", [&](const std::string& s) { overrides["benchmark"]["grammars"] = split_list(s); },
      "comma list, e.g. B,C");
  bench->add_option_function<std::string>(
      "--variants", [&](const std::string& s) { overrides["benchmark"]["variants"] = split_list(s); },
      "comma list of classic,amex");
  bench->add_option_function<std::string>(
      "--seeds", [&](const std::string& s) { overrides["benchmark"]["seeds"] = parse_seeds(s); }, "0..4 or 0,1,2");
  bench->add_option_function<std::string>(
      "--subset", [&](const std::string& s) { overrides["benchmark"]["subset"] = split_list(s); },
      "equation numbers, e.g. 1,5,7");
  bench->add_option_function<int>("--budget", set("/benchmark/budget"), "simulations per run");
  bench->add_option_function<int>("--sim-init", set("/benchmark/sim_init"), "simulations at the empty tree");
  bench->add_option_function<std::string>("--tie-break", set("/benchmark/tie_break"), "lowest-id|random");

  CLI::App* con = app.add_subcommand("contrastive", "train a dataset encoder with the contrastive loss");
  common(con);
  model_flags(con);
  con->add_option_function<int>("--iterations", set("/contrastive/iterations"), "training iterations");
  con->add_option_function<double>("--lambda", set("/contrastive/lambda"), "weight of different-source pairs");
  con->add_option_function<int>("--sources", set("/contrastive/sources_per_batch"), "datasets per batch");

  CLI::App* dump = app.add_subcommand("dump-priors", "write model priors (and brute-force Q) for given states");
  common(dump);
  dump->add_option_function<std::string>("--checkpoint", set("/dump_priors/checkpoint"), "model checkpoint");
  dump->add_option_function<std::string>("--manifest", set("/dump_priors/manifest"), "dataset manifest");
  dump->add_option_function<int>("--n", set("/dump_priors/n"), "generated problems when no manifest is given");
  dump->add_option_function<std::string>(
      "--state", [&](const std::string& s) { overrides["dump_priors"]["states"].push_back(s); },
      "prefix state, repeatable")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  dump->add_option_function<std::size_t>("--brute-force-limit", set("/dump_priors/brute_force_limit"),
                                         "max terminals to enumerate (0 disables)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "gmct: " << e.what() << '\n';
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    err << "gmct: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    json cfg = default_config();
    if (!config_path.empty()) cfg.merge_patch(read_json(config_path));
    cfg.merge_patch(overrides);
    if (cfg.at("seed").is_null()) {
      const char* env = std::getenv("GMCT_SEED");
      std::uint64_t seed = 0;
      if (env && *env) {
        try {
          seed = std::stoull(env);
        } catch (const std::logic_error&) {
          throw UsageError(std::string("GMCT_SEED is not an integer: ") + env);
        }
      }
      cfg["seed"] = seed;
    }
    if (app.got_subcommand(gen)) return cmd_generate(cfg, out);
    if (app.got_subcommand(search)) return cmd_search(cfg, out);
    if (app.got_subcommand(train)) return cmd_train(cfg, out);
    if (app.got_subcommand(bench)) return cmd_benchmark(cfg, out);
    if (app.got_subcommand(con)) return cmd_contrastive(cfg, out);
    if (app.got_subcommand(dump)) return cmd_dump_priors(cfg, out);
  } catch (const UsageError& e) {
    err << "gmct: " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "gmct: configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "gmct: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace gmct::cli
