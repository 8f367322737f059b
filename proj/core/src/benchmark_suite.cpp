#include "gmct/benchmark_suite.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "gmct/datagen.hpp"
#include "gmct/expression.hpp"

namespace gmct {

std::vector<BenchmarkEquation> nguyen_suite() {
  using R = std::vector<std::pair<double, double>>;
  const R one{{-1.0, 1.0}};
  const R unit2{{0.0, 1.0}, {0.0, 1.0}};
  return {
      {"nguyen-1", "+ + ^ 3 x0 ^ 2 x0 x0", 1, one, 20},
      {"nguyen-2", "+ + + ^ 4 x0 ^ 3 x0 ^ 2 x0 x0", 1, one, 20},
      {"nguyen-3", "+ + + + ^ 5 x0 ^ 4 x0 ^ 3 x0 ^ 2 x0 x0", 1, one, 20},
      {"nguyen-4", "+ + + + + ^ 6 x0 ^ 5 x0 ^ 4 x0 ^ 3 x0 ^ 2 x0 x0", 1, one, 20},
      {"nguyen-5", "- * sin ^ 2 x0 cos x0 1", 1, one, 20},
      {"nguyen-6", "+ sin x0 sin + x0 ^ 2 x0", 1, one, 20},
      {"nguyen-7", "+ log + x0 1 log + ^ 2 x0 1", 1, R{{0.0, 2.0}}, 20},
      // x1 pinned at 0.5 so that sqrt is reachable as x0^x1
      {"nguyen-8", "^ 0.5 x0", 2, R{{0.0, 4.0}, {0.5, 0.5}}, 20},
      {"nguyen-9", "+ sin x0 sin ^ 2 x1", 2, unit2, 20},
      {"nguyen-10", "* * 2 sin x0 cos x1", 2, unit2, 20},
      {"nguyen-11", "^ x1 x0", 2, unit2, 20},
      {"nguyen-12", "- + - ^ 4 x0 ^ 3 x0 * 0.5 ^ 2 x1 x1", 2, unit2, 20},
  };
}

std::vector<BenchmarkEquation> load_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read suite " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  std::vector<BenchmarkEquation> out;
  for (const auto& e : j.at("equations")) {
    BenchmarkEquation eq;
    eq.id = e.at("id");
    eq.expression = e.at("expression");
    eq.n_vars = e.at("n_vars");
    eq.n_rows = e.value("n_rows", 20);
    for (const auto& r : e.at("ranges")) eq.ranges.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
    if (static_cast<int>(eq.ranges.size()) != eq.n_vars) {
      throw std::runtime_error("suite entry '" + eq.id + "': one range per variable required");
    }
    out.push_back(std::move(eq));
  }
  return out;
}

void save_suite(const std::vector<BenchmarkEquation>& suite, const std::filesystem::path& path) {
  nlohmann::json j;
  j["equations"] = nlohmann::json::array();
  for (const auto& eq : suite) {
    nlohmann::json ranges = nlohmann::json::array();
    for (const auto& [lo, hi] : eq.ranges) ranges.push_back({lo, hi});
    j["equations"].push_back(
        {{"id", eq.id}, {"expression", eq.expression}, {"n_vars", eq.n_vars}, {"ranges", ranges}, {"n_rows", eq.n_rows}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<BenchmarkEquation> select_subset(const std::vector<BenchmarkEquation>& suite,
                                             const std::vector<std::string>& ids) {
  if (ids.empty()) return suite;
  std::vector<BenchmarkEquation> out;
  for (const auto& id : ids) {
    auto it = std::find_if(suite.begin(), suite.end(), [&](const BenchmarkEquation& e) {
      return e.id == id || e.id.substr(e.id.rfind('-') + 1) == id;
    });
    if (it == suite.end()) throw std::invalid_argument("unknown benchmark equation '" + id + "'");
    out.push_back(*it);
  }
  return out;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

TabularDataset make_benchmark_dataset(const BenchmarkEquation& equation, std::uint64_t seed) {
  const SyntaxTree tree = SyntaxTree::from_prefix(equation.expression);
  std::mt19937_64 rng = stream_rng(seed, fnv1a(equation.id));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Eigen::MatrixXd xs(equation.n_rows, equation.n_vars);
    for (int v = 0; v < equation.n_vars; ++v) {
      const auto [lo, hi] = equation.ranges[static_cast<std::size_t>(v)];
      std::uniform_real_distribution<double> dist(lo, hi);
      for (int r = 0; r < equation.n_rows; ++r) xs(r, v) = lo == hi ? lo : dist(rng);
    }
    EvalResult y = evaluate(tree, xs, {});
    if (y) return make_dataset(equation.id, std::move(xs), y.values(), tree.prefix_string());
  }
  throw std::runtime_error("cannot sample a valid dataset for " + equation.id);
}

std::vector<BenchmarkRow> run_benchmark(const std::vector<BenchmarkEquation>& suite, const Grammar& grammar,
                                        const std::string& grammar_name,
                                        const std::vector<BenchmarkVariant>& variants,
                                        const std::vector<std::uint64_t>& seeds, const BenchmarkConfig& config) {
  if (config.budget <= 0) throw std::invalid_argument("benchmark budget must be positive");
  std::vector<BenchmarkRow> rows;
  std::vector<std::tuple<std::size_t, std::size_t, std::uint64_t>> cells;
  for (std::size_t e = 0; e < suite.size(); ++e) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      for (auto seed : seeds) cells.emplace_back(e, v, seed);
    }
  }
  rows.resize(cells.size());
  const UniformGuidance uniform;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const auto [e, v, seed] = cells[i];
      const TabularDataset ds = make_benchmark_dataset(suite[e], seed);
      EngineConfig engine = config.engine;
      engine.mcts = variants[v].mcts;
      engine.fit.seed = seed;
      const SolveStats s = solve_problem(grammar, uniform, ds, engine, config.budget, seed);
      BenchmarkRow& row = rows[i];
      row.equation_id = suite[e].id;
      row.grammar = grammar_name;
      row.variant = variants[v].name;
      row.seed = seed;
      if (s.solved) row.sims_to_fit = s.sims;
      row.failed = !s.solved;
      row.explored_states = s.explored_states;
      row.wall_ms = s.wall_ms;
      row.best_equation = s.best_equation;
      row.best_reward = s.best_reward;
    }
  };
  const int jobs = std::max(1, config.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return rows;
}

std::vector<BenchmarkSummary> summarize(const std::vector<BenchmarkRow>& rows, int budget) {
  std::vector<BenchmarkSummary> out;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
  std::vector<std::vector<double>> solved;
  for (const auto& r : rows) {
    auto key = std::make_tuple(r.equation_id, r.grammar, r.variant);
    auto [it, fresh] = index.emplace(key, out.size());
    if (fresh) {
      out.push_back({r.equation_id, r.grammar, r.variant});
      solved.emplace_back();
    }
    auto& s = out[it->second];
    ++s.runs;
    if (r.failed) {
      ++s.failed;
      s.mean_with_budget += budget;
    } else {
      solved[it->second].push_back(*r.sims_to_fit);
      s.mean_with_budget += *r.sims_to_fit;
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& s = out[i];
    const auto& xs = solved[i];
    s.mean_with_budget /= s.runs;
    if (xs.empty()) {
      s.mean = s.stddev = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  }
  return out;
}

void write_results_csv(const std::vector<BenchmarkRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "equation_id,grammar,variant,seed,sims_to_fit,explored_states,failed,wall_ms\n";
  for (const auto& r : rows) {
    out << r.equation_id << ',' << r.grammar << ',' << r.variant << ',' << r.seed << ','
        << (r.sims_to_fit ? std::to_string(*r.sims_to_fit) : std::string()) << ',' << r.explored_states << ','
        << (r.failed ? 1 : 0) << ',' << static_cast<long long>(std::llround(r.wall_ms)) << '\n';
  }
}

void write_summary_csv(const std::vector<BenchmarkSummary>& summary, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "equation_id,grammar,variant,mean,std,failed,runs,mean_with_budget\n";
  auto num = [](double v) { return std::isnan(v) ? std::string() : std::to_string(v); };
  for (const auto& s : summary) {
    out << s.equation_id << ',' << s.grammar << ',' << s.variant << ',' << num(s.mean) << ',' << num(s.stddev) << ','
        << s.failed << ',' << s.runs << ',' << num(s.mean_with_budget) << '\n';
  }
}

}  // namespace gmct
