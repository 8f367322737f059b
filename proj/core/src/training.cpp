#include "gmct/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "gmct/contrastive.hpp"

namespace gmct {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Supervised: return "supervised";
    case TrainMode::Mcts: return "mcts";
    case TrainMode::Uniform: return "uniform";
  }
  return "uniform";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "supervised") return TrainMode::Supervised;
  if (name == "mcts") return TrainMode::Mcts;
  if (name == "uniform") return TrainMode::Uniform;
  throw std::invalid_argument("unknown training mode '" + std::string(name) + "'");
}

std::vector<ReplayRecord> episode_records(const Grammar& grammar, const EpisodeResult& episode,
                                          std::shared_ptr<const TabularDataset> dataset, double gamma,
                                          const TreeLimits& limits) {
  const std::size_t steps = episode.mcts_distributions.size();
  std::vector<ReplayRecord> out;
  out.reserve(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    ReplayRecord r;
    r.state = episode.states[i];
    r.dataset = dataset;
    r.legal = legal_actions(grammar, r.state, limits);
    r.target_policy = episode.mcts_distributions[i];
    r.target_value = std::pow(gamma, static_cast<double>(steps - 1 - i)) * episode.final_reward;
    r.source = RecordSource::Mcts;
    out.push_back(std::move(r));
  }
  return mcts_targets_filter(std::move(out), episode.final_reward);
}

namespace {

constexpr std::uint64_t kBatchStream = 0x9e3779b97f4a7c15ULL;

std::vector<ReplayRecord> supervised_records(const Grammar& grammar, const std::vector<Problem>& problems,
                                             const TrainConfig& config) {
  std::vector<ReplayRecord> out;
  for (const auto& p : problems) {
    auto ds = std::make_shared<const TabularDataset>(p.dataset);
    auto rs = make_supervised_targets(p.tree, grammar, ds, 1.0, config.gamma, config.engine.reward.limits);
    out.insert(out.end(), std::make_move_iterator(rs.begin()), std::make_move_iterator(rs.end()));
  }
  return out;
}

std::vector<Problem> iteration_problems(const Grammar& grammar, const TrainConfig& config, int iteration) {
  return generate_problems(grammar, config.problems_per_iteration, config.generation,
                           config.seed * 1000003ULL + static_cast<std::uint64_t>(iteration),
                           "it" + std::to_string(iteration) + "_");
}

}  // namespace

TrainingReport run_training(const Grammar& grammar, GuidanceModel& model, const TrainConfig& config,
                            int start_iteration, const IterationCallback& on_iteration) {
  if (config.iterations < 0 || config.problems_per_iteration <= 0 || config.batch_size <= 0 ||
      config.updates_per_iteration < 0 || config.cold_start < 0) {
    throw std::invalid_argument("invalid training schedule");
  }
  if (config.contrastive_aux && !model.has_dataset_encoder()) {
    throw std::invalid_argument("contrastive auxiliary loss needs a dataset encoder");
  }
  ReplayBuffer buffer(config.buffer_capacity);
  TrainingReport report;
  if (config.mode == TrainMode::Supervised) {
    for (int it = 0; it < start_iteration; ++it) buffer.append(supervised_records(grammar, iteration_problems(grammar, config, it), config));
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int it = start_iteration; it < config.iterations; ++it) {
    IterationMetrics m;
    m.iteration = it;
    m.policy_ce = m.value_mse = m.contrastive_loss = m.mean_final_reward = nan;
    if (config.mode == TrainMode::Uniform) {
      // static prior: nothing to learn
      report.metrics.push_back(m);
      if (on_iteration) on_iteration(m);
      continue;
    }
    const std::vector<Problem> problems = iteration_problems(grammar, config, it);
    std::vector<ReplayRecord> fresh;
    if (config.mode == TrainMode::Supervised) {
      fresh = supervised_records(grammar, problems, config);
    } else {
      NetworkGuidance guidance(model);
      double reward_sum = 0.0;
      for (std::size_t i = 0; i < problems.size(); ++i) {
        auto ds = std::make_shared<const TabularDataset>(problems[i].dataset);
        const EpisodeResult ep = search_equation(grammar, guidance, *ds, config.engine, SearchMode::Train,
                                                 stream_rng(config.seed + 17, it * 100003ULL + i)());
        reward_sum += ep.final_reward;
        auto rs = episode_records(grammar, ep, ds, config.gamma, config.engine.reward.limits);
        fresh.insert(fresh.end(), std::make_move_iterator(rs.begin()), std::make_move_iterator(rs.end()));
      }
      m.mean_final_reward = reward_sum / static_cast<double>(problems.size());
    }
    m.records = fresh.size();
    buffer.append(std::move(fresh));

    if (it >= config.cold_start && buffer.size() > 0) {
      std::mt19937_64 rng = stream_rng(config.seed ^ kBatchStream, static_cast<std::uint64_t>(it));
      const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), buffer.size());
      double ce = 0.0;
      double mse = 0.0;
      double closs = 0.0;
      for (int u = 0; u < config.updates_per_iteration; ++u) {
        const auto batch = buffer.sample(n, rng);
        const LossMetrics lm = model.train_step(batch);
        ce += lm.policy_ce;
        mse += lm.value_mse;
        if (config.contrastive_aux) {
          std::vector<TabularDataset> sources;
          for (const auto& p : problems) sources.push_back(p.dataset);
          if (sources.size() >= 2) closs += contrastive_step(model, make_contrastive_batch(sources), config.contrastive_lambda).loss;
        }
        ++m.train_steps;
      }
      if (m.train_steps > 0) {
        m.policy_ce = ce / m.train_steps;
        m.value_mse = mse / m.train_steps;
        if (config.contrastive_aux) m.contrastive_loss = closs / m.train_steps;
      }
    }
    report.total_train_steps += m.train_steps;
    report.metrics.push_back(m);
    if (on_iteration) on_iteration(m);
  }
  return report;
}

void write_metrics_csv(const std::vector<IterationMetrics>& metrics, const std::filesystem::path& path, bool append) {
  const bool header = !append || !std::filesystem::exists(path);
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
  };
  if (header) out << "iteration,policy_ce,value_mse,contrastive_loss,train_steps,records,mean_final_reward\n";
  for (const auto& m : metrics) {
    out << m.iteration << ',' << num(m.policy_ce) << ',' << num(m.value_mse) << ',' << num(m.contrastive_loss) << ','
        << m.train_steps << ',' << m.records << ',' << num(m.mean_final_reward) << '\n';
  }
}

}  // namespace gmct
