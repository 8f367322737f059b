#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gmct/datagen.hpp"
#include "gmct/engine.hpp"
#include "gmct/guidance.hpp"

namespace gmct {

enum class TrainMode { Supervised, Mcts, Uniform };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
  TrainMode mode = TrainMode::Supervised;
  int iterations = 200;
  int problems_per_iteration = 50;
  int cold_start = 10;  // iterations without network updates
  int updates_per_iteration = 20;
  int batch_size = 64;
  std::size_t buffer_capacity = 50000;
  double gamma = 1.0;  // critic target discount per remaining step
  EngineConfig engine;
  GenConstraints generation;
  std::uint64_t seed = 1;
  // Optional contrastive auxiliary step per update (needs a dataset encoder).
  bool contrastive_aux = false;
  double contrastive_lambda = 0.1;
};

struct IterationMetrics {
  int iteration = 0;
  double policy_ce = 0.0;   // NaN when no update happened
  double value_mse = 0.0;
  double contrastive_loss = 0.0;
  int train_steps = 0;
  std::size_t records = 0;  // appended this iteration
  double mean_final_reward = 0.0;  // over searched problems, NaN if none
};

struct TrainingReport {
  std::vector<IterationMetrics> metrics;
  int total_train_steps = 0;
};

using IterationCallback = std::function<void(const IterationMetrics&)>;

// Runs iterations [start_iteration, config.iterations). Problems and batch
// sampling are seeded per iteration, so a resumed run regenerates the same
// problems; in supervised mode the replay buffer is rebuilt exactly.
TrainingReport run_training(const Grammar& grammar, GuidanceModel& model, const TrainConfig& config,
                            int start_iteration = 0, const IterationCallback& on_iteration = {});

// Replay records of one MCTS episode (policy targets filtered by final reward).
std::vector<ReplayRecord> episode_records(const Grammar& grammar, const EpisodeResult& episode,
                                          std::shared_ptr<const TabularDataset> dataset, double gamma,
                                          const TreeLimits& limits);

void write_metrics_csv(const std::vector<IterationMetrics>& metrics, const std::filesystem::path& path,
                       bool append = false);

}  // namespace gmct
