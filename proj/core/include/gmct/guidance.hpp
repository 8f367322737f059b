#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmct/dataset.hpp"
#include "gmct/grammar.hpp"
#include "gmct/nn.hpp"
#include "gmct/prior.hpp"

namespace gmct {

enum class DatasetEncoderKind { None, FlatMlp, PooledSet };
enum class TreeEncoderKind { None, PaddedOneHot };

std::string to_string(DatasetEncoderKind kind);
std::string to_string(TreeEncoderKind kind);
DatasetEncoderKind parse_dataset_encoder(std::string_view name);
TreeEncoderKind parse_tree_encoder(std::string_view name);

struct ModelConfig {
  DatasetEncoderKind dataset_encoder = DatasetEncoderKind::None;
  TreeEncoderKind tree_encoder = TreeEncoderKind::None;
  int hidden = 64;
  int embedding = 32;
  int rows = 100;      // flat-mlp row window
  int positions = 25;  // tree token window
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
};

enum class RecordSource { Mcts, Supervised, Uniform };

struct ReplayRecord {
  SearchState state;
  std::shared_ptr<const TabularDataset> dataset;
  ActionMask legal;
  std::vector<double> target_policy;  // one entry per rule id
  double target_value = 0.0;
  RecordSource source = RecordSource::Mcts;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void append(ReplayRecord record);
  void append(std::vector<ReplayRecord> records);
  // n distinct records drawn uniformly.
  std::vector<ReplayRecord> sample(std::size_t n, std::mt19937_64& rng) const;

  std::size_t size() const;
  std::size_t capacity() const noexcept { return capacity_; }
  std::vector<ReplayRecord> snapshot() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::deque<ReplayRecord> records_;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossMetrics {
  double policy_ce = 0.0;
  double value_mse = 0.0;
  double total = 0.0;
};

// Policy/value network: optional dataset and tree encoders feeding a shared
// trunk with a policy head (logits over all rule ids) and a tanh value head.
// predict() is const and may run concurrently; train_step() needs exclusive access.
class GuidanceModel final : public Guidance {
 public:
  GuidanceModel(const Grammar& grammar, ModelConfig config);

  Prediction predict(const SearchState& state, const TabularDataset& dataset,
                     const ActionMask& legal) const override;

  // Mean loss over `batch`; accumulates dL/dtheta into `grad` when given.
  LossMetrics loss(std::span<const ReplayRecord> batch, nn::Vector* grad = nullptr) const;
  LossMetrics train_step(std::span<const ReplayRecord> batch);

  struct EncoderCache {
    std::vector<nn::Mlp::Cache> per_dataset;  // pooled-set: one per dataset
    nn::Mlp::Cache flat;
    std::vector<Eigen::Index> rows;
  };
  bool has_dataset_encoder() const noexcept { return config_.dataset_encoder != DatasetEncoderKind::None; }
  bool has_tree_encoder() const noexcept { return config_.tree_encoder != TreeEncoderKind::None; }
  // Embeddings as columns (embedding x n).
  nn::Matrix embed_datasets(std::span<const TabularDataset* const> datasets, EncoderCache* cache = nullptr) const;
  void backprop_datasets(const EncoderCache& cache, const nn::Matrix& dz, nn::Vector& grad) const;

  // Contiguous parameter ranges: dataset_encoder, tree_encoder, trunk,
  // policy_head, value_head (absent encoders are skipped).
  struct ParameterBlock {
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index size = 0;
  };
  std::vector<ParameterBlock> blocks() const;

  nn::Vector& parameters() noexcept { return theta_; }
  const nn::Vector& parameters() const noexcept { return theta_; }
  void zero_parameters() { theta_.setZero(); }
  nn::Adam& optimizer() noexcept { return adam_; }
  const ModelConfig& config() const noexcept { return config_; }
  int num_rules() const noexcept { return n_rules_; }
  int input_variables() const noexcept { return n_vars_; }

  // Encoded network inputs; exposed for tests.
  nn::Matrix dataset_features(const TabularDataset& dataset) const;  // (n_vars+1) x rows
  nn::Vector flat_features(const TabularDataset& dataset) const;
  nn::Vector tree_features(const SearchState& state) const;

  void save(const std::filesystem::path& path) const;
  static GuidanceModel load(const std::filesystem::path& path, const Grammar& grammar);

 private:
  struct Forward;
  Forward forward(std::span<const ReplayRecord> batch, bool keep_cache) const;

  ModelConfig config_;
  int n_rules_;
  int n_vars_;
  std::vector<std::string> vocabulary_;
  nn::ParameterLayout layout_;
  nn::Mlp dataset_mlp_;
  nn::Mlp tree_mlp_;
  nn::Mlp trunk_;
  nn::DenseLayer policy_head_;
  nn::DenseLayer value_head_;
  nn::Vector theta_;
  nn::Adam adam_;
};

// Non-owning adapter so a model can be swapped under a running search setup.
class NetworkGuidance final : public Guidance {
 public:
  explicit NetworkGuidance(const GuidanceModel& model) : model_(&model) {}
  Prediction predict(const SearchState& state, const TabularDataset& dataset,
                     const ActionMask& legal) const override {
    return model_->predict(state, dataset, legal);
  }

 private:
  const GuidanceModel* model_;
};

class DerivationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SupervisedTarget {
  SearchState state;
  int rule = 0;
};

// Leftmost derivation of a complete tree, one entry per applied rule.
std::vector<SupervisedTarget> derive(const SyntaxTree& tree, const Grammar& grammar,
                                     const TreeLimits& limits = {});

// Records with one-hot targets on the derivation and value gamma^(remaining steps) * final_reward.
std::vector<ReplayRecord> make_supervised_targets(const SyntaxTree& tree, const Grammar& grammar,
                                                  std::shared_ptr<const TabularDataset> dataset,
                                                  double final_reward = 1.0, double gamma = 1.0,
                                                  const TreeLimits& limits = {});

// Replaces targets by uniform over the legal actions when reward < -0.9.
std::vector<ReplayRecord> mcts_targets_filter(std::vector<ReplayRecord> records, double reward);

}  // namespace gmct
