#include "gmct/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>

#include <json.hpp>

namespace gmct {

std::string to_string(DatasetEncoderKind kind) {
  switch (kind) {
    case DatasetEncoderKind::None: return "none";
    case DatasetEncoderKind::FlatMlp: return "flat-mlp";
    case DatasetEncoderKind::PooledSet: return "pooled-set";
  }
  return "none";
}

std::string to_string(TreeEncoderKind kind) {
  return kind == TreeEncoderKind::None ? "none" : "padded-onehot-mlp";
}

DatasetEncoderKind parse_dataset_encoder(std::string_view name) {
  if (name == "none") return DatasetEncoderKind::None;
  if (name == "flat-mlp") return DatasetEncoderKind::FlatMlp;
  if (name == "pooled-set") return DatasetEncoderKind::PooledSet;
  throw std::invalid_argument("unknown dataset encoder '" + std::string(name) + "'");
}

TreeEncoderKind parse_tree_encoder(std::string_view name) {
  if (name == "none") return TreeEncoderKind::None;
  if (name == "padded-onehot-mlp" || name == "onehot") return TreeEncoderKind::PaddedOneHot;
  throw std::invalid_argument("unknown tree encoder '" + std::string(name) + "'");
}

// --- replay buffer ---------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
}

void ReplayBuffer::append(ReplayRecord record) {
  std::lock_guard lock(mutex_);
  records_.push_back(std::move(record));
  while (records_.size() > capacity_) records_.pop_front();
}

void ReplayBuffer::append(std::vector<ReplayRecord> records) {
  std::lock_guard lock(mutex_);
  for (auto& r : records) records_.push_back(std::move(r));
  while (records_.size() > capacity_) records_.pop_front();
}

std::vector<ReplayRecord> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  std::lock_guard lock(mutex_);
  if (n == 0 || records_.size() < n) {
    throw std::out_of_range("replay buffer holds " + std::to_string(records_.size()) + " records, " +
                            std::to_string(n) + " requested");
  }
  std::vector<std::size_t> index(records_.size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  std::sample(index.begin(), index.end(), std::back_inserter(picked), static_cast<std::ptrdiff_t>(n), rng);
  std::shuffle(picked.begin(), picked.end(), rng);
  std::vector<ReplayRecord> out;
  out.reserve(n);
  for (auto i : picked) out.push_back(records_[i]);
  return out;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

std::vector<ReplayRecord> ReplayBuffer::snapshot() const {
  std::lock_guard lock(mutex_);
  return {records_.begin(), records_.end()};
}

// --- model -----------------------------------------------------------------

struct GuidanceModel::Forward {
  EncoderCache dataset_cache;
  nn::Mlp::Cache tree_cache;
  nn::Mlp::Cache trunk_cache;
  nn::Matrix dataset_embedding;
  nn::Matrix tree_embedding;
  nn::Matrix trunk_out;
  nn::Matrix logits;
  nn::Vector value;  // after tanh
  std::vector<const TabularDataset*> datasets;
};

GuidanceModel::GuidanceModel(const Grammar& grammar, ModelConfig config)
    : config_(config),
      n_rules_(grammar.num_rules()),
      n_vars_(std::max(grammar.num_variables(), 1)),
      vocabulary_(grammar.vocabulary()) {
  if (config_.hidden <= 0 || config_.embedding <= 0 || config_.rows <= 0 || config_.positions <= 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  const Eigen::Index h = config_.hidden;
  const Eigen::Index e = config_.embedding;
  Eigen::Index trunk_in = 0;
  switch (config_.dataset_encoder) {
    case DatasetEncoderKind::None: break;
    case DatasetEncoderKind::FlatMlp:
      dataset_mlp_ = nn::make_mlp(layout_, {static_cast<Eigen::Index>(config_.rows) * (n_vars_ + 1), h, e}, false);
      trunk_in += e;
      break;
    case DatasetEncoderKind::PooledSet:
      dataset_mlp_ = nn::make_mlp(layout_, {n_vars_ + 1, h, e}, false);
      trunk_in += e;
      break;
  }
  if (has_tree_encoder()) {
    const auto width = static_cast<Eigen::Index>(config_.positions) * static_cast<Eigen::Index>(vocabulary_.size());
    tree_mlp_ = nn::make_mlp(layout_, {width, h, e}, false);
    trunk_in += e;
  }
  // Without encoders the trunk sees a single constant input, so every
  // prediction is the same learnable vector.
  if (trunk_in == 0) trunk_in = 1;
  trunk_ = nn::make_mlp(layout_, {trunk_in, h, h}, true);
  policy_head_ = layout_.add(h, n_rules_);
  value_head_ = layout_.add(h, 1);
  std::mt19937_64 rng(config_.seed);
  theta_ = layout_.initialize(rng);
  adam_ = nn::Adam(layout_.size(), config_.adam);
}

nn::Matrix GuidanceModel::dataset_features(const TabularDataset& dataset) const {
  const std::vector<double> ys = scale_y(dataset);
  nn::Matrix f = nn::Matrix::Zero(n_vars_ + 1, dataset.n_rows());
  const int vars = std::min(dataset.n_vars(), n_vars_);
  for (int r = 0; r < dataset.n_rows(); ++r) {
    for (int v = 0; v < vars; ++v) f(v, r) = dataset.xs(r, v);
    f(n_vars_, r) = ys[static_cast<std::size_t>(r)];
  }
  return f;
}

nn::Vector GuidanceModel::flat_features(const TabularDataset& dataset) const {
  const nn::Matrix f = dataset_features(dataset);
  nn::Vector out = nn::Vector::Zero(static_cast<Eigen::Index>(config_.rows) * (n_vars_ + 1));
  const Eigen::Index rows = std::min<Eigen::Index>(f.cols(), config_.rows);
  for (Eigen::Index r = 0; r < rows; ++r) out.segment(r * (n_vars_ + 1), n_vars_ + 1) = f.col(r);
  return out;
}

nn::Vector GuidanceModel::tree_features(const SearchState& state) const {
  const auto width = static_cast<Eigen::Index>(vocabulary_.size());
  nn::Vector out = nn::Vector::Zero(config_.positions * width);
  const auto tokens = state.tree.to_prefix();
  const auto n = std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(config_.positions));
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = std::find(vocabulary_.begin(), vocabulary_.end(), tokens[i]);
    if (it == vocabulary_.end()) continue;
    out[static_cast<Eigen::Index>(i) * width + (it - vocabulary_.begin())] = 1.0;
  }
  return out;
}

nn::Matrix GuidanceModel::embed_datasets(std::span<const TabularDataset* const> datasets,
                                         EncoderCache* cache) const {
  if (!has_dataset_encoder()) throw std::logic_error("model has no dataset encoder");
  const auto n = static_cast<Eigen::Index>(datasets.size());
  nn::Matrix z(config_.embedding, n);
  if (config_.dataset_encoder == DatasetEncoderKind::FlatMlp) {
    nn::Matrix x(dataset_mlp_.in(), n);
    for (Eigen::Index i = 0; i < n; ++i) x.col(i) = flat_features(*datasets[static_cast<std::size_t>(i)]);
    return dataset_mlp_.forward(theta_, x, cache ? &cache->flat : nullptr);
  }
  if (cache) {
    cache->per_dataset.assign(datasets.size(), {});
    cache->rows.assign(datasets.size(), 0);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const nn::Matrix f = dataset_features(*datasets[static_cast<std::size_t>(i)]);
    nn::Mlp::Cache* c = cache ? &cache->per_dataset[static_cast<std::size_t>(i)] : nullptr;
    const nn::Matrix rows = dataset_mlp_.forward(theta_, f, c);
    z.col(i) = rows.rowwise().mean();
    if (cache) cache->rows[static_cast<std::size_t>(i)] = f.cols();
  }
  return z;
}

void GuidanceModel::backprop_datasets(const EncoderCache& cache, const nn::Matrix& dz, nn::Vector& grad) const {
  if (config_.dataset_encoder == DatasetEncoderKind::FlatMlp) {
    dataset_mlp_.backward(theta_, cache.flat, dz, grad);
    return;
  }
  for (Eigen::Index i = 0; i < dz.cols(); ++i) {
    const Eigen::Index rows = cache.rows[static_cast<std::size_t>(i)];
    nn::Matrix d = dz.col(i).replicate(1, rows) / static_cast<double>(rows);
    dataset_mlp_.backward(theta_, cache.per_dataset[static_cast<std::size_t>(i)], std::move(d), grad);
  }
}

GuidanceModel::Forward GuidanceModel::forward(std::span<const ReplayRecord> batch, bool keep_cache) const {
  Forward fw;
  const auto n = static_cast<Eigen::Index>(batch.size());
  std::vector<nn::Matrix> parts;
  if (has_dataset_encoder()) {
    for (const auto& r : batch) {
      if (!r.dataset) throw std::invalid_argument("replay record without dataset");
      fw.datasets.push_back(r.dataset.get());
    }
    fw.dataset_embedding = embed_datasets(fw.datasets, keep_cache ? &fw.dataset_cache : nullptr);
    parts.push_back(fw.dataset_embedding);
  }
  if (has_tree_encoder()) {
    nn::Matrix x(tree_mlp_.in(), n);
    for (Eigen::Index i = 0; i < n; ++i) x.col(i) = tree_features(batch[static_cast<std::size_t>(i)].state);
    fw.tree_embedding = tree_mlp_.forward(theta_, x, keep_cache ? &fw.tree_cache : nullptr);
    parts.push_back(fw.tree_embedding);
  }
  nn::Matrix input;
  if (parts.empty()) {
    input = nn::Matrix::Ones(1, n);
  } else {
    Eigen::Index rows = 0;
    for (const auto& p : parts) rows += p.rows();
    input.resize(rows, n);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      input.middleRows(at, p.rows()) = p;
      at += p.rows();
    }
  }
  fw.trunk_out = trunk_.forward(theta_, input, keep_cache ? &fw.trunk_cache : nullptr);
  fw.logits = nn::dense_forward(theta_, policy_head_, fw.trunk_out);
  fw.value = nn::dense_forward(theta_, value_head_, fw.trunk_out).row(0).transpose().array().tanh();
  return fw;
}

namespace {

// Softmax of `logits` restricted to `mask` (all entries when mask is empty).
nn::Vector masked_softmax(const Eigen::Ref<const nn::Vector>& logits, const ActionMask* mask) {
  nn::Vector p = nn::Vector::Zero(logits.size());
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < logits.size(); ++a) {
    if (!mask || (*mask)[static_cast<std::size_t>(a)]) top = std::max(top, logits[a]);
  }
  if (!std::isfinite(top)) return p;
  double sum = 0.0;
  for (Eigen::Index a = 0; a < logits.size(); ++a) {
    if (mask && !(*mask)[static_cast<std::size_t>(a)]) continue;
    p[a] = std::exp(logits[a] - top);
    sum += p[a];
  }
  return p / sum;
}

}  // namespace

Prediction GuidanceModel::predict(const SearchState& state, const TabularDataset& dataset,
                                  const ActionMask& legal) const {
  if (static_cast<int>(legal.size()) != n_rules_) throw std::invalid_argument("mask size does not match rule count");
  ReplayRecord probe;
  probe.state = state;
  // Non-owning view; the record does not outlive this call.
  probe.dataset = std::shared_ptr<const TabularDataset>(std::shared_ptr<const TabularDataset>{}, &dataset);
  const Forward fw = forward(std::span<const ReplayRecord>(&probe, 1), false);
  const nn::Vector p = masked_softmax(fw.logits.col(0), &legal);
  Prediction out;
  out.prior.assign(p.data(), p.data() + p.size());
  out.value = fw.value[0];
  return out;
}

std::vector<GuidanceModel::ParameterBlock> GuidanceModel::blocks() const {
  std::vector<ParameterBlock> out;
  auto span_of = [](const std::string& name, const std::vector<nn::DenseLayer>& layers) {
    Eigen::Index size = 0;
    for (const auto& l : layers) size += l.size();
    return ParameterBlock{name, layers.front().offset, size};
  };
  if (has_dataset_encoder()) out.push_back(span_of("dataset_encoder", dataset_mlp_.layers));
  if (has_tree_encoder()) out.push_back(span_of("tree_encoder", tree_mlp_.layers));
  out.push_back(span_of("trunk", trunk_.layers));
  out.push_back(span_of("policy_head", {policy_head_}));
  out.push_back(span_of("value_head", {value_head_}));
  return out;
}

LossMetrics GuidanceModel::loss(std::span<const ReplayRecord> batch, nn::Vector* grad) const {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  const Forward fw = forward(batch, grad != nullptr);
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double inv = 1.0 / static_cast<double>(n);
  LossMetrics m;
  nn::Matrix dlogits = nn::Matrix::Zero(n_rules_, n);
  nn::Matrix dvalue_pre(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const ReplayRecord& r = batch[static_cast<std::size_t>(i)];
    if (static_cast<int>(r.target_policy.size()) != n_rules_) {
      throw std::invalid_argument("target policy size does not match rule count");
    }
    const ActionMask* mask = has_tree_encoder() ? &r.legal : nullptr;
    if (mask && static_cast<int>(mask->size()) != n_rules_) throw std::invalid_argument("record mask size mismatch");
    const nn::Vector p = masked_softmax(fw.logits.col(i), mask);
    for (int a = 0; a < n_rules_; ++a) {
      const double t = r.target_policy[static_cast<std::size_t>(a)];
      if (mask && !(*mask)[static_cast<std::size_t>(a)]) continue;
      if (t > 0.0) m.policy_ce -= t * std::log(std::max(p[a], 1e-300));
      dlogits(a, i) = (p[a] - t) * inv;
    }
    const double v = fw.value[i];
    const double diff = v - r.target_value;
    m.value_mse += diff * diff;
    dvalue_pre(0, i) = 2.0 * diff * (1.0 - v * v) * inv;
  }
  m.policy_ce *= inv;
  m.value_mse *= inv;
  m.total = m.policy_ce + m.value_mse;
  if (!std::isfinite(m.total)) throw NonFiniteLoss("non-finite training loss");
  if (!grad) return m;

  if (grad->size() != theta_.size()) grad->setZero(theta_.size());
  nn::Matrix dtrunk = nn::dense_backward(theta_, policy_head_, fw.trunk_out, dlogits, *grad);
  dtrunk += nn::dense_backward(theta_, value_head_, fw.trunk_out, dvalue_pre, *grad);
  const nn::Matrix dinput = trunk_.backward(theta_, fw.trunk_cache, std::move(dtrunk), *grad);
  Eigen::Index at = 0;
  if (has_dataset_encoder()) {
    backprop_datasets(fw.dataset_cache, dinput.middleRows(at, config_.embedding), *grad);
    at += config_.embedding;
  }
  if (has_tree_encoder()) {
    tree_mlp_.backward(theta_, fw.tree_cache, dinput.middleRows(at, config_.embedding), *grad);
  }
  return m;
}

LossMetrics GuidanceModel::train_step(std::span<const ReplayRecord> batch) {
  nn::Vector grad = nn::Vector::Zero(theta_.size());
  const LossMetrics m = loss(batch, &grad);
  if (!grad.allFinite()) throw NonFiniteLoss("non-finite gradient");
  adam_.step(theta_, grad);
  return m;
}

void GuidanceModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "gmct-model";
  j["version"] = 1;
  j["config"] = {{"dataset_encoder", to_string(config_.dataset_encoder)},
                 {"tree_encoder", to_string(config_.tree_encoder)},
                 {"hidden", config_.hidden},
                 {"embedding", config_.embedding},
                 {"rows", config_.rows},
                 {"positions", config_.positions},
                 {"learning_rate", config_.adam.learning_rate},
                 {"seed", config_.seed}};
  j["n_rules"] = n_rules_;
  j["vocabulary"] = vocabulary_;
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& l : layout_.layers()) shapes.push_back({l.in, l.out, l.offset});
  j["layers"] = shapes;
  j["theta"] = std::vector<double>(theta_.data(), theta_.data() + theta_.size());
  auto& adam = const_cast<nn::Adam&>(adam_);
  j["adam"] = {{"t", adam.steps()},
               {"m", std::vector<double>(adam.first_moment().data(), adam.first_moment().data() + theta_.size())},
               {"v", std::vector<double>(adam.second_moment().data(), adam.second_moment().data() + theta_.size())}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

GuidanceModel GuidanceModel::load(const std::filesystem::path& path, const Grammar& grammar) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "gmct-model" || j.value("version", 0) != 1) {
    throw std::runtime_error("unsupported checkpoint format in " + path.string());
  }
  const auto& c = j.at("config");
  ModelConfig config;
  config.dataset_encoder = parse_dataset_encoder(c.at("dataset_encoder").get<std::string>());
  config.tree_encoder = parse_tree_encoder(c.at("tree_encoder").get<std::string>());
  config.hidden = c.at("hidden");
  config.embedding = c.at("embedding");
  config.rows = c.at("rows");
  config.positions = c.at("positions");
  config.adam.learning_rate = c.at("learning_rate");
  config.seed = c.at("seed");
  GuidanceModel model(grammar, config);
  if (j.at("n_rules").get<int>() != model.n_rules_ ||
      j.at("vocabulary").get<std::vector<std::string>>() != model.vocabulary_) {
    throw std::runtime_error("checkpoint does not match the grammar");
  }
  const auto theta = j.at("theta").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(theta.size()) != model.theta_.size()) {
    throw std::runtime_error("checkpoint parameter count mismatch");
  }
  model.theta_ = Eigen::Map<const nn::Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
  const auto m = j.at("adam").at("m").get<std::vector<double>>();
  const auto v = j.at("adam").at("v").get<std::vector<double>>();
  model.adam_.first_moment() = Eigen::Map<const nn::Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
  model.adam_.second_moment() = Eigen::Map<const nn::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  model.adam_.set_steps(j.at("adam").at("t").get<std::int64_t>());
  return model;
}

// --- targets ---------------------------------------------------------------

namespace {

struct Deriver {
  const Grammar& grammar;
  std::vector<std::string> target;  // expression tokens
  std::vector<std::size_t> end;     // one past the subtree starting at i

  // Matches rule rhs against target at `pos`; collects nonterminal leaves.
  bool match(const ProductionRule& rule, std::size_t pos, std::vector<std::pair<int, std::size_t>>& holes,
             std::size_t& next) const {
    std::size_t at = pos;
    for (const Symbol& s : rule.rhs) {
      if (at >= target.size()) return false;
      if (s.kind == SymbolKind::Nonterminal) {
        holes.emplace_back(s.index, at);
        at = end[at];
      } else {
        if (s.name != target[at]) return false;
        ++at;
      }
    }
    next = at;
    return true;
  }

  std::optional<std::vector<int>> run(int nonterminal, std::size_t pos) const {
    for (int id : grammar.rules_for(nonterminal)) {
      std::vector<std::pair<int, std::size_t>> holes;
      std::size_t next = 0;
      if (!match(grammar.rule(id), pos, holes, next) || next != end[pos]) continue;
      std::vector<int> seq{id};
      bool ok = true;
      for (const auto& [nt, at] : holes) {
        auto sub = run(nt, at);
        if (!sub) {
          ok = false;
          break;
        }
        seq.insert(seq.end(), sub->begin(), sub->end());
      }
      if (ok) return seq;
    }
    return std::nullopt;
  }
};

}  // namespace

std::vector<SupervisedTarget> derive(const SyntaxTree& tree, const Grammar& grammar, const TreeLimits& limits) {
  if (!tree.done()) throw DerivationError("cannot derive an incomplete tree");
  Deriver d{grammar, tree.to_prefix(), {}};
  const auto symbols = tree.expression_symbols();
  d.end.assign(symbols.size(), 0);
  for (std::size_t i = symbols.size(); i-- > 0;) {
    std::size_t at = i + 1;
    for (int k = 0; k < symbols[i].arity; ++k) at = d.end[at];
    d.end[i] = at;
  }
  const auto seq = d.run(grammar.start(), 0);
  if (!seq || d.end.empty() || d.end[0] != symbols.size()) {
    throw DerivationError("'" + tree.prefix_string() + "' is not derivable in the grammar");
  }
  TreeLimits loose = limits;
  loose.max_nodes = std::max(limits.max_nodes, tree.node_count());
  std::vector<SupervisedTarget> out;
  SearchState state = grammar.initial_state();
  for (int rule : *seq) {
    out.push_back({state, rule});
    state = apply_rule(grammar, state, rule, loose);
  }
  if (state.tree.prefix_string() != tree.prefix_string()) throw DerivationError("derivation replay diverged");
  return out;
}

std::vector<ReplayRecord> make_supervised_targets(const SyntaxTree& tree, const Grammar& grammar,
                                                  std::shared_ptr<const TabularDataset> dataset,
                                                  double final_reward, double gamma, const TreeLimits& limits) {
  const auto steps = derive(tree, grammar, limits);
  TreeLimits loose = limits;
  loose.max_nodes = std::max(limits.max_nodes, tree.node_count());
  std::vector<ReplayRecord> out;
  out.reserve(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    ReplayRecord r;
    r.state = steps[i].state;
    if (dataset) r.state.dataset_id = dataset->id;
    r.dataset = dataset;
    r.legal = legal_actions(grammar, steps[i].state, loose);
    r.target_policy.assign(static_cast<std::size_t>(grammar.num_rules()), 0.0);
    r.target_policy[static_cast<std::size_t>(steps[i].rule)] = 1.0;
    r.target_value = std::pow(gamma, static_cast<double>(steps.size() - 1 - i)) * final_reward;
    r.source = RecordSource::Supervised;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ReplayRecord> mcts_targets_filter(std::vector<ReplayRecord> records, double reward) {
  if (!(reward < -0.9)) return records;
  for (auto& r : records) {
    r.target_policy = uniform_over(r.legal);
    r.source = RecordSource::Uniform;
  }
  return records;
}

}  // namespace gmct
