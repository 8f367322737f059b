#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "gmct/datagen.hpp"
#include "gmct/guidance.hpp"
#include "support.hpp"

using namespace gmct;

namespace {

std::vector<ReplayRecord> records_for(const Grammar& g, const std::vector<Problem>& problems) {
  std::vector<ReplayRecord> out;
  for (const auto& p : problems) {
    auto ds = std::make_shared<const TabularDataset>(p.dataset);
    auto r = make_supervised_targets(p.tree, g, ds);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

double max_rel_error(GuidanceModel& model, std::span<const ReplayRecord> batch, Eigen::Index offset,
                     Eigen::Index size, int samples, std::mt19937_64& rng) {
  nn::Vector grad = nn::Vector::Zero(model.parameters().size());
  model.loss(batch, &grad);
  const double h = 1e-5;
  double worst = 0.0;
  std::uniform_int_distribution<Eigen::Index> pick(offset, offset + size - 1);
  const int n = static_cast<int>(std::min<Eigen::Index>(samples, size));
  std::set<Eigen::Index> chosen;
  while (static_cast<int>(chosen.size()) < n) chosen.insert(size <= samples ? offset + static_cast<Eigen::Index>(chosen.size()) : pick(rng));
  for (Eigen::Index i : chosen) {
    const double keep = model.parameters()[i];
    model.parameters()[i] = keep + h;
    const double up = model.loss(batch).total;
    model.parameters()[i] = keep - h;
    const double down = model.loss(batch).total;
    model.parameters()[i] = keep;
    const double numeric = (up - down) / (2 * h);
    // below 1e-5 the check is absolute: central-difference roundoff is about eps * loss / h
    const double err = std::abs(numeric - grad[i]) / std::max({std::abs(numeric), std::abs(grad[i]), 1e-5});
    worst = std::max(worst, err);
  }
  return worst;
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

}  // namespace

TEST_SUITE("guidance") {

TEST_CASE("encoder names") {
  CHECK(parse_dataset_encoder("pooled-set") == DatasetEncoderKind::PooledSet);
  CHECK(parse_dataset_encoder("flat-mlp") == DatasetEncoderKind::FlatMlp);
  CHECK(parse_dataset_encoder("none") == DatasetEncoderKind::None);
  CHECK(parse_tree_encoder("padded-onehot-mlp") == TreeEncoderKind::PaddedOneHot);
  CHECK(to_string(DatasetEncoderKind::PooledSet) == "pooled-set");
  CHECK_THROWS(parse_dataset_encoder("transformer"));
}

TEST_CASE("gradients of every block match central differences") {
  const Grammar& a = test::grammar("A");
  const auto problems = generate_problems(a, 4, {}, 21);
  auto records = records_for(a, problems);
  records.resize(std::min<std::size_t>(records.size(), 6));
  // soften the targets so every logit carries gradient
  for (auto& r : records) {
    const auto u = uniform_over(r.legal);
    for (std::size_t k = 0; k < u.size(); ++k) r.target_policy[k] = 0.7 * r.target_policy[k] + 0.3 * u[k];
    r.target_value = 0.3;
  }
  std::mt19937_64 rng(5);
  for (auto enc : {DatasetEncoderKind::None, DatasetEncoderKind::FlatMlp, DatasetEncoderKind::PooledSet}) {
    for (auto tree : {TreeEncoderKind::None, TreeEncoderKind::PaddedOneHot}) {
      ModelConfig mc;
      mc.dataset_encoder = enc;
      mc.tree_encoder = tree;
      mc.seed = 9;
      GuidanceModel model(a, mc);
      for (const auto& block : model.blocks()) {
        CAPTURE(to_string(enc));
        CAPTURE(to_string(tree));
        CAPTURE(block.name);
        CHECK(max_rel_error(model, records, block.offset, block.size, 100, rng) < 1e-4);
      }
    }
  }
}

TEST_CASE("zero weights give a uniform prior over the legal actions") {
  const Grammar& a = test::grammar("A");
  const auto problems = generate_problems(a, 1, {}, 2);
  GuidanceModel model(a, {});
  model.zero_parameters();
  const SearchState s = a.initial_state();
  const ActionMask legal = legal_actions(a, s);
  const Prediction p = model.predict(s, problems[0].dataset, legal);
  for (std::size_t i = 0; i < legal.size(); ++i) CHECK(p.prior[i] == doctest::Approx(legal[i] ? 1.0 / 21 : 0.0));
  CHECK(p.value == 0.0);
}

TEST_CASE("priors vanish off the mask for any state") {
  const Grammar& a = test::grammar("A");
  const auto problems = generate_problems(a, 8, {}, 3);
  ModelConfig mc;
  mc.dataset_encoder = DatasetEncoderKind::PooledSet;
  mc.tree_encoder = TreeEncoderKind::PaddedOneHot;
  GuidanceModel model(a, mc);
  std::mt19937_64 rng(4);
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    SearchState s = a.initial_state();
    while (!s.done()) {
      const ActionMask legal = legal_actions(a, s);
      const Prediction p = model.predict(s, problems[static_cast<std::size_t>(trial) % 8].dataset, legal);
      double sum = 0;
      for (std::size_t i = 0; i < legal.size(); ++i) {
        if (!legal[i]) CHECK(p.prior[i] == 0.0);
        sum += p.prior[i];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(std::abs(p.value) <= 1.0);
      ++checked;
      std::vector<int> ids;
      for (std::size_t i = 0; i < legal.size(); ++i)
        if (legal[i]) ids.push_back(static_cast<int>(i));
      s = apply_rule(a, s, ids[rng() % ids.size()]);
    }
  }
  CHECK(checked > 400);
}

TEST_CASE("without encoders predictions ignore the input") {
  const Grammar& a = test::grammar("A");
  const auto problems = generate_problems(a, 3, {}, 5);
  GuidanceModel model(a, {});
  const SearchState s = a.initial_state();
  const ActionMask legal = legal_actions(a, s);
  const Prediction p0 = model.predict(s, problems[0].dataset, legal);
  for (const auto& p : problems) CHECK(model.predict(s, p.dataset, legal).prior == p0.prior);
}

TEST_CASE("pooled-set embedding is row-permutation invariant") {
  const Grammar& a = test::grammar("A");
  const auto problems = generate_problems(a, 3, {}, 6);
  ModelConfig mc;
  mc.dataset_encoder = DatasetEncoderKind::PooledSet;
  GuidanceModel model(a, mc);
  std::mt19937_64 rng(7);
  for (const auto& p : problems) {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(p.dataset.n_rows()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd xs(p.dataset.xs.rows(), p.dataset.xs.cols());
    std::vector<double> y(p.dataset.y.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      xs.row(static_cast<Eigen::Index>(i)) = p.dataset.xs.row(perm[i]);
      y[i] = p.dataset.y[static_cast<std::size_t>(perm[i])];
    }
    const TabularDataset shuffled = make_dataset("s", xs, y);
    const TabularDataset* one[] = {&p.dataset};
    const TabularDataset* two[] = {&shuffled};
    const nn::Matrix z1 = model.embed_datasets(one);
    const nn::Matrix z2 = model.embed_datasets(two);
    CHECK((z1 - z2).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("value head is bounded") {
  const Grammar& a = test::grammar("A");
  const auto problems = generate_problems(a, 2, {}, 8);
  ModelConfig mc;
  mc.dataset_encoder = DatasetEncoderKind::FlatMlp;
  mc.tree_encoder = TreeEncoderKind::PaddedOneHot;
  GuidanceModel model(a, mc);
  model.parameters() *= 50.0;
  const SearchState s = a.initial_state();
  const Prediction p = model.predict(s, problems[0].dataset, legal_actions(a, s));
  CHECK(std::abs(p.value) <= 1.0);
}

TEST_CASE("loss at the target equals the target entropy") {
  const Grammar& a = test::grammar("A");
  const auto problems = generate_problems(a, 1, {}, 9);
  GuidanceModel model(a, {});
  model.zero_parameters();
  ReplayRecord r;
  r.state = a.initial_state();
  r.dataset = std::make_shared<const TabularDataset>(problems[0].dataset);
  r.legal = legal_actions(a, r.state);
  r.target_policy = uniform_over(r.legal);
  r.target_value = 0.0;
  // no tree encoder: the softmax runs over all 28 rules
  const LossMetrics m = model.loss(std::span<const ReplayRecord>(&r, 1));
  CHECK(m.policy_ce == doctest::Approx(std::log(28.0)));
  CHECK(m.value_mse == 0.0);

  ModelConfig masked;
  masked.tree_encoder = TreeEncoderKind::PaddedOneHot;
  GuidanceModel with_tree(a, masked);
  with_tree.zero_parameters();
  CHECK(with_tree.loss(std::span<const ReplayRecord>(&r, 1)).policy_ce == doctest::Approx(std::log(21.0)));
}

TEST_CASE("one record can be memorised") {
  const Grammar& a = test::grammar("A");
  const auto problems = generate_problems(a, 1, {}, 10);
  ModelConfig mc;
  mc.dataset_encoder = DatasetEncoderKind::PooledSet;
  mc.tree_encoder = TreeEncoderKind::PaddedOneHot;
  GuidanceModel model(a, mc);
  const auto records = make_supervised_targets(problems[0].tree, a, std::make_shared<const TabularDataset>(problems[0].dataset));
  const std::span<const ReplayRecord> one(records.data(), 1);
  double ce = 1e9;
  for (int i = 0; i < 500 && ce >= 0.01; ++i) ce = model.train_step(one).policy_ce;
  CHECK(model.loss(one).policy_ce < 0.01);
}

TEST_CASE("two-equation task: loss falls and priors separate") {
  const Grammar& a = test::grammar("A");
  // c / x1 (rule 6 then x1) and c + sin x0 (rule 2 then x0)
  std::vector<Problem> problems;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 8; ++i) {
    problems.push_back(sample_dataset(SyntaxTree::from_prefix("/ c x1"), 2, {}, rng, "div" + std::to_string(i)));
    problems.push_back(sample_dataset(SyntaxTree::from_prefix("+ c sin x0"), 2, {}, rng, "sin" + std::to_string(i)));
  }
  const auto records = records_for(a, problems);
  ModelConfig mc;
  mc.dataset_encoder = DatasetEncoderKind::PooledSet;
  mc.tree_encoder = TreeEncoderKind::PaddedOneHot;
  mc.seed = 4;
  GuidanceModel model(a, mc);
  std::vector<double> window_means;
  double acc = 0;
  for (int step = 1; step <= 400; ++step) {
    acc += model.train_step(records).policy_ce;
    if (step % 100 == 0) {
      window_means.push_back(acc / 100);
      acc = 0;
    }
  }
  for (std::size_t i = 1; i < window_means.size(); ++i) CHECK(window_means[i] < window_means[i - 1]);

  const SearchState root = a.initial_state();
  const ActionMask legal = legal_actions(a, root);
  std::mt19937_64 fresh(99);
  const Problem div = sample_dataset(SyntaxTree::from_prefix("/ c x1"), 2, {}, fresh);
  const Problem sin = sample_dataset(SyntaxTree::from_prefix("+ c sin x0"), 2, {}, fresh);
  const Prediction pd = model.predict(root, div.dataset, legal);
  const Prediction ps = model.predict(root, sin.dataset, legal);
  CHECK(total_variation(pd.prior, ps.prior) > 0.1);
  CHECK(pd.prior[6] > ps.prior[6]);
  CHECK(ps.prior[2] > pd.prior[2]);
}

TEST_CASE("checkpoint round trip") {
  const Grammar& a = test::grammar("A");
  const auto problems = generate_problems(a, 2, {}, 12);
  ModelConfig mc;
  mc.dataset_encoder = DatasetEncoderKind::FlatMlp;
  mc.tree_encoder = TreeEncoderKind::PaddedOneHot;
  GuidanceModel model(a, mc);
  const auto records = records_for(a, problems);
  model.train_step(records);
  test::TempDir dir("ckpt");
  model.save(dir.path() / "m.json");
  const GuidanceModel back = GuidanceModel::load(dir.path() / "m.json", a);
  CHECK(back.parameters() == model.parameters());
  CHECK(back.config().dataset_encoder == DatasetEncoderKind::FlatMlp);
  const SearchState s = a.initial_state();
  const ActionMask legal = legal_actions(a, s);
  CHECK(back.predict(s, problems[0].dataset, legal).prior == model.predict(s, problems[0].dataset, legal).prior);
  CHECK_THROWS(GuidanceModel::load(dir.path() / "m.json", test::grammar("C")));
}

TEST_CASE("concurrent predictions agree with serial ones") {
  const Grammar& a = test::grammar("A");
  const auto problems = generate_problems(a, 4, {}, 13);
  ModelConfig mc;
  mc.dataset_encoder = DatasetEncoderKind::PooledSet;
  mc.tree_encoder = TreeEncoderKind::PaddedOneHot;
  const GuidanceModel model(a, mc);
  const SearchState s = a.initial_state();
  const ActionMask legal = legal_actions(a, s);
  std::vector<std::vector<double>> serial, parallel(4);
  for (const auto& p : problems) serial.push_back(model.predict(s, p.dataset, legal).prior);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < 4; ++i)
    threads.emplace_back([&, i] { parallel[i] = model.predict(s, problems[i].dataset, legal).prior; });
  for (auto& t : threads) t.join();
  CHECK(serial == parallel);
}

TEST_CASE("replay buffer") {
  auto record = [](double v) {
    ReplayRecord r;
    r.target_value = v;
    return r;
  };
  ReplayBuffer small(10);
  for (int i = 0; i < 12; ++i) small.append(record(i));
  CHECK(small.size() == 10u);
  const auto all = small.snapshot();
  CHECK(all.front().target_value == 2.0);
  CHECK(all.back().target_value == 11.0);

  ReplayBuffer big(2000);
  for (int i = 0; i < 1000; ++i) big.append(record(i));
  std::mt19937_64 rng(1);
  const auto batch = big.sample(64, rng);
  std::set<double> distinct;
  for (const auto& r : batch) distinct.insert(r.target_value);
  CHECK(distinct.size() == 64u);

  ReplayBuffer empty(5);
  CHECK_THROWS_AS(empty.sample(1, rng), std::out_of_range);
  CHECK_THROWS_AS(big.sample(1001, rng), std::out_of_range);
}

TEST_CASE("supervised targets follow the leftmost derivation") {
  const Grammar& a = test::grammar("A");
  const auto records = make_supervised_targets(SyntaxTree::from_prefix("+ c x0"), a, nullptr);
  REQUIRE(records.size() == 2u);
  CHECK(records[0].target_policy[0] == 1.0);
  CHECK(records[1].target_policy[26] == 1.0);
  CHECK(records[0].state.tree.prefix_string() == "S");
  CHECK(records[1].state.tree.prefix_string() == "+ c Variable");
  for (const auto& r : records) {
    CHECK(std::accumulate(r.target_policy.begin(), r.target_policy.end(), 0.0) == 1.0);
    CHECK(r.target_value == 1.0);
  }

  const auto discounted = make_supervised_targets(SyntaxTree::from_prefix("+ c x0"), a, nullptr, 1.0, 0.5);
  CHECK(discounted[0].target_value == 0.5);
  CHECK(discounted[1].target_value == 1.0);

  CHECK_THROWS_AS(derive(SyntaxTree::from_prefix("* x0 x1"), a), DerivationError);
  CHECK_THROWS_AS(derive(SyntaxTree::from_prefix("+ c S"), a), DerivationError);

  for (const char* name : {"A", "B", "C", "tiny"}) {
    const Grammar& g = test::grammar(name);
    for (const auto& p : generate_problems(g, 30, {}, 14)) {
      const auto steps = derive(p.tree, g);
      REQUIRE_FALSE(steps.empty());
      SearchState s = g.initial_state();
      for (const auto& st : steps) s = apply_rule(g, s, st.rule, TreeLimits{100, 100, 100});
      CHECK(s.tree == p.tree);
    }
  }
}

TEST_CASE("targets of failed paths become uniform") {
  const Grammar& a = test::grammar("A");
  auto records = make_supervised_targets(SyntaxTree::from_prefix("+ c x0"), a, nullptr);
  const auto kept = mcts_targets_filter(records, 0.5);
  CHECK(kept[0].target_policy == records[0].target_policy);
  const auto boundary = mcts_targets_filter(records, -0.9);
  CHECK(boundary[0].target_policy == records[0].target_policy);
  const auto failed = mcts_targets_filter(records, -1.0);
  CHECK(failed[0].target_policy == uniform_over(records[0].legal));
  CHECK(failed[1].target_policy[26] == 0.5);
  CHECK(failed[1].target_policy[27] == 0.5);
}

}  // TEST_SUITE
