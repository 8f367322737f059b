#include <doctest.h>

#include <numeric>
#include <random>

#include "gmct/datagen.hpp"
#include "gmct/reward.hpp"
#include "support.hpp"

using namespace gmct;

namespace {

// y = x0 = +-1 (variance 1); the tree x0 + x1 is off by exactly x1 = e on every row.
TabularDataset offset_data(double e) {
  Eigen::MatrixXd xs(4, 2);
  xs << 1, e, -1, e, 1, e, -1, e;
  return make_dataset("off", xs, {1, -1, 1, -1});
}

SearchState state_of(const std::string& prefix) { return SearchState{SyntaxTree::from_prefix(prefix), {}}; }

}  // namespace

TEST_SUITE("reward") {

TEST_CASE("relative rmse") {
  RewardConfig cfg;
  const std::vector<double> y{1, 2, 3, 4};
  CHECK(relative_rmse(y, y, cfg) == 0.0);
  CHECK_THROWS(relative_rmse(std::vector<double>{1}, y, cfg));

  SUBCASE("predicting the mean scores one under std normalisation") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(3.0, 7.0);
    for (int i = 0; i < 100; ++i) {
      std::vector<double> t(25);
      for (double& v : t) v = n(rng);
      const double mean = std::accumulate(t.begin(), t.end(), 0.0) / 25.0;
      CHECK(relative_rmse(std::vector<double>(25, mean), t, cfg) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("constant target floors the variance") {
    const std::vector<double> flat{2, 2, 2};
    const double r = relative_rmse(std::vector<double>{2, 2, 2.001}, flat, cfg);
    CHECK(std::isfinite(r));
    CHECK(r == doctest::Approx(std::sqrt(1e-6 / 3 / 1e-12)));
  }
  SUBCASE("other normalisations") {
    cfg.normalization = Normalization::None;
    CHECK(relative_rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}, cfg) ==
          doctest::Approx(std::sqrt(12.5)));
    cfg.normalization = Normalization::Range;
    CHECK(relative_rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}, cfg) ==
          doctest::Approx(std::sqrt(12.5)));
    CHECK(relative_rmse(std::vector<double>{1, 1}, std::vector<double>{0, 4}, cfg) ==
          doctest::Approx(std::sqrt(5.0) / 4.0));
  }
}

TEST_CASE("reward cases") {
  RewardConfig cfg;
  const TabularDataset ds = offset_data(0.0);

  SUBCASE("depth limit") {
    std::string deep;
    for (int i = 0; i < 10; ++i) deep += "sin ";
    deep += "x0";
    REQUIRE(SyntaxTree::from_prefix(deep).depth() == 11);
    CHECK(compute_reward(state_of(deep), ds, cfg) == -1.0);
  }
  SUBCASE("constant limit") {
    cfg.limits.max_constants = 2;
    CHECK(compute_reward(state_of("+ c + c + c x0"), ds, cfg) == -1.0);
  }
  SUBCASE("node limit") {
    std::string big = "x0";
    for (int i = 0; i < 12; ++i) big = "+ x0 " + big;
    REQUIRE(SyntaxTree::from_prefix(big).node_count() == 26);
    CHECK(compute_reward(state_of(big), ds, cfg) == -1.0);
  }
  SUBCASE("error at the cutoff boundary") {
    CHECK(compute_reward(state_of("+ x0 x1"), offset_data(0.0), cfg) == 1.0);
    CHECK(compute_reward(state_of("+ x0 x1"), offset_data(0.3), cfg) == doctest::Approx(0.7));
    CHECK(compute_reward(state_of("+ x0 x1"), offset_data(1.999), cfg) == doctest::Approx(-0.999));
    CHECK(compute_reward(state_of("+ x0 x1"), offset_data(2.001), cfg) == -1.0);
  }
  SUBCASE("incomplete tree") { CHECK(compute_reward(state_of("+ x0 S"), ds, cfg) == 0.0); }
  SUBCASE("evaluation failure") {
    Eigen::MatrixXd xs(2, 1);
    xs << -1, 1;
    CHECK(compute_reward(state_of("log x0"), make_dataset("n", xs, {0, 1}), cfg) == -1.0);
  }
  SUBCASE("constants are fitted unless given") {
    Eigen::MatrixXd xs(3, 1);
    xs << 1, 2, 3;
    const TabularDataset lin = make_dataset("l", xs, {3, 6, 9});
    CHECK(compute_reward(state_of("* c x0"), lin, cfg) > 0.999);
    const std::vector<double> wrong{1.0};
    CHECK(compute_reward(state_of("* c x0"), lin, cfg, std::span<const double>(wrong)) < 0.0);
  }
}

TEST_CASE("reward mapping") {
  RewardConfig cfg;
  CHECK(reward_from_error(0.0, cfg) == 1.0);
  CHECK(reward_from_error(0.3, cfg) == doctest::Approx(0.7));
  CHECK(reward_from_error(2.0, cfg) == doctest::Approx(-1.0));
  CHECK(reward_from_error(2.0 + 1e-9, cfg) == -1.0);
  CHECK(reward_from_error(std::nan(""), cfg) == -1.0);
  CHECK(reward_from_error(0.0009, cfg) > kSolvedReward);
  CHECK(reward_from_error(0.001, cfg) <= kSolvedReward);
  for (double e = 0.0; e < 2.0; e += 0.01) CHECK(reward_from_error(e, cfg) > reward_from_error(e + 0.005, cfg));
}

TEST_CASE("reward stays in range on random complete trees") {
  const Grammar& c = test::grammar("C");
  const auto problems = generate_problems(c, 20, {}, 3);
  std::mt19937_64 rng(5);
  RewardConfig cfg;
  for (int i = 0; i < 2000; ++i) {
    const SyntaxTree t = sample_tree(c, {}, rng);
    const auto& ds = problems[static_cast<std::size_t>(i) % problems.size()].dataset;
    const std::vector<double> ones(static_cast<std::size_t>(t.n_constants()), 1.0);
    const double r = compute_reward(SearchState{t, {}}, ds, cfg, std::span<const double>(ones));
    CHECK(r >= -1.0);
    CHECK(r <= 1.0);
  }
}

}  // TEST_SUITE
