#include "gmct/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace gmct {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sanitize(double v) { return std::isfinite(v) ? v : kInf; }

}  // namespace

SimplexResult nelder_mead(const Objective& f, std::vector<double> start, int max_iters, double tol,
                          double initial_step) {
  const std::size_t n = start.size();
  SimplexResult result;
  auto eval = [&](const std::vector<double>& x) {
    ++result.evaluations;
    return sanitize(f(x));
  };
  if (n == 0) {
    result.value = eval(start);
    return result;
  }

  constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;
  std::vector<std::vector<double>> simplex(n + 1, start);
  std::vector<double> values(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    simplex[i + 1][i] += initial_step * std::max(std::abs(start[i]), 1.0);
  }
  for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

    double size = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t d = 0; d < n; ++d) size = std::max(size, std::abs(simplex[i][d] - simplex[best][d]));
    }
    if (size < tol) break;
    if (values[best] == 0.0) break;
    if (std::isfinite(values[worst]) &&
        values[worst] - values[best] <= 1e-15 * (1.0 + std::abs(values[best])) && size < 1e-6) {
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t d = 0; d < n; ++d) centroid[d] += simplex[i][d] / static_cast<double>(n);
    }
    for (std::size_t d = 0; d < n; ++d) trial[d] = centroid[d] + kReflect * (centroid[d] - simplex[worst][d]);
    const double fr = eval(trial);

    if (fr < values[best]) {
      for (std::size_t d = 0; d < n; ++d) trial2[d] = centroid[d] + kExpand * (trial[d] - centroid[d]);
      const double fe = eval(trial2);
      if (fe < fr) {
        simplex[worst] = trial2;
        values[worst] = fe;
      } else {
        simplex[worst] = trial;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = trial;
      values[worst] = fr;
      continue;
    }
    // contraction: outside if the reflection improved on the worst point
    const bool outside = fr < values[worst];
    const auto& anchor = outside ? trial : simplex[worst];
    for (std::size_t d = 0; d < n; ++d) trial2[d] = centroid[d] + kContract * (anchor[d] - centroid[d]);
    const double fc = eval(trial2);
    if (fc < (outside ? fr : values[worst])) {
      simplex[worst] = trial2;
      values[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t d = 0; d < n; ++d) simplex[i][d] = simplex[best][d] + kShrink * (simplex[i][d] - simplex[best][d]);
      values[i] = eval(simplex[i]);
    }
  }

  const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
  result.x = simplex[best];
  result.value = values[best];
  result.iterations = iter;
  return result;
}

FitResult fit_constants(const SyntaxTree& tree, const TabularDataset& dataset, const FitConfig& fit,
                        const RewardConfig& reward) {
  const auto n = static_cast<std::size_t>(tree.n_constants());
  auto objective = [&](std::span<const double> constants) {
    EvalResult r = evaluate(tree, dataset.xs, constants);
    if (!r) return kInf;
    return relative_rmse(r.values(), dataset.y, reward);
  };

  FitResult out;
  if (n == 0) {
    out.mse = objective({});
    out.evaluations = 1;
    return out;
  }

  std::mt19937_64 rng(fit.seed);
  std::normal_distribution<double> noise(0.0, fit.perturb_scale);
  out.mse = kInf;
  out.constants.assign(n, fit.init_value);
  for (int restart = 0; restart < std::max(fit.restarts, 1); ++restart) {
    std::vector<double> start(n, fit.init_value);
    if (restart > 0) {
      for (auto& v : start) v += noise(rng);
    }
    SimplexResult r = nelder_mead(objective, start, fit.max_iters, fit.tol);
    out.evaluations += r.evaluations;
    if (r.value < out.mse) {
      out.mse = r.value;
      out.constants = r.x;
    }
    if (out.mse < 1e-14) break;
  }
  return out;
}

}  // namespace gmct
