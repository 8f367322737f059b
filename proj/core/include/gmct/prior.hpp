#pragma once

#include <vector>

#include "gmct/dataset.hpp"
#include "gmct/expression.hpp"
#include "gmct/grammar.hpp"

namespace gmct {

struct Prediction {
  std::vector<double> prior;  // one entry per rule id; zero off the legal mask
  double value = 0.0;         // critic estimate in [-1, 1]
};

// Source of priors P(s, a) and values V(s) for the search. Implementations
// must be safe to call concurrently from independent searches.
class Guidance {
 public:
  virtual ~Guidance() = default;
  virtual Prediction predict(const SearchState& state, const TabularDataset& dataset,
                             const ActionMask& legal) const = 0;
};

class UniformGuidance final : public Guidance {
 public:
  Prediction predict(const SearchState& state, const TabularDataset& dataset,
                     const ActionMask& legal) const override;
};

// Uniform distribution over the legal entries of `mask`.
std::vector<double> uniform_over(const ActionMask& mask);

}  // namespace gmct
