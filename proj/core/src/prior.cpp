#include "gmct/prior.hpp"

namespace gmct {

std::vector<double> uniform_over(const ActionMask& mask) {
  std::vector<double> out(mask.size(), 0.0);
  const int n = count_legal(mask);
  if (n == 0) return out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out[i] = 1.0 / n;
  }
  return out;
}

Prediction UniformGuidance::predict(const SearchState&, const TabularDataset&, const ActionMask& legal) const {
  return Prediction{uniform_over(legal), 0.0};
}

}  // namespace gmct
