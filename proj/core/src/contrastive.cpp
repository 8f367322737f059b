#include "gmct/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gmct {

ContrastiveBatch make_contrastive_batch(const std::vector<TabularDataset>& datasets) {
  if (datasets.size() < 2) throw std::invalid_argument("contrastive batch needs at least two source datasets");
  ContrastiveBatch batch;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    auto [a, b] = sort_split(datasets[i]);
    batch.halves.push_back(std::move(a));
    batch.halves.push_back(std::move(b));
    batch.source.push_back(static_cast<int>(i));
    batch.source.push_back(static_cast<int>(i));
  }
  const auto n = static_cast<Eigen::Index>(batch.halves.size());
  batch.target = nn::Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto& a = batch.halves[static_cast<std::size_t>(i)];
      const auto& b = batch.halves[static_cast<std::size_t>(j)];
      const bool same_source = batch.source[static_cast<std::size_t>(i)] == batch.source[static_cast<std::size_t>(j)];
      const bool same_skeleton = a.source_skeleton && b.source_skeleton && *a.source_skeleton == *b.source_skeleton;
      batch.target(i, j) = (same_source || same_skeleton) ? 1.0 : 0.0;
    }
  }
  return batch;
}

nn::Matrix similarity_matrix(const nn::Matrix& z) {
  const nn::Vector norms = z.colwise().norm().transpose();
  nn::Matrix s = nn::Matrix::Constant(z.cols(), z.cols(), 0.5);
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      if (norms[i] > 0.0 && norms[j] > 0.0) s(i, j) = (z.col(i).dot(z.col(j)) / (norms[i] * norms[j]) + 1.0) / 2.0;
    }
  }
  return s;
}

ContrastiveResult contrastive_loss(const nn::Matrix& z, const nn::Matrix& target, double lambda, nn::Matrix* dz) {
  const Eigen::Index n = z.cols();
  if (target.rows() != n || target.cols() != n) throw std::invalid_argument("target shape does not match embeddings");
  constexpr double kClamp = 1e-12;
  const nn::Vector norms = z.colwise().norm().transpose();
  ContrastiveResult out;
  for (Eigen::Index i = 0; i < n; ++i) out.zero_norm += norms[i] == 0.0 ? 1 : 0;

  int n_self = 0;
  int n_other = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      (target(i, j) > 0.5 ? n_self : n_other) += 1;
    }
  }
  if (dz) dz->setZero(z.rows(), n);
  double self_sum = 0.0;
  double other_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool degenerate = norms[i] == 0.0 || norms[j] == 0.0;
      const double cos = degenerate ? 0.0 : z.col(i).dot(z.col(j)) / (norms[i] * norms[j]);
      const double s = (cos + 1.0) / 2.0;
      const double t = target(i, j);
      const bool positive = t > 0.5;
      const double weight = positive ? 1.0 / n_self : lambda / n_other;
      const double sc = std::clamp(s, kClamp, 1.0 - kClamp);
      const double bce = -(t * std::log(sc) + (1.0 - t) * std::log(1.0 - sc));
      out.loss += weight * bce;
      (positive ? self_sum : other_sum) += s;
      if (!dz || degenerate) continue;
      const double dbce_ds = -t / sc + (1.0 - t) / (1.0 - sc);
      const double g = weight * dbce_ds * 0.5;
      const double ni = norms[i];
      const double nj = norms[j];
      dz->col(i) += g * (z.col(j) / (ni * nj) - cos * z.col(i) / (ni * ni));
      dz->col(j) += g * (z.col(i) / (ni * nj) - cos * z.col(j) / (nj * nj));
    }
  }
  out.mean_self = n_self ? self_sum / n_self : 0.0;
  out.mean_other = n_other ? other_sum / n_other : 0.0;
  return out;
}

namespace {

std::vector<const TabularDataset*> pointers(const ContrastiveBatch& batch) {
  std::vector<const TabularDataset*> out;
  for (const auto& h : batch.halves) out.push_back(&h);
  return out;
}

}  // namespace

SimilaritySummary summarize_similarity(const GuidanceModel& model, const ContrastiveBatch& batch) {
  const auto ptrs = pointers(batch);
  const nn::Matrix s = similarity_matrix(model.embed_datasets(ptrs));
  SimilaritySummary out;
  int same = 0;
  int cross = 0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (i == j) continue;
      if (batch.source[static_cast<std::size_t>(i)] == batch.source[static_cast<std::size_t>(j)]) {
        out.same_source += s(i, j);
        ++same;
      } else {
        out.cross_source += s(i, j);
        ++cross;
      }
    }
  }
  if (same) out.same_source /= same;
  if (cross) out.cross_source /= cross;
  return out;
}

ContrastiveResult contrastive_step(GuidanceModel& model, const ContrastiveBatch& batch, double lambda) {
  const auto ptrs = pointers(batch);
  GuidanceModel::EncoderCache cache;
  const nn::Matrix z = model.embed_datasets(ptrs, &cache);
  nn::Matrix dz;
  const ContrastiveResult r = contrastive_loss(z, batch.target, lambda, &dz);
  if (!std::isfinite(r.loss)) throw NonFiniteLoss("non-finite contrastive loss");
  nn::Vector grad = nn::Vector::Zero(model.parameters().size());
  model.backprop_datasets(cache, dz, grad);
  model.optimizer().step(model.parameters(), grad);
  return r;
}

}  // namespace gmct
