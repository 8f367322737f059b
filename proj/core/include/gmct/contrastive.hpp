#pragma once

#include <vector>

#include "gmct/dataset.hpp"
#include "gmct/guidance.hpp"

namespace gmct {

// Halves of each source dataset (from sort_split) and the pairwise targets:
// t(i, j) = 1 for i != j sharing a source or a skeleton, else 0.
struct ContrastiveBatch {
  std::vector<TabularDataset> halves;
  std::vector<int> source;
  nn::Matrix target;
};

ContrastiveBatch make_contrastive_batch(const std::vector<TabularDataset>& datasets);

struct ContrastiveResult {
  double loss = 0.0;
  double mean_self = 0.0;   // mean s over positive pairs
  double mean_other = 0.0;  // mean s over negative pairs
  int zero_norm = 0;        // embeddings treated as cosine 0
};

// s = (cos + 1) / 2 pairwise over columns of z; loss is mean BCE(s, 1) over
// positive off-diagonal entries plus lambda * mean BCE(s, 0) over negative ones.
// Writes dL/dz into `dz` when given.
ContrastiveResult contrastive_loss(const nn::Matrix& z, const nn::Matrix& target, double lambda,
                                   nn::Matrix* dz = nullptr);

nn::Matrix similarity_matrix(const nn::Matrix& z);

// Mean within-source vs. cross-source similarity of the halves' embeddings.
struct SimilaritySummary {
  double same_source = 0.0;
  double cross_source = 0.0;
};
SimilaritySummary summarize_similarity(const GuidanceModel& model, const ContrastiveBatch& batch);

// One optimizer step on the model's dataset encoder.
ContrastiveResult contrastive_step(GuidanceModel& model, const ContrastiveBatch& batch, double lambda);

}  // namespace gmct
