#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

// Minimal dense-network plumbing over one flat parameter vector.
namespace gmct::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Weights (out x in, column-major) followed by the bias, at `offset`.
struct DenseLayer {
  Eigen::Index in = 0;
  Eigen::Index out = 0;
  Eigen::Index offset = 0;

  Eigen::Index size() const noexcept { return out * in + out; }
};

class ParameterLayout {
 public:
  DenseLayer add(Eigen::Index in, Eigen::Index out);
  Eigen::Index size() const noexcept { return size_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  // He-normal weights, zero biases.
  Vector initialize(std::mt19937_64& rng) const;

 private:
  std::vector<DenseLayer> layers_;
  Eigen::Index size_ = 0;
};

// Columns are samples.
Matrix dense_forward(const Vector& theta, const DenseLayer& layer, const Matrix& x);
// Accumulates into `grad`; returns dL/dx.
Matrix dense_backward(const Vector& theta, const DenseLayer& layer, const Matrix& x, const Matrix& dz,
                      Vector& grad);

// Stack of dense layers with ReLU between them. The last layer is linear
// unless `relu_output` is set.
struct Mlp {
  std::vector<DenseLayer> layers;
  bool relu_output = false;

  struct Cache {
    std::vector<Matrix> inputs;  // input of each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
  };

  Eigen::Index in() const noexcept { return layers.front().in; }
  Eigen::Index out() const noexcept { return layers.back().out; }
  bool empty() const noexcept { return layers.empty(); }

  Matrix forward(const Vector& theta, const Matrix& x, Cache* cache = nullptr) const;
  Matrix backward(const Vector& theta, const Cache& cache, Matrix dout, Vector& grad) const;
};

Mlp make_mlp(ParameterLayout& layout, const std::vector<Eigen::Index>& widths, bool relu_output);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, AdamConfig config = {});

  void step(Vector& theta, const Vector& grad);
  std::int64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }

  // Exposed for checkpointing.
  Vector& first_moment() noexcept { return m_; }
  Vector& second_moment() noexcept { return v_; }
  void set_steps(std::int64_t t) noexcept { t_ = t; }

 private:
  AdamConfig config_;
  Vector m_;
  Vector v_;
  std::int64_t t_ = 0;
};

}  // namespace gmct::nn
