#include "gmct/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace gmct::nn {

DenseLayer ParameterLayout::add(Eigen::Index in, Eigen::Index out) {
  if (in <= 0 || out <= 0) throw std::invalid_argument("dense layer dimensions must be positive");
  DenseLayer layer{in, out, size_};
  size_ += layer.size();
  layers_.push_back(layer);
  return layer;
}

Vector ParameterLayout::initialize(std::mt19937_64& rng) const {
  Vector theta = Vector::Zero(size_);
  for (const auto& layer : layers_) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(layer.in)));
    for (Eigen::Index i = 0; i < layer.out * layer.in; ++i) theta[layer.offset + i] = dist(rng);
  }
  return theta;
}

namespace {

Eigen::Map<const Matrix> weights(const Vector& theta, const DenseLayer& l) {
  return {theta.data() + l.offset, l.out, l.in};
}

Eigen::Map<const Vector> bias(const Vector& theta, const DenseLayer& l) {
  return {theta.data() + l.offset + l.out * l.in, l.out};
}

}  // namespace

Matrix dense_forward(const Vector& theta, const DenseLayer& layer, const Matrix& x) {
  if (x.rows() != layer.in) throw std::invalid_argument("dense_forward: input width mismatch");
  Matrix z = weights(theta, layer) * x;
  z.colwise() += bias(theta, layer);
  return z;
}

Matrix dense_backward(const Vector& theta, const DenseLayer& layer, const Matrix& x, const Matrix& dz,
                      Vector& grad) {
  Eigen::Map<Matrix> gw(grad.data() + layer.offset, layer.out, layer.in);
  Eigen::Map<Vector> gb(grad.data() + layer.offset + layer.out * layer.in, layer.out);
  gw.noalias() += dz * x.transpose();
  gb += dz.rowwise().sum();
  return weights(theta, layer).transpose() * dz;
}

Matrix Mlp::forward(const Vector& theta, const Matrix& x, Cache* cache) const {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Matrix z = dense_forward(theta, layers[i], h);
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(z);
    }
    const bool last = i + 1 == layers.size();
    h = (last && !relu_output) ? std::move(z) : Matrix(z.cwiseMax(0.0));
  }
  return h;
}

Matrix Mlp::backward(const Vector& theta, const Cache& cache, Matrix dout, Vector& grad) const {
  for (std::size_t k = layers.size(); k-- > 0;) {
    const bool last = k + 1 == layers.size();
    if (!last || relu_output) dout = dout.cwiseProduct((cache.pre[k].array() > 0.0).cast<double>().matrix());
    dout = dense_backward(theta, layers[k], cache.inputs[k], dout, grad);
  }
  return dout;
}

Mlp make_mlp(ParameterLayout& layout, const std::vector<Eigen::Index>& widths, bool relu_output) {
  Mlp mlp;
  mlp.relu_output = relu_output;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) mlp.layers.push_back(layout.add(widths[i], widths[i + 1]));
  return mlp;
}

Adam::Adam(Eigen::Index n, AdamConfig config)
    : config_(config), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

void Adam::step(Vector& theta, const Vector& grad) {
  if (grad.size() != theta.size() || m_.size() != theta.size()) {
    throw std::invalid_argument("Adam::step: size mismatch");
  }
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  theta.array() -= config_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

}  // namespace gmct::nn
