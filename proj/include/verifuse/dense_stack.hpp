#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "verifuse/attention.hpp"
#include "verifuse/common.hpp"

namespace verifuse {

using RowVector = Eigen::RowVectorXd;

enum class Mode { train, infer };

/// Column 0 of a head's output is p_fake, column 1 is p_real.
struct ProbabilityPair {
  double fake = 0.5;
  double real = 0.5;
  bool operator==(const ProbabilityPair&) const = default;
};

/// Dense layer; hidden layers are followed by batch-norm, ReLU and dropout.
struct DenseLayer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
  bool batch_norm = false;
  Matrix gamma, beta;                   // 1 x out (batch_norm only)
  Matrix running_mean, running_var;     // 1 x out (batch_norm only)

  Eigen::Index in() const { return weight.rows(); }
  Eigen::Index out() const { return weight.cols(); }
};

/// Trainable tensors in a fixed order: per layer W, b, then gamma, beta.
struct Gradients {
  std::vector<Matrix> tensors;
};

/// Per-layer intermediates of a forward pass, kept for backward().
struct ForwardCache {
  struct Layer {
    Matrix input;    // n x in
    Matrix xhat;     // normalised pre-activation (batch_norm)
    RowVector inv_std;
    Matrix pre_relu;  // affine output before ReLU
    Matrix dropout_scale;  // n x out multipliers (0 or 1/(1-rate)); empty when dropout off
  };
  std::vector<Layer> layers;
  Matrix probabilities;  // n x 2
  Mode mode = Mode::infer;
};

/// Stack of dense layers ending in a 2-unit layer normalised with softmax:
/// dense -> batch-norm -> ReLU -> dropout for every hidden layer.
class DenseStack {
 public:
  DenseStack() = default;

  DenseStack(int input_dim, std::vector<int> widths, double dropout = 0.4, double bn_epsilon = 1e-3)
      : input_dim_(input_dim), widths_(std::move(widths)), dropout_(dropout), bn_epsilon_(bn_epsilon) {
    if (input_dim < 1) throw ShapeError("DenseStack: input dimension must be positive");
    if (widths_.empty() || widths_.back() != 2) throw ShapeError("DenseStack: widths must end in 2");
    if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("DenseStack: dropout must lie in [0, 1)");
    int in = input_dim;
    for (std::size_t i = 0; i < widths_.size(); ++i) {
      if (widths_[i] < 1) throw ShapeError("DenseStack: widths must be positive");
      DenseLayer l;
      l.weight = Matrix::Zero(in, widths_[i]);
      l.bias = Matrix::Zero(1, widths_[i]);
      l.batch_norm = i + 1 < widths_.size();
      if (l.batch_norm) {
        l.gamma = Matrix::Ones(1, widths_[i]);
        l.beta = Matrix::Zero(1, widths_[i]);
        l.running_mean = Matrix::Zero(1, widths_[i]);
        l.running_var = Matrix::Ones(1, widths_[i]);
      }
      layers_.push_back(std::move(l));
      in = widths_[i];
    }
  }

  int input_dim() const { return input_dim_; }
  const std::vector<int>& widths() const { return widths_; }
  double dropout() const { return dropout_; }
  double bn_epsilon() const { return bn_epsilon_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Glorot-uniform weights, zero biases, unit gamma, zero beta.
  void initialize(Rng& rng) {
    for (auto& l : layers_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(l.in() + l.out()));
      for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
        for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = rng.uniform(-limit, limit);
      l.bias.setZero();
      if (l.batch_norm) {
        l.gamma.setOnes();
        l.beta.setZero();
        l.running_mean.setZero();
        l.running_var.setOnes();
      }
    }
  }

  std::vector<Matrix*> parameters() {
    std::vector<Matrix*> p;
    for (auto& l : layers_) {
      p.push_back(&l.weight);
      p.push_back(&l.bias);
      if (l.batch_norm) {
        p.push_back(&l.gamma);
        p.push_back(&l.beta);
      }
    }
    return p;
  }

  /// Row-wise (p_fake, p_real). Train mode normalises with batch statistics
  /// and applies inverted dropout drawn from `dropout_rng`; infer mode uses
  /// the running statistics and no dropout.
  Matrix forward(const Matrix& x, Mode mode, Rng* dropout_rng = nullptr, ForwardCache* cache = nullptr) const {
    if (x.cols() != input_dim_) {
      throw ShapeError("DenseStack: input has " + std::to_string(x.cols()) + " columns, expected " +
                       std::to_string(input_dim_));
    }
    if (!x.allFinite()) throw DataError("DenseStack: non-finite input");
    if (mode == Mode::train && x.rows() < 1) throw ShapeError("DenseStack: empty training batch");
    if (cache) {
      cache->layers.clear();
      cache->mode = mode;
    }
    Matrix a = x;
    for (const auto& l : layers_) {
      ForwardCache::Layer c;
      if (cache) c.input = a;
      Matrix z = a * l.weight;
      z.rowwise() += l.bias.row(0);
      if (!l.batch_norm) {
        a = std::move(z);
        if (cache) cache->layers.push_back(std::move(c));
        break;
      }
      RowVector mean, var;
      if (mode == Mode::train) {
        mean = z.colwise().mean();
        var = (z.rowwise() - mean).array().square().colwise().mean().matrix();
      } else {
        mean = l.running_mean.row(0);
        var = l.running_var.row(0);
      }
      const RowVector inv_std = (var.array() + bn_epsilon_).rsqrt().matrix();
      Matrix xhat = ((z.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
      Matrix y = ((xhat.array().rowwise() * l.gamma.row(0).array()).rowwise() + l.beta.row(0).array()).matrix();
      a = y.cwiseMax(0.0);
      if (mode == Mode::train && dropout_ > 0.0) {
        if (!dropout_rng) throw InvalidArgument("DenseStack: train mode with dropout needs an RNG");
        const double keep_scale = 1.0 / (1.0 - dropout_);
        Matrix scale(a.rows(), a.cols());
        for (Eigen::Index i = 0; i < scale.rows(); ++i)
          for (Eigen::Index j = 0; j < scale.cols(); ++j)
            scale(i, j) = dropout_rng->bernoulli(dropout_) ? 0.0 : keep_scale;
        a = a.cwiseProduct(scale);
        if (cache) c.dropout_scale = std::move(scale);
      }
      if (cache) {
        c.xhat = std::move(xhat);
        c.inv_std = inv_std;
        c.pre_relu = std::move(y);
        cache->layers.push_back(std::move(c));
      }
    }
    Matrix p(a.rows(), 2);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double m = std::max(a(i, 0), a(i, 1));
      const double e0 = std::exp(a(i, 0) - m), e1 = std::exp(a(i, 1) - m);
      p(i, 0) = e0 / (e0 + e1);
      p(i, 1) = e1 / (e0 + e1);
    }
    if (cache) cache->probabilities = p;
    return p;
  }

  /// Gradient of the mean clamped cross-entropy -log(clamp(p_true)) with
  /// respect to every trainable tensor, given a cached forward pass.
  /// `fake` holds 1 for the fake class, 0 for real.
  Gradients backward(const ForwardCache& cache, const std::vector<int>& fake, double epsilon = 1e-7) const {
    const Matrix& p = cache.probabilities;
    const Eigen::Index n = p.rows();
    if (static_cast<Eigen::Index>(fake.size()) != n) throw ShapeError("backward: label count != batch size");
    Matrix d(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int t = fake[static_cast<std::size_t>(i)] ? 0 : 1;
      const double pt = p(i, t);
      if (pt < epsilon || pt > 1.0 - epsilon) {
        d.row(i).setZero();  // clamp is flat here
        continue;
      }
      for (int j = 0; j < 2; ++j) d(i, j) = (p(i, j) - (j == t ? 1.0 : 0.0)) / static_cast<double>(n);
    }

    Gradients g;
    std::vector<std::vector<Matrix>> per_layer(layers_.size());
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& l = layers_[li];
      const auto& c = cache.layers[li];
      Matrix dz;
      if (!l.batch_norm) {
        dz = d;
        per_layer[li] = {c.input.transpose() * dz, dz.colwise().sum()};
      } else {
        Matrix da = d;
        if (c.dropout_scale.size() > 0) da = da.cwiseProduct(c.dropout_scale);
        const Matrix dy = da.cwiseProduct((c.pre_relu.array() > 0.0).cast<double>().matrix());
        const RowVector dgamma = dy.cwiseProduct(c.xhat).colwise().sum();
        const RowVector dbeta = dy.colwise().sum();
        const Matrix dxhat = (dy.array().rowwise() * l.gamma.row(0).array()).matrix();
        if (cache.mode == Mode::train) {
          const double m = static_cast<double>(dxhat.rows());
          const RowVector sum_dxhat = dxhat.colwise().sum();
          const RowVector sum_dxhat_xhat = dxhat.cwiseProduct(c.xhat).colwise().sum();
          Matrix t = (dxhat * m).rowwise() - sum_dxhat;
          t -= (c.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
          dz = ((t.array().rowwise() * c.inv_std.array()) / m).matrix();
        } else {
          dz = (dxhat.array().rowwise() * c.inv_std.array()).matrix();
        }
        per_layer[li] = {c.input.transpose() * dz, dz.colwise().sum(), dgamma, dbeta};
      }
      if (li > 0) d = dz * l.weight.transpose();
    }
    for (auto& v : per_layer)
      for (auto& m : v) g.tensors.push_back(std::move(m));
    return g;
  }

  /// Sets the batch-norm running statistics to the population mean and
  /// variance of each layer's pre-activation over `x`, layer by layer, with
  /// earlier layers already using their new statistics.
  void recompute_batch_norm_statistics(const Matrix& x) {
    if (x.rows() < 1) return;
    Matrix a = x;
    for (auto& l : layers_) {
      Matrix z = a * l.weight;
      z.rowwise() += l.bias.row(0);
      if (!l.batch_norm) break;
      const RowVector mean = z.colwise().mean();
      const RowVector var = (z.rowwise() - mean).array().square().colwise().mean().matrix();
      l.running_mean = mean;
      l.running_var = var;
      const RowVector inv_std = (var.array() + bn_epsilon_).rsqrt().matrix();
      Matrix y = (((z.rowwise() - mean).array().rowwise() * inv_std.array()).rowwise() * l.gamma.row(0).array())
                     .matrix();
      y.rowwise() += l.beta.row(0);
      a = y.cwiseMax(0.0);
    }
  }

 private:
  int input_dim_ = 0;
  std::vector<int> widths_;
  double dropout_ = 0.4;
  double bn_epsilon_ = 1e-3;
  std::vector<DenseLayer> layers_;
};

/// Single-vector forward pass returning the probability pair.
inline ProbabilityPair head_forward(const DenseStack& stack, std::span<const float> x, Mode mode,
                                    Rng* dropout_rng = nullptr) {
  Matrix row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = x[j];
  const Matrix p = stack.forward(row, mode, dropout_rng);
  return {p(0, 0), p(0, 1)};
}

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.980;
  double epsilon = 1e-7;
};

/// Adam with bias correction; one moment pair per trainable tensor.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Matrix*>& params, const Gradients& grads) {
    if (params.size() != grads.tensors.size()) throw ShapeError("Adam: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(Matrix::Zero(p->rows(), p->cols()));
        v_.push_back(Matrix::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Matrix& g = grads.tensors[i];
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      const Matrix update =
          ((m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.epsilon) * cfg_.learning_rate).matrix();
      *params[i] -= update;
    }
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

}  // namespace verifuse
