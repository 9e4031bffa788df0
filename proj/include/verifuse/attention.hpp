#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "verifuse/common.hpp"

namespace verifuse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Optional key mask: 1 keeps a key, 0 removes it from every softmax row.
using KeyMask = std::vector<int>;

/// softmax(Q K^T / sqrt(d_k)) with masked keys at weight zero. Rows are
/// computed with the row maximum subtracted, so large scores stay finite.
inline Matrix attention_weights(const Matrix& q, const Matrix& k, const KeyMask* mask = nullptr) {
  if (q.cols() != k.cols()) {
    throw ShapeError("attention: Q has " + std::to_string(q.cols()) + " columns, K has " + std::to_string(k.cols()));
  }
  if (q.cols() < 1) throw ShapeError("attention: d_k must be >= 1");
  if (mask && mask->size() != static_cast<std::size_t>(k.rows())) throw ShapeError("attention: mask length != n_k");
  if (mask && std::none_of(mask->begin(), mask->end(), [](int m) { return m != 0; })) {
    throw InvalidArgument("attention: every key is masked, softmax is undefined");
  }
  Matrix scores = (q * k.transpose()) / std::sqrt(static_cast<double>(q.cols()));
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (mask) {
    for (Eigen::Index j = 0; j < k.rows(); ++j)
      if ((*mask)[static_cast<std::size_t>(j)] == 0) scores.col(j).setConstant(kNegInf);
  }
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double m = scores.row(i).maxCoeff();
    scores.row(i) = (scores.row(i).array() - m).exp().matrix();
    scores.row(i) /= scores.row(i).sum();
  }
  return scores;
}

/// Attention(Q, K, V) = softmax(Q K^T / sqrt(d_k)) V.
inline Matrix scaled_dot_product_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                           const KeyMask* mask = nullptr) {
  if (k.rows() != v.rows()) throw ShapeError("attention: K and V row counts differ");
  return attention_weights(q, k, mask) * v;
}

/// Per-head projections W_i^Q, W_i^K (d_model x d_k), W_i^V (d_model x d_v)
/// and the output projection W^O (h*d_v x d_model).
struct MultiHeadParams {
  int heads = 1;
  int d_model = 1;
  int d_k = 1;
  int d_v = 1;
  std::vector<Matrix> w_q, w_k, w_v;
  Matrix w_o;

  void validate() const {
    if (heads < 1) throw ShapeError("multi-head: h must be >= 1");
    if (d_model < 1 || d_k < 1 || d_v < 1) throw ShapeError("multi-head: dimensions must be >= 1");
    if (w_q.size() != static_cast<std::size_t>(heads) || w_k.size() != w_q.size() || w_v.size() != w_q.size()) {
      throw ShapeError("multi-head: projection count != h");
    }
    for (int i = 0; i < heads; ++i) {
      if (w_q[i].rows() != d_model || w_q[i].cols() != d_k || w_k[i].rows() != d_model || w_k[i].cols() != d_k ||
          w_v[i].rows() != d_model || w_v[i].cols() != d_v) {
        throw ShapeError("multi-head: projection " + std::to_string(i) + " has inconsistent shape");
      }
    }
    if (w_o.rows() != heads * d_v || w_o.cols() != d_model) throw ShapeError("multi-head: W^O shape mismatch");
  }

  /// Entries drawn N(0, scale^2).
  static MultiHeadParams random(int heads, int d_model, int d_k, int d_v, Rng& rng, double scale = 1.0) {
    auto fill = [&](Eigen::Index r, Eigen::Index c) {
      Matrix m(r, c);
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal() * scale;
      return m;
    };
    MultiHeadParams p{heads, d_model, d_k, d_v, {}, {}, {}, {}};
    for (int i = 0; i < heads; ++i) {
      p.w_q.push_back(fill(d_model, d_k));
      p.w_k.push_back(fill(d_model, d_k));
      p.w_v.push_back(fill(d_model, d_v));
    }
    p.w_o = fill(static_cast<Eigen::Index>(heads) * d_v, d_model);
    return p;
  }

  static MultiHeadParams identity(int d_model) {
    const Matrix eye = Matrix::Identity(d_model, d_model);
    return MultiHeadParams{1, d_model, d_model, d_model, {eye}, {eye}, {eye}, eye};
  }
};

/// MultiHead(Q,K,V) = Concat(head_1..head_h) W^O with
/// head_i = Attention(Q W_i^Q, K W_i^K, V W_i^V).
inline Matrix multi_head_attention(const Matrix& q, const Matrix& k, const Matrix& v, const MultiHeadParams& p,
                                   const KeyMask* mask = nullptr) {
  p.validate();
  if (q.cols() != p.d_model || k.cols() != p.d_model || v.cols() != p.d_model) {
    throw ShapeError("multi-head: inputs must have d_model columns");
  }
  Matrix concat(q.rows(), static_cast<Eigen::Index>(p.heads) * p.d_v);
  for (int i = 0; i < p.heads; ++i) {
    concat.middleCols(static_cast<Eigen::Index>(i) * p.d_v, p.d_v) =
        scaled_dot_product_attention(q * p.w_q[i], k * p.w_k[i], v * p.w_v[i], mask);
  }
  return concat * p.w_o;
}

}  // namespace verifuse
