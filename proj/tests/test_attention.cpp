#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "verifuse/attention.hpp"
#include "verifuse/stub_text_encoder.hpp"
#include "verifuse/tokenizer.hpp"

using namespace verifuse;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Attention, HandExample) {
  Matrix q(1, 2), k(2, 2), v(2, 1);
  q << 1, 0;
  k << 1, 0, 0, 1;
  v << 1, 0;
  const double e = std::exp(1.0 / std::sqrt(2.0));
  EXPECT_NEAR(scaled_dot_product_attention(q, k, v)(0, 0), e / (e + 1), 1e-15);
}

TEST(Attention, EqualScoresAverageValues) {
  Matrix q = Matrix::Zero(3, 4), k = Matrix::Ones(5, 4), v(5, 2);
  v << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;
  const Matrix out = scaled_dot_product_attention(q, k, v);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(out(i, 0), 5.0, 1e-12);
    EXPECT_NEAR(out(i, 1), 6.0, 1e-12);
  }
}

TEST(Attention, MatchesLoopOracle) {
  Rng rng(21);
  for (int t = 0; t < 25; ++t) {
    const auto nq = 1 + rng.below(7), nk = 1 + rng.below(9), dk = 1 + rng.below(8), dv = 1 + rng.below(5);
    const Matrix q = oracle::random_matrix(nq, dk, rng), k = oracle::random_matrix(nk, dk, rng),
                 v = oracle::random_matrix(nk, dv, rng);
    EXPECT_LT(max_abs_diff(scaled_dot_product_attention(q, k, v), oracle::attention(q, k, v)), 1e-12);
  }
}

TEST(Attention, WeightsAreRowStochastic) {
  Rng rng(3);
  const Matrix w = attention_weights(oracle::random_matrix(6, 5, rng, 3.0), oracle::random_matrix(9, 5, rng, 3.0));
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-12);
    EXPECT_GE(w.row(i).minCoeff(), 0.0);
  }
}

TEST(Attention, MaskedKeysGetZeroWeight) {
  Rng rng(4);
  const Matrix q = oracle::random_matrix(3, 4, rng), k = oracle::random_matrix(6, 4, rng),
               v = oracle::random_matrix(6, 2, rng);
  const KeyMask mask{1, 0, 1, 1, 0, 1};
  const Matrix w = attention_weights(q, k, &mask);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_EQ(w(i, 1), 0.0);
    EXPECT_EQ(w(i, 4), 0.0);
    EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-12);
  }
  EXPECT_LT(max_abs_diff(scaled_dot_product_attention(q, k, v, &mask), oracle::attention(q, k, v, &mask)), 1e-12);
  // Dropping the masked rows entirely gives the same result.
  Matrix k2(4, 4), v2(4, 2);
  int r = 0;
  for (int j = 0; j < 6; ++j)
    if (mask[j]) {
      k2.row(r) = k.row(j);
      v2.row(r++) = v.row(j);
    }
  EXPECT_LT(max_abs_diff(scaled_dot_product_attention(q, k, v, &mask), scaled_dot_product_attention(q, k2, v2)), 1e-12);
}

TEST(Attention, FullyMaskedIsAnError) {
  const KeyMask mask{0, 0};
  EXPECT_THROW(attention_weights(Matrix::Ones(1, 2), Matrix::Ones(2, 2), &mask), InvalidArgument);
}

TEST(Attention, ShapeErrors) {
  EXPECT_THROW(attention_weights(Matrix::Ones(1, 3), Matrix::Ones(2, 2)), ShapeError);
  EXPECT_THROW(scaled_dot_product_attention(Matrix::Ones(1, 2), Matrix::Ones(2, 2), Matrix::Ones(3, 2)), ShapeError);
  const KeyMask short_mask{1};
  EXPECT_THROW(attention_weights(Matrix::Ones(1, 2), Matrix::Ones(2, 2), &short_mask), ShapeError);
}

TEST(Attention, PermutingKeysAndValuesTogetherIsInvariant) {
  Rng rng(5);
  const Matrix q = oracle::random_matrix(4, 3, rng), k = oracle::random_matrix(7, 3, rng),
               v = oracle::random_matrix(7, 2, rng);
  std::vector<int> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Matrix kp(7, 3), vp(7, 2);
  for (int i = 0; i < 7; ++i) {
    kp.row(i) = k.row(perm[i]);
    vp.row(i) = v.row(perm[i]);
  }
  EXPECT_LT(max_abs_diff(scaled_dot_product_attention(q, k, v), scaled_dot_product_attention(q, kp, vp)), 1e-12);
}

TEST(Attention, ZeroPaddingDkScalesScoresBySqrtTwo) {
  Rng rng(6);
  const Matrix q = oracle::random_matrix(3, 4, rng), k = oracle::random_matrix(5, 4, rng),
               v = oracle::random_matrix(5, 3, rng);
  Matrix qp = Matrix::Zero(3, 8), kp = Matrix::Zero(5, 8);
  qp.leftCols(4) = q;
  kp.leftCols(4) = k;
  EXPECT_LT(max_abs_diff(scaled_dot_product_attention(qp, kp, v), oracle::attention(q / std::sqrt(2.0), k, v)), 1e-12);
}

TEST(Attention, StableForLargeScores) {
  Matrix q(1, 1), k(3, 1), v(3, 1);
  q << 1e4;
  k << 1e4, -1e4, 1e4 - 1e-3;
  v << 1, 2, 3;
  const Matrix out = scaled_dot_product_attention(q, k, v);
  ASSERT_TRUE(std::isfinite(out(0, 0)));
  // Keys 0 and 2 differ by 10 in score; key 1 is negligible.
  const double e = std::exp(-10.0);
  EXPECT_NEAR(out(0, 0), (1 + 3 * e) / (1 + e), 1e-12);
}

TEST(MultiHead, SingleIdentityHeadEqualsPlainAttention) {
  Rng rng(7);
  const Matrix q = oracle::random_matrix(4, 5, rng), k = oracle::random_matrix(6, 5, rng),
               v = oracle::random_matrix(6, 5, rng);
  EXPECT_EQ(multi_head_attention(q, k, v, MultiHeadParams::identity(5)), scaled_dot_product_attention(q, k, v));
}

TEST(MultiHead, ZeroOutputProjectionGivesZero) {
  Rng rng(8);
  auto p = MultiHeadParams::random(3, 6, 2, 2, rng);
  p.w_o.setZero();
  const Matrix x = oracle::random_matrix(4, 6, rng);
  EXPECT_TRUE(multi_head_attention(x, x, x, p).isZero(0.0));
}

TEST(MultiHead, MatchesPerHeadOracle) {
  Rng rng(9);
  for (int heads : {1, 2, 4, 8}) {
    const auto p = MultiHeadParams::random(heads, 16, 16 / heads, 3, rng, 0.3);
    const Matrix q = oracle::random_matrix(5, 16, rng), k = oracle::random_matrix(7, 16, rng),
                 v = oracle::random_matrix(7, 16, rng);
    const Matrix out = multi_head_attention(q, k, v, p);
    EXPECT_EQ(out.rows(), 5);
    EXPECT_EQ(out.cols(), 16);
    EXPECT_LT(max_abs_diff(out, oracle::multi_head(q, k, v, p)), 1e-10) << heads;
  }
}

TEST(MultiHead, InconsistentParametersRejected) {
  Rng rng(10);
  auto p = MultiHeadParams::random(2, 4, 2, 2, rng);
  p.w_o = Matrix::Zero(3, 4);
  const Matrix x = Matrix::Ones(2, 4);
  EXPECT_THROW(multi_head_attention(x, x, x, p), ShapeError);
  p = MultiHeadParams::random(2, 4, 2, 2, rng);
  EXPECT_THROW(multi_head_attention(Matrix::Ones(2, 3), x, x, p), ShapeError);
}

// ---------------------------------------------------------------- stub text encoder

namespace {

TokenizedText framed(std::vector<std::int32_t> body, std::size_t max_len) {
  TokenizedText t;
  t.input_ids.assign(max_len, 0);
  t.input_mask.assign(max_len, 0);
  t.segment_ids.assign(max_len, 0);
  t.input_ids[0] = 2;
  for (std::size_t i = 0; i < body.size(); ++i) t.input_ids[i + 1] = body[i];
  t.input_ids[body.size() + 1] = 3;
  for (std::size_t i = 0; i < body.size() + 2; ++i) t.input_mask[i] = 1;
  return t;
}

StubTextSpec small_spec() {
  StubTextSpec s;
  s.vocab_size = 50;
  s.d_model = 16;
  s.heads = 4;
  return s;
}

}  // namespace

TEST(StubTextEncoder, DeterministicAndSeedDependent) {
  const auto t = framed({7, 8, 9}, 10);
  const StubTextEncoder a(small_spec()), b(small_spec());
  EXPECT_EQ(a.encode(t), b.encode(t));
  EXPECT_EQ(a.encode(t).size(), 768u);
  auto other = small_spec();
  other.seed = 8;
  EXPECT_NE(StubTextEncoder(other).encode(t), a.encode(t));
}

TEST(StubTextEncoder, PaddingDoesNotChangeOutput) {
  const StubTextEncoder enc(small_spec());
  const auto short_t = framed({5, 6, 7, 8}, 6), long_t = framed({5, 6, 7, 8}, 40);
  auto garbage = long_t;
  for (std::size_t i = 6; i < garbage.input_ids.size(); ++i) garbage.input_ids[i] = 49;
  EXPECT_EQ(enc.encode(short_t), enc.encode(long_t));
  EXPECT_EQ(enc.encode(long_t), enc.encode(garbage));
}

TEST(StubTextEncoder, DifferentTextsDiffer) {
  const StubTextEncoder enc(small_spec());
  EXPECT_NE(enc.encode(framed({5, 6}, 8)), enc.encode(framed({6, 5}, 8)));
  for (float x : enc.encode(framed({1, 2, 3}, 8))) {
    EXPECT_GE(x, -1.0f);
    EXPECT_LE(x, 1.0f);
  }
}

TEST(StubTextEncoder, SpecJsonRoundTrip) {
  auto s = small_spec();
  s.layers = 3;
  s.out_dim = 12;
  const auto j = to_json(s);
  EXPECT_EQ(j.at("h"), 4);
  EXPECT_EQ(stub_text_spec_from_json(nlohmann::json::parse(j.dump())), s);
}

TEST(StubTextEncoder, RejectsBadInputs) {
  const StubTextEncoder enc(small_spec());
  EXPECT_THROW(enc.encode(framed({50}, 5)), ShapeError);
  EXPECT_THROW(enc.encode(framed({-1}, 5)), ShapeError);
  TokenizedText empty;
  empty.input_ids = empty.input_mask = empty.segment_ids = {0, 0};
  EXPECT_THROW(enc.encode(empty), ShapeError);
  auto bad = small_spec();
  bad.heads = 3;
  EXPECT_THROW(StubTextEncoder{bad}, InvalidArgument);
}
