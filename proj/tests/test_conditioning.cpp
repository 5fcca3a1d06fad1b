// Copyright (C) 2026 The matfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "matfuse/conditioning/attention.hpp"
#include "matfuse/errors.hpp"

using namespace matfuse;
using namespace matfuse::conditioning;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = n(rng);
    return m;
}

AttentionInputs random_inputs(std::mt19937_64& rng, std::size_t gh = 3, std::size_t gw = 4) {
    AttentionInputs in;
    const auto q = static_cast<Eigen::Index>(gh * gw);
    in.queries = random_matrix(q, 6, rng);
    in.text_keys = random_matrix(5, 6, rng);
    in.text_values = random_matrix(5, 7, rng);
    in.image_keys = random_matrix(4, 6, rng);
    in.image_values = random_matrix(4, 7, rng);
    in.lambda = 0.8;
    BinaryMask mask(gh, gw, 0);
    std::bernoulli_distribution bit(0.5);
    for (std::size_t y = 0; y < gh; ++y)
        for (std::size_t x = 0; x < gw; ++x)
            mask.at(y, x) = bit(rng) ? 1 : 0;
    mask.at(0, 0) = 1;
    mask.at(gh - 1, gw - 1) = 0;
    in.level_mask = mask;
    return in;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::equal(a.data(), a.data() + a.size(), b.data());
}

}  // namespace

TEST(Attention, RowsAreStochastic) {
    std::mt19937_64 rng(1);
    const AttentionResult r = attention(random_matrix(9, 4, rng), random_matrix(6, 4, rng), random_matrix(6, 3, rng));
    for (Eigen::Index i = 0; i < r.probs.rows(); ++i)
        EXPECT_NEAR(r.probs.row(i).sum(), 1.0, 1e-12);
}

TEST(Attention, LargeLogitsStayFinite) {
    std::mt19937_64 rng(2);
    Matrix q = random_matrix(3, 4, rng) * 1e4;
    const AttentionResult r = attention(q, random_matrix(5, 4, rng), random_matrix(5, 2, rng));
    EXPECT_TRUE(r.output.allFinite());
}

TEST(Attention, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(3);
    const Matrix q = random_matrix(5, 4, rng), k = random_matrix(6, 4, rng), v = random_matrix(6, 3, rng);
    const Matrix d_out = random_matrix(5, 3, rng), d_probs = random_matrix(5, 6, rng);
    const auto scalar = [&](const Matrix& qq, const Matrix& kk, const Matrix& vv) {
        const AttentionResult r = attention(qq, kk, vv);
        return (r.output.array() * d_out.array()).sum() + (r.probs.array() * d_probs.array()).sum();
    };
    const AttentionGrads g = attention_backward(q, k, v, attention(q, k, v), d_out, &d_probs);
    const double h = 1e-5;
    for (int which = 0; which < 3; ++which) {
        Matrix base = which == 0 ? q : which == 1 ? k : v;
        const Matrix& analytic = which == 0 ? g.d_queries : which == 1 ? g.d_keys : g.d_values;
        for (Eigen::Index i = 0; i < base.size(); ++i) {
            Matrix plus = base, minus = base;
            plus.data()[i] += h;
            minus.data()[i] -= h;
            const double fd = which == 0   ? (scalar(plus, k, v) - scalar(minus, k, v)) / (2 * h)
                              : which == 1 ? (scalar(q, plus, v) - scalar(q, minus, v)) / (2 * h)
                                           : (scalar(q, k, plus) - scalar(q, k, minus)) / (2 * h);
            EXPECT_NEAR(analytic.data()[i], fd, 1e-7 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(DecoupledAttention, LambdaZeroIsTextOnlyBitExact) {
    std::mt19937_64 rng(4);
    AttentionInputs in = random_inputs(rng);
    in.lambda = 0.0;
    const Matrix text = attention(in.queries, in.text_keys, in.text_values).output;
    EXPECT_TRUE(bit_equal(decoupled_attention(in), text));
}

TEST(DecoupledAttention, EmptyMaskIsTextOnlyBitExact) {
    std::mt19937_64 rng(5);
    AttentionInputs in = random_inputs(rng);
    in.lambda = 1.3;
    in.level_mask = BinaryMask(3, 4, 0);
    const Matrix text = attention(in.queries, in.text_keys, in.text_values).output;
    EXPECT_TRUE(bit_equal(decoupled_attention(in), text));
}

TEST(DecoupledAttention, SingleQuerySingleTokenSumsValues) {
    AttentionInputs in;
    in.queries = Matrix::Constant(1, 2, 0.3);
    in.text_keys = Matrix::Constant(1, 2, -1.0);
    in.text_values = (Matrix(1, 3) << 1.0, 2.0, 3.0).finished();
    in.image_keys = Matrix::Constant(1, 2, 4.0);
    in.image_values = (Matrix(1, 3) << 0.5, -1.0, 10.0).finished();
    in.lambda = 1.0;
    in.level_mask = BinaryMask(1, 1, 1);
    const Matrix out = decoupled_attention(in);
    EXPECT_DOUBLE_EQ(out(0, 0), 1.5);
    EXPECT_DOUBLE_EQ(out(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(out(0, 2), 13.0);
}

TEST(DecoupledAttention, AffineInLambda) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        AttentionInputs in = random_inputs(rng);
        in.lambda = 0.0;
        const Matrix z0 = decoupled_attention(in);
        in.lambda = 1.0;
        const Matrix z1 = decoupled_attention(in);
        for (double lam : {0.25, 0.5, 0.8, 1.1, 1.5, 3.0}) {
            in.lambda = lam;
            const Matrix z = decoupled_attention(in);
            EXPECT_LT((z - (z0 + lam * (z1 - z0))).cwiseAbs().maxCoeff(), 1e-6);
        }
    }
}

TEST(DecoupledAttention, MaskedOutRowsBitIdenticalToLambdaZero) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        AttentionInputs in = random_inputs(rng);
        const Matrix gated = decoupled_attention(in);
        AttentionInputs off = in;
        off.lambda = 0.0;
        const Matrix base = decoupled_attention(off);
        const BinaryMask& m = *in.level_mask;
        bool changed_inside = false;
        for (Eigen::Index q = 0; q < gated.rows(); ++q) {
            if (m[static_cast<std::size_t>(q)] == 0)
                EXPECT_TRUE(bit_equal(gated.row(q), base.row(q))) << "row " << q;
            else
                changed_inside |= !bit_equal(gated.row(q), base.row(q));
        }
        EXPECT_TRUE(changed_inside);
    }
}

TEST(DecoupledAttention, TextBranchIndependentOfLambdaAndMask) {
    std::mt19937_64 rng(8);
    AttentionInputs in = random_inputs(rng);
    const Matrix text = decoupled_attention_forward(in).text.output;
    in.lambda = 1.4;
    in.level_mask = BinaryMask(3, 4, 1);
    EXPECT_TRUE(bit_equal(decoupled_attention_forward(in).text.output, text));
}

TEST(DecoupledAttention, QueryGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(9);
    AttentionInputs in = random_inputs(rng);
    const Matrix d_out = random_matrix(in.queries.rows(), in.text_values.cols(), rng);
    const Matrix analytic = decoupled_attention_backward_queries(in, decoupled_attention_forward(in), d_out);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < in.queries.size(); ++i) {
        AttentionInputs p = in, m = in;
        p.queries.data()[i] += h;
        m.queries.data()[i] -= h;
        const double fd = ((decoupled_attention(p).array() - decoupled_attention(m).array()) * d_out.array()).sum() /
                          (2 * h);
        EXPECT_NEAR(analytic.data()[i], fd, 1e-7 * std::max(1.0, std::abs(fd)));
    }
}

TEST(DecoupledAttention, DimensionMismatchRejected) {
    std::mt19937_64 rng(10);
    AttentionInputs in = random_inputs(rng);
    in.level_mask = BinaryMask(2, 2, 1);
    EXPECT_THROW(decoupled_attention(in), ShapeError);
    in = random_inputs(rng);
    in.image_values = random_matrix(4, 5, rng);
    EXPECT_THROW(decoupled_attention(in), ShapeError);
    in = random_inputs(rng);
    in.text_keys = random_matrix(5, 3, rng);
    EXPECT_THROW(decoupled_attention(in), ShapeError);
}

TEST(LambdaSchedule, ConstantDefault) {
    for (int step : {0, 1, 17, 49})
        EXPECT_EQ(lambda_schedule(0.8, step), 0.8);
    EXPECT_EQ(lambda_schedule(0.0, 5), 0.0);
    EXPECT_THROW(lambda_schedule(-0.1, 0), ValidationError);
}

TEST(LambdaSchedule, LinearRampIsMonotoneAndReachesBase) {
    const LambdaSchedule ramp{LambdaScheduleKind::LinearRamp, 50};
    double prev = -1.0;
    for (int step = 0; step < 50; ++step) {
        const double lam = lambda_schedule(1.1, step, ramp);
        EXPECT_GE(lam, prev);
        EXPECT_LE(lam, 1.1);
        prev = lam;
    }
    EXPECT_DOUBLE_EQ(prev, 1.1);
}
