#include "scott/neural.hpp"

#include <gtest/gtest.h>

using namespace scott;

namespace {

MatD random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) {
    MatD m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
    return m;
}

// Zero-initialised biases make many gradients exactly zero; shake every
// parameter so the relative check sees real values.
template <typename Op>
void jitter_params(Op& op, Rng& rng, double sd = 0.1) {
    op.visit([&](Param<double>& p) {
        for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += rng.normal(0.0, sd);
    });
}

EncoderBlockConfig small_block(std::size_t dim = 4) {
    EncoderBlockConfig c;
    c.dim = dim;
    c.heads = 2;
    c.head_dim = 3;
    c.convs = {{2, 5, 1}, {3, dim, 2}};
    return c;
}

struct LayerNormOp {
    LayerNorm<double>& l;
    LayerNorm<double>::Cache c;
    MatD forward(const MatD& x) { return l.forward(x, &c); }
    MatD backward(const MatD& dy) { return l.backward(c, dy); }
    template <typename F>
    void visit(F&& f) {
        l.visit(f);
    }
};

} // namespace

TEST(Softmax, RowsSumToOne) {
    Rng rng(1);
    MatD p = softmax_rows(random_mat(7, 5, rng, 30.0));
    for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
    EXPECT_TRUE((p.array() >= 0).all());
}

TEST(Softmax, LogSoftmaxStableForLargeInputs) {
    MatD a(1, 3);
    a << 1000.0, 1001.0, 999.0;
    MatD l = log_softmax_rows(a);
    EXPECT_TRUE(l.allFinite());
    EXPECT_NEAR(std::exp(l(0, 1)), 1.0 / (1.0 + std::exp(-1.0) + std::exp(-2.0)), 1e-12);
}

TEST(Attention, WeightRowsSumToOne) {
    Rng rng(2);
    MultiHeadSelfAttention<double> att("att", 6, 3, 4);
    att.init(rng);
    auto w = att.weights(random_mat(11, 6, rng));
    ASSERT_EQ(w.size(), 3u);
    for (const auto& p : w) {
        ASSERT_EQ(p.rows(), 11);
        ASSERT_EQ(p.cols(), 11);
        for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
    }
}

TEST(Attention, SingleStepAttendsToItself) {
    Rng rng(3);
    MultiHeadSelfAttention<double> att("att", 4, 2, 3);
    att.init(rng);
    MatD x = random_mat(1, 4, rng);
    for (const auto& p : att.weights(x)) EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
    // with T = 1 the output is output(value(x)) for any query/key
    MatD expect = att.output.forward(att.value.forward(x));
    EXPECT_LT((att.forward(x) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, ShapeErrors) {
    EXPECT_THROW((MultiHeadSelfAttention<double>("a", 4, 0, 3)), ShapeError);
    Rng rng(4);
    MultiHeadSelfAttention<double> att("att", 4, 1, 2);
    att.init(rng);
    EXPECT_THROW(att.forward(MatD::Zero(3, 5)), ShapeError);
}

TEST(CausalConv, OutputIgnoresFuture) {
    Rng rng(5);
    CausalConv1d<double> conv("c", 4, 2, 3, 4);
    conv.init(rng);
    MatD x = random_mat(40, 2, rng);
    MatD y = conv.forward(x);
    for (Eigen::Index t = 0; t < 39; ++t) {
        MatD x2 = x;
        x2.bottomRows(39 - t) = random_mat(39 - t, 2, rng);
        MatD y2 = conv.forward(x2);
        EXPECT_EQ((y2.topRows(t + 1) - y.topRows(t + 1)).cwiseAbs().maxCoeff(), 0.0) << "t=" << t;
    }
}

TEST(CausalConv, UnitKernelIsPointwise) {
    Rng rng(6);
    CausalConv1d<double> conv("c", 1, 3, 3, 1);
    conv.weight.value.setIdentity();
    MatD x = random_mat(9, 3, rng);
    EXPECT_EQ(conv.forward(x), x);
}

TEST(CausalConv, ReceptiveFieldOfDefaultStack) {
    EncoderBlock<double> block("b", EncoderBlockConfig{});
    EXPECT_EQ(block.receptive_field(), 64u);
    EXPECT_EQ(CausalConv1d<double>("c", 4, 1, 1, 16).receptive_field(), 49u);
}

TEST(CausalConv, ImpulseReachesExactlyReceptiveField) {
    CausalConv1d<double> conv("c", 3, 1, 1, 5);
    conv.weight.value.setOnes();
    MatD x = MatD::Zero(30, 1);
    x(2, 0) = 1.0;
    MatD y = conv.forward(x);
    for (Eigen::Index t = 0; t < 30; ++t) EXPECT_EQ(y(t, 0), (t == 2 || t == 7 || t == 12) ? 1.0 : 0.0);
}

TEST(EncoderBlock, ZeroFinalConvGivesIdentityWithoutAttentionResidual) {
    Rng rng(7);
    auto cfg = small_block();
    cfg.attention_residual = false;
    EncoderBlock<double> block("b", cfg);
    block.init(rng);
    block.convs.back().weight.value.setZero();
    block.convs.back().bias.value.setZero();
    MatD x = random_mat(13, 4, rng);
    EXPECT_LT((block.forward(x, false, nullptr) - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EncoderBlock, ZeroFinalConvLeavesAttentionResidual) {
    Rng rng(8);
    EncoderBlock<double> block("b", small_block());
    block.init(rng);
    block.convs.back().weight.value.setZero();
    block.convs.back().bias.value.setZero();
    MatD x = random_mat(13, 4, rng);
    MatD expect = x + block.attention.forward(x);
    EXPECT_LT((block.forward(x, false, nullptr) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EncoderBlock, ShapePreservedAndMismatchRejected) {
    Rng rng(9);
    EncoderBlock<double> block("b", small_block(4));
    block.init(rng);
    for (Eigen::Index T : {1, 2, 17}) {
        MatD y = block.forward(random_mat(T, 4, rng), false, nullptr);
        EXPECT_EQ(y.rows(), T);
        EXPECT_EQ(y.cols(), 4);
    }
    auto bad = small_block(4);
    bad.convs.back().filters = 5;
    EXPECT_THROW((EncoderBlock<double>("b", bad)), ShapeError);
}

TEST(EncoderBlock, DropoutOnlyInTraining) {
    Rng rng(10);
    auto cfg = small_block();
    cfg.dropout = 0.5;
    EncoderBlock<double> block("b", cfg);
    block.init(rng);
    MatD x = random_mat(6, 4, rng);
    EXPECT_EQ(block.forward(x, false, nullptr), block.forward(x, false, nullptr));
    EXPECT_THROW(block.forward(x, true, nullptr), StateError);
    Rng d(1);
    EXPECT_NE(block.forward(x, true, &d), block.forward(x, false, nullptr));
}

TEST(GradCheck, Dense) {
    Rng rng(11);
    Dense<double> d("d", 5, 3);
    d.init(rng);
    DenseOp<double> op{d, {}};
    jitter_params(op, rng);
    MatD w = random_mat(4, 3, rng);
    auto r = grad_check<double>(op, random_mat(4, 5, rng), 1e-6, &w);
    EXPECT_LT(r.max_relative_error, 1e-6) << r.worst;
}

TEST(GradCheck, Relu) {
    Rng rng(12);
    FunctionOp<double> op{[](const MatD& x) { return relu(x); },
                          [](const MatD& x, const MatD&, const MatD& dy) { return relu_backward(x, dy); }};
    MatD w = random_mat(6, 6, rng);
    MatD x = random_mat(6, 6, rng);
    // keep entries away from the kink
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (std::abs(x.data()[i]) < 1e-3) x.data()[i] = 0.5;
    auto r = grad_check<double>(op, x, 1e-6, &w);
    EXPECT_LT(r.max_relative_error, 1e-6) << r.worst;
}

TEST(GradCheck, SoftmaxAndLogSoftmax) {
    Rng rng(13);
    FunctionOp<double> sm{[](const MatD& x) { return softmax_rows(x); },
                          [](const MatD&, const MatD& y, const MatD& dy) { return softmax_rows_backward(y, dy); }};
    FunctionOp<double> lsm{[](const MatD& x) { return log_softmax_rows(x); },
                           [](const MatD&, const MatD& y, const MatD& dy) {
                               return log_softmax_rows_backward(y, dy);
                           }};
    MatD w = random_mat(5, 7, rng);
    EXPECT_LT(grad_check<double>(sm, random_mat(5, 7, rng), 1e-6, &w).max_relative_error, 1e-5);
    EXPECT_LT(grad_check<double>(lsm, random_mat(5, 7, rng), 1e-6, &w).max_relative_error, 1e-5);
}

TEST(GradCheck, Attention) {
    Rng rng(14);
    MultiHeadSelfAttention<double> att("att", 4, 2, 3);
    att.init(rng);
    AttentionOp<double> op{att, {}};
    jitter_params(op, rng);
    MatD w = random_mat(6, 4, rng);
    auto r = grad_check<double>(op, random_mat(6, 4, rng), 1e-6, &w);
    EXPECT_LT(r.max_relative_error, 1e-5) << r.worst;
}

TEST(GradCheck, CausalConv) {
    Rng rng(15);
    CausalConv1d<double> conv("c", 3, 2, 3, 2);
    conv.init(rng);
    ConvOp<double> op{conv, {}};
    jitter_params(op, rng);
    MatD w = random_mat(9, 3, rng);
    auto r = grad_check<double>(op, random_mat(9, 2, rng), 1e-6, &w);
    EXPECT_LT(r.max_relative_error, 1e-6) << r.worst;
}

TEST(GradCheck, LayerNorm) {
    Rng rng(16);
    LayerNorm<double> ln("ln", 5);
    LayerNormOp op{ln, {}};
    jitter_params(op, rng);
    MatD w = random_mat(4, 5, rng);
    auto r = grad_check<double>(op, random_mat(4, 5, rng), 1e-6, &w);
    EXPECT_LT(r.max_relative_error, 1e-5) << r.worst;
}

TEST(GradCheck, EncoderBlockBothResidualForms) {
    for (bool attention_residual : {true, false}) {
        for (bool layer_norm : {false, true}) {
            Rng rng(17);
            auto cfg = small_block();
            cfg.attention_residual = attention_residual;
            cfg.layer_norm = layer_norm;
            EncoderBlock<double> block("b", cfg);
            block.init(rng);
            EncoderBlockOp<double> op{block, {}};
            jitter_params(op, rng);
            MatD w = random_mat(8, 4, rng);
            auto r = grad_check<double>(op, random_mat(8, 4, rng), 1e-6, &w);
            EXPECT_LT(r.max_relative_error, 1e-4)
                << r.worst << " attention_residual=" << attention_residual << " layer_norm=" << layer_norm;
        }
    }
}

TEST(Dropout, MaskIsInverted) {
    Rng rng(18);
    MatD m = dropout_mask<double>(200, 200, 0.3, rng);
    const double kept = (m.array() > 0).cast<double>().mean();
    EXPECT_NEAR(kept, 0.7, 0.01);
    EXPECT_NEAR(m.mean(), 1.0, 0.02);
    EXPECT_TRUE(((m.array() == 0) || (m.array() - 1.0 / 0.7).abs() < 1e-12).all());
}
