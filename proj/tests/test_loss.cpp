#include "scott/loss.hpp"
#include "scott/neural.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace scott;

namespace {

MatD random_mat(Eigen::Index r, Eigen::Index c, Rng& rng) {
    MatD m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.index(static_cast<std::size_t>(classes)));
    return y;
}

double cosine(const MatD& z, Eigen::Index i, Eigen::Index j) {
    return z.row(i).dot(z.row(j)) / (z.row(i).norm() * z.row(j).norm());
}

// Direct double loop, no log-sum-exp.
double oracle_nt_xent(const MatD& z, const std::vector<std::size_t>& partner, double tau) {
    double loss = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        double denom = 0;
        for (Eigen::Index k = 0; k < z.rows(); ++k)
            if (k != i) denom += std::exp(cosine(z, i, k) / tau);
        loss -= std::log(std::exp(cosine(z, i, static_cast<Eigen::Index>(partner[std::size_t(i)])) / tau) / denom);
    }
    return loss;
}

// Every row its own instance; positives share a label.
double oracle_supcon_flat(const MatD& z, const std::vector<int>& y, double tau) {
    double loss = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        double denom = 0;
        for (Eigen::Index k = 0; k < z.rows(); ++k)
            if (k != i) denom += std::exp(cosine(z, i, k) / tau);
        double acc = 0;
        int np = 0;
        for (Eigen::Index p = 0; p < z.rows(); ++p) {
            if (p == i || y[std::size_t(p)] != y[std::size_t(i)]) continue;
            acc += std::log(std::exp(cosine(z, i, p) / tau) / denom);
            ++np;
        }
        if (np > 0) loss -= acc / np;
    }
    return loss;
}

// Triple loop over (view, instance) anchors against the whole multi-view
// pool, averaged over views.
double oracle_supcon_separate(const std::vector<MatD>& views, const std::vector<int>& y, double tau) {
    const auto nv = views.size();
    const auto bn = static_cast<std::size_t>(views[0].rows());
    auto sim = [&](std::size_t q, std::size_t a, std::size_t r, std::size_t b) {
        const auto u = views[q].row(Eigen::Index(a));
        const auto v = views[r].row(Eigen::Index(b));
        return u.dot(v) / (u.norm() * v.norm()) / tau;
    };
    double loss = 0;
    for (std::size_t q = 0; q < nv; ++q)
        for (std::size_t a = 0; a < bn; ++a) {
            double denom = 0;
            for (std::size_t r = 0; r < nv; ++r)
                for (std::size_t b = 0; b < bn; ++b)
                    if (!(r == q && b == a)) denom += std::exp(sim(q, a, r, b));
            double acc = 0;
            int np = 0;
            for (std::size_t r = 0; r < nv; ++r)
                for (std::size_t b = 0; b < bn; ++b) {
                    if ((r == q && b == a) || y[b] != y[a]) continue;
                    acc += std::log(std::exp(sim(q, a, r, b)) / denom);
                    ++np;
                }
            if (np > 0) loss -= acc / np;
        }
    return loss / double(nv);
}

std::vector<MatD> split_views(const MatD& z, std::size_t nv) {
    const Eigen::Index bn = z.rows() / Eigen::Index(nv);
    std::vector<MatD> v;
    for (std::size_t q = 0; q < nv; ++q) v.push_back(z.middleRows(Eigen::Index(q) * bn, bn));
    return v;
}

} // namespace

TEST(Similarity, Examples) {
    Eigen::RowVector2d a(1, 0), b(1, 1), v(3, -4);
    EXPECT_NEAR(similarity<double>(a, b, Similarity::cosine), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(similarity<double>(v, v, Similarity::cosine), 1.0, 1e-15);
    EXPECT_NEAR(similarity<double>(v, Eigen::RowVector2d(-v), Similarity::cosine), -1.0, 1e-15);
    EXPECT_EQ(similarity<double>(Eigen::RowVector2d(0, 0), v, Similarity::cosine), 0.0);
    EXPECT_EQ(similarity<double>(v, b, Similarity::dot), -1.0);
}

TEST(NtXent, SinglePairIsZero) {
    Rng rng(1);
    auto r = nt_xent<double>(random_mat(2, 8, rng), {1, 0}, 1.0);
    EXPECT_NEAR(r.value, 0.0, 1e-15);
}

TEST(NtXent, NonNegativeAndMatchesOracle) {
    Rng rng(2);
    for (int rep = 0; rep < 50; ++rep) {
        MatD z = random_mat(6, 8, rng);
        auto pairs = two_view_pairs(3);
        const double tau = rep % 2 ? 0.5 : 1.0;
        auto r = nt_xent<double>(z, pairs, tau);
        EXPECT_GE(r.value, 0.0);
        EXPECT_NEAR(r.value, oracle_nt_xent(z, pairs, tau), 1e-10);
    }
}

TEST(NtXent, UnmatchedRowRejected) {
    Rng rng(3);
    MatD z = random_mat(4, 8, rng);
    EXPECT_THROW(nt_xent<double>(z, {1, 0, 3, 3}, 1.0), ShapeError);
    EXPECT_THROW(nt_xent<double>(z, {1, 2, 3, 0}, 1.0), ShapeError);
    EXPECT_THROW(nt_xent<double>(random_mat(3, 8, rng), {1, 0, 2}, 1.0), ShapeError);
}

TEST(SupconSeparate, IdenticalPairIsZero) {
    MatD v(2, 8);
    v.setOnes();
    auto r = supcon_separate<double>({v}, {0, 0}, 1.0);
    EXPECT_NEAR(r.value, 0.0, 1e-15);
}

TEST(SupconSeparate, DistinctLabelsGiveZeroWithDiagnostics) {
    Rng rng(4);
    auto r = supcon_separate<double>({random_mat(4, 8, rng)}, {0, 1, 2, 3}, 1.0);
    EXPECT_EQ(r.value, 0.0);
    EXPECT_TRUE(r.diagnostics.no_positives_anywhere());
    EXPECT_EQ(r.diagnostics.anchors_without_positives, 4u);
}

TEST(SupconSeparate, MatchesTripleLoopOracle) {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<MatD> views{random_mat(4, 8, rng), random_mat(4, 8, rng)};
        auto y = random_labels(4, 2, rng);
        EXPECT_NEAR(supcon_separate<double>(views, y, 1.0).value, oracle_supcon_separate(views, y, 1.0), 1e-10);
    }
}

TEST(SupconSimplified, IdenticalPairIsZero) {
    MatD z(2, 8);
    z.setConstant(0.5);
    EXPECT_NEAR(supcon_simplified<double>(z, {3, 3}, 1.0).value, 0.0, 1e-15);
}

TEST(SupconSimplified, MatchesFlatOracle) {
    Rng rng(6);
    for (int rep = 0; rep < 50; ++rep) {
        MatD z = random_mat(8, 8, rng);
        auto y = random_labels(8, 3, rng);
        const double tau = rep % 3 ? 1.0 : 0.3;
        EXPECT_NEAR(supcon_simplified<double>(z, y, tau).value, oracle_supcon_flat(z, y, tau), 1e-10);
    }
}

TEST(SupconSimplified, AnchorsWithoutPositivesCounted) {
    Rng rng(7);
    auto r = supcon_simplified<double>(random_mat(5, 8, rng), {0, 0, 1, 2, 2}, 1.0);
    EXPECT_EQ(r.diagnostics.anchors, 5u);
    EXPECT_EQ(r.diagnostics.anchors_without_positives, 1u);
}

TEST(SupconEquivalence, SimplifiedOverViewsEqualsSeparate) {
    Rng rng(8);
    for (int rep = 0; rep < 120; ++rep) {
        const std::size_t nv = 1 + rng.index(4);
        const std::size_t bn = 2 + rng.index(7);
        const int classes = 1 + int(rng.index(4));
        std::vector<MatD> views;
        for (std::size_t q = 0; q < nv; ++q) views.push_back(random_mat(Eigen::Index(bn), 8, rng));
        auto y = random_labels(bn, classes, rng);
        const double tau = rng.uniform(0.2, 2.0);
        auto sep = supcon_separate<double>(views, y, tau);
        auto flat = supcon_simplified<double>(flatten_views(views), repeat_labels(y, nv), tau);
        EXPECT_NEAR(sep.value, flat.value / double(nv), 1e-8);
        MatD g = flatten_views(sep.grads);
        EXPECT_LT((g - flat.grad / double(nv)).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(SupconEquivalence, SimplifiedMatchesSeparateOracleTreatingViewsAsInstances) {
    Rng rng(9);
    MatD z = random_mat(8, 8, rng);
    auto y = random_labels(8, 3, rng);
    EXPECT_NEAR(supcon_simplified<double>(z, y, 1.0).value, oracle_supcon_separate({z}, y, 1.0), 1e-10);
}

TEST(Losses, PermutationInvariant) {
    Rng rng(10);
    for (int rep = 0; rep < 20; ++rep) {
        MatD z = random_mat(10, 8, rng);
        auto y = random_labels(10, 3, rng);
        std::vector<std::size_t> perm(10);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        MatD zp(10, 8);
        std::vector<int> yp(10);
        for (std::size_t i = 0; i < 10; ++i) {
            zp.row(Eigen::Index(i)) = z.row(Eigen::Index(perm[i]));
            yp[i] = y[perm[i]];
        }
        EXPECT_NEAR(supcon_simplified<double>(z, y, 1.0).value, supcon_simplified<double>(zp, yp, 1.0).value, 1e-10);

        auto pairs = two_view_pairs(5);
        std::vector<std::size_t> inv(10), pp(10);
        for (std::size_t i = 0; i < 10; ++i) inv[perm[i]] = i;
        for (std::size_t i = 0; i < 10; ++i) pp[i] = inv[pairs[perm[i]]];
        EXPECT_NEAR(nt_xent<double>(z, pairs, 1.0).value, nt_xent<double>(zp, pp, 1.0).value, 1e-10);
    }
}

namespace {

template <typename Fn>
double loss_grad_error(MatD z, const MatD& analytic, Fn&& fn) {
    std::vector<GradProbe<double>> probes{{"z", &z, analytic}};
    return check_gradients<double>([&] { return fn(z); }, probes, 1e-6).max_relative_error;
}

} // namespace

TEST(Losses, GradientCheck) {
    Rng rng(11);
    for (Similarity kind : {Similarity::cosine, Similarity::dot}) {
        MatD z = random_mat(6, 4, rng);
        auto y = random_labels(6, 2, rng);
        auto pairs = two_view_pairs(3);
        const double tau = 0.7;

        auto nt = nt_xent<double>(z, pairs, tau, kind);
        EXPECT_LT(loss_grad_error(z, nt.grad, [&](const MatD& x) { return nt_xent<double>(x, pairs, tau, kind).value; }),
                  1e-4);

        auto sc = supcon_simplified<double>(z, y, tau, kind);
        EXPECT_LT(loss_grad_error(z, sc.grad,
                                  [&](const MatD& x) { return supcon_simplified<double>(x, y, tau, kind).value; }),
                  1e-4);

        std::vector<int> y3(y.begin(), y.begin() + 3);
        auto sep = supcon_separate<double>(split_views(z, 2), y3, tau, kind);
        EXPECT_LT(loss_grad_error(z, flatten_views(sep.grads),
                                  [&](const MatD& x) { return supcon_separate<double>(split_views(x, 2), y3, tau, kind).value; }),
                  1e-4);
    }
}

TEST(Losses, GradientDescentDecreases) {
    Rng rng(12);
    MatD z = random_mat(12, 8, rng);
    auto y = random_labels(12, 3, rng);
    double prev = supcon_simplified<double>(z, y, 1.0).value;
    for (int step = 0; step < 100; ++step) {
        auto r = supcon_simplified<double>(z, y, 1.0);
        double lr = 1.0;
        MatD next;
        double value = prev;
        while (lr > 1e-12) {
            next = z - lr * r.grad;
            value = supcon_simplified<double>(next, y, 1.0).value;
            if (value < prev) break;
            lr /= 2;
        }
        ASSERT_LT(value, prev) << "step " << step;
        z = next;
        prev = value;
    }
}

TEST(Losses, NearestCandidateIsTemperatureInvariant) {
    Rng rng(13);
    MatD z = random_mat(9, 8, rng);
    std::vector<int> y(9, 0);
    // argmax of each anchor's softmax row equals argmax of cosine similarity for any tau
    for (double tau : {0.1, 1.0, 5.0}) {
        auto norm = normalize_rows(z, Similarity::cosine);
        MatD sim = norm.u * norm.u.transpose() / tau;
        for (Eigen::Index i = 0; i < 9; ++i) {
            sim(i, i) = -1e300;
            Eigen::Index best_tau, best_ref;
            sim.row(i).maxCoeff(&best_tau);
            MatD ref = norm.u * norm.u.transpose();
            ref(i, i) = -1e300;
            ref.row(i).maxCoeff(&best_ref);
            EXPECT_EQ(best_tau, best_ref);
        }
    }
    EXPECT_NE(supcon_simplified<double>(z, y, 0.5).value, supcon_simplified<double>(z, y, 1.0).value);
}

TEST(Losses, ZeroVectorStaysFinite) {
    Rng rng(14);
    MatD z = random_mat(4, 8, rng);
    z.row(2).setZero();
    auto r = supcon_simplified<double>(z, {0, 0, 1, 1}, 1.0);
    EXPECT_TRUE(std::isfinite(r.value));
    EXPECT_TRUE(r.grad.allFinite());
    EXPECT_EQ(r.diagnostics.zero_vectors, 1u);
}

TEST(Losses, InvalidInputs) {
    Rng rng(15);
    EXPECT_THROW(supcon_simplified<double>(random_mat(4, 8, rng), {0, 0, 1, 1}, 0.0), ConfigError);
    EXPECT_THROW(supcon_simplified<double>(random_mat(1, 8, rng), {0}, 1.0), ShapeError);
    EXPECT_THROW(supcon_simplified<double>(random_mat(4, 8, rng), {0, 0, 1}, 1.0), ShapeError);
}

TEST(CrossEntropy, MatchesOracleAndGradient) {
    Rng rng(16);
    MatD logits = random_mat(5, 3, rng);
    std::vector<int> y{0, 2, 1, 1, 0};
    auto r = softmax_cross_entropy<double>(logits, y);
    double oracle = 0;
    for (Eigen::Index i = 0; i < 5; ++i) oracle -= std::log(std::exp(logits(i, y[std::size_t(i)])) / logits.row(i).array().exp().sum());
    EXPECT_NEAR(r.value, oracle / 5, 1e-12);
    EXPECT_LT(loss_grad_error(logits, r.grad, [&](const MatD& x) { return softmax_cross_entropy<double>(x, y).value; }),
              1e-6);
    EXPECT_THROW(softmax_cross_entropy<double>(logits, {0, 3, 1, 1, 0}), ShapeError);
}
