#pragma once

#include "scott/core.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace scott {

enum class Similarity { cosine, dot };

inline const char* to_string(Similarity s) { return s == Similarity::cosine ? "cosine" : "dot"; }
inline Similarity similarity_from_string(const std::string& s) {
    if (s == "cosine") return Similarity::cosine;
    if (s == "dot") return Similarity::dot;
    throw ConfigError("unknown similarity: " + s);
}

struct LossDiagnostics {
    std::size_t anchors = 0;
    std::size_t anchors_without_positives = 0;
    std::size_t zero_vectors = 0;

    bool no_positives_anywhere() const { return anchors > 0 && anchors_without_positives == anchors; }
};

template <typename S>
struct LossResult {
    S value = S(0);
    Mat<S> grad; // d value / d embeddings, same shape as the input
    LossDiagnostics diagnostics;
};

/// Cosine of a zero vector is defined as 0.
template <typename S, typename A, typename B>
S similarity(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, Similarity kind) {
    require_shape(a.size() == b.size(), "similarity operands");
    const S dot = static_cast<S>(a.cwiseProduct(b).sum());
    if (kind == Similarity::dot) return dot;
    const S na = static_cast<S>(a.norm());
    const S nb = static_cast<S>(b.norm());
    if (na == S(0) || nb == S(0)) return S(0);
    return dot / (na * nb);
}

/// Rows of z scaled to unit length (cosine) or left as is (dot). Zero rows
/// stay zero and are counted.
template <typename S>
struct Normalized {
    Mat<S> u;
    ColVec<S> norms;
    std::size_t zero_rows = 0;
};

template <typename S>
Normalized<S> normalize_rows(const Mat<S>& z, Similarity kind) {
    Normalized<S> out;
    out.u = z;
    if (kind == Similarity::dot) return out;
    out.norms = z.rowwise().norm();
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        if (out.norms(i) == S(0)) {
            ++out.zero_rows;
            out.u.row(i).setZero();
        } else {
            out.u.row(i) /= out.norms(i);
        }
    }
    return out;
}

template <typename S>
Mat<S> normalize_rows_backward(const Normalized<S>& n, const Mat<S>& du, Similarity kind) {
    if (kind == Similarity::dot) return du;
    Mat<S> dz(du.rows(), du.cols());
    for (Eigen::Index i = 0; i < du.rows(); ++i) {
        if (n.norms(i) == S(0)) {
            dz.row(i).setZero();
            continue;
        }
        const S proj = n.u.row(i).dot(du.row(i));
        dz.row(i) = (du.row(i) - proj * n.u.row(i)) / n.norms(i);
    }
    return dz;
}

namespace detail {

/// Flat contrastive loss over all N rows. For every anchor i with a
/// non-empty positive set P(i):
///   loss_i = LSE_{k != i}(S_ik) - mean_{p in P(i)} S_ip
/// The diagonal is masked out of the LSE, never filled with a large negative.
/// Anchors are processed in row tiles so only a (tile x N) slice of the
/// similarity matrix is live at a time.
template <typename S, typename IsPositive>
LossResult<S> flat_loss(const Mat<S>& z, IsPositive&& is_positive, S temperature, Similarity kind) {
    if (!(temperature > S(0))) throw ConfigError("temperature must be > 0");
    if (z.rows() < 2) throw ShapeError("contrastive loss needs at least two rows");
    constexpr Eigen::Index tile = 128;
    LossResult<S> r;
    auto norm = normalize_rows(z, kind);
    r.diagnostics.zero_vectors = norm.zero_rows;
    const Eigen::Index n = z.rows();
    Mat<S> du = Mat<S>::Zero(n, z.cols());
    Mat<S> sim, dsim;
    std::vector<Eigen::Index> pos;
    for (Eigen::Index start = 0; start < n; start += tile) {
        const Eigen::Index rows = std::min(tile, n - start);
        sim.noalias() = norm.u.middleRows(start, rows) * norm.u.transpose();
        sim /= temperature;
        dsim.setZero(rows, n);
        for (Eigen::Index row = 0; row < rows; ++row) {
            const Eigen::Index i = start + row;
            ++r.diagnostics.anchors;
            pos.clear();
            for (Eigen::Index k = 0; k < n; ++k)
                if (k != i && is_positive(i, k)) pos.push_back(k);
            if (pos.empty()) {
                ++r.diagnostics.anchors_without_positives;
                continue;
            }
            S m = -std::numeric_limits<S>::infinity();
            for (Eigen::Index k = 0; k < n; ++k)
                if (k != i) m = std::max(m, sim(row, k));
            S denom = S(0);
            for (Eigen::Index k = 0; k < n; ++k)
                if (k != i) denom += dsim(row, k) = std::exp(sim(row, k) - m);
            dsim.row(row) /= denom;
            S pos_mean = S(0);
            for (Eigen::Index p : pos) pos_mean += sim(row, p);
            const S inv_p = S(1) / static_cast<S>(pos.size());
            r.value += m + std::log(denom) - pos_mean * inv_p;
            for (Eigen::Index p : pos) dsim(row, p) -= inv_p;
        }
        du.middleRows(start, rows).noalias() += dsim * norm.u;
        du.noalias() += dsim.transpose() * norm.u.middleRows(start, rows);
    }
    du /= temperature;
    r.grad = normalize_rows_backward(norm, du, kind);
    return r;
}

} // namespace detail

/// NT-Xent over ordered pairs (i, partner[i]); partner must be a perfect
/// matching without fixed points.
template <typename S>
LossResult<S> nt_xent(const Mat<S>& z, const std::vector<std::size_t>& partner, S temperature,
                      Similarity kind = Similarity::cosine) {
    const auto n = static_cast<std::size_t>(z.rows());
    if (partner.size() != n) throw ShapeError("pair map must have one entry per row");
    if (n % 2 != 0) throw ShapeError("NT-Xent needs an even number of rows");
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = partner[i];
        if (j >= n || j == i || partner[j] != i)
            throw ShapeError("row " + std::to_string(i) + " is not matched to exactly one partner");
    }
    return detail::flat_loss<S>(
        z, [&](Eigen::Index i, Eigen::Index k) { return partner[static_cast<std::size_t>(i)] == static_cast<std::size_t>(k); },
        temperature, kind);
}

/// Pairs (i, i + bn) for a view-major flattening of two views.
inline std::vector<std::size_t> two_view_pairs(std::size_t bn) {
    std::vector<std::size_t> partner(2 * bn);
    for (std::size_t i = 0; i < bn; ++i) {
        partner[i] = i + bn;
        partner[i + bn] = i;
    }
    return partner;
}

/// Every row is an anchor; positives are the other rows sharing its label.
/// A plain sum over anchors, with no 1/n_v factor.
template <typename S>
LossResult<S> supcon_simplified(const Mat<S>& z, const std::vector<int>& labels, S temperature,
                                Similarity kind = Similarity::cosine) {
    require_shape(labels.size() == static_cast<std::size_t>(z.rows()), "one label per embedding row");
    return detail::flat_loss<S>(
        z,
        [&](Eigen::Index i, Eigen::Index k) {
            return labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(k)];
        },
        temperature, kind);
}

template <typename S>
struct SeparateLossResult {
    S value = S(0);
    std::vector<Mat<S>> grads; // one per view
    LossDiagnostics diagnostics;
};

/// Supervised contrastive loss computed view by view and averaged by 1/n_v.
/// Anchors of view q are scored against each view block r separately
/// (n_v^2 block products); candidates and positives span the whole
/// multi-view pool minus the anchor itself.
template <typename S>
SeparateLossResult<S> supcon_separate(const std::vector<Mat<S>>& views, const std::vector<int>& labels,
                                      S temperature, Similarity kind = Similarity::cosine) {
    if (!(temperature > S(0))) throw ConfigError("temperature must be > 0");
    const std::size_t nv = views.size();
    if (nv == 0) throw ShapeError("need at least one view");
    const Eigen::Index bn = views.front().rows();
    const Eigen::Index dim = views.front().cols();
    if (bn < 2 && nv < 2) throw ShapeError("contrastive loss needs at least two rows");
    for (const auto& v : views) require_shape(v.rows() == bn && v.cols() == dim, "all views share batch size");
    require_shape(labels.size() == static_cast<std::size_t>(bn), "one label per instance");

    SeparateLossResult<S> r;
    std::vector<Normalized<S>> norms;
    norms.reserve(nv);
    for (const auto& v : views) {
        norms.push_back(normalize_rows(v, kind));
        r.diagnostics.zero_vectors += norms.back().zero_rows;
    }
    std::vector<Mat<S>> du(nv, Mat<S>::Zero(bn, dim));
    const S inv_views = S(1) / static_cast<S>(nv);

    std::vector<Mat<S>> block(nv);
    std::vector<Mat<S>> dblock(nv);
    for (std::size_t q = 0; q < nv; ++q) {
        for (std::size_t rr = 0; rr < nv; ++rr) {
            block[rr] = (norms[q].u * norms[rr].u.transpose()) / temperature;
            dblock[rr] = Mat<S>::Zero(bn, bn);
        }
        for (Eigen::Index a = 0; a < bn; ++a) {
            ++r.diagnostics.anchors;
            const int ya = labels[static_cast<std::size_t>(a)];
            std::size_t n_pos = 0;
            S m = -std::numeric_limits<S>::infinity();
            for (std::size_t rr = 0; rr < nv; ++rr)
                for (Eigen::Index b = 0; b < bn; ++b) {
                    if (rr == q && b == a) continue;
                    m = std::max(m, block[rr](a, b));
                    if (labels[static_cast<std::size_t>(b)] == ya) ++n_pos;
                }
            if (n_pos == 0) {
                ++r.diagnostics.anchors_without_positives;
                continue;
            }
            S denom = S(0);
            for (std::size_t rr = 0; rr < nv; ++rr)
                for (Eigen::Index b = 0; b < bn; ++b)
                    if (!(rr == q && b == a)) denom += dblock[rr](a, b) = std::exp(block[rr](a, b) - m);
            const S lse = m + std::log(denom);
            const S inv_p = S(1) / static_cast<S>(n_pos);
            S pos_sum = S(0);
            for (std::size_t rr = 0; rr < nv; ++rr)
                for (Eigen::Index b = 0; b < bn; ++b) {
                    if (rr == q && b == a) continue;
                    S g = dblock[rr](a, b) / denom;
                    if (labels[static_cast<std::size_t>(b)] == ya) {
                        pos_sum += block[rr](a, b);
                        g -= inv_p;
                    }
                    dblock[rr](a, b) = g * inv_views;
                }
            r.value += inv_views * (lse - pos_sum * inv_p);
        }
        for (std::size_t rr = 0; rr < nv; ++rr) {
            du[q].noalias() += dblock[rr] * norms[rr].u / temperature;
            du[rr].noalias() += dblock[rr].transpose() * norms[q].u / temperature;
        }
    }
    r.grads.reserve(nv);
    for (std::size_t q = 0; q < nv; ++q) r.grads.push_back(normalize_rows_backward(norms[q], du[q], kind));
    return r;
}

/// Stacks views view-major: row q*bn + i is view q of instance i.
template <typename S>
Mat<S> flatten_views(const std::vector<Mat<S>>& views) {
    const Eigen::Index bn = views.front().rows();
    Mat<S> out(bn * static_cast<Eigen::Index>(views.size()), views.front().cols());
    for (std::size_t q = 0; q < views.size(); ++q) out.middleRows(static_cast<Eigen::Index>(q) * bn, bn) = views[q];
    return out;
}

inline std::vector<int> repeat_labels(const std::vector<int>& labels, std::size_t views) {
    std::vector<int> out;
    out.reserve(labels.size() * views);
    for (std::size_t q = 0; q < views; ++q) out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

/// Mean softmax cross-entropy over rows; grad is w.r.t. the logits.
template <typename S>
LossResult<S> softmax_cross_entropy(const Mat<S>& logits, const std::vector<int>& labels) {
    require_shape(labels.size() == static_cast<std::size_t>(logits.rows()), "one label per logit row");
    LossResult<S> r;
    const Eigen::Index n = logits.rows();
    r.grad.resize(n, logits.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= logits.cols()) throw ShapeError("label outside the logit range");
        const S m = logits.row(i).maxCoeff();
        RowVec<S> e = (logits.row(i).array() - m).exp();
        const S sum = e.sum();
        r.value += (m + std::log(sum)) - logits(i, y);
        r.grad.row(i) = e / sum;
        r.grad(i, y) -= S(1);
    }
    r.value /= static_cast<S>(n);
    r.grad /= static_cast<S>(n);
    return r;
}

} // namespace scott
