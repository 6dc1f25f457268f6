#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rankodo::rank {

struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct NonPositiveScoreError : std::domain_error {
    using std::domain_error::domain_error;
};

struct InvalidBatchError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A 2N-sample batch: N anchors interleaved with their augmentations
// (sample 2k is the anchor, 2k+1 its augmentation; both carry the anchor's
// label and target). `predictions` are decoder outputs on the same batch;
// they enter only the L1 regularizer, never the contrastive term.
struct RankingBatch {
    std::size_t dim = 0;
    std::vector<double> features;     // size() x dim, row-major
    std::vector<double> labels;       // scalar camera-state component per sample
    std::vector<double> predictions;  // decoder output per sample
    std::vector<double> targets;      // ground-truth state per sample

    std::size_t size() const { return labels.size(); }
    std::span<const double> feature(std::size_t i) const {
        return {features.data() + i * dim, dim};
    }
};

inline void validate(const RankingBatch& b) {
    const std::size_t n = b.size();
    if (n < 2 || n % 2 != 0) throw InvalidBatchError("batch must hold 2N samples, N >= 1");
    if (b.dim < 1) throw InvalidBatchError("feature dimension must be >= 1");
    if (b.features.size() != n * b.dim) throw InvalidBatchError("feature matrix shape mismatch");
    if (b.predictions.size() != n || b.targets.size() != n)
        throw InvalidBatchError("labels/predictions/targets length mismatch");
    for (double v : b.features)
        if (!std::isfinite(v)) throw InvalidBatchError("non-finite feature");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(b.labels[i]) || !std::isfinite(b.predictions[i]) ||
            !std::isfinite(b.targets[i]))
            throw InvalidBatchError("non-finite label, prediction, or target");
    }
}

// True when the batch follows the anchor/augmentation pairing convention.
inline bool has_paired_labels(const RankingBatch& b) {
    for (std::size_t k = 0; 2 * k + 1 < b.size(); ++k)
        if (b.labels[2 * k] != b.labels[2 * k + 1]) return false;
    return true;
}

struct LossHyper {
    double tau = 2.0;     // temperature of the similarity softmax
    double lambda = 2.0;  // weight of the L1 regression regularizer
};

inline void validate(const LossHyper& h) {
    if (!(h.tau > 0.0)) throw std::invalid_argument("tau must be > 0");
    if (!(h.lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
}

struct LossResult {
    double value = 0.0;
    std::vector<double> d_features;     // same layout as RankingBatch::features
    std::vector<double> d_predictions;  // one entry per sample
};

// sim(f_i, f_j) = -||f_i - f_j||_2
inline double similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidBatchError("similarity: dimension mismatch");
    double s = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const double d = a[c] - b[c];
        s += d * d;
    }
    return -std::sqrt(s);
}

// d(x_i, x_j) = |x_i - x_j|
inline double state_distance(double a, double b) { return std::abs(a - b); }

// S_{i,j}: indices k != i whose label distance to anchor i is at least that
// of j. Ties use >=, so j itself is always a member.
inline std::vector<std::size_t> ranking_set(std::size_t i, std::size_t j,
                                            std::span<const double> labels) {
    const std::size_t n = labels.size();
    if (i >= n || j >= n) throw IndexError("ranking_set: index out of range");
    if (i == j) throw IndexError("ranking_set: i and j must differ");
    const double dij = state_distance(labels[i], labels[j]);
    std::vector<std::size_t> set;
    for (std::size_t k = 0; k < n; ++k)
        if (k != i && state_distance(labels[i], labels[k]) >= dij) set.push_back(k);
    return set;
}

// Probability of observing `order` under the Plackett-Luce model: each
// position is chosen proportionally to the remaining scores.
inline double pl_ranking_probability(std::span<const double> scores,
                                     std::span<const std::size_t> order) {
    const std::size_t n = scores.size();
    if (order.size() != n) throw IndexError("order length must match score count");
    std::vector<bool> seen(n, false);
    for (std::size_t idx : order) {
        if (idx >= n || seen[idx]) throw IndexError("order is not a permutation");
        seen[idx] = true;
    }
    for (double s : scores)
        if (!(s > 0.0)) throw NonPositiveScoreError("Plackett-Luce scores must be positive");

    std::vector<double> suffix(n);
    double acc = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        acc += scores[order[k]];
        suffix[k] = acc;
    }
    double prob = 1.0;
    for (std::size_t k = 0; k < n; ++k) prob *= scores[order[k]] / suffix[k];
    return prob;
}

// P(f_j | f_i, S_{i,j}): softmax of sim/tau over the ranking set, computed
// with max subtraction. The numerator term is always in the denominator, so
// the result lies in (0, 1].
inline double pairwise_probability(std::size_t i, std::size_t j, const RankingBatch& b,
                                   double tau) {
    const std::size_t n = b.size();
    if (i >= n || j >= n) throw IndexError("pairwise_probability: index out of range");
    if (i == j) throw IndexError("pairwise_probability: i and j must differ");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");

    const double dij = state_distance(b.labels[i], b.labels[j]);
    const auto fi = b.feature(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
        if (k == i || state_distance(b.labels[i], b.labels[k]) < dij) continue;
        mx = std::max(mx, similarity(fi, b.feature(k)) / tau);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k == i || state_distance(b.labels[i], b.labels[k]) < dij) continue;
        z += std::exp(similarity(fi, b.feature(k)) / tau - mx);
    }
    return std::exp(similarity(fi, b.feature(j)) / tau - mx) / z;
}

// l^i: mean over j != i of -log P(f_j | f_i, S_{i,j}), plus
// lambda * |prediction_i - target_i|.
inline double suprnc_per_sample(std::size_t i, const RankingBatch& b, const LossHyper& h) {
    validate(b);
    validate(h);
    const std::size_t n = b.size();
    if (i >= n) throw IndexError("suprnc_per_sample: index out of range");
    double contrastive = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        contrastive += -std::log(pairwise_probability(i, j, b, h.tau));
    }
    return contrastive / static_cast<double>(n - 1) +
           h.lambda * std::abs(b.predictions[i] - b.targets[i]);
}

// Batch loss: mean of l^i over all 2N samples, with exact analytic partial
// derivatives with respect to every feature entry and every prediction.
//
// Derivative structure: with a_ik = sim(f_i, f_k)/tau, each (i, j) term is
// logsumexp_{k in S_ij}(a_ik) - a_ij, so d(term)/d(a_ik) is the softmax
// weight (minus 1 at k = j), and a_ik routes to f_i and f_k through the
// L2-norm direction. The L1 subgradient at 0 is taken as 0, which keeps the
// all-identical zero-loss batch an exact stationary point.
inline LossResult suprnc_batch(const RankingBatch& b, const LossHyper& h) {
    validate(b);
    validate(h);
    const std::size_t n = b.size();
    const std::size_t dim = b.dim;
    const double coef = 1.0 / (static_cast<double>(n) * static_cast<double>(n - 1));

    // a[i*n + k] = sim(f_i, f_k)/tau; symmetric, diagonal unused.
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < i; ++k) {
            const double s = similarity(b.feature(i), b.feature(k)) / h.tau;
            a[i * n + k] = s;
            a[k * n + i] = s;
        }

    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) dist[i * n + k] = state_distance(b.labels[i], b.labels[k]);

    // ga[i*n + k] accumulates d(value)/d(a_ik) with i held as anchor.
    std::vector<double> ga(n * n, 0.0);
    std::vector<double> w(n, 0.0);
    double contrastive = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * n;
        const double* di = dist.data() + i * n;
        double* gi = ga.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dij = di[j];
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < n; ++k)
                if (k != i && di[k] >= dij) mx = std::max(mx, ai[k]);
            double z = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                if (k == i || di[k] < dij) {
                    w[k] = 0.0;
                    continue;
                }
                w[k] = std::exp(ai[k] - mx);
                z += w[k];
            }
            contrastive += (mx + std::log(z)) - ai[j];
            const double inv_z = 1.0 / z;
            for (std::size_t k = 0; k < n; ++k)
                if (w[k] != 0.0) gi[k] += coef * w[k] * inv_z;
            gi[j] -= coef;
        }
    }

    LossResult out;
    out.d_features.assign(n * dim, 0.0);
    out.d_predictions.assign(n, 0.0);

    // Route d/d(a_ik) into the two feature rows. a_ik = -||f_i - f_k||/tau,
    // so the norm value is -a_ik * tau; identical rows get subgradient 0.
    for (std::size_t i = 0; i < n; ++i) {
        const auto fi = b.feature(i);
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            const double g = ga[i * n + k];
            if (g == 0.0) continue;
            const double r = -a[i * n + k] * h.tau;
            if (r == 0.0) continue;
            const auto fk = b.feature(k);
            const double scale = -g / (h.tau * r);
            for (std::size_t c = 0; c < dim; ++c) {
                const double diff = fi[c] - fk[c];
                out.d_features[i * dim + c] += scale * diff;
                out.d_features[k * dim + c] -= scale * diff;
            }
        }
    }

    double reg = 0.0;
    const double pred_coef = h.lambda / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double e = b.predictions[i] - b.targets[i];
        reg += std::abs(e);
        if (e > 0.0)
            out.d_predictions[i] = pred_coef;
        else if (e < 0.0)
            out.d_predictions[i] = -pred_coef;
    }

    out.value = coef * contrastive + pred_coef * reg;
    return out;
}

}  // namespace rankodo::rank
