#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rankodo/net.hpp"
#include "rankodo/pose.hpp"
#include "rankodo/synth.hpp"

namespace rankodo::eval {

struct LengthMismatchError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Rank correlation value plus a degenerate flag: constant inputs (or an
// all-ties denominator) report 0 instead of NaN so they cannot poison
// aggregate reports.
struct RankCorrelation {
    double value = 0.0;
    bool degenerate = false;
};

namespace detail {

inline void check_lengths(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw LengthMismatchError("input lengths differ");
    if (a.size() < 2) throw LengthMismatchError("need at least 2 observations");
}

// Fractional ranks: ties receive the mean of the rank positions they span.
inline std::vector<double> fractional_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&x](std::size_t l, std::size_t r) { return x[l] < x[r]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && x[idx[j]] == x[idx[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = avg;
        i = j;
    }
    return ranks;
}

// Strict inversions counted during merge sort.
inline std::int64_t sort_and_count(std::vector<double>& v, std::vector<double>& buf,
                                   std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::int64_t count = sort_and_count(v, buf, lo, mid) + sort_and_count(v, buf, mid, hi);
    std::size_t l = lo, r = mid, o = lo;
    while (l < mid && r < hi) {
        if (v[r] < v[l]) {
            count += static_cast<std::int64_t>(mid - l);
            buf[o++] = v[r++];
        } else {
            buf[o++] = v[l++];
        }
    }
    while (l < mid) buf[o++] = v[l++];
    while (r < hi) buf[o++] = v[r++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return count;
}

inline std::int64_t tied_pairs(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::int64_t total = 0;
    std::size_t i = 0;
    while (i < v.size()) {
        std::size_t j = i;
        while (j < v.size() && v[j] == v[i]) ++j;
        const auto t = static_cast<std::int64_t>(j - i);
        total += t * (t - 1) / 2;
        i = j;
    }
    return total;
}

}  // namespace detail

// Spearman's coefficient: Pearson correlation of fractional ranks.
inline RankCorrelation spearman(std::span<const double> a, std::span<const double> b) {
    detail::check_lengths(a, b);
    const auto ra = detail::fractional_ranks(a);
    const auto rb = detail::fractional_ranks(b);
    const std::size_t n = ra.size();
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(n);
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(n);
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xa = ra[i] - ma;
        const double xb = rb[i] - mb;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    if (da == 0.0 || db == 0.0) return {0.0, true};
    return {std::clamp(num / std::sqrt(da * db), -1.0, 1.0), false};
}

// Kendall's tau-b via Knight's O(n log n) algorithm: sort by (a, b), count
// discordant pairs as merge-sort inversions of b, and correct both
// denominator factors for ties.
inline RankCorrelation kendall(std::span<const double> a, std::span<const double> b) {
    detail::check_lengths(a, b);
    const std::size_t n = a.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t l, std::size_t r) {
        if (a[l] != a[r]) return a[l] < a[r];
        return b[l] < b[r];
    });

    std::int64_t n1 = 0;  // pairs tied in a
    std::int64_t n3 = 0;  // pairs tied in both
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && a[idx[j]] == a[idx[i]]) ++j;
        const auto t = static_cast<std::int64_t>(j - i);
        n1 += t * (t - 1) / 2;
        std::size_t k = i;
        while (k < j) {
            std::size_t l = k;
            while (l < j && b[idx[l]] == b[idx[k]]) ++l;
            const auto u = static_cast<std::int64_t>(l - k);
            n3 += u * (u - 1) / 2;
            k = l;
        }
        i = j;
    }

    std::vector<double> bs(n);
    for (std::size_t k = 0; k < n; ++k) bs[k] = b[idx[k]];
    std::vector<double> buf(n);
    const std::int64_t swaps = detail::sort_and_count(bs, buf, 0, n);
    const std::int64_t n2 = detail::tied_pairs(std::vector<double>(b.begin(), b.end()));
    const std::int64_t n0 = static_cast<std::int64_t>(n) * (static_cast<std::int64_t>(n) - 1) / 2;

    const double fa = static_cast<double>(n0 - n1);
    const double fb = static_cast<double>(n0 - n2);
    if (fa == 0.0 || fb == 0.0) return {0.0, true};
    const double numerator = static_cast<double>(n0 - n1 - n2 + n3 - 2 * swaps);
    return {std::clamp(numerator / std::sqrt(fa * fb), -1.0, 1.0), false};
}

struct CorrelationReport {
    double r_s = 0.0;
    double r_k = 0.0;
    std::size_t n = 0;
    bool r_s_degenerate = false;
    bool r_k_degenerate = false;
};

// Cumulative path length along the trajectory, meters per frame.
inline std::vector<double> path_distances(const pose::Trajectory& traj) {
    std::vector<double> d;
    d.reserve(traj.size());
    d.push_back(0.0);
    for (std::size_t k = 1; k < traj.size(); ++k)
        d.push_back(d.back() + pose::norm(traj[k].translation - traj[k - 1].translation));
    return d;
}

inline double rotation_angle(const pose::Mat3& r) {
    const double c = std::clamp((r(0, 0) + r(1, 1) + r(2, 2) - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

struct SegmentStats {
    double t_err_pct = 0.0;
    double r_err_deg_per_100m = 0.0;
    std::size_t count = 0;
};

struct DriftReport {
    double t_rel = 0.0;  // percent
    double r_rel = 0.0;  // degrees per 100 m
    std::map<double, SegmentStats> per_length;
    std::size_t segment_count = 0;
    bool empty = false;
};

struct DriftOptions {
    std::vector<double> lengths = {100, 200, 300, 400, 500, 600, 700, 800};  // meters
    int stride = 10;                                                         // frames
    bool use_rmse = false;  // aggregate errors as RMSE instead of the mean
};

namespace detail {

inline double aggregate(const std::vector<double>& v, bool rmse) {
    if (v.empty()) return 0.0;
    if (!rmse) return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s / static_cast<double>(v.size()));
}

inline bool bitwise_equal(const pose::RigidTransform& a, const pose::RigidTransform& b) {
    for (int i = 0; i < 9; ++i)
        if (a.rotation.m[static_cast<std::size_t>(i)] != b.rotation.m[static_cast<std::size_t>(i)]) return false;
    return a.translation.x == b.translation.x && a.translation.y == b.translation.y &&
           a.translation.z == b.translation.z;
}

}  // namespace detail

// Segment drift in the style of the KITTI odometry devkit: every `stride`
// frames, take the first frame at least L meters of ground-truth path away,
// compare the two relative motions, and normalize by the segment length.
inline DriftReport kitti_drift(const pose::Trajectory& gt, const pose::Trajectory& pred,
                               const DriftOptions& opt = {}) {
    if (gt.size() != pred.size()) throw LengthMismatchError("trajectory lengths differ");
    if (gt.size() < 2) throw LengthMismatchError("need at least 2 poses");
    if (opt.stride < 1) throw std::invalid_argument("stride must be >= 1");

    const std::vector<double> dist = path_distances(gt);
    std::vector<double> all_t, all_r;
    std::map<double, std::pair<std::vector<double>, std::vector<double>>> by_length;
    for (double len : opt.lengths) by_length[len];

    for (std::size_t s = 0; s < gt.size(); s += static_cast<std::size_t>(opt.stride)) {
        for (double len : opt.lengths) {
            const auto it = std::lower_bound(dist.begin() + static_cast<std::ptrdiff_t>(s),
                                             dist.end(), dist[s] + len);
            if (it == dist.end()) continue;
            const auto e = static_cast<std::size_t>(it - dist.begin());
            const pose::RigidTransform gt_rel = pose::relative_pose(gt[s], gt[e]);
            const pose::RigidTransform pred_rel = pose::relative_pose(pred[s], pred[e]);
            double t_err = 0.0, r_err = 0.0;
            // Identical motions have an identity error transform; compare
            // bitwise so exactly-equal trajectories report exact zeros.
            if (!detail::bitwise_equal(gt_rel, pred_rel)) {
                const pose::RigidTransform err = pose::compose(pose::inverse(gt_rel), pred_rel);
                t_err = pose::norm(err.translation) / len;
                r_err = rotation_angle(err.rotation) / len;
            }
            all_t.push_back(t_err);
            all_r.push_back(r_err);
            by_length[len].first.push_back(t_err);
            by_length[len].second.push_back(r_err);
        }
    }

    constexpr double kRadPerMeterToDegPer100m = 180.0 / std::numbers::pi * 100.0;
    DriftReport report;
    report.segment_count = all_t.size();
    report.empty = all_t.empty();
    report.t_rel = 100.0 * detail::aggregate(all_t, opt.use_rmse);
    report.r_rel = detail::aggregate(all_r, opt.use_rmse) * kRadPerMeterToDegPer100m;
    for (auto& [len, errs] : by_length) {
        SegmentStats st;
        st.count = errs.first.size();
        st.t_err_pct = 100.0 * detail::aggregate(errs.first, opt.use_rmse);
        st.r_err_deg_per_100m = detail::aggregate(errs.second, opt.use_rmse) * kRadPerMeterToDegPer100m;
        report.per_length[len] = st;
    }
    return report;
}

// Per-sample rows of (encoder feature, state label, decoder prediction),
// the data behind latent-space scatter plots.
struct LatentDump {
    std::size_t dim = 0;
    std::vector<double> features;  // rows() x dim
    std::vector<double> labels;
    std::vector<double> predictions;

    std::size_t rows() const { return labels.size(); }
};

inline LatentDump latent_dump(const net::Model& model, std::span<const synth::MotionSample> dataset) {
    net::validate_model(model);
    LatentDump dump;
    dump.dim = static_cast<std::size_t>(model.feature_dim());
    dump.features.reserve(dataset.size() * dump.dim);
    dump.labels.reserve(dataset.size());
    dump.predictions.reserve(dataset.size());
    for (const auto& s : dataset) {
        const auto feat = net::encoder_forward(model, s.flow_field);
        dump.predictions.push_back(net::decoder_forward(model, feat));
        dump.features.insert(dump.features.end(), feat.begin(), feat.end());
        dump.labels.push_back(pose::component(s.state, model.dof_index));
    }
    return dump;
}

// Correlates decoder predictions against state labels.
inline CorrelationReport ranking_alignment(const LatentDump& dump) {
    if (dump.rows() < 2) throw LengthMismatchError("need at least 2 rows");
    const auto rs = spearman(dump.predictions, dump.labels);
    const auto rk = kendall(dump.predictions, dump.labels);
    return {rs.value, rk.value, dump.rows(), rs.degenerate, rk.degenerate};
}

// --- CSV emission ------------------------------------------------------

namespace csv {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace csv

struct DofCorrelationRow {
    std::string dof;
    CorrelationReport report;
};

inline std::string correlation_csv(std::span<const DofCorrelationRow> rows) {
    std::string out = "dof,r_s,r_k,n\n";
    for (const auto& row : rows) {
        out += row.dof;
        out += ',';
        out += csv::num(row.report.r_s);
        out += ',';
        out += csv::num(row.report.r_k);
        out += ',';
        out += std::to_string(row.report.n);
        out += '\n';
    }
    return out;
}

inline std::string drift_csv(const DriftReport& report) {
    std::string out = "segment_length_m,t_err_pct,r_err_deg_per_100m,count\n";
    for (const auto& [len, st] : report.per_length) {
        out += csv::num(len);
        out += ',';
        out += csv::num(st.t_err_pct);
        out += ',';
        out += csv::num(st.r_err_deg_per_100m);
        out += ',';
        out += std::to_string(st.count);
        out += '\n';
    }
    out += "all," + csv::num(report.t_rel) + ',' + csv::num(report.r_rel) + ',' +
           std::to_string(report.segment_count) + '\n';
    return out;
}

inline std::string latent_csv(const LatentDump& dump) {
    std::string out;
    for (std::size_t c = 0; c < dump.dim; ++c) out += "f" + std::to_string(c) + ",";
    out += "label,prediction\n";
    for (std::size_t r = 0; r < dump.rows(); ++r) {
        for (std::size_t c = 0; c < dump.dim; ++c) {
            out += csv::num(dump.features[r * dump.dim + c]);
            out += ',';
        }
        out += csv::num(dump.labels[r]);
        out += ',';
        out += csv::num(dump.predictions[r]);
        out += '\n';
    }
    return out;
}

inline std::string loss_trace_csv(std::span<const double> trace) {
    std::string out = "step,loss\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += csv::num(trace[i]);
        out += '\n';
    }
    return out;
}

struct SweepRow {
    double fraction = 0.0;
    double r_s = 0.0;
    double t_rel = 0.0;
    double r_rel = 0.0;
};

inline std::string sweep_csv(std::span<const SweepRow> rows) {
    std::string out = "fraction,r_s,t_rel,r_rel\n";
    char frac[32];
    for (const auto& row : rows) {
        std::snprintf(frac, sizeof frac, "%g", row.fraction);
        out += frac;
        out += ',';
        out += csv::num(row.r_s);
        out += ',';
        out += csv::num(row.t_rel);
        out += ',';
        out += csv::num(row.r_rel);
        out += '\n';
    }
    return out;
}

}  // namespace rankodo::eval
