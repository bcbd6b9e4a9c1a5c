// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "concept_align/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "concept_align/error.hpp"
#include "concept_align/parallel.hpp"
#include "concept_align/rng.hpp"

namespace concept_align {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw Error(ErrorCode::LengthMismatch, std::string(what) + ": lengths " + std::to_string(a) + " and " +
                                                   std::to_string(b) + " differ");
    }
    if (a == 0) {
        throw Error(ErrorCode::EmptyInput, std::string(what) + ": no items");
    }
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
    check_lengths(scores.size(), labels.size(), "auc");
    require_finite(scores, "auc scores");
    const std::size_t n = scores.size();
    std::uint64_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) {
            throw Error(ErrorCode::InvalidArgument, "auc labels must be 0 or 1");
        }
        n_pos += static_cast<std::uint64_t>(l);
    }
    const std::uint64_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw Error(ErrorCode::SingleClass, "auc needs both positive and negative labels");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Doubled average ranks stay integral: a tie block at 0-based positions
    // [i, j) has average 1-based rank (i + 1 + j) / 2.
    std::uint64_t twice_rank_sum = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const std::uint64_t twice_avg = i + 1 + j;
        for (std::size_t q = i; q < j; ++q) {
            if (labels[order[q]] == 1) {
                twice_rank_sum += twice_avg;
            }
        }
        i = j;
    }
    const std::uint64_t twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    return static_cast<double>(twice_u) / static_cast<double>(2 * n_pos * n_neg);
}

double macro_auc(const Mat& scores, std::span<const int> labels) {
    check_lengths(scores.rows(), labels.size(), "macro_auc");
    const std::size_t c = scores.cols();
    if (c < 2) {
        throw Error(ErrorCode::SingleClass, "macro_auc needs at least two classes");
    }
    double total = 0.0;
    Vec column(scores.rows());
    std::vector<int> binary(scores.rows());
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t i = 0; i < scores.rows(); ++i) {
            if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
                throw Error(ErrorCode::InvalidArgument, "class label out of range");
            }
            column[i] = scores(i, k);
            binary[i] = labels[i] == static_cast<int>(k) ? 1 : 0;
        }
        total += auc(column, binary);
    }
    return total / static_cast<double>(c);
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
    check_lengths(predictions.size(), labels.size(), "accuracy");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        hits += predictions[i] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) {
        throw Error(ErrorCode::EmptyInput, "quantile of no values");
    }
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapResult bootstrap_ci(const ResampleMetric& metric, std::size_t n_items, std::size_t n_resamples,
                             std::uint64_t seed, const ResampleCheck& degenerate, std::size_t threads) {
    if (n_resamples < 100) {
        throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least 100 resamples");
    }
    if (n_items == 0) {
        throw Error(ErrorCode::DegenerateData, "bootstrap over zero items");
    }
    std::vector<std::size_t> all(n_items);
    std::iota(all.begin(), all.end(), 0);
    if (degenerate && degenerate(all)) {
        throw Error(ErrorCode::DegenerateData, "the full sample cannot be scored");
    }
    BootstrapResult result;
    result.point = metric(all);

    constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> values(n_resamples, kMissing);
    parallel_for(n_resamples, threads, [&](std::size_t r) {
        Rng rng(derive_seed(seed, r));
        std::vector<std::size_t> pick(n_items);
        for (int attempt = 0; attempt <= 100; ++attempt) {
            for (auto& p : pick) {
                p = static_cast<std::size_t>(rng.below(n_items));
            }
            if (!degenerate || !degenerate(pick)) {
                values[r] = metric(pick);
                return;
            }
        }
    });
    std::vector<double> scored;
    for (double v : values) {
        if (std::isnan(v)) {
            ++result.skipped;
        } else {
            scored.push_back(v);
        }
    }
    if (scored.empty()) {
        throw Error(ErrorCode::DegenerateData, "every bootstrap resample was degenerate");
    }
    std::sort(scored.begin(), scored.end());
    result.resamples = scored.size();
    result.lo = quantile_sorted(scored, 0.025);
    result.hi = quantile_sorted(scored, 0.975);
    return result;
}

BootstrapResult auc_bootstrap(std::span<const double> scores, std::span<const int> labels,
                              std::size_t n_resamples, std::uint64_t seed, std::size_t threads) {
    check_lengths(scores.size(), labels.size(), "auc");
    auto metric = [&](std::span<const std::size_t> idx) {
        Vec s;
        std::vector<int> l;
        s.reserve(idx.size());
        l.reserve(idx.size());
        for (std::size_t i : idx) {
            s.push_back(scores[i]);
            l.push_back(labels[i]);
        }
        return auc(s, l);
    };
    auto single_class = [&](std::span<const std::size_t> idx) {
        bool pos = false;
        bool neg = false;
        for (std::size_t i : idx) {
            (labels[i] == 1 ? pos : neg) = true;
        }
        return !(pos && neg);
    };
    return bootstrap_ci(metric, scores.size(), n_resamples, seed, single_class, threads);
}

BootstrapResult accuracy_bootstrap(std::span<const int> predictions, std::span<const int> labels,
                                   std::size_t n_resamples, std::uint64_t seed, std::size_t threads) {
    check_lengths(predictions.size(), labels.size(), "accuracy");
    auto metric = [&](std::span<const std::size_t> idx) {
        std::size_t hits = 0;
        for (std::size_t i : idx) {
            hits += predictions[i] == labels[i] ? 1 : 0;
        }
        return static_cast<double>(hits) / static_cast<double>(idx.size());
    };
    return bootstrap_ci(metric, labels.size(), n_resamples, seed, {}, threads);
}

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "incomplete_beta needs a, b > 0 and x in [0, 1]");
    }
    if (x == 0.0 || x == 1.0) {
        return x;
    }
    // Evaluate the fraction where it converges fast, reflecting otherwise.
    if (x > (a + 1.0) / (a + b + 2.0)) {
        return 1.0 - incomplete_beta(b, a, 1.0 - x);
    }
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                             b * std::log1p(-x);
    constexpr double kTiny = 1e-300;
    constexpr double kEps = 1e-16;
    // Modified Lentz evaluation.
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const double m2 = 2.0 * m;
        double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + num / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + num / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) {
            return std::exp(log_front) * h / a;
        }
    }
    throw Error(ErrorCode::NonFinite, "incomplete beta continued fraction did not converge");
}

double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "degrees of freedom must be positive");
    }
    if (std::isinf(t)) {
        return t > 0 ? 1.0 : 0.0;
    }
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
    return t > 0 ? 1.0 - tail : tail;
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::LengthMismatch, "paired t-test needs equal-length series");
    }
    const std::size_t n = a.size();
    if (n < 2) {
        throw Error(ErrorCode::TooFewItems, "paired t-test needs at least two items");
    }
    Vec d(n);
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = a[i] - b[i];
    }
    require_finite(d, "paired differences");
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) {
        ss += (v - mean) * (v - mean);
    }
    const double var = ss / static_cast<double>(n - 1);
    if (!(var > 0.0)) {
        throw Error(ErrorCode::ZeroVariance, "differences have zero variance");
    }
    TTestResult r;
    r.df = n - 1;
    r.t = mean / std::sqrt(var / static_cast<double>(n));
    const double df = static_cast<double>(r.df);
    r.p = incomplete_beta(0.5 * df, 0.5, df / (df + r.t * r.t));
    return r;
}

}  // namespace concept_align
