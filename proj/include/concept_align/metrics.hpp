// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation statistics: rank-sum AUC, accuracy, percentile bootstrap
// confidence intervals and the two-sided paired t-test.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "concept_align/numerics.hpp"

namespace concept_align {

/// Binary AUC with half credit for ties, computed from average ranks.
/// labels must be 0 or 1 with both present. Throws SingleClass,
/// LengthMismatch, EmptyInput, InvalidArgument or NonFinite.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Mean one-vs-rest AUC over the columns of an n x C score matrix; labels
/// are class indices in [0, C). Every class must occur and not be the only one.
double macro_auc(const Mat& scores, std::span<const int> labels);

/// Fraction of equal entries. Throws LengthMismatch or EmptyInput.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Metric over a resample of item indices (with repetition).
using ResampleMetric = std::function<double(std::span<const std::size_t>)>;
/// True when a resample cannot be scored (e.g. a single label class).
using ResampleCheck = std::function<bool(std::span<const std::size_t>)>;

struct BootstrapResult {
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t resamples = 0;  // scored resamples
    std::size_t skipped = 0;    // gave up after 100 redraws
};

/// Percentile 95% interval over n_resamples resamples of n_items items. A
/// degenerate resample is redrawn up to 100 times, then skipped. Resample r
/// draws from its own stream derived from (seed, r), so the result does not
/// depend on the thread count. Throws InvalidArgument (n_resamples < 100)
/// or DegenerateData (nothing scorable).
BootstrapResult bootstrap_ci(const ResampleMetric& metric, std::size_t n_items, std::size_t n_resamples,
                             std::uint64_t seed, const ResampleCheck& degenerate = {}, std::size_t threads = 1);

/// bootstrap_ci for binary AUC; resamples with one label class are redrawn.
BootstrapResult auc_bootstrap(std::span<const double> scores, std::span<const int> labels,
                              std::size_t n_resamples, std::uint64_t seed, std::size_t threads = 1);

/// bootstrap_ci for accuracy.
BootstrapResult accuracy_bootstrap(std::span<const int> predictions, std::span<const int> labels,
                                   std::size_t n_resamples, std::uint64_t seed, std::size_t threads = 1);

/// Linear-interpolation quantile of sorted values, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

/// Regularized incomplete beta I_x(a, b) via a continued fraction.
double incomplete_beta(double a, double b, double x);

/// Student-t CDF with df degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
    double t = 0.0;
    double p = 0.0;  // two-sided
    std::size_t df = 0;
};

/// Paired two-sided t-test on a - b. Throws LengthMismatch, TooFewItems
/// (n < 2) or ZeroVariance.
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

}  // namespace concept_align
