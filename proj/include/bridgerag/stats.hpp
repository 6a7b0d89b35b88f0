#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "bridgerag/error.hpp"

namespace bridgerag {

namespace detail {

inline double log2_binom(std::uint64_t n, std::uint64_t k) {
    static const double ln2 = std::log(2.0);
    return (std::lgamma(static_cast<double>(n) + 1.0) -
            std::lgamma(static_cast<double>(k) + 1.0) -
            std::lgamma(static_cast<double>(n - k) + 1.0)) /
           ln2;
}

inline double log2_add(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double hi = std::max(a, b), lo = std::min(a, b);
    return hi + std::log2(1.0 + std::exp2(lo - hi));
}

} // namespace detail

/// One-sided exact sign test: P[X >= wins] for X ~ Binomial(wins+losses, 1/2),
/// accumulated in log space so the tail stays finite and nonzero out to
/// n = 1000 (2^-1000 is still a normal double neighborhood).
inline double sign_test(std::uint64_t wins, std::uint64_t losses) {
    const std::uint64_t n = wins + losses;
    if (n == 0) raise(ErrorKind::validation, "sign_test requires wins + losses >= 1");
    if (wins == 0) return 1.0;
    double acc = -std::numeric_limits<double>::infinity();
    for (std::uint64_t k = wins; k <= n; ++k)
        acc = detail::log2_add(acc, detail::log2_binom(n, k) - static_cast<double>(n));
    return std::exp2(acc);
}

/// Bonferroni correction: min(1, m * p).
inline double bonferroni(double p, std::uint64_t m) {
    if (m < 1) raise(ErrorKind::validation, "bonferroni requires m >= 1");
    return std::min(1.0, static_cast<double>(m) * p);
}

/// Fractional (average-tie) ranks, 1-based.
inline std::vector<double> fractional_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

/// Spearman's rho: Pearson correlation of fractional ranks. Zero rank
/// variance on either side is undefined and errors.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) raise(ErrorKind::validation, "spearman: length mismatch");
    const std::size_t n = xs.size();
    if (n < 3) raise(ErrorKind::validation, "spearman requires n >= 3");
    const auto rx = fractional_ranks(xs);
    const auto ry = fractional_ranks(ys);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = rx[i] - mx, dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        raise(ErrorKind::insufficient_data, "spearman undefined: zero rank variance");
    return sxy / std::sqrt(sxx * syy);
}

struct KendallCounts {
    std::uint64_t total_pairs = 0;
    std::uint64_t x_ties = 0;     // pairs tied in x (including joint)
    std::uint64_t y_ties = 0;     // pairs tied in y (including joint)
    std::uint64_t joint_ties = 0; // pairs tied in both
    std::uint64_t discordant = 0;
};

namespace detail {

inline std::uint64_t merge_count_inversions(std::vector<double>& v, std::vector<double>& tmp,
                                            std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t count =
        merge_count_inversions(v, tmp, lo, mid) + merge_count_inversions(v, tmp, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) { // strict: equal y pairs are ties, not inversions
            count += mid - i;
            tmp[k++] = v[j++];
        } else {
            tmp[k++] = v[i++];
        }
    }
    while (i < mid) tmp[k++] = v[i++];
    while (j < hi) tmp[k++] = v[j++];
    std::copy(tmp.begin() + static_cast<std::ptrdiff_t>(lo),
              tmp.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return count;
}

} // namespace detail

/// Knight-style O(n log n) pair accounting for tau-b.
inline KendallCounts kendall_counts(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) raise(ErrorKind::validation, "kendall_tau: length mismatch");
    const std::size_t n = xs.size();
    if (n < 2) raise(ErrorKind::validation, "kendall_tau requires n >= 2");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (xs[a] != xs[b]) return xs[a] < xs[b];
        return ys[a] < ys[b];
    });

    KendallCounts c;
    c.total_pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;

    auto tie_pairs = [](std::uint64_t t) { return t * (t - 1) / 2; };

    // x ties and joint ties from the (x, y)-sorted order
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[idx[j + 1]] == xs[idx[i]]) ++j;
        c.x_ties += tie_pairs(j - i + 1);
        std::size_t a = i;
        while (a <= j) {
            std::size_t b = a;
            while (b + 1 <= j && ys[idx[b + 1]] == ys[idx[a]]) ++b;
            c.joint_ties += tie_pairs(b - a + 1);
            a = b + 1;
        }
        i = j + 1;
    }

    // y ties
    std::vector<double> ysorted(n);
    for (std::size_t k = 0; k < n; ++k) ysorted[k] = ys[k];
    std::sort(ysorted.begin(), ysorted.end());
    i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && ysorted[j + 1] == ysorted[i]) ++j;
        c.y_ties += tie_pairs(j - i + 1);
        i = j + 1;
    }

    // Discordant pairs = inversions of y in the (x, y)-sorted sequence.
    // Equal-x blocks are y-ascending, so no within-block pair is counted.
    std::vector<double> yseq(n), tmp(n);
    for (std::size_t k = 0; k < n; ++k) yseq[k] = ys[idx[k]];
    c.discordant = detail::merge_count_inversions(yseq, tmp, 0, n);
    return c;
}

/// Kendall's tau-b (tie-corrected). All-tied input errors: the coefficient
/// is undefined when either margin has no untied pair.
inline double kendall_tau(const std::vector<double>& xs, const std::vector<double>& ys) {
    const KendallCounts c = kendall_counts(xs, ys);
    const std::uint64_t nx = c.total_pairs - c.x_ties;
    const std::uint64_t ny = c.total_pairs - c.y_ties;
    if (nx == 0 || ny == 0)
        raise(ErrorKind::insufficient_data, "kendall_tau undefined: all-tied input");
    // concordant - discordant = tot - xtie - ytie + joint - 2*discordant
    const double con_minus_dis =
        static_cast<double>(c.total_pairs) - static_cast<double>(c.x_ties) -
        static_cast<double>(c.y_ties) + static_cast<double>(c.joint_ties) -
        2.0 * static_cast<double>(c.discordant);
    return con_minus_dis / std::sqrt(static_cast<double>(nx) * static_cast<double>(ny));
}

} // namespace bridgerag
