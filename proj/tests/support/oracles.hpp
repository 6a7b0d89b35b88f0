#pragma once

// Brute-force reference implementations used only by tests. Each one takes
// the dumbest correct route (full sorts, O(n^2) pair scans, exact integer
// arithmetic) so it shares no code path with the library implementation it
// checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// --- exact binomial tail, n <= 62 (counts fit in uint64) ---

inline std::uint64_t binom_exact(unsigned n, unsigned k) {
    // Pascal's triangle; fine for the n <= 50 oracle range.
    std::vector<std::vector<std::uint64_t>> c(n + 1);
    for (unsigned i = 0; i <= n; ++i) {
        c[i].assign(i + 1, 1);
        for (unsigned j = 1; j < i; ++j) c[i][j] = c[i - 1][j - 1] + c[i - 1][j];
    }
    return c[n][k];
}

/// P[X >= w] for X ~ Binomial(n, 1/2) as an exact dyadic rational
/// sum / 2^n, evaluated in double (sum <= 2^n <= 2^62 is exact).
inline double sign_test_exact(unsigned wins, unsigned losses) {
    const unsigned n = wins + losses;
    std::uint64_t sum = 0;
    for (unsigned k = wins; k <= n; ++k) sum += binom_exact(n, k);
    return static_cast<double>(sum) * std::ldexp(1.0, -static_cast<int>(n));
}

// --- rank statistics ---

/// Average ranks by O(n^2) counting: rank_i = 1 + #below + (#tied-1)/2.
inline std::vector<double> ranks_by_counting(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t below = 0, tied = 0;
        for (std::size_t j = 0; j < n; ++j) {
            below += v[j] < v[i];
            tied += v[j] == v[i];
        }
        r[i] = 1.0 + static_cast<double>(below) +
               (static_cast<double>(tied) - 1.0) / 2.0;
    }
    return r;
}

inline double spearman_oracle(const std::vector<double>& xs, const std::vector<double>& ys) {
    const auto rx = ranks_by_counting(xs);
    const auto ry = ranks_by_counting(ys);
    const std::size_t n = xs.size();
    double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
    double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
    double num = 0.0, dx2 = 0.0, dy2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx2 += (rx[i] - mx) * (rx[i] - mx);
        dy2 += (ry[i] - my) * (ry[i] - my);
    }
    return num / std::sqrt(dx2 * dy2);
}

struct PairCounts {
    std::uint64_t concordant = 0, discordant = 0, x_only_ties = 0, y_only_ties = 0,
                  joint_ties = 0;
};

inline PairCounts kendall_pairs(const std::vector<double>& xs, const std::vector<double>& ys) {
    PairCounts c;
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = i + 1; j < xs.size(); ++j) {
            const double dx = xs[i] - xs[j], dy = ys[i] - ys[j];
            if (dx == 0.0 && dy == 0.0) ++c.joint_ties;
            else if (dx == 0.0) ++c.x_only_ties;
            else if (dy == 0.0) ++c.y_only_ties;
            else if (dx * dy > 0.0) ++c.concordant;
            else ++c.discordant;
        }
    return c;
}

inline double kendall_oracle(const std::vector<double>& xs, const std::vector<double>& ys) {
    const PairCounts c = kendall_pairs(xs, ys);
    const std::uint64_t nx = c.concordant + c.discordant + c.y_only_ties;
    const std::uint64_t ny = c.concordant + c.discordant + c.x_only_ties;
    const double num = static_cast<double>(c.concordant) - static_cast<double>(c.discordant);
    return num / std::sqrt(static_cast<double>(nx) * static_cast<double>(ny));
}

// --- retrieval oracles ---

/// union_max by group-by: every (id, score) observation, max per id.
inline std::map<std::string, double> union_max_oracle(
    const std::vector<std::vector<std::pair<std::string, double>>>& lists) {
    std::map<std::string, double> best;
    for (const auto& list : lists)
        for (const auto& [id, s] : list) {
            auto it = best.find(id);
            if (it == best.end() || s > it->second) best[id] = s;
        }
    return best;
}

inline double recall_oracle(const std::vector<std::string>& top,
                            const std::set<std::string>& gold, std::size_t k) {
    std::size_t hit = 0;
    for (const auto& g : gold) {
        for (std::size_t i = 0; i < top.size() && i < k; ++i)
            if (top[i] == g) {
                ++hit;
                break;
            }
    }
    return static_cast<double>(hit) / static_cast<double>(gold.size());
}

/// Percentile rank by direct double loop.
inline std::map<std::string, double> pit_oracle(const std::map<std::string, double>& scores) {
    std::map<std::string, double> out;
    for (const auto& [id, s] : scores) {
        std::size_t le = 0;
        for (const auto& [_, t] : scores) le += t <= s;
        out[id] = static_cast<double>(le) / static_cast<double>(scores.size());
    }
    return out;
}

// --- misc helpers ---

/// Random strictly increasing transform on a finite value set: sorted
/// unique inputs map to sorted random outputs (rank-preserving relabel).
inline std::vector<double> increasing_transform(const std::vector<double>& v, std::mt19937_64& rng) {
    std::vector<double> uniq(v);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::uniform_real_distribution<double> dist(-100.0, 100.0);
    std::vector<double> targets(uniq.size());
    for (auto& t : targets) t = dist(rng);
    std::sort(targets.begin(), targets.end());
    // de-duplicate collisions deterministically
    for (std::size_t i = 1; i < targets.size(); ++i)
        if (targets[i] <= targets[i - 1]) targets[i] = std::nextafter(targets[i - 1], 1e9);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t idx = static_cast<std::size_t>(
            std::lower_bound(uniq.begin(), uniq.end(), v[i]) - uniq.begin());
        out[i] = targets[idx];
    }
    return out;
}

/// Random orthogonal matrix (dim x dim) via Gram-Schmidt on a random square.
inline std::vector<std::vector<double>> random_rotation(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::vector<double>> q(dim, std::vector<double>(dim));
    for (auto& row : q)
        for (auto& x : row) x = gauss(rng);
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < dim; ++k) dot += q[i][k] * q[j][k];
            for (std::size_t k = 0; k < dim; ++k) q[i][k] -= dot * q[j][k];
        }
        double norm = 0.0;
        for (double x : q[i]) norm += x * x;
        norm = std::sqrt(norm);
        for (double& x : q[i]) x /= norm;
    }
    return q;
}

inline std::vector<double> rotate(const std::vector<std::vector<double>>& q,
                                  const std::vector<double>& v) {
    std::vector<double> out(v.size(), 0.0);
    for (std::size_t i = 0; i < q.size(); ++i)
        for (std::size_t k = 0; k < v.size(); ++k) out[i] += q[i][k] * v[k];
    return out;
}

} // namespace oracle
