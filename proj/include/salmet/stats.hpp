#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "salmet/common.hpp"
#include "salmet/rng.hpp"

namespace salmet {

enum class Direction { HigherBetter, LowerBetter };

// Fractional (average-tie) ranks, ascending: smallest value gets rank 1.
inline std::vector<double> fractional_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        // positions i..j (0-based) share the average rank
        const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

// Ranks one image's method scores: best score gets rank 1 per the direction,
// ties get average ranks. Row sums always equal m(m+1)/2.
inline std::vector<double> rank_methods(std::span<const double> scores, Direction dir) {
    require(scores.size() >= 2, "rank_methods: need at least 2 methods");
    for (double s : scores) require(std::isfinite(s), "rank_methods: non-finite score");
    std::vector<double> asc = fractional_ranks(scores);
    if (dir == Direction::LowerBetter) return asc;
    const double m1 = static_cast<double>(scores.size()) + 1.0;
    for (double& r : asc) r = m1 - r;
    return asc;
}

struct CorrResult {
    double rho = 0.0;
    bool degenerate = false;  // zero variance in either input
};

inline CorrResult pearson(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), "pearson: length mismatch");
    require(x.size() >= 2, "pearson: need at least 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return {0.0, true};
    double r = sxy / std::sqrt(sxx * syy);
    r = std::clamp(r, -1.0, 1.0);
    return {r, false};
}

// Spearman's rho: Pearson correlation of fractional ranks.
inline CorrResult spearman(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), "spearman: length mismatch");
    require(x.size() >= 2, "spearman: need at least 2 points");
    const std::vector<double> rx = fractional_ranks(x);
    const std::vector<double> ry = fractional_ranks(y);
    return pearson(rx, ry);
}

// Rows = images (raters), columns = methods (units), cell = rank.
struct RankingMatrix {
    int n_methods = 0;
    std::vector<std::vector<double>> rows;
};

enum class AlphaLevel { Ordinal, Interval };

struct AlphaResult {
    double value = 0.0;
    bool degenerate = false;  // fewer than 2 distinct values overall
};

namespace detail {

// Krippendorff's alpha = 1 - D_o/D_e over the value-pair coincidence matrix.
// `row_at(i)` yields the i-th (possibly resampled) row; complete design only.
inline AlphaResult alpha_from_rows(const std::function<const std::vector<double>&(int)>& row_at, int n_rows,
                                   int n_methods, AlphaLevel level) {
    // distinct values with global marginal counts
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(n_rows) * static_cast<std::size_t>(n_methods));
    for (int i = 0; i < n_rows; ++i) {
        const std::vector<double>& row = row_at(i);
        values.insert(values.end(), row.begin(), row.end());
    }
    std::vector<double> distinct = values;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    const int nv = static_cast<int>(distinct.size());
    if (nv < 2) return {1.0, true};  // a single distinct value: agreement is trivially perfect

    auto value_index = [&](double v) {
        return static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin());
    };

    std::vector<double> marginal(static_cast<std::size_t>(nv), 0.0);
    for (double v : values) marginal[static_cast<std::size_t>(value_index(v))] += 1.0;
    const double n_total = static_cast<double>(values.size());

    // difference function delta^2(c,k)
    std::vector<double> delta2(static_cast<std::size_t>(nv) * static_cast<std::size_t>(nv), 0.0);
    if (level == AlphaLevel::Interval) {
        for (int c = 0; c < nv; ++c)
            for (int k = 0; k < nv; ++k) {
                const double d = distinct[static_cast<std::size_t>(c)] - distinct[static_cast<std::size_t>(k)];
                delta2[static_cast<std::size_t>(c) * static_cast<std::size_t>(nv) + static_cast<std::size_t>(k)] =
                    d * d;
            }
    } else {
        // ordinal: (sum of marginals from c to k, minus half the end marginals)^2
        std::vector<double> prefix(static_cast<std::size_t>(nv) + 1, 0.0);
        for (int g = 0; g < nv; ++g)
            prefix[static_cast<std::size_t>(g) + 1] = prefix[static_cast<std::size_t>(g)] + marginal[static_cast<std::size_t>(g)];
        for (int c = 0; c < nv; ++c)
            for (int k = 0; k < nv; ++k) {
                const int lo = std::min(c, k), hi = std::max(c, k);
                const double span_sum = prefix[static_cast<std::size_t>(hi) + 1] - prefix[static_cast<std::size_t>(lo)];
                const double d = span_sum - 0.5 * (marginal[static_cast<std::size_t>(c)] + marginal[static_cast<std::size_t>(k)]);
                delta2[static_cast<std::size_t>(c) * static_cast<std::size_t>(nv) + static_cast<std::size_t>(k)] =
                    d * d;
            }
    }

    // coincidence matrix accumulated per unit (method column)
    const double unit_pairs = static_cast<double>(n_rows) - 1.0;  // m_u - 1, complete design
    std::vector<double> unit_counts(static_cast<std::size_t>(nv), 0.0);
    double d_obs = 0.0;
    for (int u = 0; u < n_methods; ++u) {
        std::fill(unit_counts.begin(), unit_counts.end(), 0.0);
        for (int i = 0; i < n_rows; ++i)
            unit_counts[static_cast<std::size_t>(value_index(row_at(i)[static_cast<std::size_t>(u)]))] += 1.0;
        for (int c = 0; c < nv; ++c) {
            if (unit_counts[static_cast<std::size_t>(c)] == 0.0) continue;
            for (int k = 0; k < nv; ++k) {
                if (c == k || unit_counts[static_cast<std::size_t>(k)] == 0.0) continue;
                const double o_ck = unit_counts[static_cast<std::size_t>(c)] * unit_counts[static_cast<std::size_t>(k)] / unit_pairs;
                d_obs += o_ck * delta2[static_cast<std::size_t>(c) * static_cast<std::size_t>(nv) + static_cast<std::size_t>(k)];
            }
        }
    }
    d_obs /= n_total;

    double d_exp = 0.0;
    for (int c = 0; c < nv; ++c)
        for (int k = 0; k < nv; ++k) {
            if (c == k) continue;
            d_exp += marginal[static_cast<std::size_t>(c)] * marginal[static_cast<std::size_t>(k)] *
                     delta2[static_cast<std::size_t>(c) * static_cast<std::size_t>(nv) + static_cast<std::size_t>(k)];
        }
    d_exp /= n_total * (n_total - 1.0);

    if (d_exp == 0.0) return {1.0, true};
    return {1.0 - d_obs / d_exp, false};
}

}  // namespace detail

inline AlphaResult krippendorff_alpha(const RankingMatrix& m, AlphaLevel level = AlphaLevel::Ordinal) {
    require(m.rows.size() >= 2, "krippendorff_alpha: need at least 2 rows");
    require(m.n_methods >= 2, "krippendorff_alpha: need at least 2 methods");
    for (const auto& row : m.rows)
        require(static_cast<int>(row.size()) == m.n_methods, "krippendorff_alpha: ragged matrix");
    auto row_at = [&m](int i) -> const std::vector<double>& { return m.rows[static_cast<std::size_t>(i)]; };
    return detail::alpha_from_rows(row_at, static_cast<int>(m.rows.size()), m.n_methods, level);
}

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

// Linear-interpolation quantile (positions (n-1)p) over a sorted span.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    require(!sorted.empty(), "quantile: empty input");
    if (sorted.size() == 1) return sorted[0];
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted[sorted.size() - 1];
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline Interval percentile_interval(std::vector<double> stats, double coverage) {
    require(coverage > 0.0 && coverage < 1.0, "percentile_interval: coverage must be in (0,1)");
    std::sort(stats.begin(), stats.end());
    const double tail = 0.5 * (1.0 - coverage);
    return {quantile_sorted(stats, tail), quantile_sorted(stats, 1.0 - tail)};
}

// Percentile bootstrap: resample items with replacement, recompute the
// statistic, keep the full resample distribution (percentiles are then read
// off once per requested coverage).
inline std::vector<double> bootstrap_statistics(int n_items, const std::function<double(std::span<const int>)>& stat,
                                                int n_resamples, StreamRng& rng) {
    require(n_items >= 2, "bootstrap: need at least 2 samples");
    require(n_resamples >= 1, "bootstrap: need at least 1 resample");
    std::vector<int> idx(static_cast<std::size_t>(n_items));
    std::vector<double> stats(static_cast<std::size_t>(n_resamples));
    for (int r = 0; r < n_resamples; ++r) {
        for (int i = 0; i < n_items; ++i)
            idx[static_cast<std::size_t>(i)] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_items)));
        stats[static_cast<std::size_t>(r)] = stat(idx);
    }
    return stats;
}

inline Interval bootstrap_ci_mean(std::span<const double> samples, int n_resamples, double coverage, StreamRng& rng) {
    auto stat = [&samples](std::span<const int> idx) {
        double s = 0.0;
        for (int i : idx) s += samples[static_cast<std::size_t>(i)];
        return s / static_cast<double>(idx.size());
    };
    return percentile_interval(bootstrap_statistics(static_cast<int>(samples.size()), stat, n_resamples, rng),
                               coverage);
}

// Bootstrap over whole ranking rows, so method ranks stay paired within an image.
inline Interval bootstrap_ci_alpha(const RankingMatrix& m, AlphaLevel level, int n_resamples, double coverage,
                                   StreamRng& rng) {
    auto stat = [&m, level](std::span<const int> idx) {
        auto row_at = [&m, &idx](int i) -> const std::vector<double>& {
            return m.rows[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        };
        return detail::alpha_from_rows(row_at, static_cast<int>(idx.size()), m.n_methods, level).value;
    };
    return percentile_interval(bootstrap_statistics(static_cast<int>(m.rows.size()), stat, n_resamples, rng),
                               coverage);
}

struct Aggregate {
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double stddev = 0.0;  // population
    double hist_lo = 0.0;
    double hist_hi = 0.0;
    std::array<std::int64_t, 64> histogram{};
};

inline Aggregate aggregate(std::span<const double> scores) {
    require(!scores.empty(), "aggregate: empty input");
    Aggregate a;
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double sum = 0.0;
    for (double v : sorted) sum += v;
    a.mean = sum / n;
    double ss = 0.0;
    for (double v : sorted) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / n);
    a.median = quantile_sorted(sorted, 0.5);
    a.q1 = quantile_sorted(sorted, 0.25);
    a.q3 = quantile_sorted(sorted, 0.75);
    a.hist_lo = sorted.front();
    a.hist_hi = sorted.back();
    const double range = a.hist_hi - a.hist_lo;
    for (double v : sorted) {
        int bin = 0;
        if (range > 0.0) bin = std::min(63, static_cast<int>((v - a.hist_lo) / range * 64.0));
        a.histogram[static_cast<std::size_t>(bin)] += 1;
    }
    return a;
}

}  // namespace salmet
