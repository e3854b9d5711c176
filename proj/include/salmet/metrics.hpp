#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "salmet/common.hpp"
#include "salmet/model.hpp"
#include "salmet/perturb.hpp"
#include "salmet/rng.hpp"
#include "salmet/saliency.hpp"
#include "salmet/stats.hpp"
#include "salmet/tensor.hpp"

namespace salmet {

enum class OrderMode { MoRF, LeRF, Random };

inline const char* order_mode_name(OrderMode m) {
    switch (m) {
        case OrderMode::MoRF: return "morf";
        case OrderMode::LeRF: return "lerf";
        case OrderMode::Random: return "random";
    }
    return "?";
}

struct PixelOrdering {
    OrderMode mode = OrderMode::MoRF;
    std::vector<int> permutation;  // distinct pixel ids covering 0..H*W-1
};

// MoRF: signed relevance descending. LeRF: ascending (most negative first).
// Ties broken by ascending pixel id.
inline PixelOrdering pixel_ordering(const SaliencyMap& map, OrderMode mode) {
    require(mode != OrderMode::Random, "pixel_ordering: random orderings come from random_baseline");
    for (double v : map.values) require(std::isfinite(v), "pixel_ordering: non-finite relevance");
    PixelOrdering ord;
    ord.mode = mode;
    ord.permutation.resize(map.values.size());
    std::iota(ord.permutation.begin(), ord.permutation.end(), 0);
    if (mode == OrderMode::MoRF) {
        std::stable_sort(ord.permutation.begin(), ord.permutation.end(), [&](int a, int b) {
            return map.values[static_cast<std::size_t>(a)] > map.values[static_cast<std::size_t>(b)];
        });
    } else {
        std::stable_sort(ord.permutation.begin(), ord.permutation.end(), [&](int a, int b) {
            return map.values[static_cast<std::size_t>(a)] < map.values[static_cast<std::size_t>(b)];
        });
    }
    return ord;
}

struct AopcResult {
    std::vector<double> curve;  // curve[k] = f(x0) - f(xk), k = 0..L; curve[0] = 0
    OrderMode mode = OrderMode::MoRF;
    PerturbKind perturbation = PerturbKind::DatasetMean;
};

// AOPC at L = (1/(L+1)) * sum_{k=1..L} curve[k]
inline double aopc_from_curve(std::span<const double> curve, int L) {
    require(L >= 0 && L < static_cast<int>(curve.size()), "aopc: L outside computed curve");
    double s = 0.0;
    for (int k = 1; k <= L; ++k) s += curve[static_cast<std::size_t>(k)];
    return s / (static_cast<double>(L) + 1.0);
}

namespace detail {

inline void apply_pixel(Image& img, int id, const PerturbationSpec& spec, StreamRng& rng) {
    const int y = id / img.width;
    const int x = id % img.width;
    for (int c = 0; c < img.channels; ++c)
        img.at(y, x, c) =
            spec.kind == PerturbKind::DatasetMean ? spec.mean[static_cast<std::size_t>(c)] : rng.next_double();
}

// probability of the class predicted on the unperturbed image, held fixed
inline double fixed_class_prob(const Model& m, const Image& img, int cls) {
    return forward(m, img).probabilities[static_cast<std::size_t>(cls)];
}

}  // namespace detail

// Cumulative perturbation along the ordering's prefix; x^(k) extends x^(k-1)
// by one pixel. f is the probability of the class predicted on x^(0).
inline AopcResult aopc_curve(const Model& model, const Image& img, const PixelOrdering& ordering, int L,
                             const PerturbationSpec& spec, StreamRng& rng) {
    const int n_pixels = img.height * img.width;
    require(L >= 0 && L <= n_pixels, "aopc: L exceeds pixel count");
    require(static_cast<int>(ordering.permutation.size()) >= L, "aopc: ordering shorter than L");
    if (spec.kind == PerturbKind::DatasetMean)
        require(static_cast<int>(spec.mean.size()) == img.channels, "aopc: dataset mean channel count mismatch");

    const ClassScore base = forward(model, img);
    AopcResult res;
    res.mode = ordering.mode;
    res.perturbation = spec.kind;
    res.curve.assign(static_cast<std::size_t>(L) + 1, 0.0);

    Image work = img;
    for (int k = 1; k <= L; ++k) {
        detail::apply_pixel(work, ordering.permutation[static_cast<std::size_t>(k - 1)], spec, rng);
        res.curve[static_cast<std::size_t>(k)] =
            base.confidence - detail::fixed_class_prob(model, work, base.predicted_class);
    }
    return res;
}

struct FaithfulnessResult {
    double f_score = 0.0;
    bool degenerate = false;
    std::vector<int> pixel_sample;
    std::vector<double> deltas;
};

// Non-cumulative single-pixel drops Delta_i = f(x) - f(x_i), correlated with
// the map's relevance over the fixed pixel sample.
inline FaithfulnessResult faithfulness(const Model& model, const Image& img, const SaliencyMap& map,
                                       std::span<const int> pixel_sample, const PerturbationSpec& spec,
                                       StreamRng& rng) {
    require(pixel_sample.size() >= 2, "faithfulness: sample size must be >= 2");
    const ClassScore base = forward(model, img);

    FaithfulnessResult res;
    res.pixel_sample.assign(pixel_sample.begin(), pixel_sample.end());
    res.deltas.reserve(pixel_sample.size());
    std::vector<double> relevance;
    relevance.reserve(pixel_sample.size());
    for (int id : pixel_sample) {
        const int one[1] = {id};
        const Image xi = perturb(img, one, spec, rng);
        res.deltas.push_back(base.confidence - detail::fixed_class_prob(model, xi, base.predicted_class));
        relevance.push_back(map.values[static_cast<std::size_t>(id)]);
    }
    // distinctness is enforced across the whole sample, not just per call
    std::vector<int> sorted = res.pixel_sample;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
            "faithfulness: duplicate pixel id in sample");

    const CorrResult c = pearson(relevance, res.deltas);
    res.f_score = c.degenerate ? 0.0 : c.rho;
    res.degenerate = c.degenerate;
    return res;
}

struct RandomBaselineResult {
    std::vector<std::vector<double>> curves;  // per ordering, length L+1
    std::vector<double> mean_curve;
    std::vector<double> aopc_values;  // per ordering, at the requested L
    double mean_aopc = 0.0;
    Interval band;  // empirical 2.5/97.5 percentiles of aopc_values
};

// Orderings and random-rgb draws come from per-(image, ordering) derived
// streams, so the result depends only on the master seed.
inline RandomBaselineResult random_baseline(const Model& model, const Image& img, int n_orderings, int L,
                                            const PerturbationSpec& spec, std::uint64_t master_seed) {
    require(n_orderings >= 1, "random_baseline: need at least one ordering");
    const int n_pixels = img.height * img.width;
    require(L >= 0 && L <= n_pixels, "random_baseline: L exceeds pixel count");

    RandomBaselineResult res;
    res.curves.reserve(static_cast<std::size_t>(n_orderings));
    res.mean_curve.assign(static_cast<std::size_t>(L) + 1, 0.0);
    res.aopc_values.reserve(static_cast<std::size_t>(n_orderings));

    const std::uint64_t uid = static_cast<std::uint64_t>(img.id);
    for (int j = 0; j < n_orderings; ++j) {
        StreamRng perm_rng(derive_stream_seed(master_seed, "rand-ordering", {uid, static_cast<std::uint64_t>(j)}));
        PixelOrdering ord;
        ord.mode = OrderMode::Random;
        ord.permutation = random_permutation(n_pixels, perm_rng);

        StreamRng fill_rng(derive_stream_seed(master_seed, "baseline-rrgb", {uid, static_cast<std::uint64_t>(j)}));
        AopcResult a = aopc_curve(model, img, ord, L, spec, fill_rng);
        for (std::size_t k = 0; k < a.curve.size(); ++k) res.mean_curve[k] += a.curve[k];
        res.aopc_values.push_back(aopc_from_curve(a.curve, L));
        res.curves.push_back(std::move(a.curve));
    }
    for (double& v : res.mean_curve) v /= n_orderings;
    res.mean_aopc = std::accumulate(res.aopc_values.begin(), res.aopc_values.end(), 0.0) / n_orderings;
    res.band = percentile_interval(res.aopc_values, 0.95);
    return res;
}

}  // namespace salmet
