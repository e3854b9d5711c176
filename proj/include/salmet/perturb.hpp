#pragma once

#include <span>
#include <string>
#include <vector>

#include "salmet/common.hpp"
#include "salmet/rng.hpp"
#include "salmet/tensor.hpp"

namespace salmet {

enum class PerturbKind { DatasetMean, RandomRgb };

inline const char* perturb_kind_name(PerturbKind k) {
    return k == PerturbKind::DatasetMean ? "mean" : "random-rgb";
}

struct PerturbationSpec {
    PerturbKind kind = PerturbKind::DatasetMean;
    std::vector<double> mean;              // per channel, dataset-mean only
    std::string rng_tag = "perturb-rrgb";  // stream derivation tag, random-rgb only

    static PerturbationSpec dataset_mean(std::vector<double> mean_per_channel) {
        PerturbationSpec s;
        s.kind = PerturbKind::DatasetMean;
        s.mean = std::move(mean_per_channel);
        for (double m : s.mean) require(m >= 0.0 && m <= 1.0, "perturbation: dataset mean outside [0,1]");
        return s;
    }
    static PerturbationSpec random_rgb(std::string tag = "perturb-rrgb") {
        PerturbationSpec s;
        s.kind = PerturbKind::RandomRgb;
        s.rng_tag = std::move(tag);
        return s;
    }
};

// Replaces all C channels of each listed pixel; returns a copy. Random-rgb
// channels are drawn from `rng` in (list order, channel order), so results are
// a pure function of the stream seed.
inline Image perturb(const Image& img, std::span<const int> pixel_ids, const PerturbationSpec& spec,
                     StreamRng& rng) {
    const int n_pixels = img.height * img.width;
    if (spec.kind == PerturbKind::DatasetMean)
        require(static_cast<int>(spec.mean.size()) == img.channels,
                "perturb: dataset mean channel count mismatch");

    std::vector<char> seen(static_cast<std::size_t>(n_pixels), 0);
    Image out = img;
    for (int id : pixel_ids) {
        require(id >= 0 && id < n_pixels, "perturb: pixel id out of range");
        require(!seen[static_cast<std::size_t>(id)], "perturb: duplicate pixel id");
        seen[static_cast<std::size_t>(id)] = 1;
        const int y = id / img.width;
        const int x = id % img.width;
        for (int c = 0; c < img.channels; ++c)
            out.at(y, x, c) =
                spec.kind == PerturbKind::DatasetMean ? spec.mean[static_cast<std::size_t>(c)] : rng.next_double();
    }
    return out;
}

}  // namespace salmet
