#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "salmet/common.hpp"
#include "salmet/model.hpp"
#include "salmet/perturb.hpp"
#include "salmet/rng.hpp"
#include "salmet/tensor.hpp"

namespace salmet {

enum class SignCapability { PositiveOnly, Signed };

struct SaliencyMap {
    int height = 0, width = 0;
    std::vector<double> values;  // H*W row-major
    std::string method_id;
    std::int64_t image_id = 0;
    SignCapability sign = SignCapability::Signed;

    SaliencyMap() = default;
    SaliencyMap(int h, int w) : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0.0) {}
    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct MethodDescriptor {
    std::string method_id;
    bool imported = false;
    SignCapability sign = SignCapability::Signed;
};

namespace method_id {
inline constexpr const char* sensitivity = "sensitivity";
inline constexpr const char* gradient_x_input = "gradient_x_input";
inline constexpr const char* edge_detection = "edge_detection";
inline constexpr const char* random = "random";
inline constexpr const char* ground_truth = "ground_truth";
}  // namespace method_id

// max over channels of |d logit_pred / d pixel|
inline SaliencyMap sensitivity_map(const Model& model, const Image& img) {
    const int pred = forward(model, img).predicted_class;
    const std::vector<double> g = gradient(model, img, pred);
    SaliencyMap map(img.height, img.width);
    map.method_id = method_id::sensitivity;
    map.image_id = img.id;
    map.sign = SignCapability::PositiveOnly;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double m = 0.0;
            for (int c = 0; c < img.channels; ++c) {
                const std::size_t i = (static_cast<std::size_t>(y) * img.width + x) * img.channels +
                                      static_cast<std::size_t>(c);
                m = std::max(m, std::fabs(g[i]));
            }
            map.at(y, x) = m;
        }
    return map;
}

// sum over channels of gradient * standardized input (signed relevance)
inline SaliencyMap gradient_x_input_map(const Model& model, const Image& img) {
    const int pred = forward(model, img).predicted_class;
    const std::vector<double> g = gradient(model, img, pred);
    SaliencyMap map(img.height, img.width);
    map.method_id = method_id::gradient_x_input;
    map.image_id = img.id;
    map.sign = SignCapability::Signed;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double s = 0.0;
            for (int c = 0; c < img.channels; ++c) {
                const std::size_t i = (static_cast<std::size_t>(y) * img.width + x) * img.channels +
                                      static_cast<std::size_t>(c);
                const double xs = (img.at(y, x, c) - model.std_mean[static_cast<std::size_t>(c)]) /
                                  model.std_std[static_cast<std::size_t>(c)];
                s += g[i] * xs;
            }
            map.at(y, x) = s;
        }
    return map;
}

// Sobel magnitude on luminance, replicate border, model-independent.
inline SaliencyMap edge_detection_map(const Image& img) {
    SaliencyMap map(img.height, img.width);
    map.method_id = method_id::edge_detection;
    map.image_id = img.id;
    map.sign = SignCapability::PositiveOnly;

    std::vector<double> gray(static_cast<std::size_t>(img.height) * img.width, 0.0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double v = 0.0;
            if (img.channels == 3) {
                v = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
            } else {
                for (int c = 0; c < img.channels; ++c) v += img.at(y, x, c);
                v /= img.channels;
            }
            gray[static_cast<std::size_t>(y) * img.width + x] = v;
        }

    auto g = [&](int y, int x) {
        y = std::clamp(y, 0, img.height - 1);
        x = std::clamp(x, 0, img.width - 1);
        return gray[static_cast<std::size_t>(y) * img.width + x];
    };
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double gx = -g(y - 1, x - 1) + g(y - 1, x + 1) - 2.0 * g(y, x - 1) + 2.0 * g(y, x + 1) -
                              g(y + 1, x - 1) + g(y + 1, x + 1);
            const double gy = -g(y - 1, x - 1) - 2.0 * g(y - 1, x) - g(y - 1, x + 1) + g(y + 1, x - 1) +
                              2.0 * g(y + 1, x) + g(y + 1, x + 1);
            map.at(y, x) = std::sqrt(gx * gx + gy * gy);
        }
    return map;
}

// i.i.d. uniform(0,1) relevance, reproducible from the stream seed
inline SaliencyMap random_map(int h, int w, StreamRng& rng) {
    SaliencyMap map(h, w);
    map.method_id = method_id::random;
    map.sign = SignCapability::PositiveOnly;
    for (double& v : map.values) v = rng.next_double();
    return map;
}

// R_p = sum_c w_{p,c} (x_{p,c} - mu_c): exactly the score drop from
// mean-perturbing pixel p of an identity-link affine oracle.
inline SaliencyMap ground_truth_saliency(const Model& oracle, const Image& img, const PerturbationSpec& spec) {
    require(oracle.kind == ModelKind::AffineOracle,
            "ground truth saliency: requires an identity-link affine oracle");
    require(spec.kind == PerturbKind::DatasetMean, "ground truth saliency: requires dataset-mean perturbation");
    require(static_cast<int>(spec.mean.size()) == img.channels,
            "ground truth saliency: dataset mean channel count mismatch");
    detail::check_input_shape(oracle, img);

    SaliencyMap map(img.height, img.width);
    map.method_id = method_id::ground_truth;
    map.image_id = img.id;
    map.sign = SignCapability::Signed;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double r = 0.0;
            for (int c = 0; c < img.channels; ++c) {
                const std::size_t i = (static_cast<std::size_t>(y) * img.width + x) * img.channels +
                                      static_cast<std::size_t>(c);
                r += oracle.oracle_weights[i] * (img.at(y, x, c) - spec.mean[static_cast<std::size_t>(c)]);
            }
            map.at(y, x) = r;
        }
    return map;
}

}  // namespace salmet
