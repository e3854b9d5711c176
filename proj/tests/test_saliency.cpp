#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "salmet/common.hpp"
#include "salmet/model.hpp"
#include "salmet/perturb.hpp"
#include "salmet/rng.hpp"
#include "salmet/saliency.hpp"
#include "testnets.hpp"

using namespace salmet;
using Catch::Approx;

TEST_CASE("sensitivity takes the channel-wise max gradient magnitude") {
    SECTION("constant model gives a zero map") {
        const Model m = make_affine_oracle(3, 3, 2, std::vector<double>(18, 0.0), 0.4);
        const SaliencyMap map = sensitivity_map(m, testnets::make_random_image(3, 3, 2, 1));
        for (double v : map.values) CHECK(v == 0.0);
    }
    SECTION("hand case: weights (0.2, -0.5, 0.1) at one pixel") {
        std::vector<double> w(2 * 2 * 3, 0.0);
        w[0] = 0.2;
        w[1] = -0.5;
        w[2] = 0.1;
        const Model m = make_affine_oracle(2, 2, 3, w, 0.0);
        const SaliencyMap map = sensitivity_map(m, testnets::make_random_image(2, 2, 3, 2));
        CHECK(map.at(0, 0) == Approx(0.5));
        CHECK(map.at(0, 1) == 0.0);
        CHECK(map.sign == SignCapability::PositiveOnly);
    }
    SECTION("values nonnegative and close to FD on a random net") {
        testnets::NetSpec spec;
        spec.h = 6;
        spec.w = 6;
        spec.c = 2;
        spec.classes = 3;
        spec.stages = {{4, 3, 1, true, false, true, false}};
        const testnets::FdCase fc = testnets::make_fd_case(spec, 7, 1);
        const SaliencyMap map = sensitivity_map(fc.model, fc.image);
        const int pred = forward(fc.model, fc.image).predicted_class;
        const std::vector<double> fd = oracles::fd_gradient(fc.model, fc.image, pred);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) {
                CHECK(map.at(y, x) >= 0.0);
                double want = 0.0;
                for (int c = 0; c < 2; ++c)
                    want = std::max(want,
                                    std::abs(fd[(static_cast<std::size_t>(y) * 6 + x) * 2 +
                                                static_cast<std::size_t>(c)]));
                CHECK(map.at(y, x) == Approx(want).margin(1e-3));
            }
    }
}

TEST_CASE("gradient-times-input sums signed channel products") {
    SECTION("input equal to the standardization mean gives a zero map") {
        testnets::NetSpec spec;
        spec.stages = {{4, 3, 1, true, false, true, true}};
        const Model m = testnets::make_random_network(spec, 404);
        Image img(8, 8, 3);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = m.std_mean[static_cast<std::size_t>(c)];
        const SaliencyMap map = gradient_x_input_map(m, img);
        for (double v : map.values) CHECK(v == Approx(0.0).margin(1e-12));
    }
    SECTION("affine oracle with identity standardization reproduces w.x per pixel") {
        StreamRng rng(9);
        std::vector<double> w(4 * 4 * 3);
        for (double& v : w) v = rng.next_double() * 2 - 1;
        const Model m = make_affine_oracle(4, 4, 3, w, 0.1);
        const Image img = testnets::make_random_image(4, 4, 3, 10);
        const SaliencyMap map = gradient_x_input_map(m, img);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                double want = 0.0;
                for (int c = 0; c < 3; ++c)
                    want += w[(static_cast<std::size_t>(y) * 4 + x) * 3 + static_cast<std::size_t>(c)] *
                            img.at(y, x, c);
                CHECK(map.at(y, x) == Approx(want).margin(1e-9));
            }
        CHECK(map.sign == SignCapability::Signed);
    }
    SECTION("hand case: gradient (0.2,-0.5,0.1) against standardized input (1,1,1)") {
        std::vector<double> w(1 * 1 * 3);
        w = {0.2, -0.5, 0.1};
        const Model m = make_affine_oracle(1, 1, 3, w, 0.0);
        Image img(1, 1, 3);
        img.pixels = {1.0, 1.0, 1.0};
        const SaliencyMap map = gradient_x_input_map(m, img);
        CHECK(map.at(0, 0) == Approx(-0.2).margin(1e-12));
    }
}

TEST_CASE("edge detection is a Sobel magnitude with replicate borders") {
    SECTION("uniform image has no edges") {
        Image img(5, 7, 3);
        for (double& v : img.pixels) v = 0.37;
        const SaliencyMap map = edge_detection_map(img);
        for (double v : map.values) CHECK(v == Approx(0.0).margin(1e-12));
    }
    SECTION("vertical step edge lights up exactly the two adjacent columns") {
        Image img(8, 8, 1);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) img.at(y, x, 0) = x < 4 ? 0.0 : 1.0;
        const SaliencyMap map = edge_detection_map(img);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                if (x == 3 || x == 4)
                    CHECK(map.at(y, x) == Approx(4.0));
                else
                    CHECK(map.at(y, x) == Approx(0.0).margin(1e-12));
            }
        CHECK(map.sign == SignCapability::PositiveOnly);
    }
    SECTION("luminance weighting on color steps") {
        Image img(4, 4, 3);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) img.at(y, x, 1) = x < 2 ? 0.0 : 1.0;  // green-only step
        const SaliencyMap map = edge_detection_map(img);
        CHECK(map.at(1, 1) == Approx(4.0 * 0.587));
    }
}

TEST_CASE("random maps are stream-deterministic uniforms") {
    StreamRng a(derive_stream_seed(5, "random-map", {3ull}));
    StreamRng b(derive_stream_seed(5, "random-map", {3ull}));
    const SaliencyMap ma = random_map(32, 32, a);
    const SaliencyMap mb = random_map(32, 32, b);
    CHECK(ma.values == mb.values);

    StreamRng c(derive_stream_seed(5, "random-map", {4ull}));
    const SaliencyMap mc = random_map(32, 32, c);
    CHECK(ma.values != mc.values);

    double mean = 0.0;
    for (double v : ma.values) {
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
        mean += v;
    }
    mean /= static_cast<double>(ma.values.size());
    CHECK(mean > 0.45);
    CHECK(mean < 0.55);
}

TEST_CASE("ground-truth saliency equals the exact mean-perturbation drop") {
    SECTION("zero weights give a zero map") {
        const Model m = make_affine_oracle(3, 3, 1, std::vector<double>(9, 0.0), 0.2);
        const PerturbationSpec spec = PerturbationSpec::dataset_mean({0.5});
        const SaliencyMap map = ground_truth_saliency(m, testnets::make_random_image(3, 3, 1, 5), spec);
        for (double v : map.values) CHECK(v == 0.0);
    }
    SECTION("2x2 hand case") {
        const Model m = make_affine_oracle(2, 2, 1, {1, 0, 0, 0}, 0.0);
        Image img(2, 2, 1);
        img.pixels = {0.8, 0.5, 0.5, 0.5};
        const SaliencyMap map = ground_truth_saliency(m, img, PerturbationSpec::dataset_mean({0.5}));
        CHECK(map.at(0, 0) == Approx(0.3));
        CHECK(map.at(0, 1) == Approx(0.0).margin(1e-15));
        CHECK(map.at(1, 0) == Approx(0.0).margin(1e-15));
        CHECK(map.at(1, 1) == Approx(0.0).margin(1e-15));
    }
    SECTION("random oracle: map value equals forward drop within 1e-9") {
        StreamRng rng(77);
        std::vector<double> w(8 * 8 * 3);
        for (double& v : w) v = rng.next_double() * 2 - 1;
        const Model m = make_affine_oracle(8, 8, 3, w, 0.3);
        const Image img = testnets::make_random_image(8, 8, 3, 6);
        const PerturbationSpec spec = PerturbationSpec::dataset_mean({0.45, 0.5, 0.55});
        const SaliencyMap map = ground_truth_saliency(m, img, spec);
        const double f0 = forward(m, img).confidence;
        StreamRng unused(0);
        for (int p = 0; p < 64; ++p) {
            const int ids[1] = {p};
            const double drop = f0 - forward(m, perturb(img, ids, spec, unused)).confidence;
            REQUIRE(map.values[static_cast<std::size_t>(p)] == Approx(drop).margin(1e-9));
        }
    }
    SECTION("sigmoid link is rejected (exactness lost)") {
        const Model m = make_affine_oracle(2, 2, 1, {1, 0, 0, 0}, 0.0, true);
        Image img(2, 2, 1);
        CHECK_THROWS_AS(ground_truth_saliency(m, img, PerturbationSpec::dataset_mean({0.5})), contract_error);
    }
    SECTION("random-rgb perturbation is rejected") {
        const Model m = make_affine_oracle(2, 2, 1, {1, 0, 0, 0}, 0.0);
        Image img(2, 2, 1);
        CHECK_THROWS_AS(ground_truth_saliency(m, img, PerturbationSpec::random_rgb()), contract_error);
    }
}
