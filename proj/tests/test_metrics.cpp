#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "salmet/common.hpp"
#include "salmet/metrics.hpp"
#include "salmet/model.hpp"
#include "salmet/perturb.hpp"
#include "salmet/rng.hpp"
#include "salmet/saliency.hpp"
#include "testnets.hpp"

using namespace salmet;
using Catch::Approx;

namespace {

SaliencyMap map_2x2(std::vector<double> vals) {
    SaliencyMap m;
    m.height = 2;
    m.width = 2;
    m.values = std::move(vals);
    m.method_id = "test";
    return m;
}

// w = (1,0,0,0), mean 0.5, image (0.8,0.5,0.5,0.5): score 0.8, only pixel 0 matters.
struct StepCase {
    Model model = make_affine_oracle(2, 2, 1, {1, 0, 0, 0}, 0.0);
    Image img{2, 2, 1};
    PerturbationSpec spec = PerturbationSpec::dataset_mean({0.5});
    StepCase() {
        img.pixels = {0.8, 0.5, 0.5, 0.5};
        img.id = 11;
    }
};

}  // namespace

TEST_CASE("pixel orderings sort by signed relevance with id tie-breaks") {
    const SaliencyMap m = map_2x2({3, 1, 2, 0});
    CHECK(pixel_ordering(m, OrderMode::MoRF).permutation == std::vector<int>{0, 2, 1, 3});
    CHECK(pixel_ordering(m, OrderMode::LeRF).permutation == std::vector<int>{3, 1, 2, 0});

    const SaliencyMap tied = map_2x2({0.5, 0.5, 0.5, 0.5});
    CHECK(pixel_ordering(tied, OrderMode::MoRF).permutation == std::vector<int>{0, 1, 2, 3});
    CHECK(pixel_ordering(tied, OrderMode::LeRF).permutation == std::vector<int>{0, 1, 2, 3});

    SECTION("signed values: most negative goes last in MoRF, first in LeRF") {
        const SaliencyMap s = map_2x2({-2, 1, 0, -0.5});
        CHECK(pixel_ordering(s, OrderMode::MoRF).permutation == std::vector<int>{1, 2, 3, 0});
        CHECK(pixel_ordering(s, OrderMode::LeRF).permutation == std::vector<int>{0, 3, 2, 1});
    }
    SECTION("random mode and non-finite values are rejected") {
        CHECK_THROWS_AS(pixel_ordering(m, OrderMode::Random), contract_error);
        SaliencyMap bad = map_2x2({1, 2, std::nan(""), 4});
        CHECK_THROWS_AS(pixel_ordering(bad, OrderMode::MoRF), contract_error);
    }
}

TEST_CASE("perturbation replaces whole pixels") {
    StepCase tc;
    StreamRng rng(1);

    SECTION("dataset mean drops the oracle score from 0.8 to 0.5") {
        const int ids[1] = {0};
        const Image pert = perturb(tc.img, ids, tc.spec, rng);
        CHECK(forward(tc.model, tc.img).confidence == Approx(0.8));
        CHECK(forward(tc.model, pert).confidence == Approx(0.5));
        CHECK(tc.img.pixels[0] == 0.8);  // input untouched
    }
    SECTION("empty id list is the identity") {
        const Image pert = perturb(tc.img, std::span<const int>{}, tc.spec, rng);
        CHECK(pert.pixels == tc.img.pixels);
    }
    SECTION("all channels at a location are replaced") {
        Image img(1, 2, 3);
        img.pixels = {0.1, 0.2, 0.3, 0.9, 0.8, 0.7};
        const int ids[1] = {1};
        const Image pert = perturb(img, ids, PerturbationSpec::dataset_mean({0.4, 0.5, 0.6}), rng);
        CHECK(pert.pixels == std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    }
    SECTION("random-rgb draws land in [0,1) and are stream-deterministic") {
        Image img(2, 2, 3);
        for (double& v : img.pixels) v = 0.5;
        const int ids[2] = {2, 0};
        StreamRng r1(42), r2(42);
        const Image a = perturb(img, ids, PerturbationSpec::random_rgb(), r1);
        const Image b = perturb(img, ids, PerturbationSpec::random_rgb(), r2);
        CHECK(a.pixels == b.pixels);
        for (int c = 0; c < 3; ++c) {
            CHECK(a.at(0, 0, c) >= 0.0);
            CHECK(a.at(0, 0, c) < 1.0);
            CHECK(a.at(1, 0, c) != 0.5);
        }
        CHECK(a.at(0, 1, 0) == 0.5);
        CHECK(a.at(1, 1, 1) == 0.5);
    }
    SECTION("duplicate and out-of-range ids are rejected") {
        const int dup[2] = {1, 1};
        CHECK_THROWS_AS(perturb(tc.img, dup, tc.spec, rng), contract_error);
        const int big[1] = {4};
        CHECK_THROWS_AS(perturb(tc.img, big, tc.spec, rng), contract_error);
        const int neg[1] = {-1};
        CHECK_THROWS_AS(perturb(tc.img, neg, tc.spec, rng), contract_error);
    }
}

TEST_CASE("AOPC on the 2x2 single-weight oracle") {
    StepCase tc;
    StreamRng rng(3);
    const SaliencyMap gt = ground_truth_saliency(tc.model, tc.img, tc.spec);

    SECTION("MoRF curve steps to 0.3 immediately; AOPC at L=4 is 0.24") {
        const AopcResult r = aopc_curve(tc.model, tc.img, pixel_ordering(gt, OrderMode::MoRF), 4, tc.spec, rng);
        REQUIRE(r.curve.size() == 5);
        CHECK(r.curve[0] == 0.0);
        for (int k = 1; k <= 4; ++k) CHECK(r.curve[static_cast<std::size_t>(k)] == Approx(0.3).margin(1e-12));
        CHECK(aopc_from_curve(r.curve, 4) == Approx(0.24).margin(1e-12));
    }
    SECTION("LeRF defers the drop to the last step; AOPC is 0.06") {
        const AopcResult r = aopc_curve(tc.model, tc.img, pixel_ordering(gt, OrderMode::LeRF), 4, tc.spec, rng);
        REQUIRE(r.curve.size() == 5);
        for (int k = 0; k <= 3; ++k) CHECK(r.curve[static_cast<std::size_t>(k)] == Approx(0.0).margin(1e-12));
        CHECK(r.curve[4] == Approx(0.3).margin(1e-12));
        CHECK(aopc_from_curve(r.curve, 4) == Approx(0.06).margin(1e-12));
    }
    SECTION("prefixes of the curve give the shorter-L values") {
        const AopcResult r = aopc_curve(tc.model, tc.img, pixel_ordering(gt, OrderMode::MoRF), 4, tc.spec, rng);
        CHECK(aopc_from_curve(r.curve, 2) == Approx(0.2).margin(1e-12));
        CHECK(aopc_from_curve(r.curve, 0) == 0.0);
    }
    SECTION("L larger than the pixel count is rejected") {
        CHECK_THROWS_AS(aopc_curve(tc.model, tc.img, pixel_ordering(gt, OrderMode::MoRF), 5, tc.spec, rng),
                        contract_error);
    }
}

TEST_CASE("AOPC curves match a from-scratch prefix rebuild") {
    testnets::NetSpec spec;
    spec.h = 6;
    spec.w = 6;
    spec.c = 3;
    spec.classes = 4;
    spec.stages = {{4, 3, 1, true, true, true, true}};
    const Model m = testnets::make_random_network(spec, 99);
    const Image img = testnets::make_random_image(6, 6, 3, 100);
    const PerturbationSpec pspec = PerturbationSpec::dataset_mean({0.4, 0.5, 0.6});

    StreamRng shuffler(8);
    PixelOrdering ord;
    ord.mode = OrderMode::MoRF;
    ord.permutation = random_permutation(36, shuffler);

    StreamRng rng(0);
    const AopcResult r = aopc_curve(m, img, ord, 36, pspec, rng);
    for (int L : {1, 5, 17, 36})
        CHECK(aopc_from_curve(r.curve, L) ==
              Approx(oracles::aopc_from_scratch(m, img, ord.permutation, L, pspec)).margin(1e-12));
}

TEST_CASE("AOPC holds the base class fixed even when the argmax flips") {
    // Two logits fed by disjoint pixels; perturbing pixel 0 flips the argmax.
    nlohmann::json manifest;
    manifest["kind"] = "network";
    manifest["input"] = {{"height", 2}, {"width", 2}, {"channels", 1}};
    manifest["class_count"] = 2;
    manifest["standardization"] = {{"mean", {0.0}}, {"std", {1.0}}};
    manifest["layers"] = nlohmann::json::array({nlohmann::json{{"kind", "flatten"}},
                                                nlohmann::json{{"kind", "dense"}, {"out_features", 2}},
                                                nlohmann::json{{"kind", "softmax"}}});
    testnets::BlobBuilder blob;
    // logit0 = 4*x0, logit1 = 3*x3
    for (double v : {4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0}) blob.f32(v);
    const Model m = load_model(manifest, blob.bytes);

    Image img(2, 2, 1);
    img.pixels = {1.0, 0.0, 0.0, 0.9};  // logits (4, 2.7): class 0 predicted
    REQUIRE(forward(m, img).predicted_class == 0);

    PixelOrdering ord;
    ord.mode = OrderMode::MoRF;
    ord.permutation = {0, 3, 1, 2};
    StreamRng rng(0);
    const AopcResult r = aopc_curve(m, img, ord, 4, PerturbationSpec::dataset_mean({0.0}), rng);

    // After pixel 0 is zeroed the argmax flips to class 1, but the curve keeps
    // tracking class 0's probability.
    const double p0 = 1.0 / (1.0 + std::exp(2.7 - 4.0));
    const double p1 = 1.0 / (1.0 + std::exp(2.7 - 0.0));
    const double p2 = 0.5;
    CHECK(r.curve[1] == Approx(p0 - p1).margin(1e-12));
    CHECK(r.curve[2] == Approx(p0 - p2).margin(1e-12));
}

TEST_CASE("faithfulness correlates single-pixel drops with relevance") {
    StreamRng wr(55);
    std::vector<double> w(8 * 8 * 3);
    for (double& v : w) v = wr.next_double() * 2 - 1;
    const Model m = make_affine_oracle(8, 8, 3, w, 0.2);
    const Image img = testnets::make_random_image(8, 8, 3, 56, 5);
    const PerturbationSpec spec = PerturbationSpec::dataset_mean({0.5, 0.5, 0.5});
    const SaliencyMap gt = ground_truth_saliency(m, img, spec);

    std::vector<int> sample(64);
    std::iota(sample.begin(), sample.end(), 0);

    SECTION("the exact map scores 1.0") {
        StreamRng rng(0);
        const FaithfulnessResult r = faithfulness(m, img, gt, sample, spec, rng);
        CHECK_FALSE(r.degenerate);
        CHECK(r.f_score == Approx(1.0).margin(1e-9));
        CHECK(r.deltas.size() == 64);
    }
    SECTION("the negated map scores -1.0") {
        SaliencyMap neg = gt;
        for (double& v : neg.values) v = -v;
        StreamRng rng(0);
        CHECK(faithfulness(m, img, neg, sample, spec, rng).f_score == Approx(-1.0).margin(1e-9));
    }
    SECTION("a constant model is degenerate and scores 0") {
        const Model flat = make_affine_oracle(8, 8, 3, std::vector<double>(192, 0.0), 0.7);
        StreamRng rng(0);
        const FaithfulnessResult r = faithfulness(flat, img, gt, sample, spec, rng);
        CHECK(r.degenerate);
        CHECK(r.f_score == 0.0);
    }
    SECTION("a constant map is degenerate too") {
        SaliencyMap flat = gt;
        for (double& v : flat.values) v = 0.25;
        StreamRng rng(0);
        const FaithfulnessResult r = faithfulness(m, img, flat, sample, spec, rng);
        CHECK(r.degenerate);
        CHECK(r.f_score == 0.0);
    }
    SECTION("duplicate sample pixels and short samples are rejected") {
        const std::vector<int> dup = {3, 4, 3};
        StreamRng rng(0);
        CHECK_THROWS_AS(faithfulness(m, img, gt, dup, spec, rng), contract_error);
        const std::vector<int> one = {3};
        CHECK_THROWS_AS(faithfulness(m, img, gt, one, spec, rng), contract_error);
    }
    SECTION("deltas are non-cumulative: each from the unperturbed image") {
        StreamRng rng(0);
        const FaithfulnessResult r = faithfulness(m, img, gt, sample, spec, rng);
        StreamRng unused(0);
        const double f0 = forward(m, img).confidence;
        for (std::size_t i = 0; i < sample.size(); ++i) {
            const int ids[1] = {sample[i]};
            const double want = f0 - forward(m, perturb(img, ids, spec, unused)).confidence;
            REQUIRE(r.deltas[i] == Approx(want).margin(1e-12));
        }
    }
}

TEST_CASE("random baseline statistics on the 2x2 oracle") {
    StepCase tc;

    SECTION("exhaustive mean over all 24 orderings is 0.15") {
        std::vector<int> perm = {0, 1, 2, 3};
        double total = 0.0;
        int count = 0;
        std::sort(perm.begin(), perm.end());
        do {
            total += oracles::aopc_from_scratch(tc.model, tc.img, perm, 4, tc.spec);
            ++count;
        } while (std::next_permutation(perm.begin(), perm.end()));
        REQUIRE(count == 24);
        CHECK(total / 24 == Approx(0.15).margin(1e-12));
    }
    SECTION("sampled mean over 100 orderings lands near 0.15") {
        const RandomBaselineResult r = random_baseline(tc.model, tc.img, 100, 4, tc.spec, 2024);
        CHECK(r.aopc_values.size() == 100);
        CHECK(r.mean_aopc == Approx(0.15).margin(0.03));
        CHECK(r.band.low >= 0.06 - 1e-12);
        CHECK(r.band.high <= 0.24 + 1e-12);
        CHECK(r.band.low <= r.band.high);
    }
    SECTION("same master seed reproduces everything; a new seed does not") {
        const RandomBaselineResult a = random_baseline(tc.model, tc.img, 20, 4, tc.spec, 7);
        const RandomBaselineResult b = random_baseline(tc.model, tc.img, 20, 4, tc.spec, 7);
        CHECK(a.aopc_values == b.aopc_values);
        CHECK(a.mean_curve == b.mean_curve);
        const RandomBaselineResult c = random_baseline(tc.model, tc.img, 20, 4, tc.spec, 8);
        CHECK(a.aopc_values != c.aopc_values);
    }
    SECTION("orderings differ across images via the image id") {
        Image other = tc.img;
        other.id = 12;
        const RandomBaselineResult a = random_baseline(tc.model, tc.img, 40, 4, tc.spec, 7);
        const RandomBaselineResult b = random_baseline(tc.model, other, 40, 4, tc.spec, 7);
        CHECK(a.aopc_values != b.aopc_values);
    }
    SECTION("a constant model gives a flat zero baseline") {
        const Model flat = make_affine_oracle(2, 2, 1, std::vector<double>(4, 0.0), 0.3);
        const RandomBaselineResult r = random_baseline(flat, tc.img, 10, 4, tc.spec, 1);
        CHECK(r.mean_aopc == Approx(0.0).margin(1e-15));
        CHECK(r.band.low == Approx(0.0).margin(1e-15));
        CHECK(r.band.high == Approx(0.0).margin(1e-15));
        for (double v : r.mean_curve) CHECK(v == Approx(0.0).margin(1e-15));
    }
}

TEST_CASE("ground-truth orderings dominate random ones on an affine oracle") {
    StreamRng wr(31);
    std::vector<double> w(8 * 8);
    for (double& v : w) v = wr.next_double() * 2 - 1;
    const Model m = make_affine_oracle(8, 8, 1, w, 0.0);
    const Image img = testnets::make_random_image(8, 8, 1, 32, 3);
    const PerturbationSpec spec = PerturbationSpec::dataset_mean({0.5});
    const SaliencyMap gt = ground_truth_saliency(m, img, spec);

    StreamRng rng(0);
    const AopcResult morf = aopc_curve(m, img, pixel_ordering(gt, OrderMode::MoRF), 64, spec, rng);
    const AopcResult lerf = aopc_curve(m, img, pixel_ordering(gt, OrderMode::LeRF), 64, spec, rng);
    const RandomBaselineResult base = random_baseline(m, img, 50, 64, spec, 5150);

    for (int L : {4, 16, 40, 64}) {
        const double hi = aopc_from_curve(morf.curve, L);
        const double lo = aopc_from_curve(lerf.curve, L);
        for (const auto& curve : base.curves) {
            const double r = aopc_from_curve(curve, L);
            REQUIRE(hi >= r - 1e-12);
            REQUIRE(lo <= r + 1e-12);
        }
    }
}
