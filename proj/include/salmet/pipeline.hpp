#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "salmet/common.hpp"
#include "salmet/io.hpp"
#include "salmet/metrics.hpp"
#include "salmet/model.hpp"
#include "salmet/parallel.hpp"
#include "salmet/perturb.hpp"
#include "salmet/report.hpp"
#include "salmet/rng.hpp"
#include "salmet/saliency.hpp"
#include "salmet/scores.hpp"
#include "salmet/stats.hpp"
#include "salmet/tensor.hpp"
#include "salmet/version.hpp"

namespace salmet {

inline constexpr const char* kRandomBaselineId = "random_baseline";

struct RunConfig {
    std::string dataset_kind;  // "cifar10" | "sald"
    std::vector<std::string> dataset_paths;
    std::string model_manifest;
    std::string model_blob;
    std::vector<std::string> methods;      // native method ids
    std::vector<std::string> import_salm;  // archives joining as extra methods
    std::vector<int> L_values = {20, 40, 60, 80, 100};
    std::vector<PerturbKind> perturbations = {PerturbKind::DatasetMean, PerturbKind::RandomRgb};
    std::vector<OrderMode> modes = {OrderMode::MoRF, OrderMode::LeRF};
    int faithfulness_sample = 100;
    int random_orderings = 100;
    int bootstrap_resamples = 10000;
    std::vector<double> coverages = {0.95, 0.999};
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::vector<int> classes;  // empty = all
    double min_confidence = 0.0;
    double max_confidence = 1.0;
    bool confidence_filter_set = false;
    bool include_random_baseline = false;
    std::string out_dir;
    int threads = 0;  // 0 = hardware count
};

inline PerturbKind parse_perturb_kind(const std::string& s) {
    if (s == "mean") return PerturbKind::DatasetMean;
    if (s == "random-rgb") return PerturbKind::RandomRgb;
    throw config_error("unknown perturbation '" + s + "', expected mean or random-rgb");
}

inline OrderMode parse_order_mode(const std::string& s) {
    if (s == "morf") return OrderMode::MoRF;
    if (s == "lerf") return OrderMode::LeRF;
    throw config_error("unknown order '" + s + "', expected morf or lerf");
}

namespace detail {

inline const std::set<std::string>& native_method_ids() {
    static const std::set<std::string> ids = {method_id::sensitivity, method_id::gradient_x_input,
                                              method_id::edge_detection, method_id::random,
                                              method_id::ground_truth};
    return ids;
}

template <typename T>
T config_get(const nlohmann::json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error("config key '" + key + "': " + e.what());
    }
}

}  // namespace detail

// Strict parse: unknown keys are config errors so typos never silently
// fall back to defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw config_error("config: not a JSON object");
    RunConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "dataset") {
            if (!value.is_object()) throw config_error("config key 'dataset': not an object");
            for (const auto& [k2, v2] : value.items()) {
                if (k2 == "kind") cfg.dataset_kind = detail::config_get<std::string>(value, k2);
                else if (k2 == "paths") cfg.dataset_paths = detail::config_get<std::vector<std::string>>(value, k2);
                else throw config_error("config: unknown key 'dataset." + k2 + "'");
            }
        } else if (key == "model") {
            if (!value.is_object()) throw config_error("config key 'model': not an object");
            for (const auto& [k2, v2] : value.items()) {
                if (k2 == "manifest") cfg.model_manifest = detail::config_get<std::string>(value, k2);
                else if (k2 == "blob") cfg.model_blob = detail::config_get<std::string>(value, k2);
                else throw config_error("config: unknown key 'model." + k2 + "'");
            }
        } else if (key == "methods") {
            cfg.methods = detail::config_get<std::vector<std::string>>(j, key);
        } else if (key == "import_salm") {
            cfg.import_salm = detail::config_get<std::vector<std::string>>(j, key);
        } else if (key == "L") {
            cfg.L_values = detail::config_get<std::vector<int>>(j, key);
        } else if (key == "perturbations") {
            cfg.perturbations.clear();
            for (const std::string& s : detail::config_get<std::vector<std::string>>(j, key))
                cfg.perturbations.push_back(parse_perturb_kind(s));
        } else if (key == "orders") {
            cfg.modes.clear();
            for (const std::string& s : detail::config_get<std::vector<std::string>>(j, key))
                cfg.modes.push_back(parse_order_mode(s));
        } else if (key == "faithfulness_sample") {
            cfg.faithfulness_sample = detail::config_get<int>(j, key);
        } else if (key == "random_orderings") {
            cfg.random_orderings = detail::config_get<int>(j, key);
        } else if (key == "bootstrap_resamples") {
            cfg.bootstrap_resamples = detail::config_get<int>(j, key);
        } else if (key == "coverages") {
            cfg.coverages = detail::config_get<std::vector<double>>(j, key);
        } else if (key == "seed") {
            cfg.seed = detail::config_get<std::uint64_t>(j, key);
            cfg.seed_set = true;
        } else if (key == "classes") {
            cfg.classes = detail::config_get<std::vector<int>>(j, key);
        } else if (key == "min_confidence") {
            cfg.min_confidence = detail::config_get<double>(j, key);
            cfg.confidence_filter_set = true;
        } else if (key == "max_confidence") {
            cfg.max_confidence = detail::config_get<double>(j, key);
            cfg.confidence_filter_set = true;
        } else if (key == "include_random_baseline") {
            cfg.include_random_baseline = detail::config_get<bool>(j, key);
        } else if (key == "out") {
            cfg.out_dir = detail::config_get<std::string>(j, key);
        } else if (key == "threads") {
            cfg.threads = detail::config_get<int>(j, key);
        } else {
            throw config_error("config: unknown key '" + key + "'");
        }
    }
    return cfg;
}

inline nlohmann::ordered_json run_config_to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["dataset"] = {{"kind", cfg.dataset_kind}, {"paths", cfg.dataset_paths}};
    j["model"] = {{"manifest", cfg.model_manifest}, {"blob", cfg.model_blob}};
    j["methods"] = cfg.methods;
    if (!cfg.import_salm.empty()) j["import_salm"] = cfg.import_salm;
    j["L"] = cfg.L_values;
    nlohmann::ordered_json perts = nlohmann::ordered_json::array();
    for (PerturbKind k : cfg.perturbations) perts.push_back(perturb_kind_name(k));
    j["perturbations"] = std::move(perts);
    nlohmann::ordered_json orders = nlohmann::ordered_json::array();
    for (OrderMode m : cfg.modes) orders.push_back(order_mode_name(m));
    j["orders"] = std::move(orders);
    j["faithfulness_sample"] = cfg.faithfulness_sample;
    j["random_orderings"] = cfg.random_orderings;
    j["bootstrap_resamples"] = cfg.bootstrap_resamples;
    j["coverages"] = cfg.coverages;
    if (cfg.seed_set) j["seed"] = cfg.seed;
    if (!cfg.classes.empty()) j["classes"] = cfg.classes;
    if (cfg.confidence_filter_set) {
        j["min_confidence"] = cfg.min_confidence;
        j["max_confidence"] = cfg.max_confidence;
    }
    j["include_random_baseline"] = cfg.include_random_baseline;
    j["out"] = cfg.out_dir;
    j["threads"] = cfg.threads;
    return j;
}

// Structural checks that need no dataset. Normalizes the grids to canonical
// order (L ascending, mean before random-rgb, morf before lerf).
inline void validate_run_config(RunConfig& cfg) {
    if (!cfg.seed_set) throw config_error("config: 'seed' is required");
    if (cfg.dataset_kind != "cifar10" && cfg.dataset_kind != "sald")
        throw config_error("config: dataset.kind must be cifar10 or sald, got '" + cfg.dataset_kind + "'");
    if (cfg.dataset_paths.empty()) throw config_error("config: dataset.paths is empty");
    if (cfg.dataset_kind == "sald" && cfg.dataset_paths.size() != 1)
        throw config_error("config: sald datasets take exactly one path");
    if (cfg.model_manifest.empty() || cfg.model_blob.empty())
        throw config_error("config: model.manifest and model.blob are required");
    if (cfg.methods.empty() && cfg.import_salm.empty())
        throw config_error("config: no methods requested");
    std::set<std::string> seen;
    for (const std::string& m : cfg.methods) {
        if (!detail::native_method_ids().count(m)) throw config_error("config: unknown method '" + m + "'");
        if (!seen.insert(m).second) throw config_error("config: duplicate method '" + m + "'");
        if (m == kRandomBaselineId) throw config_error("config: '" + m + "' is reserved");
    }

    std::set<int> ls(cfg.L_values.begin(), cfg.L_values.end());
    if (ls.empty()) throw config_error("config: L grid is empty");
    for (int L : ls)
        if (L < 1) throw config_error("config: L values must be >= 1");
    cfg.L_values.assign(ls.begin(), ls.end());

    if (cfg.perturbations.empty()) throw config_error("config: perturbation list is empty");
    std::set<PerturbKind> pk(cfg.perturbations.begin(), cfg.perturbations.end());
    cfg.perturbations.clear();
    for (PerturbKind k : {PerturbKind::DatasetMean, PerturbKind::RandomRgb})
        if (pk.count(k)) cfg.perturbations.push_back(k);

    if (cfg.modes.empty()) throw config_error("config: order list is empty");
    std::set<OrderMode> om(cfg.modes.begin(), cfg.modes.end());
    cfg.modes.clear();
    for (OrderMode m : {OrderMode::MoRF, OrderMode::LeRF})
        if (om.count(m)) cfg.modes.push_back(m);

    if (cfg.faithfulness_sample < 2) throw config_error("config: faithfulness_sample must be >= 2");
    if (cfg.random_orderings < 1) throw config_error("config: random_orderings must be >= 1");
    if (cfg.bootstrap_resamples < 1) throw config_error("config: bootstrap_resamples must be >= 1");
    if (cfg.coverages.empty()) throw config_error("config: coverages is empty");
    for (double c : cfg.coverages)
        if (!(c > 0.0 && c < 1.0)) throw config_error("config: coverages must lie in (0,1)");
    if (cfg.min_confidence > cfg.max_confidence)
        throw config_error("config: min_confidence above max_confidence");
    for (int c : cfg.classes)
        if (c < 0) throw config_error("config: negative class label");
    if (cfg.threads < 0) throw config_error("config: threads must be >= 0");

    // CIFAR dimensions are fixed, so the pixel-budget checks run before any file is read.
    if (cfg.dataset_kind == "cifar10") {
        for (int L : cfg.L_values)
            if (L > 32 * 32)
                throw config_error("config: L=" + std::to_string(L) + " exceeds the 1024 pixels of 32x32 input");
        if (cfg.faithfulness_sample > 32 * 32)
            throw config_error("config: faithfulness_sample exceeds the 1024 pixels of 32x32 input");
    }
}

inline void validate_against_dataset(const RunConfig& cfg, int height, int width) {
    const int n_pixels = height * width;
    for (int L : cfg.L_values)
        if (L > n_pixels)
            throw config_error("config: L=" + std::to_string(L) + " exceeds the " + std::to_string(n_pixels) +
                               " pixels of " + std::to_string(height) + "x" + std::to_string(width) + " input");
    if (cfg.faithfulness_sample > n_pixels)
        throw config_error("config: faithfulness_sample " + std::to_string(cfg.faithfulness_sample) +
                           " exceeds the " + std::to_string(n_pixels) + " pixels of input");
}

// ---- synthetic oracle suites --------------------------------------------------

struct SynthSpec {
    int n_images = 200;
    int height = 16, width = 16, channels = 3;
    int n_classes = 10;
    bool sigmoid_link = false;
    std::uint64_t seed = 0;
    std::string out_dir;
};

// Writes dataset.sald, oracle.{json,bin}, the exact ground-truth saliency
// archive (identity link only), and a ready-to-run config.
inline void generate_synthetic(const SynthSpec& spec) {
    require(spec.n_images >= 1 && spec.height >= 1 && spec.width >= 1 && spec.channels >= 1,
            "synth: bad dimensions");
    require(spec.n_classes >= 1, "synth: need at least one class");
    namespace fs = std::filesystem;
    fs::create_directories(spec.out_dir);
    fs::create_directories(fs::path(spec.out_dir) / "maps");
    auto at = [&](const char* name) { return (fs::path(spec.out_dir) / name).string(); };

    const std::size_t n_weights =
        static_cast<std::size_t>(spec.height) * spec.width * spec.channels;
    StreamRng wrng(derive_stream_seed(spec.seed, "synth-weights", {}));
    const double scale = 2.0 / std::sqrt(static_cast<double>(n_weights));
    std::vector<std::uint8_t> blob;
    blob.reserve(n_weights * 4);
    for (std::size_t i = 0; i < n_weights; ++i)
        detail::append_f32(blob, static_cast<float>(wrng.next_gaussian() * scale));
    write_file_bytes(at("oracle.bin"), blob);

    nlohmann::ordered_json manifest;
    manifest["kind"] = "affine-oracle";
    manifest["input"] = {{"height", spec.height}, {"width", spec.width}, {"channels", spec.channels}};
    manifest["link"] = spec.sigmoid_link ? "sigmoid" : "identity";
    manifest["bias"] = 0.0;
    write_json_file(at("oracle.json"), manifest);

    Dataset ds;
    StreamRng lrng(derive_stream_seed(spec.seed, "synth-label", {}));
    for (int i = 0; i < spec.n_images; ++i) {
        Image img(spec.height, spec.width, spec.channels);
        StreamRng prng(derive_stream_seed(spec.seed, "synth-img", {static_cast<std::uint64_t>(i)}));
        for (double& v : img.pixels) v = prng.next_double();
        img.id = i;
        img.label = static_cast<int>(lrng.next_below(static_cast<std::uint64_t>(spec.n_classes)));
        ds.images.push_back(std::move(img));
    }
    write_dataset(ds, at("dataset.sald"));

    // The archive is the canonical dataset: recompute everything from its
    // f32-quantized pixels so downstream runs agree bit for bit.
    const Dataset canon = read_dataset(at("dataset.sald"));
    const Model oracle = load_model_files(at("oracle.json"), at("oracle.bin"));

    if (!spec.sigmoid_link) {
        const PerturbationSpec mean_spec = PerturbationSpec::dataset_mean(canon.mean);
        std::vector<SaliencyMap> gt;
        gt.reserve(canon.images.size());
        for (const Image& img : canon.images) {
            SaliencyMap m = ground_truth_saliency(oracle, img, mean_spec);
            m.image_id = img.id;
            gt.push_back(std::move(m));
        }
        write_saliency_archive(gt, (fs::path(spec.out_dir) / "maps" / "ground_truth.salm").string());
    }

    nlohmann::ordered_json cfg;
    cfg["dataset"] = {{"kind", "sald"}, {"paths", {at("dataset.sald")}}};
    cfg["model"] = {{"manifest", at("oracle.json")}, {"blob", at("oracle.bin")}};
    nlohmann::ordered_json methods = nlohmann::ordered_json::array();
    if (!spec.sigmoid_link) methods.push_back(method_id::ground_truth);
    for (const char* m : {method_id::sensitivity, method_id::gradient_x_input, method_id::edge_detection,
                          method_id::random})
        methods.push_back(m);
    cfg["methods"] = std::move(methods);
    cfg["seed"] = spec.seed;
    cfg["out"] = (fs::path(spec.out_dir) / "run").string();
    write_json_file(at("run-config.json"), cfg);
}

// ---- pipeline stages ------------------------------------------------------------

struct PipelineInputs {
    Dataset dataset;  // images already class-filtered; mean/stddev from the full load
    Model model;
    std::size_t n_loaded = 0;  // image count before the class filter
};

inline PipelineInputs load_inputs(const RunConfig& cfg) {
    PipelineInputs in;
    if (cfg.dataset_kind == "cifar10") in.dataset = load_cifar10(cfg.dataset_paths);
    else in.dataset = read_dataset(cfg.dataset_paths[0]);
    in.n_loaded = in.dataset.images.size();

    if (!cfg.classes.empty()) {
        const std::set<int> keep(cfg.classes.begin(), cfg.classes.end());
        std::vector<Image> kept;
        for (Image& img : in.dataset.images)
            if (keep.count(img.label)) kept.push_back(std::move(img));
        if (kept.empty()) throw config_error("class filter leaves no images");
        in.dataset.images = std::move(kept);
    }

    in.model = load_model_files(cfg.model_manifest, cfg.model_blob);
    const Image& first = in.dataset.images[0];
    if (in.model.input_h != first.height || in.model.input_w != first.width ||
        in.model.input_c != first.channels)
        throw config_error("model expects " + std::to_string(in.model.input_h) + "x" +
                           std::to_string(in.model.input_w) + "x" + std::to_string(in.model.input_c) +
                           " input but the dataset is " + std::to_string(first.height) + "x" +
                           std::to_string(first.width) + "x" + std::to_string(first.channels));
    for (const std::string& m : cfg.methods)
        if (m == method_id::ground_truth && in.model.kind != ModelKind::AffineOracle)
            throw config_error("method ground_truth requires an identity-link affine oracle model");

    validate_against_dataset(cfg, first.height, first.width);
    return in;
}

inline std::string maps_dir(const RunConfig& cfg) {
    return (std::filesystem::path(cfg.out_dir) / "maps").string();
}

inline std::string map_archive_path(const RunConfig& cfg, const std::string& method) {
    return (std::filesystem::path(maps_dir(cfg)) / (method + ".salm")).string();
}

// Computes native maps, folds in imported archives, and writes one SALM per
// method. Returns the full method list in scoring order.
inline std::vector<std::string> stage_maps(const PipelineInputs& in, const RunConfig& cfg) {
    std::filesystem::create_directories(maps_dir(cfg));
    const PerturbationSpec mean_spec = PerturbationSpec::dataset_mean(in.dataset.mean);
    std::vector<std::string> all_methods;

    for (const std::string& method : cfg.methods) {
        std::vector<SaliencyMap> maps(in.dataset.images.size());
        parallel_for(static_cast<int>(in.dataset.images.size()), cfg.threads, [&](int i) {
            const Image& img = in.dataset.images[static_cast<std::size_t>(i)];
            SaliencyMap m;
            if (method == method_id::sensitivity) m = sensitivity_map(in.model, img);
            else if (method == method_id::gradient_x_input) m = gradient_x_input_map(in.model, img);
            else if (method == method_id::edge_detection) m = edge_detection_map(img);
            else if (method == method_id::random) {
                StreamRng rng(derive_stream_seed(cfg.seed, "map-random",
                                                 {static_cast<std::uint64_t>(img.id)}));
                m = random_map(img.height, img.width, rng);
            } else if (method == method_id::ground_truth) {
                m = ground_truth_saliency(in.model, img, mean_spec);
            } else {
                throw config_error("unknown method '" + method + "'");
            }
            m.image_id = img.id;
            maps[static_cast<std::size_t>(i)] = std::move(m);
        });
        write_saliency_archive(maps, map_archive_path(cfg, method));
        all_methods.push_back(method);
    }

    std::set<std::int64_t> dataset_ids;
    for (const Image& img : in.dataset.images) dataset_ids.insert(img.id);
    for (const std::string& path : cfg.import_salm) {
        const std::vector<SaliencyMap> raw = read_saliency_archive(path);
        const std::string method = raw[0].method_id;
        if (std::find(all_methods.begin(), all_methods.end(), method) != all_methods.end())
            throw config_error("import '" + path + "': method id '" + method + "' already in use");
        if (method == kRandomBaselineId)
            throw config_error("import '" + path + "': method id '" + method + "' is reserved");
        const Image& first = in.dataset.images[0];
        if (raw[0].height != first.height || raw[0].width != first.width)
            throw config_error("import '" + path + "': maps are " + std::to_string(raw[0].height) + "x" +
                               std::to_string(raw[0].width) + " but the dataset is " +
                               std::to_string(first.height) + "x" + std::to_string(first.width));
        std::vector<SaliencyMap> kept;
        for (const SaliencyMap& m : raw)
            if (dataset_ids.count(m.image_id)) kept.push_back(m);
        if (kept.empty())
            throw config_error("import '" + path + "': no map matches a dataset image id");
        write_saliency_archive(kept, map_archive_path(cfg, method));
        all_methods.push_back(method);
    }

    nlohmann::ordered_json manifest;
    manifest["methods"] = all_methods;
    write_json_file((std::filesystem::path(maps_dir(cfg)) / "manifest.json").string(), manifest);
    return all_methods;
}

// Method order for scoring when the maps were produced by an earlier run.
inline std::vector<std::string> read_maps_manifest(const RunConfig& cfg) {
    const std::string path = (std::filesystem::path(maps_dir(cfg)) / "manifest.json").string();
    const nlohmann::json j = read_json_file(path);
    try {
        return j.at("methods").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw format_error(path + ": " + e.what());
    }
}

namespace detail {

struct BaselinePoint {
    double mean_aopc = 0.0;
    Interval band;
};

struct ImageScores {
    std::vector<ScoreRow> rows;
    std::vector<std::vector<double>> curves;  // slot (method, mode, pert); empty when absent
    std::vector<std::vector<double>> baseline_curve;       // per pert, mean over orderings
    std::vector<std::vector<BaselinePoint>> baseline;      // [pert][L index]
    std::vector<char> faith_degenerate;                    // slot (method, pert)
};

}  // namespace detail

// Reads the per-method SALM archives back from disk (their f32 values are the
// canonical inputs), scores every (image, method) cell, and writes scores.csv,
// curves.csv, and score-meta.json.
inline void stage_scores(const PipelineInputs& in, const RunConfig& cfg,
                         const std::vector<std::string>& methods) {
    namespace fs = std::filesystem;
    const Image& first = in.dataset.images[0];
    const int n_pixels = first.height * first.width;
    const int l_max = cfg.L_values.back();
    const std::size_t n_methods = methods.size();
    const std::size_t n_modes = cfg.modes.size();
    const std::size_t n_perts = cfg.perturbations.size();

    std::vector<std::map<std::int64_t, const SaliencyMap*>> by_image(n_methods);
    std::vector<std::vector<SaliencyMap>> archives(n_methods);
    for (std::size_t mi = 0; mi < n_methods; ++mi) {
        archives[mi] = read_saliency_archive(map_archive_path(cfg, methods[mi]));
        for (const SaliencyMap& m : archives[mi]) by_image[mi][m.image_id] = &m;
    }

    StreamRng sample_rng(derive_stream_seed(cfg.seed, "faith-sample", {}));
    const std::vector<int> pixel_sample =
        sample_without_replacement(n_pixels, cfg.faithfulness_sample, sample_rng);

    auto spec_for = [&](PerturbKind kind) {
        return kind == PerturbKind::DatasetMean ? PerturbationSpec::dataset_mean(in.dataset.mean)
                                                : PerturbationSpec::random_rgb();
    };
    auto curve_slot = [&](std::size_t mi, std::size_t oi, std::size_t pi) {
        return (mi * n_modes + oi) * n_perts + pi;
    };

    const std::size_t n_images = in.dataset.images.size();
    std::vector<detail::ImageScores> slots(n_images);
    parallel_for(static_cast<int>(n_images), cfg.threads, [&](int ii) {
        const Image& img = in.dataset.images[static_cast<std::size_t>(ii)];
        detail::ImageScores& out = slots[static_cast<std::size_t>(ii)];
        out.curves.resize(n_methods * n_modes * n_perts);
        out.faith_degenerate.assign(n_methods * n_perts, 0);
        const double confidence = forward(in.model, img).confidence;

        for (std::size_t mi = 0; mi < n_methods; ++mi) {
            const auto it = by_image[mi].find(img.id);
            if (it == by_image[mi].end()) continue;
            const SaliencyMap& map = *it->second;
            for (std::size_t pi = 0; pi < n_perts; ++pi) {
                const PerturbKind kind = cfg.perturbations[pi];
                const PerturbationSpec spec = spec_for(kind);
                for (std::size_t oi = 0; oi < n_modes; ++oi) {
                    const OrderMode mode = cfg.modes[oi];
                    const PixelOrdering ordering = pixel_ordering(map, mode);
                    StreamRng rng(derive_stream_seed(
                        cfg.seed,
                        "aopc:" + methods[mi] + ":" + order_mode_name(mode) + ":" + perturb_kind_name(kind),
                        {static_cast<std::uint64_t>(img.id)}));
                    const AopcResult r = aopc_curve(in.model, img, ordering, l_max, spec, rng);
                    for (int L : cfg.L_values) {
                        const Metric metric = mode == OrderMode::MoRF ? Metric::AopcMorf : Metric::AopcLerf;
                        out.rows.push_back({img.id, img.label, confidence, methods[mi],
                                            VariantKey{metric, kind, L}, aopc_from_curve(r.curve, L)});
                    }
                    out.curves[curve_slot(mi, oi, pi)] = r.curve;
                }
                StreamRng frng(derive_stream_seed(
                    cfg.seed, "faith:" + methods[mi] + ":" + perturb_kind_name(kind),
                    {static_cast<std::uint64_t>(img.id)}));
                const FaithfulnessResult f = faithfulness(in.model, img, map, pixel_sample, spec, frng);
                out.rows.push_back({img.id, img.label, confidence, methods[mi],
                                    VariantKey{Metric::Faithfulness, kind, 0}, f.f_score});
                if (f.degenerate) out.faith_degenerate[mi * n_perts + pi] = 1;
            }
        }

        out.baseline_curve.resize(n_perts);
        out.baseline.resize(n_perts);
        for (std::size_t pi = 0; pi < n_perts; ++pi) {
            const PerturbKind kind = cfg.perturbations[pi];
            const RandomBaselineResult rb =
                random_baseline(in.model, img, cfg.random_orderings, l_max, spec_for(kind), cfg.seed);
            out.baseline_curve[pi] = rb.mean_curve;
            out.baseline[pi].reserve(cfg.L_values.size());
            for (int L : cfg.L_values) {
                std::vector<double> values;
                values.reserve(rb.curves.size());
                for (const std::vector<double>& curve : rb.curves) values.push_back(aopc_from_curve(curve, L));
                detail::BaselinePoint pt;
                double s = 0.0;
                for (double v : values) s += v;
                pt.mean_aopc = s / static_cast<double>(values.size());
                pt.band = percentile_interval(values, 0.95);
                out.baseline[pi].push_back(pt);
                for (OrderMode mode : cfg.modes) {
                    const Metric metric = mode == OrderMode::MoRF ? Metric::AopcMorf : Metric::AopcLerf;
                    out.rows.push_back({img.id, img.label, confidence, kRandomBaselineId,
                                        VariantKey{metric, kind, L}, pt.mean_aopc});
                }
            }
        }
    });

    ScoreTable table;
    for (const detail::ImageScores& s : slots)
        for (const ScoreRow& r : s.rows) table.add(r);
    write_scores(table, (fs::path(cfg.out_dir) / "scores.csv").string());

    // Mean perturbation curves over the images each method covers.
    std::string curves = "method_id,order,perturbation,k,mean_drop\n";
    auto append_curve = [&](const std::string& method, const std::string& order, PerturbKind kind,
                            const std::vector<double>& sum, std::size_t count) {
        if (count == 0) return;
        for (int k = 0; k <= l_max; ++k) {
            curves += method;
            curves += ',';
            curves += order;
            curves += ',';
            curves += perturb_kind_name(kind);
            curves += ',';
            curves += std::to_string(k);
            curves += ',';
            curves += format_g9(sum[static_cast<std::size_t>(k)] / static_cast<double>(count));
            curves += '\n';
        }
    };
    for (std::size_t mi = 0; mi < n_methods; ++mi)
        for (std::size_t oi = 0; oi < n_modes; ++oi)
            for (std::size_t pi = 0; pi < n_perts; ++pi) {
                std::vector<double> sum(static_cast<std::size_t>(l_max) + 1, 0.0);
                std::size_t count = 0;
                for (const detail::ImageScores& s : slots) {
                    const std::vector<double>& c = s.curves[curve_slot(mi, oi, pi)];
                    if (c.empty()) continue;
                    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += c[k];
                    ++count;
                }
                append_curve(methods[mi], order_mode_name(cfg.modes[oi]), cfg.perturbations[pi], sum, count);
            }
    for (std::size_t pi = 0; pi < n_perts; ++pi) {
        std::vector<double> sum(static_cast<std::size_t>(l_max) + 1, 0.0);
        for (const detail::ImageScores& s : slots)
            for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += s.baseline_curve[pi][k];
        append_curve(kRandomBaselineId, "random", cfg.perturbations[pi], sum, n_images);
    }
    write_text_file((fs::path(cfg.out_dir) / "curves.csv").string(), curves);

    nlohmann::ordered_json meta;
    meta["faithfulness_sample"] = pixel_sample;
    meta["l_grid"] = cfg.L_values;
    meta["l_max"] = l_max;
    meta["methods"] = methods;
    meta["n_images_scored"] = n_images;
    nlohmann::ordered_json degen = nlohmann::ordered_json::array();
    for (std::size_t mi = 0; mi < n_methods; ++mi)
        for (std::size_t pi = 0; pi < n_perts; ++pi) {
            std::size_t count = 0;
            for (const detail::ImageScores& s : slots) count += s.faith_degenerate[mi * n_perts + pi];
            nlohmann::ordered_json e;
            e["method"] = methods[mi];
            e["perturbation"] = perturb_kind_name(cfg.perturbations[pi]);
            e["count"] = count;
            degen.push_back(std::move(e));
        }
    meta["faithfulness_degenerate"] = std::move(degen);
    nlohmann::ordered_json baseline;
    baseline["n_orderings"] = cfg.random_orderings;
    nlohmann::ordered_json summary = nlohmann::ordered_json::array();
    for (std::size_t pi = 0; pi < n_perts; ++pi)
        for (std::size_t li = 0; li < cfg.L_values.size(); ++li) {
            double mean = 0.0, lo = 0.0, hi = 0.0;
            for (const detail::ImageScores& s : slots) {
                mean += s.baseline[pi][li].mean_aopc;
                lo += s.baseline[pi][li].band.low;
                hi += s.baseline[pi][li].band.high;
            }
            nlohmann::ordered_json e;
            e["perturbation"] = perturb_kind_name(cfg.perturbations[pi]);
            e["L"] = cfg.L_values[li];
            e["mean_aopc"] = mean / static_cast<double>(n_images);
            e["mean_band_low"] = lo / static_cast<double>(n_images);
            e["mean_band_high"] = hi / static_cast<double>(n_images);
            summary.push_back(std::move(e));
        }
    baseline["summary"] = std::move(summary);
    meta["random_baseline"] = std::move(baseline);
    write_json_file((fs::path(cfg.out_dir) / "score-meta.json").string(), meta);
}

// Builds the reliability document from scores.csv as it sits on disk.
inline nlohmann::ordered_json stage_reliability(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    const ScoreTable table = read_scores((fs::path(cfg.out_dir) / "scores.csv").string());
    ReliabilityOptions opt;
    opt.master_seed = cfg.seed;
    opt.bootstrap_resamples = cfg.bootstrap_resamples;
    opt.coverages = cfg.coverages;
    opt.include_random_baseline = cfg.include_random_baseline;
    opt.random_baseline_method = kRandomBaselineId;
    opt.confidence_filter_set = cfg.confidence_filter_set;
    opt.min_confidence = cfg.min_confidence;
    opt.max_confidence = cfg.max_confidence;
    opt.threads = cfg.threads;
    nlohmann::ordered_json report = reliability_report(table, opt);
    write_json_file((fs::path(cfg.out_dir) / "reliability.json").string(), report);
    return report;
}

// Final document: run header + random-baseline summary + reliability sections.
inline void stage_report(const PipelineInputs& in, const RunConfig& cfg) {
    namespace fs = std::filesystem;
    const auto reliability =
        read_json_file<nlohmann::ordered_json>((fs::path(cfg.out_dir) / "reliability.json").string());
    const auto score_meta =
        read_json_file<nlohmann::ordered_json>((fs::path(cfg.out_dir) / "score-meta.json").string());

    nlohmann::ordered_json report;
    report["schema"] = "salmet-report-v1";
    report["version"] = kVersion;
    report["seed"] = cfg.seed;
    const Image& first = in.dataset.images[0];
    std::map<int, std::size_t> class_counts;
    for (const Image& img : in.dataset.images) ++class_counts[img.label];
    nlohmann::ordered_json counts;
    for (const auto& [label, count] : class_counts) counts[std::to_string(label)] = count;
    report["dataset"] = {{"n_images", in.dataset.images.size()},
                         {"height", first.height},
                         {"width", first.width},
                         {"channels", first.channels},
                         {"mean", in.dataset.mean},
                         {"stddev", in.dataset.stddev},
                         {"class_counts", std::move(counts)}};
    report["random_baseline"] = score_meta.at("random_baseline");
    report["faithfulness_degenerate"] = score_meta.at("faithfulness_degenerate");
    report["reliability"] = reliability;
    write_json_file((fs::path(cfg.out_dir) / "report.json").string(), report);
}

namespace detail {

template <typename F>
auto run_stage(const char* name, std::vector<std::pair<std::string, double>>& timings, std::ostream* log,
               F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        timings.emplace_back(name, s);
        if (log) *log << "stage " << name << ": " << s << "s\n";
    };
    try {
        if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
            f();
            finish();
        } else {
            auto r = f();
            finish();
            return r;
        }
    } catch (const config_error& e) {
        throw config_error(std::string("stage ") + name + ": " + e.what());
    } catch (const format_error& e) {
        throw format_error(std::string("stage ") + name + ": " + e.what());
    } catch (const contract_error& e) {
        throw contract_error(std::string("stage ") + name + ": " + e.what());
    } catch (const std::exception& e) {
        throw contract_error(std::string("stage ") + name + ": " + e.what());
    }
}

}  // namespace detail

// load -> maps -> scores -> reliability -> report, with a DONE sentinel that
// only a complete run leaves behind. Everything except the timing block of
// metadata.json is byte-identical across reruns with the same config.
inline void run_pipeline(RunConfig cfg, std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    validate_run_config(cfg);
    if (cfg.out_dir.empty()) throw config_error("config: 'out' directory is required");
    fs::create_directories(cfg.out_dir);
    const std::string done_path = (fs::path(cfg.out_dir) / "DONE").string();
    fs::remove(done_path);

    std::vector<std::pair<std::string, double>> timings;
    const PipelineInputs in =
        detail::run_stage("load", timings, log, [&] { return load_inputs(cfg); });
    const std::vector<std::string> methods =
        detail::run_stage("maps", timings, log, [&] { return stage_maps(in, cfg); });
    detail::run_stage("scores", timings, log, [&] { stage_scores(in, cfg, methods); });
    detail::run_stage("reliability", timings, log, [&] { stage_reliability(cfg); });
    detail::run_stage("report", timings, log, [&] { stage_report(in, cfg); });

    nlohmann::ordered_json meta;
    meta["version"] = kVersion;
    meta["seed"] = cfg.seed;
    meta["config"] = run_config_to_json(cfg);
    const Image& first = in.dataset.images[0];
    meta["dataset"] = {{"n_loaded", in.n_loaded},
                       {"n_after_class_filter", in.dataset.images.size()},
                       {"height", first.height},
                       {"width", first.width},
                       {"channels", first.channels},
                       {"mean", in.dataset.mean},
                       {"stddev", in.dataset.stddev}};
    meta["methods"] = methods;
    StreamRng sample_rng(derive_stream_seed(cfg.seed, "faith-sample", {}));
    meta["faithfulness_sample"] =
        sample_without_replacement(first.height * first.width, cfg.faithfulness_sample, sample_rng);
    meta["seed_tags"] = {"synth-weights", "synth-img",  "synth-label",   "map-random",
                         "faith-sample",  "faith:*",    "aopc:*",        "rand-ordering",
                         "baseline-rrgb", "bootstrap-alpha:*"};
    nlohmann::ordered_json times;
    for (const auto& [name, seconds] : timings) times[name] = seconds;
    meta["timings_seconds"] = std::move(times);  // the one block that varies between reruns
    write_json_file((fs::path(cfg.out_dir) / "metadata.json").string(), meta);

    write_text_file(done_path, "ok\n");
}

}  // namespace salmet
