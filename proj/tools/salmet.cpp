#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "salmet/pipeline.hpp"

namespace {

using salmet::RunConfig;

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    int threads = 0;
    std::vector<int> L;
    std::vector<std::string> methods;
    std::vector<std::string> import_salm;
    std::vector<std::string> perturbations;
    std::vector<std::string> orders;
    int faithfulness_sample = 0;
    int random_orderings = 0;
    int bootstrap_resamples = 0;
    std::vector<double> coverages;
    double min_confidence = 0.0;
    double max_confidence = 1.0;
    std::vector<int> classes;
    bool include_random_baseline = false;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* threads_opt = nullptr;
    CLI::Option* l_opt = nullptr;
    CLI::Option* methods_opt = nullptr;
    CLI::Option* import_opt = nullptr;
    CLI::Option* pert_opt = nullptr;
    CLI::Option* order_opt = nullptr;
    CLI::Option* faith_opt = nullptr;
    CLI::Option* orderings_opt = nullptr;
    CLI::Option* boot_opt = nullptr;
    CLI::Option* cov_opt = nullptr;
    CLI::Option* minc_opt = nullptr;
    CLI::Option* maxc_opt = nullptr;
    CLI::Option* classes_opt = nullptr;
    CLI::Option* rb_opt = nullptr;
};

void add_common_options(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "run config JSON file")->required();
    o.seed_opt = cmd->add_option("--seed", o.seed, "master seed (overrides config)");
    o.out_opt = cmd->add_option("--out", o.out, "output directory (overrides config)");
    o.threads_opt = cmd->add_option("--threads", o.threads, "worker threads, 0 = all cores");
    o.l_opt = cmd->add_option("--L", o.L, "AOPC truncation grid");
    o.methods_opt = cmd->add_option("--methods", o.methods, "native saliency methods");
    o.import_opt = cmd->add_option("--import-salm", o.import_salm, "external map archives to score");
    o.pert_opt = cmd->add_option("--perturbation", o.perturbations, "mean and/or random-rgb");
    o.order_opt = cmd->add_option("--order", o.orders, "morf and/or lerf");
    o.faith_opt = cmd->add_option("--faithfulness-sample", o.faithfulness_sample,
                                  "pixels in the shared faithfulness sample");
    o.orderings_opt = cmd->add_option("--random-orderings", o.random_orderings,
                                      "orderings in the random baseline");
    o.boot_opt = cmd->add_option("--bootstrap-resamples", o.bootstrap_resamples, "bootstrap resample count");
    o.cov_opt = cmd->add_option("--coverages", o.coverages, "bootstrap interval coverages");
    o.minc_opt = cmd->add_option("--min-confidence", o.min_confidence, "reliability confidence filter, low end");
    o.maxc_opt = cmd->add_option("--max-confidence", o.max_confidence, "reliability confidence filter, high end");
    o.classes_opt = cmd->add_option("--classes", o.classes, "keep only these class labels");
    o.rb_opt = cmd->add_flag("--include-random-baseline", o.include_random_baseline,
                             "let the random baseline join the agreement statistics");
}

RunConfig load_config(const CommonOpts& o) {
    RunConfig cfg = salmet::run_config_from_json(salmet::read_json_file(o.config_path));
    if (o.seed_opt->count()) {
        cfg.seed = o.seed;
        cfg.seed_set = true;
    }
    if (o.out_opt->count()) cfg.out_dir = o.out;
    if (o.threads_opt->count()) cfg.threads = o.threads;
    if (o.l_opt->count()) cfg.L_values = o.L;
    if (o.methods_opt->count()) cfg.methods = o.methods;
    if (o.import_opt->count()) cfg.import_salm = o.import_salm;
    if (o.pert_opt->count()) {
        cfg.perturbations.clear();
        for (const std::string& s : o.perturbations) cfg.perturbations.push_back(salmet::parse_perturb_kind(s));
    }
    if (o.order_opt->count()) {
        cfg.modes.clear();
        for (const std::string& s : o.orders) cfg.modes.push_back(salmet::parse_order_mode(s));
    }
    if (o.faith_opt->count()) cfg.faithfulness_sample = o.faithfulness_sample;
    if (o.orderings_opt->count()) cfg.random_orderings = o.random_orderings;
    if (o.boot_opt->count()) cfg.bootstrap_resamples = o.bootstrap_resamples;
    if (o.cov_opt->count()) cfg.coverages = o.coverages;
    if (o.minc_opt->count()) {
        cfg.min_confidence = o.min_confidence;
        cfg.confidence_filter_set = true;
    }
    if (o.maxc_opt->count()) {
        cfg.max_confidence = o.max_confidence;
        cfg.confidence_filter_set = true;
    }
    if (o.classes_opt->count()) cfg.classes = o.classes;
    if (o.rb_opt->count()) cfg.include_random_baseline = o.include_random_baseline;
    return cfg;
}

// Partial regeneration invalidates the completion sentinel; only `run`
// re-establishes it.
RunConfig stage_config(const CommonOpts& o) {
    RunConfig cfg = load_config(o);
    salmet::validate_run_config(cfg);
    if (cfg.out_dir.empty()) throw salmet::config_error("config: 'out' directory is required");
    std::filesystem::create_directories(cfg.out_dir);
    std::filesystem::remove(std::filesystem::path(cfg.out_dir) / "DONE");
    return cfg;
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const salmet::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const salmet::format_error& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"saliency map fidelity metrics and agreement reports"};
    app.set_version_flag("--version", salmet::kVersion);
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "generate a synthetic oracle suite");
    salmet::SynthSpec synth_spec;
    synth->add_option("--out", synth_spec.out_dir, "suite directory")->required();
    synth->add_option("--seed", synth_spec.seed, "master seed")->required();
    synth->add_option("--n", synth_spec.n_images, "image count");
    synth->add_option("--height", synth_spec.height, "image height");
    synth->add_option("--width", synth_spec.width, "image width");
    synth->add_option("--channels", synth_spec.channels, "image channels");
    synth->add_option("--classes", synth_spec.n_classes, "label count");
    synth->add_flag("--sigmoid-link", synth_spec.sigmoid_link,
                    "squash the oracle score through a sigmoid (drops exact ground truth)");

    auto* stats = app.add_subcommand("dataset-stats", "print dataset shape and channel statistics");
    std::string stats_kind = "sald";
    std::vector<std::string> stats_paths;
    stats->add_option("--kind", stats_kind, "cifar10 or sald");
    stats->add_option("paths", stats_paths, "dataset files")->required();

    CommonOpts run_o, maps_o, score_o, rel_o, report_o;
    auto* run = app.add_subcommand("run", "full pipeline: maps, scores, reliability, report");
    add_common_options(run, run_o);
    auto* saliency = app.add_subcommand("saliency", "compute saliency maps only");
    add_common_options(saliency, maps_o);
    auto* score = app.add_subcommand("score", "score previously computed maps");
    add_common_options(score, score_o);
    auto* reliability = app.add_subcommand("reliability", "agreement statistics from scores.csv");
    add_common_options(reliability, rel_o);
    auto* report = app.add_subcommand("report", "assemble the final report document");
    add_common_options(report, report_o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    return run_guarded([&]() -> int {
        if (synth->parsed()) {
            salmet::generate_synthetic(synth_spec);
            std::cout << "wrote " << synth_spec.out_dir << "\n";
            return 0;
        }
        if (stats->parsed()) {
            salmet::Dataset ds;
            if (stats_kind == "cifar10") ds = salmet::load_cifar10(stats_paths);
            else if (stats_kind == "sald") {
                if (stats_paths.size() != 1) throw salmet::config_error("sald datasets take exactly one path");
                ds = salmet::read_dataset(stats_paths[0]);
            } else {
                throw salmet::config_error("unknown dataset kind '" + stats_kind + "'");
            }
            nlohmann::ordered_json j;
            j["n_images"] = ds.images.size();
            j["height"] = ds.images[0].height;
            j["width"] = ds.images[0].width;
            j["channels"] = ds.images[0].channels;
            j["mean"] = ds.mean;
            j["stddev"] = ds.stddev;
            std::map<int, std::size_t> counts;
            bool labeled = false;
            for (const salmet::Image& img : ds.images)
                if (img.label >= 0) {
                    ++counts[img.label];
                    labeled = true;
                }
            if (labeled) {
                nlohmann::ordered_json cj;
                for (const auto& [label, count] : counts) cj[std::to_string(label)] = count;
                j["class_counts"] = std::move(cj);
            }
            if (!ds.class_names.empty()) j["class_names"] = ds.class_names;
            std::cout << j.dump(2) << "\n";
            return 0;
        }
        if (run->parsed()) {
            RunConfig cfg = load_config(run_o);
            salmet::run_pipeline(cfg, &std::cerr);
            std::cout << "wrote " << cfg.out_dir << "\n";
            return 0;
        }
        if (saliency->parsed()) {
            const RunConfig cfg = stage_config(maps_o);
            const salmet::PipelineInputs in = salmet::load_inputs(cfg);
            salmet::stage_maps(in, cfg);
            std::cout << "wrote " << salmet::maps_dir(cfg) << "\n";
            return 0;
        }
        if (score->parsed()) {
            const RunConfig cfg = stage_config(score_o);
            const salmet::PipelineInputs in = salmet::load_inputs(cfg);
            salmet::stage_scores(in, cfg, salmet::read_maps_manifest(cfg));
            std::cout << "wrote " << cfg.out_dir << "/scores.csv\n";
            return 0;
        }
        if (reliability->parsed()) {
            const RunConfig cfg = stage_config(rel_o);
            salmet::stage_reliability(cfg);
            std::cout << "wrote " << cfg.out_dir << "/reliability.json\n";
            return 0;
        }
        const RunConfig cfg = stage_config(report_o);
        const salmet::PipelineInputs in = salmet::load_inputs(cfg);
        salmet::stage_report(in, cfg);
        std::cout << "wrote " << cfg.out_dir << "/report.json\n";
        return 0;
    });
}
