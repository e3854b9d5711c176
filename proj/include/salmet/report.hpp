#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "salmet/common.hpp"
#include "salmet/io.hpp"
#include "salmet/parallel.hpp"
#include "salmet/rng.hpp"
#include "salmet/saliency.hpp"
#include "salmet/scores.hpp"
#include "salmet/stats.hpp"

namespace salmet {

struct ReliabilityOptions {
    AlphaLevel level = AlphaLevel::Ordinal;
    std::string baseline_method = method_id::edge_detection;
    std::string random_baseline_method = "random_baseline";
    bool include_random_baseline = false;  // let the random-ordering band join rankings
    int bootstrap_resamples = 10000;
    std::vector<double> coverages = {0.95, 0.999};
    std::uint64_t master_seed = 0;
    double low_alpha_threshold = 0.65;
    bool confidence_filter_set = false;  // drop rows outside [min,max] before any stats
    double min_confidence = 0.0;
    double max_confidence = 1.0;
    int threads = 0;
};

inline const char* alpha_level_name(AlphaLevel level) {
    return level == AlphaLevel::Ordinal ? "ordinal" : "interval";
}

namespace detail {

// One alpha computation: a variant, a method set, and its bootstrap draws.
struct AlphaJob {
    VariantKey variant;
    bool with_baseline = false;
    std::vector<std::string> methods;
    std::string seed_tag;

    VariantMatrix matrix;
    RankingMatrix ranks;
    AlphaResult alpha;
    std::vector<double> boot;  // sorted bootstrap statistics
};

inline RankingMatrix rank_rows(const VariantMatrix& m, Direction dir) {
    RankingMatrix r;
    r.n_methods = static_cast<int>(m.methods.size());
    r.rows.reserve(m.scores.size());
    for (const std::vector<double>& row : m.scores) r.rows.push_back(rank_methods(row, dir));
    return r;
}

inline std::vector<std::string> methods_under_variant(const ScoreTable& table, const VariantKey& v,
                                                      const std::set<std::string>& excluded) {
    std::set<std::string> s;
    for (const ScoreRow& r : table.rows())
        if (r.variant == v && !excluded.count(r.method_id)) s.insert(r.method_id);
    return {s.begin(), s.end()};
}

inline nlohmann::ordered_json interval_json(double lo, double hi) {
    return nlohmann::ordered_json::array({lo, hi});
}

// alpha, inter_method, internal_consistency, and aggregates over one row set.
// seed_prefix keeps bootstrap streams distinct between the main section and
// the per-class ones.
inline nlohmann::ordered_json report_section(const ScoreTable& table, const ReliabilityOptions& opt,
                                             const std::string& seed_prefix) {
    nlohmann::ordered_json out;
    const std::vector<VariantKey> variants = table.variants();
    std::set<std::string> excluded;
    if (!opt.include_random_baseline) excluded.insert(opt.random_baseline_method);

    std::vector<AlphaJob> jobs;
    for (const VariantKey& v : variants) {
        const std::vector<std::string> methods = methods_under_variant(table, v, excluded);
        if (methods.size() < 2) continue;
        const bool has_baseline =
            std::find(methods.begin(), methods.end(), opt.baseline_method) != methods.end();
        AlphaJob with;
        with.variant = v;
        with.with_baseline = has_baseline;
        with.methods = methods;
        with.seed_tag = seed_prefix + "bootstrap-alpha:" + to_string(v) + (has_baseline ? ":with" : ":without");
        jobs.push_back(std::move(with));
        if (has_baseline && methods.size() >= 3) {
            AlphaJob without;
            without.variant = v;
            without.with_baseline = false;
            without.methods = methods;
            without.methods.erase(
                std::find(without.methods.begin(), without.methods.end(), opt.baseline_method));
            without.seed_tag = seed_prefix + "bootstrap-alpha:" + to_string(v) + ":without";
            jobs.push_back(std::move(without));
        }
    }

    parallel_for(static_cast<int>(jobs.size()), opt.threads, [&](int j) {
        AlphaJob& job = jobs[static_cast<std::size_t>(j)];
        job.matrix = table.variant_matrix(job.variant, job.methods);
        if (job.matrix.image_ids.size() < 2) return;
        job.ranks = rank_rows(job.matrix, variant_direction(job.variant));
        job.alpha = krippendorff_alpha(job.ranks, opt.level);
        StreamRng rng(derive_stream_seed(opt.master_seed, job.seed_tag, {}));
        auto stat = [&job, &opt](std::span<const int> idx) {
            auto row_at = [&job, &idx](int i) -> const std::vector<double>& {
                return job.ranks.rows[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
            };
            return alpha_from_rows(row_at, static_cast<int>(idx.size()), job.ranks.n_methods, opt.level).value;
        };
        job.boot = bootstrap_statistics(static_cast<int>(job.ranks.rows.size()), stat, opt.bootstrap_resamples, rng);
        std::sort(job.boot.begin(), job.boot.end());
    });

    nlohmann::ordered_json alpha_entries = nlohmann::ordered_json::array();
    for (const AlphaJob& job : jobs) {
        if (job.matrix.image_ids.size() < 2) continue;
        for (double coverage : opt.coverages) {
            nlohmann::ordered_json e;
            e["variant"] = to_string(job.variant);
            e["with_baseline"] = job.with_baseline;
            e["level"] = alpha_level_name(opt.level);
            e["n_images"] = job.matrix.image_ids.size();
            e["methods"] = job.methods;
            e["value"] = job.alpha.value;
            e["degenerate"] = job.alpha.degenerate;
            e["coverage"] = coverage;
            const double tail = (1.0 - coverage) / 2.0;
            e["ci_low"] = quantile_sorted(job.boot, tail);
            e["ci_high"] = quantile_sorted(job.boot, 1.0 - tail);
            if (job.alpha.value < opt.low_alpha_threshold)
                e["annotation"] = "alpha below " + format_g9(opt.low_alpha_threshold) +
                                  ": rankings are conventionally considered unreliable";
            alpha_entries.push_back(std::move(e));
        }
    }
    out["alpha"] = std::move(alpha_entries);

    nlohmann::ordered_json inter = nlohmann::ordered_json::array();
    for (const AlphaJob& job : jobs) {
        if (job.matrix.image_ids.size() < 2) continue;
        const std::size_t m = job.methods.size();
        std::vector<std::vector<double>> cols(m, std::vector<double>(job.matrix.image_ids.size()));
        for (std::size_t i = 0; i < job.matrix.scores.size(); ++i)
            for (std::size_t k = 0; k < m; ++k) cols[k][i] = job.matrix.scores[i][k];
        nlohmann::ordered_json matrix = nlohmann::ordered_json::array();
        double sum = 0.0;
        int pairs = 0, degenerate_pairs = 0;
        std::vector<std::vector<double>> rho(m, std::vector<double>(m, 1.0));
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a + 1; b < m; ++b) {
                const CorrResult c = spearman(cols[a], cols[b]);
                rho[a][b] = rho[b][a] = c.rho;
                sum += c.rho;
                ++pairs;
                if (c.degenerate) ++degenerate_pairs;
            }
        for (std::size_t a = 0; a < m; ++a) matrix.push_back(rho[a]);
        nlohmann::ordered_json e;
        e["variant"] = to_string(job.variant);
        e["with_baseline"] = job.with_baseline;
        e["methods"] = job.methods;
        e["n_images"] = job.matrix.image_ids.size();
        e["matrix"] = std::move(matrix);
        e["mean_pairwise"] = pairs > 0 ? sum / pairs : 0.0;
        e["degenerate_pairs"] = degenerate_pairs;
        inter.push_back(std::move(e));
    }
    out["inter_method"] = std::move(inter);

    // Cross-metric correlations per method: F against each AOPC mode, the two
    // modes against each other, and mean vs random-rgb for MoRF, all at the
    // largest L present for the perturbation.
    const std::set<VariantKey> variant_set(variants.begin(), variants.end());
    std::map<PerturbKind, int> lmax_morf, lmax_lerf;
    for (const VariantKey& v : variants) {
        if (v.metric == Metric::AopcMorf)
            lmax_morf[v.perturbation] = std::max(lmax_morf[v.perturbation], v.L);
        if (v.metric == Metric::AopcLerf)
            lmax_lerf[v.perturbation] = std::max(lmax_lerf[v.perturbation], v.L);
    }
    std::set<std::string> methods_all;
    for (const ScoreRow& r : table.rows())
        if (!excluded.count(r.method_id)) methods_all.insert(r.method_id);

    nlohmann::ordered_json consistency = nlohmann::ordered_json::array();
    auto emit_pair = [&](const std::string& method, const VariantKey& a, const VariantKey& b) {
        if (!variant_set.count(a) || !variant_set.count(b)) return;
        const auto [x, y] = table.paired_scores(method, a, b);
        if (x.size() < 2) return;
        const CorrResult c = spearman(x, y);
        nlohmann::ordered_json e;
        e["method"] = method;
        e["variant_pair"] = nlohmann::ordered_json::array({to_string(a), to_string(b)});
        e["n_images"] = x.size();
        e["rho"] = c.rho;
        e["degenerate"] = c.degenerate;
        consistency.push_back(std::move(e));
    };
    for (const std::string& method : methods_all) {
        for (PerturbKind kind : {PerturbKind::DatasetMean, PerturbKind::RandomRgb}) {
            const VariantKey faith{Metric::Faithfulness, kind, 0};
            if (lmax_morf.count(kind)) {
                const VariantKey morf{Metric::AopcMorf, kind, lmax_morf[kind]};
                emit_pair(method, faith, morf);
                if (lmax_lerf.count(kind)) emit_pair(method, morf, {Metric::AopcLerf, kind, lmax_lerf[kind]});
            }
            if (lmax_lerf.count(kind)) emit_pair(method, faith, {Metric::AopcLerf, kind, lmax_lerf[kind]});
        }
        if (lmax_morf.count(PerturbKind::DatasetMean) && lmax_morf.count(PerturbKind::RandomRgb))
            emit_pair(method, {Metric::AopcMorf, PerturbKind::DatasetMean, lmax_morf[PerturbKind::DatasetMean]},
                      {Metric::AopcMorf, PerturbKind::RandomRgb, lmax_morf[PerturbKind::RandomRgb]});
    }
    out["internal_consistency"] = std::move(consistency);

    std::set<std::string> methods_with_rb = methods_all;
    for (const ScoreRow& r : table.rows()) methods_with_rb.insert(r.method_id);
    nlohmann::ordered_json aggregates = nlohmann::ordered_json::array();
    for (const std::string& method : methods_with_rb) {
        for (const VariantKey& v : variants) {
            std::vector<double> scores;
            for (const ScoreRow& r : table.rows())
                if (r.method_id == method && r.variant == v) scores.push_back(r.score);
            if (scores.empty()) continue;
            const Aggregate a = aggregate(scores);
            nlohmann::ordered_json e;
            e["method"] = method;
            e["variant"] = to_string(v);
            e["n"] = scores.size();
            e["mean"] = a.mean;
            e["median"] = a.median;
            e["q1"] = a.q1;
            e["q3"] = a.q3;
            e["std"] = a.stddev;
            e["histogram"] = {{"lo", a.hist_lo}, {"hi", a.hist_hi}, {"counts", a.histogram}};
            aggregates.push_back(std::move(e));
        }
    }
    out["aggregates"] = std::move(aggregates);
    return out;
}

// Table 1's four-column layout: {mean, random-rgb} x {with, without baseline}
// per (metric, L) row, read off the alpha entries.
inline nlohmann::ordered_json alpha_quadrant(const nlohmann::ordered_json& alpha_entries) {
    struct Cell {
        std::map<std::string, nlohmann::ordered_json> ci;  // coverage string -> [lo, hi]
        double value = 0.0;
        bool seen = false;
    };
    std::map<std::pair<std::string, int>, std::map<std::string, Cell>> rows;
    for (const auto& e : alpha_entries) {
        const VariantKey v = parse_variant(e["variant"].get<std::string>());
        std::string metric;
        switch (v.metric) {
            case Metric::AopcMorf: metric = "aopc_morf"; break;
            case Metric::AopcLerf: metric = "aopc_lerf"; break;
            case Metric::Faithfulness: metric = "faithfulness"; break;
        }
        const std::string col = std::string(perturb_kind_name(v.perturbation)) +
                                (e["with_baseline"].get<bool>() ? ":with_baseline" : ":without_baseline");
        Cell& cell = rows[{metric, v.L}][col];
        cell.value = e["value"].get<double>();
        cell.seen = true;
        cell.ci[format_g9(e["coverage"].get<double>())] = interval_json(e["ci_low"].get<double>(),
                                                                        e["ci_high"].get<double>());
    }
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& [key, cols] : rows) {
        nlohmann::ordered_json row;
        row["metric"] = key.first;
        if (key.first != "faithfulness") row["L"] = key.second;
        nlohmann::ordered_json cells;
        for (const char* col : {"mean:with_baseline", "mean:without_baseline", "random-rgb:with_baseline",
                                "random-rgb:without_baseline"}) {
            auto it = cols.find(col);
            if (it == cols.end() || !it->second.seen) {
                cells[col] = nullptr;
                continue;
            }
            nlohmann::ordered_json c;
            c["value"] = it->second.value;
            for (const auto& [cov, interval] : it->second.ci) c["ci_" + cov] = interval;
            cells[col] = std::move(c);
        }
        row["columns"] = std::move(cells);
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace detail

// Assembles the reliability document: Krippendorff alpha with bootstrap CIs
// per variant and baseline choice, pairwise Spearman matrices, cross-metric
// consistency, per-(method, variant) distribution summaries, and per-class
// sub-reports. A configured confidence filter drops rows before any statistic.
inline nlohmann::ordered_json reliability_report(const ScoreTable& full_table, const ReliabilityOptions& opt) {
    for (double c : opt.coverages) require(c > 0.0 && c < 1.0, "reliability: coverage outside (0,1)");
    require(opt.bootstrap_resamples >= 1, "reliability: need at least one bootstrap resample");

    ScoreTable table;
    std::size_t dropped = 0;
    if (opt.confidence_filter_set) {
        require(opt.min_confidence <= opt.max_confidence, "reliability: min confidence above max");
        for (const ScoreRow& r : full_table.rows()) {
            if (r.confidence >= opt.min_confidence && r.confidence <= opt.max_confidence)
                table.add(r);
            else
                ++dropped;
        }
    } else {
        table = full_table;
    }

    nlohmann::ordered_json report;
    report["schema"] = "salmet-reliability-v1";
    report["alpha_level"] = alpha_level_name(opt.level);
    report["baseline_method"] = opt.baseline_method;
    report["random_baseline_method"] = opt.random_baseline_method;
    report["include_random_baseline"] = opt.include_random_baseline;
    report["bootstrap_resamples"] = opt.bootstrap_resamples;
    report["coverages"] = opt.coverages;
    report["low_alpha_threshold"] = opt.low_alpha_threshold;
    if (opt.confidence_filter_set) {
        report["confidence_filter"] = {{"min", opt.min_confidence},
                                       {"max", opt.max_confidence},
                                       {"rows_kept", table.rows().size()},
                                       {"rows_dropped", dropped}};
    }

    nlohmann::ordered_json main = detail::report_section(table, opt, "");
    report["alpha"] = std::move(main["alpha"]);
    report["alpha_quadrant"] = detail::alpha_quadrant(report["alpha"]);
    report["inter_method"] = std::move(main["inter_method"]);
    report["internal_consistency"] = std::move(main["internal_consistency"]);
    report["aggregates"] = std::move(main["aggregates"]);

    std::set<int> labels;
    for (const ScoreRow& r : table.rows())
        if (r.class_label >= 0) labels.insert(r.class_label);
    nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
    for (int label : labels) {
        ScoreTable sub;
        std::set<std::int64_t> ids;
        for (const ScoreRow& r : table.rows())
            if (r.class_label == label) {
                sub.add(r);
                ids.insert(r.image_id);
            }
        nlohmann::ordered_json section =
            detail::report_section(sub, opt, "class" + std::to_string(label) + ":");
        nlohmann::ordered_json e;
        e["class_label"] = label;
        e["n_images"] = ids.size();
        e["alpha"] = std::move(section["alpha"]);
        e["inter_method"] = std::move(section["inter_method"]);
        e["internal_consistency"] = std::move(section["internal_consistency"]);
        e["aggregates"] = std::move(section["aggregates"]);
        per_class.push_back(std::move(e));
    }
    report["per_class"] = std::move(per_class);
    return report;
}

}  // namespace salmet
