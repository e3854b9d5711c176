#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "salmet/common.hpp"
#include "salmet/perturb.hpp"
#include "salmet/stats.hpp"

namespace salmet {

enum class Metric { AopcMorf, AopcLerf, Faithfulness };

struct VariantKey {
    Metric metric = Metric::AopcMorf;
    PerturbKind perturbation = PerturbKind::DatasetMean;
    int L = 0;  // AOPC only; 0 for faithfulness

    auto operator<=>(const VariantKey&) const = default;
};

inline std::string to_string(const VariantKey& v) {
    std::string s;
    switch (v.metric) {
        case Metric::AopcMorf: s = "aopc_morf"; break;
        case Metric::AopcLerf: s = "aopc_lerf"; break;
        case Metric::Faithfulness: s = "faithfulness"; break;
    }
    s += ':';
    s += perturb_kind_name(v.perturbation);
    if (v.metric != Metric::Faithfulness) s += ":L" + std::to_string(v.L);
    return s;
}

inline VariantKey parse_variant(const std::string& s) {
    VariantKey v;
    const std::size_t p1 = s.find(':');
    require(p1 != std::string::npos, "variant '" + s + "': missing perturbation part");
    const std::string metric = s.substr(0, p1);
    if (metric == "aopc_morf") v.metric = Metric::AopcMorf;
    else if (metric == "aopc_lerf") v.metric = Metric::AopcLerf;
    else if (metric == "faithfulness") v.metric = Metric::Faithfulness;
    else throw contract_error("variant '" + s + "': unknown metric");

    const std::size_t p2 = s.find(':', p1 + 1);
    const std::string pert = s.substr(p1 + 1, p2 == std::string::npos ? std::string::npos : p2 - p1 - 1);
    if (pert == "mean") v.perturbation = PerturbKind::DatasetMean;
    else if (pert == "random-rgb") v.perturbation = PerturbKind::RandomRgb;
    else throw contract_error("variant '" + s + "': unknown perturbation kind");

    if (v.metric == Metric::Faithfulness) {
        require(p2 == std::string::npos, "variant '" + s + "': faithfulness takes no L");
        return v;
    }
    require(p2 != std::string::npos && p2 + 2 < s.size() && s[p2 + 1] == 'L',
            "variant '" + s + "': missing L part");
    try {
        v.L = std::stoi(s.substr(p2 + 2));
    } catch (const std::exception&) {
        throw contract_error("variant '" + s + "': bad L");
    }
    require(v.L >= 0, "variant '" + s + "': negative L");
    return v;
}

// AOPC under MoRF and faithfulness rise with fidelity; AOPC under LeRF falls.
inline Direction variant_direction(const VariantKey& v) {
    return v.metric == Metric::AopcLerf ? Direction::LowerBetter : Direction::HigherBetter;
}

struct ScoreRow {
    std::int64_t image_id = 0;
    int class_label = -1;
    double confidence = 0.0;
    std::string method_id;
    VariantKey variant;
    double score = 0.0;
};

struct VariantMatrix {
    std::vector<std::int64_t> image_ids;  // ascending
    std::vector<std::string> methods;
    std::vector<std::vector<double>> scores;  // [image][method]
    std::vector<int> class_labels;
    std::vector<double> confidences;
};

class ScoreTable {
  public:
    void add(ScoreRow row) { rows_.push_back(std::move(row)); }

    const std::vector<ScoreRow>& rows() const { return rows_; }
    bool empty() const { return rows_.empty(); }

    std::vector<std::string> method_ids() const {
        std::set<std::string> s;
        for (const ScoreRow& r : rows_) s.insert(r.method_id);
        return {s.begin(), s.end()};
    }

    std::vector<VariantKey> variants() const {
        std::set<VariantKey> s;
        for (const ScoreRow& r : rows_) s.insert(r.variant);
        return {s.begin(), s.end()};
    }

    // Images carrying a score for every requested method under the variant;
    // images with partial coverage are dropped from that variant's analyses.
    VariantMatrix variant_matrix(const VariantKey& variant, std::span<const std::string> methods) const {
        require(!methods.empty(), "variant_matrix: no methods requested");
        std::map<std::string, std::size_t> col;
        for (std::size_t j = 0; j < methods.size(); ++j) col[methods[j]] = j;

        struct Cells {
            std::vector<double> scores;
            std::vector<char> present;
            int class_label = -1;
            double confidence = 0.0;
        };
        std::map<std::int64_t, Cells> by_image;
        for (const ScoreRow& r : rows_) {
            if (r.variant != variant) continue;
            auto it = col.find(r.method_id);
            if (it == col.end()) continue;
            Cells& cell = by_image[r.image_id];
            if (cell.scores.empty()) {
                cell.scores.assign(methods.size(), 0.0);
                cell.present.assign(methods.size(), 0);
                cell.class_label = r.class_label;
                cell.confidence = r.confidence;
            }
            require(!cell.present[it->second],
                    "score table: duplicate (image " + std::to_string(r.image_id) + ", method " + r.method_id +
                        ", " + to_string(variant) + ")");
            cell.scores[it->second] = r.score;
            cell.present[it->second] = 1;
        }

        VariantMatrix m;
        m.methods.assign(methods.begin(), methods.end());
        for (auto& [id, cell] : by_image) {
            if (std::find(cell.present.begin(), cell.present.end(), 0) != cell.present.end()) continue;
            m.image_ids.push_back(id);
            m.scores.push_back(std::move(cell.scores));
            m.class_labels.push_back(cell.class_label);
            m.confidences.push_back(cell.confidence);
        }
        return m;
    }

    // Score vectors for one method under two variants, over the images scored
    // in both, ascending id order.
    std::pair<std::vector<double>, std::vector<double>> paired_scores(const std::string& method,
                                                                      const VariantKey& a,
                                                                      const VariantKey& b) const {
        std::map<std::int64_t, std::pair<double, double>> common;
        std::map<std::int64_t, std::pair<bool, bool>> present;
        for (const ScoreRow& r : rows_) {
            if (r.method_id != method) continue;
            if (r.variant == a) {
                common[r.image_id].first = r.score;
                present[r.image_id].first = true;
            } else if (r.variant == b) {
                common[r.image_id].second = r.score;
                present[r.image_id].second = true;
            }
        }
        std::pair<std::vector<double>, std::vector<double>> out;
        for (const auto& [id, flags] : present) {
            if (!flags.first || !flags.second) continue;
            out.first.push_back(common[id].first);
            out.second.push_back(common[id].second);
        }
        return out;
    }

  private:
    std::vector<ScoreRow> rows_;
};

}  // namespace salmet
