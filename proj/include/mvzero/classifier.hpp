#pragma once

// Per-shape decision procedure:
//   score views -> select views -> aggregate layer-1 logits -> confidence
//   gate -> top-k candidates -> layer-2 matching over the candidates.

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvzero/dataset.hpp"
#include "mvzero/prompt_bank.hpp"
#include "mvzero/scoring.hpp"
#include "mvzero/view_selection.hpp"

namespace mvzero {

inline constexpr double kDefaultDelta = 0.96;
inline constexpr std::size_t kDefaultTopK = 3;

enum class Aggregation { sum_logits, mean_pool_features, max_pool_features };

constexpr std::string_view to_string(Aggregation a) {
    switch (a) {
        case Aggregation::sum_logits: return "sum_logits";
        case Aggregation::mean_pool_features: return "mean_pool_features";
        case Aggregation::max_pool_features: return "max_pool_features";
    }
    return "sum_logits";
}

inline Aggregation parse_aggregation(std::string_view s) {
    for (auto a : {Aggregation::sum_logits, Aggregation::mean_pool_features, Aggregation::max_pool_features}) {
        if (to_string(a) == s) return a;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown aggregation \"" + std::string(s) + "\"");
}

struct ClassifierConfig {
    double delta = kDefaultDelta;
    std::size_t top_k = kDefaultTopK;
    double temperature = kDefaultTemperature;
    SelectionConfig selection;
    bool hierarchical_enabled = true;
    Aggregation aggregation = Aggregation::sum_logits;

    bool operator==(const ClassifierConfig&) const = default;

    void validate() const {
        if (!(delta >= 0.0 && delta <= 1.0)) {
            throw Error(ErrorCode::InvalidConfig, "delta must lie in [0, 1], got " + std::to_string(delta));
        }
        if (top_k < 2) throw Error(ErrorCode::InvalidConfig, "top_k must be >= 2");
        check_temperature(temperature);
        selection.validate();
    }
};

struct PredictionRecord {
    std::string shape_id;
    std::vector<std::size_t> selected_views;
    std::vector<ViewScore> view_scores;
    LogitsVector layer1_logits;
    ProbabilityVector layer1_probs;
    std::size_t layer1_top1 = 0;
    bool refined = false;
    std::optional<std::vector<std::size_t>> candidates;  // descending layer-1 score
    std::optional<std::vector<double>> layer2_logits;    // aligned with candidates
    std::size_t final_label = 0;
    bool deferred_refinement = false;
    std::optional<std::string> missing_key;
    std::vector<std::string> warnings;

    bool operator==(const PredictionRecord&) const = default;
};

namespace detail {

inline std::vector<std::span<const float>> selected_vectors(const ShapeRecord& shape, const EmbeddingMatrix& views,
                                                            std::span<const std::size_t> selected) {
    std::vector<std::span<const float>> out;
    out.reserve(selected.size());
    for (std::size_t pos : selected) out.push_back(views.row(shape.view_rows.at(pos)));
    return out;
}

inline std::vector<float> pooled_vector(const ShapeRecord& shape, const EmbeddingMatrix& views,
                                        std::span<const std::size_t> selected, Aggregation aggregation) {
    const auto vecs = selected_vectors(shape, views, selected);
    return pool_features(std::span<const std::span<const float>>(vecs),
                         aggregation == Aggregation::max_pool_features ? PoolMode::max : PoolMode::mean);
}

}  // namespace detail

/// Layer-1 aggregation over an existing score list and selection.
///
/// sum_logits: layer1_logits is the sum of the selected views' logits and
/// layer1_probs is the softmax of their mean, so the gate's calibration does
/// not depend on how many views were selected. Pooling modes compute logits
/// once from the pooled, renormalized feature vector.
inline PredictionRecord aggregate_first_layer(const ShapeRecord& shape, const EmbeddingMatrix& views,
                                              const PromptBank& bank, const ClassifierConfig& config,
                                              std::vector<ViewScore> scores, Selection selection) {
    PredictionRecord rec;
    rec.shape_id = shape.shape_id;
    rec.selected_views = std::move(selection.indices);
    rec.warnings = std::move(selection.warnings);
    rec.view_scores = std::move(scores);

    double divisor = 1.0;
    if (config.aggregation == Aggregation::sum_logits) {
        rec.layer1_logits = LogitsVector{std::vector<double>(bank.layer1.rows(), 0.0), config.temperature};
        for (std::size_t pos : rec.selected_views) {
            const auto& l = rec.view_scores.at(pos).logits.values;
            for (std::size_t j = 0; j < l.size(); ++j) rec.layer1_logits.values[j] += l[j];
        }
        divisor = static_cast<double>(rec.selected_views.size());
    } else {
        const auto pooled = detail::pooled_vector(shape, views, rec.selected_views, config.aggregation);
        rec.layer1_logits = compute_logits(std::span<const float>(pooled), bank.layer1, config.temperature);
    }
    std::vector<double> mean(rec.layer1_logits.values);
    for (double& v : mean) v /= divisor;
    rec.layer1_probs = softmax(std::span<const double>(mean));
    rec.layer1_top1 = argmax(rec.layer1_logits);
    rec.final_label = rec.layer1_top1;
    return rec;
}

inline PredictionRecord first_layer(const ShapeRecord& shape, const EmbeddingMatrix& views, const PromptBank& bank,
                                    const ClassifierConfig& config) {
    config.validate();
    auto scores = score_views(shape, views, bank.layer1, config.temperature);
    auto selection = select_views(scores, config.selection);
    if (shape.view_rows.size() != config.selection.m_total) {
        selection.warnings.push_back("shape has " + std::to_string(shape.view_rows.size()) +
                                     " views, configured m_total is " + std::to_string(config.selection.m_total));
    }
    return aggregate_first_layer(shape, views, bank, config, std::move(scores), std::move(selection));
}

/// True when the layer-1 decision is not confident enough and should be
/// refined: max layer-1 probability strictly below delta.
inline bool confidence_gate(const PredictionRecord& rec, const ClassifierConfig& config) {
    if (!config.hierarchical_enabled || rec.layer1_probs.values.empty()) return false;
    const double peak = *std::max_element(rec.layer1_probs.values.begin(), rec.layer1_probs.values.end());
    return peak < config.delta;
}

/// The k classes with the largest layer-1 logits, descending; exact ties go
/// to the lower class index.
inline std::vector<std::size_t> top_k_candidates(const PredictionRecord& rec, std::size_t k) {
    const auto& l = rec.layer1_logits.values;
    if (k > l.size()) {
        throw Error(ErrorCode::InvalidConfig,
                    "top_k " + std::to_string(k) + " exceeds class count " + std::to_string(l.size()));
    }
    std::vector<std::size_t> order(l.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return l[a] > l[b]; });
    order.resize(k);
    return order;
}

/// Layer-2 matching: layer2_logits[j] = sum over selected views of
/// temperature * <view, prompt of candidates[j]>.
inline PredictionRecord second_layer(PredictionRecord rec, const ShapeRecord& shape, const EmbeddingMatrix& views,
                                     const Layer2Entry& entry, const ClassifierConfig& config) {
    if (!rec.candidates) {
        throw Error(ErrorCode::CandidateMismatch, "record has no candidate set", rec.shape_id);
    }
    const auto& cands = *rec.candidates;
    std::vector<std::size_t> sorted(cands);
    std::sort(sorted.begin(), sorted.end());
    if (sorted != entry.candidate_classes) {
        throw Error(ErrorCode::CandidateMismatch, "layer-2 entry does not match candidates of " + rec.shape_id,
                    rec.shape_id);
    }

    std::vector<std::vector<float>> pooled_storage;
    std::vector<std::span<const float>> vecs;
    if (config.aggregation == Aggregation::sum_logits) {
        vecs = detail::selected_vectors(shape, views, rec.selected_views);
    } else {
        pooled_storage.push_back(detail::pooled_vector(shape, views, rec.selected_views, config.aggregation));
        vecs.emplace_back(pooled_storage.back());
    }

    check_temperature(config.temperature);
    if (entry.embeddings.cols() != views.cols()) {
        throw Error(ErrorCode::DimMismatch, "layer-2 prompts have dim " + std::to_string(entry.embeddings.cols()) +
                                                ", views have dim " + std::to_string(views.cols()));
    }
    std::vector<double> logits(cands.size(), 0.0);
    for (std::size_t j = 0; j < cands.size(); ++j) {
        const auto row = static_cast<std::size_t>(
            std::lower_bound(entry.candidate_classes.begin(), entry.candidate_classes.end(), cands[j]) -
            entry.candidate_classes.begin());
        for (const auto& v : vecs) {
            logits[j] += config.temperature * dot(v, entry.embeddings.row(row));
        }
    }

    std::size_t best = 0;
    for (std::size_t j = 1; j < cands.size(); ++j) {
        if (logits[j] > logits[best] || (logits[j] == logits[best] && cands[j] < cands[best])) best = j;
    }
    rec.layer2_logits = std::move(logits);
    rec.final_label = cands[best];
    rec.refined = true;
    return rec;
}

/// Runs the full pipeline for one shape. A missing layer-2 entry does not
/// fail: the record keeps the layer-1 answer, sets deferred_refinement and
/// carries the missing candidate key.
inline PredictionRecord classify_shape(const ShapeRecord& shape, const EmbeddingMatrix& views, const PromptBank& bank,
                                       const ClassifierConfig& config) {
    auto rec = first_layer(shape, views, bank, config);
    if (!confidence_gate(rec, config)) return rec;
    rec.candidates = top_k_candidates(rec, config.top_k);
    const std::string key = candidate_key(std::span<const std::size_t>(*rec.candidates), bank);
    const auto it = bank.layer2.find(key);
    if (it == bank.layer2.end()) {
        rec.deferred_refinement = true;
        rec.missing_key = key;
        return rec;
    }
    return second_layer(std::move(rec), shape, views, it->second, config);
}

inline nlohmann::json to_json(const ClassifierConfig& c) {
    return {{"delta", c.delta},
            {"top_k", c.top_k},
            {"temperature", c.temperature},
            {"selection",
             {{"m_total", c.selection.m_total},
              {"m_select", c.selection.m_select},
              {"mode", to_string(c.selection.mode)}}},
            {"hierarchical_enabled", c.hierarchical_enabled},
            {"aggregation", to_string(c.aggregation)},
            {"layer1_probability", "softmax(mean of selected-view logits)"},
            {"layer2_temperature", "shared with layer 1"}};
}

inline nlohmann::json to_json(const PredictionRecord& r, std::span<const std::string> classes) {
    nlohmann::json views = nlohmann::json::array();
    for (const auto& s : r.view_scores) {
        views.push_back({{"view_index", s.view_index},
                         {"entropy", s.entropy},
                         {"top1_class", s.top1_class},
                         {"logits", s.logits.values}});
    }
    nlohmann::json j = {{"shape_id", r.shape_id},
                        {"selected_views", r.selected_views},
                        {"view_scores", std::move(views)},
                        {"layer1_logits", r.layer1_logits.values},
                        {"layer1_probs", r.layer1_probs.values},
                        {"layer1_top1", r.layer1_top1},
                        {"refined", r.refined},
                        {"candidates", r.candidates ? nlohmann::json(*r.candidates) : nlohmann::json(nullptr)},
                        {"layer2_logits", r.layer2_logits ? nlohmann::json(*r.layer2_logits) : nlohmann::json(nullptr)},
                        {"final_label", r.final_label},
                        {"deferred_refinement", r.deferred_refinement},
                        {"missing_key", r.missing_key ? nlohmann::json(*r.missing_key) : nlohmann::json(nullptr)},
                        {"warnings", r.warnings}};
    if (r.final_label < classes.size()) j["final_class"] = classes[r.final_label];
    return j;
}

}  // namespace mvzero
