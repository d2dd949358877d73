#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvzero/dataset.hpp"
#include "mvzero/scoring.hpp"

namespace mvzero {

enum class SelectionMode { entropy_min, none, diverse_decisions };

constexpr std::string_view to_string(SelectionMode m) {
    switch (m) {
        case SelectionMode::entropy_min: return "entropy_min";
        case SelectionMode::none: return "none";
        case SelectionMode::diverse_decisions: return "diverse_decisions";
    }
    return "entropy_min";
}

inline SelectionMode parse_selection_mode(std::string_view s) {
    if (s == "entropy_min") return SelectionMode::entropy_min;
    if (s == "none") return SelectionMode::none;
    if (s == "diverse_decisions") return SelectionMode::diverse_decisions;
    throw Error(ErrorCode::InvalidConfig, "unknown selection mode \"" + std::string(s) + "\"");
}

struct SelectionConfig {
    std::size_t m_total = 20;
    std::size_t m_select = 4;
    SelectionMode mode = SelectionMode::entropy_min;

    bool operator==(const SelectionConfig&) const = default;

    void validate() const {
        if (m_select < 1 || m_select > m_total) {
            throw Error(ErrorCode::InvalidConfig, "need 1 <= m_select (" + std::to_string(m_select) +
                                                      ") <= m_total (" + std::to_string(m_total) + ")");
        }
    }
};

/// Per-view prediction summary. `view_index` is the position within the
/// shape's view list, not the row in the view matrix.
struct ViewScore {
    std::size_t view_index = 0;
    double entropy = 0.0;
    std::size_t top1_class = 0;
    LogitsVector logits;

    bool operator==(const ViewScore&) const = default;
};

struct Selection {
    std::vector<std::size_t> indices;  // ascending view positions
    std::vector<std::string> warnings;
    bool clamped = false;
    bool diversity_fallback = false;
};

template <std::floating_point T>
ViewScore score_view(std::size_t view_index, std::span<const T> view, const EmbeddingMatrix& prompts,
                     double temperature) {
    ViewScore s;
    s.view_index = view_index;
    s.logits = compute_logits(view, prompts, temperature);
    s.entropy = entropy_bits(softmax(s.logits));
    s.top1_class = argmax(s.logits);
    return s;
}

inline std::vector<ViewScore> score_views(const ShapeRecord& shape, const EmbeddingMatrix& views,
                                          const EmbeddingMatrix& prompts, double temperature) {
    std::vector<ViewScore> scores;
    scores.reserve(shape.view_rows.size());
    for (std::size_t i = 0; i < shape.view_rows.size(); ++i) {
        const std::size_t r = shape.view_rows[i];
        if (r >= views.rows()) {
            throw Error(ErrorCode::IndexOutOfRange, "shape " + shape.shape_id + " row " + std::to_string(r),
                        shape.shape_id);
        }
        scores.push_back(score_view(i, views.row(r), prompts, temperature));
    }
    return scores;
}

/// View positions ordered by ascending entropy, ties by ascending position.
inline std::vector<std::size_t> rank_by_entropy(std::span<const ViewScore> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a].entropy != scores[b].entropy) return scores[a].entropy < scores[b].entropy;
        return scores[a].view_index < scores[b].view_index;
    });
    return order;
}

inline Selection select_views(std::span<const ViewScore> scores, const SelectionConfig& config) {
    config.validate();
    if (scores.empty()) {
        throw Error(ErrorCode::InvalidConfig, "select_views needs at least one scored view");
    }
    Selection sel;
    std::size_t want = config.m_select;
    if (want > scores.size()) {
        sel.clamped = true;
        sel.warnings.push_back("m_select " + std::to_string(want) + " clamped to " +
                               std::to_string(scores.size()) + " available views");
        want = scores.size();
    }

    if (config.mode == SelectionMode::none) {
        for (const auto& s : scores) sel.indices.push_back(s.view_index);
        std::sort(sel.indices.begin(), sel.indices.end());
        return sel;
    }

    const auto order = rank_by_entropy(scores);
    if (config.mode == SelectionMode::entropy_min) {
        for (std::size_t i = 0; i < want; ++i) sel.indices.push_back(scores[order[i]].view_index);
    } else {
        std::vector<bool> taken(scores.size(), false);
        std::vector<std::size_t> decisions;
        for (std::size_t pos : order) {
            if (sel.indices.size() == want) break;
            const std::size_t cls = scores[pos].top1_class;
            if (std::find(decisions.begin(), decisions.end(), cls) != decisions.end()) continue;
            decisions.push_back(cls);
            taken[pos] = true;
            sel.indices.push_back(scores[pos].view_index);
        }
        if (sel.indices.size() < want) {
            sel.diversity_fallback = true;
            sel.warnings.push_back("only " + std::to_string(sel.indices.size()) +
                                   " distinct view decisions; filled with lowest-entropy remaining views");
            for (std::size_t pos : order) {
                if (sel.indices.size() == want) break;
                if (!taken[pos]) sel.indices.push_back(scores[pos].view_index);
            }
        }
    }
    std::sort(sel.indices.begin(), sel.indices.end());
    return sel;
}

enum class PoolMode { mean, max };

/// Element-wise mean or max of the given vectors, renormalized to unit norm.
template <std::floating_point T>
std::vector<float> pool_features(std::span<const std::span<const T>> vectors, PoolMode mode) {
    if (vectors.empty()) {
        throw Error(ErrorCode::DimMismatch, "pool_features needs at least one vector");
    }
    const std::size_t dim = vectors.front().size();
    std::vector<double> acc(dim, mode == PoolMode::mean ? 0.0 : -HUGE_VAL);
    for (const auto& v : vectors) {
        if (v.size() != dim) throw Error(ErrorCode::DimMismatch, "pooled vectors differ in dim");
        for (std::size_t j = 0; j < dim; ++j) {
            if (mode == PoolMode::mean) {
                acc[j] += static_cast<double>(v[j]);
            } else {
                acc[j] = std::max(acc[j], static_cast<double>(v[j]));
            }
        }
    }
    if (mode == PoolMode::mean) {
        for (double& x : acc) x /= static_cast<double>(vectors.size());
    }
    double norm = 0.0;
    for (double x : acc) norm += x * x;
    norm = std::sqrt(norm);
    if (!(norm >= kZeroNormThreshold)) {
        throw Error(ErrorCode::ZeroNormRow, "pooled vector has norm " + std::to_string(norm), "pooled");
    }
    std::vector<float> out(dim);
    for (std::size_t j = 0; j < dim; ++j) out[j] = static_cast<float>(acc[j] / norm);
    return out;
}

}  // namespace mvzero
