#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "mvzero/classifier.hpp"
#include "mvzero/dataset.hpp"
#include "mvzero/prompt_bank.hpp"

namespace mvzero {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; results must be written to per-index slots.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct ClassCount {
    std::size_t correct = 0;
    std::size_t total = 0;

    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct EvalReport {
    std::string dataset_name;
    std::vector<std::string> classes;
    std::size_t total = 0;
    std::size_t correct = 0;
    double overall_accuracy = 0.0;
    std::vector<ClassCount> per_class;  // indexed like classes
    std::size_t refined_count = 0;
    std::size_t corrected_count = 0;  // refined, layer-1 wrong -> final right
    std::size_t broken_count = 0;     // refined, layer-1 right -> final wrong
    std::size_t deferred_count = 0;
    ClassifierConfig config_echo;
    double runtime_ms = 0.0;  // not serialized; reports stay byte-stable
};

struct EvalRun {
    EvalReport report;
    std::vector<PredictionRecord> records;  // dataset order
};

inline void check_compatible(const Dataset& data, const PromptBank& bank) {
    if (data.manifest.classes != bank.classes) {
        throw Error(ErrorCode::InvalidConfig, "dataset and prompt bank class lists differ");
    }
    if (data.views.cols() != bank.dim) {
        throw Error(ErrorCode::DimMismatch, "views have dim " + std::to_string(data.views.cols()) +
                                                ", bank has dim " + std::to_string(bank.dim));
    }
}

/// Classifies every shape (no label requirement).
inline std::vector<PredictionRecord> classify_all(const Dataset& data, const PromptBank& bank,
                                                  const ClassifierConfig& config, std::size_t threads = 1) {
    check_compatible(data, bank);
    config.validate();
    std::vector<PredictionRecord> records(data.manifest.shapes.size());
    parallel_for(records.size(), threads, [&](std::size_t i) {
        records[i] = classify_shape(data.manifest.shapes[i], data.views, bank, config);
    });
    return records;
}

inline void require_labels(const Dataset& data) {
    if (data.manifest.shapes.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no shapes");
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        if (!data.labels[i]) {
            const auto& id = data.manifest.shapes[i].shape_id;
            throw Error(ErrorCode::MissingLabel, "shape " + id + " has no label", id);
        }
    }
}

/// Tallies records against labels. Counts are merged in dataset order, so
/// the result is independent of how classification was scheduled.
inline EvalReport tally(const Dataset& data, std::span<const PredictionRecord> records,
                        const ClassifierConfig& config) {
    EvalReport r;
    r.dataset_name = data.manifest.dataset_name;
    r.classes = data.manifest.classes;
    r.per_class.resize(r.classes.size());
    r.config_echo = config;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::size_t label = *data.labels[i];
        const auto& rec = records[i];
        const bool right = rec.final_label == label;
        ++r.total;
        ++r.per_class[label].total;
        if (right) {
            ++r.correct;
            ++r.per_class[label].correct;
        }
        if (rec.deferred_refinement) ++r.deferred_count;
        if (rec.refined) {
            ++r.refined_count;
            const bool was_right = rec.layer1_top1 == label;
            if (!was_right && right) ++r.corrected_count;
            if (was_right && !right) ++r.broken_count;
        }
    }
    r.overall_accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

inline EvalRun run_evaluation(const Dataset& data, const PromptBank& bank, const ClassifierConfig& config,
                              std::size_t threads = 1) {
    require_labels(data);
    const auto start = std::chrono::steady_clock::now();
    EvalRun run;
    run.records = classify_all(data, bank, config, threads);
    run.report = tally(data, run.records, config);
    run.report.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return run;
}

inline EvalReport evaluate(const Dataset& data, const PromptBank& bank, const ClassifierConfig& config,
                           std::size_t threads = 1) {
    return run_evaluation(data, bank, config, threads).report;
}

struct AblationRow {
    bool view_selection = false;
    bool hierarchical = false;
    EvalReport report;
};

/// {selection off, on} x {hierarchical off, on}; selection "off" uses every
/// view (mode none), everything else is taken from `base`.
inline std::array<AblationRow, 4> ablation_grid(const Dataset& data, const PromptBank& bank,
                                                const ClassifierConfig& base, std::size_t threads = 1) {
    std::array<AblationRow, 4> grid;
    std::size_t i = 0;
    for (bool sel : {false, true}) {
        for (bool hp : {false, true}) {
            ClassifierConfig c = base;
            c.hierarchical_enabled = hp;
            if (!sel) c.selection.mode = SelectionMode::none;
            else if (c.selection.mode == SelectionMode::none) c.selection.mode = SelectionMode::entropy_min;
            grid[i++] = AblationRow{sel, hp, evaluate(data, bank, c, threads)};
        }
    }
    return grid;
}

enum class SweepParameter { delta, m_select, top_k, temperature };

constexpr std::string_view to_string(SweepParameter p) {
    switch (p) {
        case SweepParameter::delta: return "delta";
        case SweepParameter::m_select: return "m_select";
        case SweepParameter::top_k: return "top_k";
        case SweepParameter::temperature: return "temperature";
    }
    return "delta";
}

inline SweepParameter parse_sweep_parameter(std::string_view s) {
    for (auto p : {SweepParameter::delta, SweepParameter::m_select, SweepParameter::top_k, SweepParameter::temperature}) {
        if (to_string(p) == s) return p;
    }
    throw Error(ErrorCode::InvalidSweepValue, "unknown sweep parameter \"" + std::string(s) + "\"");
}

struct SweepPoint {
    double value = 0.0;
    double accuracy = 0.0;
    std::size_t refined_count = 0;
    EvalReport report;
};

struct SweepCurve {
    SweepParameter parameter = SweepParameter::delta;
    std::vector<SweepPoint> points;  // ascending value
};

inline ClassifierConfig with_parameter(ClassifierConfig c, SweepParameter p, double value) {
    auto as_count = [&](double v) {
        if (!(v >= 1.0) || v != std::floor(v)) {
            throw Error(ErrorCode::InvalidSweepValue,
                        std::string(to_string(p)) + " needs a positive integer, got " + std::to_string(v));
        }
        return static_cast<std::size_t>(v);
    };
    switch (p) {
        case SweepParameter::delta:
            if (!(value >= 0.0 && value <= 1.0)) {
                throw Error(ErrorCode::InvalidSweepValue, "delta must lie in [0, 1], got " + std::to_string(value));
            }
            c.delta = value;
            break;
        case SweepParameter::m_select: c.selection.m_select = as_count(value); break;
        case SweepParameter::top_k: c.top_k = as_count(value); break;
        case SweepParameter::temperature:
            if (!(value > 0.0)) {
                throw Error(ErrorCode::InvalidSweepValue, "temperature must be positive, got " + std::to_string(value));
            }
            c.temperature = value;
            break;
    }
    try {
        c.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidSweepValue, e.what());
    }
    return c;
}

inline SweepCurve sweep(const Dataset& data, const PromptBank& bank, const ClassifierConfig& base,
                        SweepParameter parameter, std::vector<double> values, std::size_t threads = 1) {
    if (values.empty()) throw Error(ErrorCode::InvalidSweepValue, "sweep needs at least one value");
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    std::vector<ClassifierConfig> configs;
    for (double v : values) configs.push_back(with_parameter(base, parameter, v));
    SweepCurve curve{parameter, std::vector<SweepPoint>(values.size())};
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto rep = evaluate(data, bank, configs[i], threads);
        curve.points[i] = SweepPoint{values[i], rep.overall_accuracy, rep.refined_count, std::move(rep)};
    }
    return curve;
}

struct PerViewAccuracy {
    std::size_t all_correct = 0;
    std::size_t all_total = 0;
    std::size_t selected_correct = 0;
    std::size_t selected_total = 0;

    double all_views() const { return all_total ? static_cast<double>(all_correct) / static_cast<double>(all_total) : 0.0; }
    double selected_views() const {
        return selected_total ? static_cast<double>(selected_correct) / static_cast<double>(selected_total) : 0.0;
    }
};

/// Fraction of individual views whose own top-1 class matches the shape
/// label, over all views and over the selected views.
inline PerViewAccuracy per_view_accuracy(const Dataset& data, const PromptBank& bank, const ClassifierConfig& config,
                                         std::size_t threads = 1) {
    require_labels(data);
    ClassifierConfig c = config;
    c.hierarchical_enabled = false;
    const auto records = classify_all(data, bank, c, threads);
    PerViewAccuracy acc;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::size_t label = *data.labels[i];
        for (const auto& s : records[i].view_scores) {
            ++acc.all_total;
            if (s.top1_class == label) ++acc.all_correct;
        }
        for (std::size_t pos : records[i].selected_views) {
            ++acc.selected_total;
            if (records[i].view_scores[pos].top1_class == label) ++acc.selected_correct;
        }
    }
    return acc;
}

/// histogram[d] = number of shapes whose selected views carry d distinct
/// top-1 decisions (index 0 unused).
inline std::vector<std::size_t> decision_variance(const Dataset& data, const PromptBank& bank,
                                                  const ClassifierConfig& config, std::size_t threads = 1) {
    require_labels(data);
    ClassifierConfig c = config;
    c.hierarchical_enabled = false;
    const auto records = classify_all(data, bank, c, threads);
    std::vector<std::size_t> hist(1, 0);
    for (const auto& r : records) {
        std::vector<std::size_t> decisions;
        for (std::size_t pos : r.selected_views) decisions.push_back(r.view_scores[pos].top1_class);
        std::sort(decisions.begin(), decisions.end());
        const auto distinct =
            static_cast<std::size_t>(std::unique(decisions.begin(), decisions.end()) - decisions.begin());
        if (hist.size() <= distinct) hist.resize(distinct + 1, 0);
        ++hist[distinct];
    }
    return hist;
}

/// Candidate keys the dataset would need at layer 2 but the bank lacks,
/// sorted and unique.
inline std::vector<std::string> missing_prompt_keys(const Dataset& data, const PromptBank& bank,
                                                    const ClassifierConfig& config, std::size_t threads = 1) {
    std::vector<std::string> keys;
    for (const auto& r : classify_all(data, bank, config, threads)) {
        if (r.missing_key) keys.push_back(*r.missing_key);
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    return keys;
}

}  // namespace mvzero
