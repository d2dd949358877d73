#pragma once

// Deterministic JSON / CSV / Markdown serialization of harness results.
// Runtime and timestamps never enter these payloads.

#include <array>
#include <cstdio>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "mvzero/eval.hpp"

namespace mvzero {

enum class ReportFormat { json, csv, markdown };

inline ReportFormat parse_report_format(std::string_view s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    if (s == "md" || s == "markdown") return ReportFormat::markdown;
    throw Error(ErrorCode::InvalidConfig, "unknown report format \"" + std::string(s) + "\"");
}

namespace detail {

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string percent(double fraction) { return fixed(100.0 * fraction, 2); }

}  // namespace detail

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
        per_class[r.classes[c]] = {{"correct", r.per_class[c].correct},
                                   {"total", r.per_class[c].total},
                                   {"accuracy", r.per_class[c].accuracy()}};
    }
    const double ratio = r.broken_count ? static_cast<double>(r.corrected_count) / static_cast<double>(r.broken_count)
                                        : 0.0;
    return {{"dataset", r.dataset_name},
            {"total", r.total},
            {"correct", r.correct},
            {"overall_accuracy", r.overall_accuracy},
            {"per_class_accuracy", std::move(per_class)},
            {"refined_count", r.refined_count},
            {"corrected_count", r.corrected_count},
            {"broken_count", r.broken_count},
            {"correction_ratio", r.broken_count ? nlohmann::json(ratio) : nlohmann::json(nullptr)},
            {"deferred_count", r.deferred_count},
            {"config_echo", to_json(r.config_echo)}};
}

inline std::string emit_report(const EvalReport& r, ReportFormat format) {
    std::ostringstream out;
    switch (format) {
        case ReportFormat::json: out << to_json(r).dump(2) << '\n'; break;
        case ReportFormat::csv:
            out << "class,correct,total,accuracy\n";
            for (std::size_t c = 0; c < r.classes.size(); ++c) {
                out << r.classes[c] << ',' << r.per_class[c].correct << ',' << r.per_class[c].total << ','
                    << detail::fixed(r.per_class[c].accuracy(), 6) << '\n';
            }
            out << "overall," << r.correct << ',' << r.total << ',' << detail::fixed(r.overall_accuracy, 6) << '\n';
            break;
        case ReportFormat::markdown:
            out << "| Class | Correct | Total | Accuracy (%) |\n|---|---:|---:|---:|\n";
            for (std::size_t c = 0; c < r.classes.size(); ++c) {
                out << "| " << r.classes[c] << " | " << r.per_class[c].correct << " | " << r.per_class[c].total
                    << " | " << detail::percent(r.per_class[c].accuracy()) << " |\n";
            }
            out << "| **Overall** | " << r.correct << " | " << r.total << " | "
                << detail::percent(r.overall_accuracy) << " |\n\n"
                << "Refined: " << r.refined_count << ", corrected: " << r.corrected_count
                << ", broken: " << r.broken_count << ", deferred: " << r.deferred_count << "\n\n"
                << "Config: `" << to_json(r.config_echo).dump() << "`\n";
            break;
    }
    return out.str();
}

inline std::string emit_report(const std::array<AblationRow, 4>& grid, ReportFormat format) {
    std::ostringstream out;
    switch (format) {
        case ReportFormat::json: {
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& row : grid) {
                rows.push_back({{"view_selection", row.view_selection},
                                {"hierarchical_prompts", row.hierarchical},
                                {"report", to_json(row.report)}});
            }
            out << rows.dump(2) << '\n';
            break;
        }
        case ReportFormat::csv:
            out << "view_selection,hierarchical_prompts,accuracy,refined_count\n";
            for (const auto& row : grid) {
                out << (row.view_selection ? 1 : 0) << ',' << (row.hierarchical ? 1 : 0) << ','
                    << detail::fixed(row.report.overall_accuracy, 6) << ',' << row.report.refined_count << '\n';
            }
            break;
        case ReportFormat::markdown:
            out << "| View selection | Hierarchical prompts | Accuracy (%) |\n|:---:|:---:|---:|\n";
            for (const auto& row : grid) {
                out << "| " << (row.view_selection ? "✓" : "✗") << " | " << (row.hierarchical ? "✓" : "✗")
                    << " | " << detail::percent(row.report.overall_accuracy) << " |\n";
            }
            break;
    }
    return out.str();
}

inline std::string format_sweep_value(const SweepCurve& curve, double v) {
    if (curve.parameter == SweepParameter::m_select || curve.parameter == SweepParameter::top_k) {
        return std::to_string(static_cast<std::size_t>(v));
    }
    std::ostringstream s;
    s << v;
    return s.str();
}

inline std::string emit_report(const SweepCurve& curve, ReportFormat format) {
    std::ostringstream out;
    switch (format) {
        case ReportFormat::json: {
            nlohmann::json pts = nlohmann::json::array();
            for (const auto& p : curve.points) {
                pts.push_back({{"value", p.value}, {"accuracy", p.accuracy}, {"refined_count", p.refined_count}});
            }
            const nlohmann::json j = {{"parameter", to_string(curve.parameter)},
                                      {"points", std::move(pts)},
                                      {"config_echo", curve.points.empty() ? nlohmann::json(nullptr)
                                                                           : to_json(curve.points.front().report.config_echo)}};
            out << j.dump(2) << '\n';
            break;
        }
        case ReportFormat::csv:
            out << "value,accuracy,refined_count\n";
            for (const auto& p : curve.points) {
                out << format_sweep_value(curve, p.value) << ',' << detail::fixed(p.accuracy, 6) << ','
                    << p.refined_count << '\n';
            }
            break;
        case ReportFormat::markdown:
            out << "| " << to_string(curve.parameter) << " | Accuracy (%) | Refined |\n|---:|---:|---:|\n";
            for (const auto& p : curve.points) {
                out << "| " << format_sweep_value(curve, p.value) << " | " << detail::percent(p.accuracy) << " | "
                    << p.refined_count << " |\n";
            }
            break;
    }
    return out.str();
}

}  // namespace mvzero
