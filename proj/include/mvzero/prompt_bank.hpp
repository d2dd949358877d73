#pragma once

// Two-layer prompt store. Layer 1 holds one template prompt per class;
// layer 2 holds, per candidate set, one descriptive prompt per candidate,
// generated offline and keyed by the candidate set.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvzero/dataset.hpp"
#include "mvzero/embedding_io.hpp"
#include "mvzero/error.hpp"

namespace mvzero {

inline constexpr std::string_view kDefaultLayer1Template =
    "A synthetic 3D model view of [class] with different angles";

enum class PromptStyle { visual_only, functional_only, fused, difference, visual_and_functional };

constexpr std::string_view to_string(PromptStyle s) {
    switch (s) {
        case PromptStyle::visual_only: return "visual_only";
        case PromptStyle::functional_only: return "functional_only";
        case PromptStyle::fused: return "fused";
        case PromptStyle::difference: return "difference";
        case PromptStyle::visual_and_functional: return "visual_and_functional";
    }
    return "visual_and_functional";
}

inline PromptStyle parse_prompt_style(std::string_view s) {
    for (auto style : {PromptStyle::visual_only, PromptStyle::functional_only, PromptStyle::fused,
                       PromptStyle::difference, PromptStyle::visual_and_functional}) {
        if (to_string(style) == s) return style;
    }
    throw Error(ErrorCode::BankSchemaError, "unknown prompt_style \"" + std::string(s) + "\"", std::string(s));
}

struct Layer2Entry {
    std::vector<std::size_t> candidate_classes;  // ascending class index; row j <-> candidate_classes[j]
    EmbeddingMatrix embeddings;
    std::vector<std::string> prompt_texts;
    PromptStyle prompt_style = PromptStyle::visual_and_functional;
};

struct PromptBank {
    std::vector<std::string> classes;
    EmbeddingMatrix layer1;
    std::string layer1_template{kDefaultLayer1Template};
    std::map<std::string, Layer2Entry> layer2;
    std::size_t dim = 0;

    std::optional<std::size_t> class_index(std::string_view name) const {
        const auto it = std::find(classes.begin(), classes.end(), name);
        if (it == classes.end()) return std::nullopt;
        return static_cast<std::size_t>(it - classes.begin());
    }
};

/// Joins class names in ascending index order with '|'. No size check.
inline std::string key_for_indices(std::vector<std::size_t> indices, std::span<const std::string> classes) {
    std::sort(indices.begin(), indices.end());
    std::string key;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (i) key += '|';
        key += classes[indices[i]];
    }
    return key;
}

inline std::string candidate_key(std::span<const std::size_t> indices, const PromptBank& bank) {
    if (indices.size() < 2) {
        throw Error(ErrorCode::InvalidConfig, "candidate sets need at least 2 classes");
    }
    for (std::size_t i : indices) {
        if (i >= bank.classes.size()) {
            throw Error(ErrorCode::UnknownClass, "class index " + std::to_string(i), std::to_string(i));
        }
    }
    return key_for_indices({indices.begin(), indices.end()}, bank.classes);
}

inline std::string candidate_key(std::span<const std::string> names, const PromptBank& bank) {
    std::vector<std::size_t> indices;
    for (const auto& n : names) {
        const auto idx = bank.class_index(n);
        if (!idx) throw Error(ErrorCode::UnknownClass, "class \"" + n + "\" not in bank", n);
        indices.push_back(*idx);
    }
    return candidate_key(std::span<const std::size_t>(indices), bank);
}

inline std::string candidate_key(std::initializer_list<std::string> names, const PromptBank& bank) {
    const std::vector<std::string> v(names);
    return candidate_key(std::span<const std::string>(v), bank);
}

/// Throws MissingPromptEntry (subject = key) when the bank has no entry for
/// this candidate set; the bridge then generates it offline.
inline const Layer2Entry& lookup_layer2(std::span<const std::size_t> candidates, const PromptBank& bank) {
    const std::string key = candidate_key(candidates, bank);
    const auto it = bank.layer2.find(key);
    if (it == bank.layer2.end()) {
        throw Error(ErrorCode::MissingPromptEntry, "no layer-2 prompts for \"" + key + "\"", key);
    }
    return it->second;
}

struct Finding {
    std::string code;
    std::string location;

    bool operator==(const Finding&) const = default;
};

inline std::vector<Finding> validate_bank(const PromptBank& bank) {
    std::vector<Finding> out;
    if (bank.classes.empty()) out.push_back({"EMPTY_CLASSES", "classes"});
    std::set<std::string> seen;
    for (std::size_t i = 0; i < bank.classes.size(); ++i) {
        if (!seen.insert(bank.classes[i]).second) out.push_back({"DUPLICATE_CLASS", "classes[" + std::to_string(i) + "]"});
    }
    if (bank.layer1.rows() != bank.classes.size()) {
        out.push_back({"LAYER1_ROW_COUNT", "layer1"});
    }
    if (bank.layer1.cols() != bank.dim) out.push_back({"DIM_MISMATCH", "layer1"});
    for (std::size_t r : non_unit_rows(bank.layer1)) {
        out.push_back({"NORM_VIOLATION", "layer1[" + std::to_string(r) + "]"});
    }
    for (const auto& [key, e] : bank.layer2) {
        const std::string loc = "layer2[" + key + "]";
        const auto& cc = e.candidate_classes;
        if (cc.size() < 2) out.push_back({"CANDIDATE_SET_TOO_SMALL", loc});
        bool in_range = true;
        for (std::size_t c : cc) {
            if (c >= bank.classes.size()) {
                out.push_back({"UNKNOWN_CLASS", loc});
                in_range = false;
                break;
            }
        }
        if (!std::is_sorted(cc.begin(), cc.end()) || std::adjacent_find(cc.begin(), cc.end()) != cc.end()) {
            out.push_back({"CANDIDATE_ORDER", loc});
        }
        if (in_range && key != key_for_indices(cc, bank.classes)) out.push_back({"KEY_MISMATCH", loc});
        if (e.embeddings.rows() != cc.size()) out.push_back({"ROW_COUNT_MISMATCH", loc});
        if (e.embeddings.cols() != bank.dim) out.push_back({"DIM_MISMATCH", loc});
        if (e.prompt_texts.size() != cc.size()) out.push_back({"PROMPT_TEXT_COUNT", loc});
        for (std::size_t r : non_unit_rows(e.embeddings)) {
            out.push_back({"NORM_VIOLATION", loc + "[" + std::to_string(r) + "]"});
        }
    }
    return out;
}

namespace detail {

template <typename T>
T bank_field(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw Error(ErrorCode::BankSchemaError, where + ": missing \"" + key + "\"", where);
    }
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BankSchemaError, where + "." + key + ": " + e.what(), where);
    }
}

inline EmbeddingMatrix slice_rows(const EmbeddingMatrix& m, std::size_t start, std::size_t count) {
    auto first = m.data().begin() + static_cast<std::ptrdiff_t>(start * m.cols());
    std::vector<float> data(first, first + static_cast<std::ptrdiff_t>(count * m.cols()));
    return EmbeddingMatrix(count, m.cols(), std::move(data), m.normalized());
}

}  // namespace detail

/// Builds a bank from its JSON document and already-read EMB1 blobs.
/// When `normalize` is set, every embedding row is unit-normalized, as the
/// classifier expects; pass false to inspect the raw files.
inline PromptBank parse_bank(const nlohmann::json& j, const EmbeddingMatrix& layer1, const EmbeddingMatrix& layer2,
                             bool normalize = true) {
    if (!j.is_object()) throw Error(ErrorCode::BankSchemaError, "bank root must be an object");
    PromptBank bank;
    bank.classes = detail::bank_field<std::vector<std::string>>(j, "classes", "bank");
    bank.dim = detail::bank_field<std::size_t>(j, "dim", "bank");
    bank.layer1_template = detail::bank_field<std::string>(j, "layer1_template", "bank");
    if (layer1.cols() != bank.dim) {
        throw Error(ErrorCode::DimMismatch, "layer1 file has " + std::to_string(layer1.cols()) +
                                                " columns, bank dim is " + std::to_string(bank.dim));
    }
    bank.layer1 = normalize ? normalize_rows(layer1) : layer1;
    const auto entries = detail::bank_field<nlohmann::json>(j, "layer2_entries", "bank");
    if (!entries.is_array()) throw Error(ErrorCode::BankSchemaError, "bank.layer2_entries must be an array");
    if (!entries.empty() && layer2.cols() != bank.dim) {
        throw Error(ErrorCode::DimMismatch, "layer2 file has " + std::to_string(layer2.cols()) +
                                                " columns, bank dim is " + std::to_string(bank.dim));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::string where = "layer2_entries[" + std::to_string(i) + "]";
        const auto& je = entries[i];
        const auto key = detail::bank_field<std::string>(je, "key", where);
        const auto names = detail::bank_field<std::vector<std::string>>(je, "classes", where);
        const auto row_start = detail::bank_field<std::size_t>(je, "row_start", where);
        const auto row_count = detail::bank_field<std::size_t>(je, "row_count", where);
        Layer2Entry e;
        e.prompt_texts = detail::bank_field<std::vector<std::string>>(je, "prompt_texts", where);
        e.prompt_style = parse_prompt_style(detail::bank_field<std::string>(je, "prompt_style", where));
        for (const auto& n : names) {
            const auto idx = bank.class_index(n);
            if (!idx) throw Error(ErrorCode::UnknownClass, where + ": class \"" + n + "\" not in bank", n);
            e.candidate_classes.push_back(*idx);
        }
        if (row_start > layer2.rows() || row_count > layer2.rows() - row_start) {
            throw Error(ErrorCode::IndexOutOfRange,
                        where + ": rows [" + std::to_string(row_start) + ", +" + std::to_string(row_count) +
                            ") exceed layer2 file with " + std::to_string(layer2.rows()) + " rows",
                        key);
        }
        if (key != key_for_indices(e.candidate_classes, bank.classes)) {
            throw Error(ErrorCode::BankSchemaError, where + ": key \"" + key + "\" does not match its classes", key);
        }
        auto rows = detail::slice_rows(layer2, row_start, row_count);
        e.embeddings = normalize ? normalize_rows(rows) : std::move(rows);
        if (!bank.layer2.emplace(key, std::move(e)).second) {
            throw Error(ErrorCode::BankSchemaError, where + ": duplicate key \"" + key + "\"", key);
        }
    }
    return bank;
}

inline PromptBank load_bank(const std::filesystem::path& path, bool normalize = true) {
    const auto j = read_json_file(path, ErrorCode::BankSchemaError);
    const auto dir = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path f = p;
        return f.is_relative() ? dir / f : f;
    };
    const auto layer1 = load_embeddings(resolve(detail::bank_field<std::string>(j, "layer1_file", "bank")));
    EmbeddingMatrix layer2;
    if (j.contains("layer2_file") && !j.at("layer2_file").is_null()) {
        layer2 = load_embeddings(resolve(detail::bank_field<std::string>(j, "layer2_file", "bank")));
    }
    return parse_bank(j, layer1, layer2, normalize);
}

/// Writes `<stem>.json`, `<stem>_layer1.emb` and `<stem>_layer2.emb` next to
/// each other; the JSON references the blobs by relative path. Layer-2 rows
/// are concatenated in key order.
inline void save_bank(const PromptBank& bank, const std::filesystem::path& json_path) {
    const std::string stem = json_path.stem().string();
    const std::string l1_name = stem + "_layer1.emb";
    const std::string l2_name = stem + "_layer2.emb";
    std::vector<float> l2_data;
    nlohmann::json entries = nlohmann::json::array();
    std::size_t row = 0;
    for (const auto& [key, e] : bank.layer2) {
        std::vector<std::string> names;
        for (std::size_t c : e.candidate_classes) names.push_back(bank.classes.at(c));
        entries.push_back({{"key", key},
                           {"classes", names},
                           {"row_start", row},
                           {"row_count", e.embeddings.rows()},
                           {"prompt_texts", e.prompt_texts},
                           {"prompt_style", to_string(e.prompt_style)}});
        l2_data.insert(l2_data.end(), e.embeddings.data().begin(), e.embeddings.data().end());
        row += e.embeddings.rows();
    }
    const auto dir = json_path.parent_path();
    save_embeddings(bank.layer1, dir / l1_name);
    save_embeddings(EmbeddingMatrix(row, bank.dim, std::move(l2_data)), dir / l2_name);
    const nlohmann::json j = {{"classes", bank.classes},       {"dim", bank.dim},
                              {"layer1_template", bank.layer1_template}, {"layer1_file", l1_name},
                              {"layer2_file", l2_name},        {"layer2_entries", std::move(entries)}};
    std::ofstream out(json_path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + json_path.string() + " for writing", json_path.string());
    out << j.dump(2) << '\n';
}

}  // namespace mvzero
