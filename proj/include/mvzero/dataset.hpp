#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvzero/embedding_io.hpp"
#include "mvzero/error.hpp"

namespace mvzero {

inline constexpr std::array<std::string_view, 4> kViewConfigs = {"circular", "spherical", "random",
                                                                 "other"};

/// One 3D shape: its rendered views as rows of the dataset's view matrix,
/// in rendering order.
struct ShapeRecord {
    std::string shape_id;
    std::optional<std::string> label;
    std::vector<std::size_t> view_rows;
    std::string view_config = "circular";

    bool operator==(const ShapeRecord&) const = default;
};

struct DatasetManifest {
    std::string dataset_name;
    std::vector<std::string> classes;
    std::vector<ShapeRecord> shapes;
    std::string embedding_file;
    std::size_t dim = 0;

    bool operator==(const DatasetManifest&) const = default;

    std::optional<std::size_t> class_index(std::string_view name) const {
        const auto it = std::find(classes.begin(), classes.end(), name);
        if (it == classes.end()) return std::nullopt;
        return static_cast<std::size_t>(it - classes.begin());
    }
};

/// A manifest paired with its normalized view matrix. `labels[i]` is the
/// class index of shapes[i], when labelled.
struct Dataset {
    DatasetManifest manifest;
    EmbeddingMatrix views;
    std::vector<std::optional<std::size_t>> labels;
};

namespace detail {

template <typename T>
T require_field(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw Error(ErrorCode::ManifestSchemaError, where + ": missing \"" + key + "\"", where);
    }
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ManifestSchemaError, where + "." + key + ": " + e.what(), where);
    }
}

}  // namespace detail

inline nlohmann::json to_json(const DatasetManifest& m) {
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& s : m.shapes) {
        nlohmann::json js = {{"shape_id", s.shape_id}, {"view_rows", s.view_rows}, {"view_config", s.view_config}};
        if (s.label) js["label"] = *s.label;
        shapes.push_back(std::move(js));
    }
    return {{"dataset_name", m.dataset_name},
            {"classes", m.classes},
            {"dim", m.dim},
            {"embedding_file", m.embedding_file},
            {"shapes", std::move(shapes)}};
}

/// Structural parse only; cross-checks against the matrix live in
/// validate_manifest.
inline DatasetManifest parse_manifest(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw Error(ErrorCode::ManifestSchemaError, "manifest root must be an object");
    }
    DatasetManifest m;
    m.dataset_name = detail::require_field<std::string>(j, "dataset_name", "manifest");
    m.classes = detail::require_field<std::vector<std::string>>(j, "classes", "manifest");
    m.dim = detail::require_field<std::size_t>(j, "dim", "manifest");
    m.embedding_file = detail::require_field<std::string>(j, "embedding_file", "manifest");
    const auto shapes = detail::require_field<nlohmann::json>(j, "shapes", "manifest");
    if (!shapes.is_array()) {
        throw Error(ErrorCode::ManifestSchemaError, "manifest.shapes must be an array");
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const std::string where = "shapes[" + std::to_string(i) + "]";
        const auto& js = shapes[i];
        ShapeRecord s;
        s.shape_id = detail::require_field<std::string>(js, "shape_id", where);
        s.view_rows = detail::require_field<std::vector<std::size_t>>(js, "view_rows", where);
        s.view_config = detail::require_field<std::string>(js, "view_config", where);
        if (js.contains("label") && !js.at("label").is_null()) {
            s.label = detail::require_field<std::string>(js, "label", where);
        }
        m.shapes.push_back(std::move(s));
    }
    return m;
}

/// Checks every manifest invariant, and agreement with `views` when given.
inline void validate_manifest(const DatasetManifest& m, const EmbeddingMatrix* views = nullptr) {
    if (m.dim == 0) {
        throw Error(ErrorCode::ManifestSchemaError, "dim must be >= 1", "dim");
    }
    std::set<std::string> seen_classes;
    for (const auto& c : m.classes) {
        if (!seen_classes.insert(c).second) {
            throw Error(ErrorCode::ManifestSchemaError, "duplicate class \"" + c + "\"", c);
        }
    }
    if (views != nullptr && views->cols() != m.dim) {
        throw Error(ErrorCode::DimMismatch,
                    "manifest dim " + std::to_string(m.dim) + " but embedding file has " +
                        std::to_string(views->cols()) + " columns");
    }
    std::set<std::string> seen_ids;
    for (const auto& s : m.shapes) {
        if (!seen_ids.insert(s.shape_id).second) {
            throw Error(ErrorCode::ManifestSchemaError, "duplicate shape_id \"" + s.shape_id + "\"", s.shape_id);
        }
        if (s.view_rows.empty()) {
            throw Error(ErrorCode::ManifestSchemaError, "shape " + s.shape_id + " has no views", s.shape_id);
        }
        if (std::find(kViewConfigs.begin(), kViewConfigs.end(), s.view_config) == kViewConfigs.end()) {
            throw Error(ErrorCode::ManifestSchemaError,
                        "shape " + s.shape_id + " has unknown view_config \"" + s.view_config + "\"", s.shape_id);
        }
        std::set<std::size_t> rows;
        for (std::size_t r : s.view_rows) {
            if (!rows.insert(r).second) {
                throw Error(ErrorCode::ManifestSchemaError,
                            "shape " + s.shape_id + " repeats view row " + std::to_string(r), s.shape_id);
            }
            if (views != nullptr && r >= views->rows()) {
                throw Error(ErrorCode::IndexOutOfRange,
                            "shape " + s.shape_id + " references row " + std::to_string(r) + " of a " +
                                std::to_string(views->rows()) + "-row matrix",
                            s.shape_id);
            }
        }
        if (s.label && !m.class_index(*s.label)) {
            throw Error(ErrorCode::UnknownLabel, "shape " + s.shape_id + " has label \"" + *s.label + "\"",
                        *s.label);
        }
    }
}

inline Dataset make_dataset(DatasetManifest manifest, const EmbeddingMatrix& raw_views) {
    validate_manifest(manifest, &raw_views);
    Dataset d{std::move(manifest), normalize_rows(raw_views), {}};
    d.labels.reserve(d.manifest.shapes.size());
    for (const auto& s : d.manifest.shapes) {
        d.labels.push_back(s.label ? d.manifest.class_index(*s.label) : std::nullopt);
    }
    return d;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path, ErrorCode schema_code) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string(), path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(schema_code, path.string() + ": " + e.what(), path.string());
    }
}

/// Loads a manifest and the EMB1 file it references (relative paths resolve
/// against the manifest's directory). Returns row-normalized views.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
    auto manifest = parse_manifest(read_json_file(manifest_path, ErrorCode::ManifestSchemaError));
    std::filesystem::path emb = manifest.embedding_file;
    if (emb.is_relative()) emb = manifest_path.parent_path() / emb;
    return make_dataset(std::move(manifest), load_embeddings(emb));
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing", path.string());
    }
    out << to_json(m).dump(2) << '\n';
}

}  // namespace mvzero
