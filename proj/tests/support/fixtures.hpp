#pragma once

// Small hand-built datasets and banks shared by the tests.

#include <string>
#include <vector>

#include "mvzero/mvzero.hpp"

namespace fixture {

inline mvzero::PromptBank bank_from_rows(std::vector<std::string> classes,
                                         std::initializer_list<std::vector<float>> layer1) {
    mvzero::PromptBank b;
    b.classes = std::move(classes);
    b.layer1 = mvzero::normalize_rows(mvzero::EmbeddingMatrix::from_rows(layer1));
    b.dim = b.layer1.cols();
    return b;
}

inline void add_entry(mvzero::PromptBank& b, std::vector<std::size_t> classes, std::initializer_list<std::vector<float>> rows) {
    mvzero::Layer2Entry e;
    e.candidate_classes = classes;
    e.embeddings = mvzero::normalize_rows(mvzero::EmbeddingMatrix::from_rows(rows));
    for (std::size_t c : classes) e.prompt_texts.push_back("a " + b.classes[c]);
    b.layer2.emplace(mvzero::key_for_indices(classes, b.classes), std::move(e));
}

/// One shape whose views are the given rows, in order.
inline mvzero::Dataset single_shape(const std::vector<std::string>& classes, std::initializer_list<std::vector<float>> views,
                                    std::optional<std::string> label = std::nullopt) {
    mvzero::DatasetManifest m;
    m.dataset_name = "single";
    m.classes = classes;
    m.embedding_file = "views.emb";
    const auto mat = mvzero::EmbeddingMatrix::from_rows(views);
    m.dim = mat.cols();
    mvzero::ShapeRecord s{"shape0", std::move(label), {}, "other"};
    for (std::size_t i = 0; i < mat.rows(); ++i) s.view_rows.push_back(i);
    m.shapes.push_back(std::move(s));
    return mvzero::make_dataset(m, mat);
}

inline bool banks_equal(const mvzero::PromptBank& a, const mvzero::PromptBank& b) {
    if (a.classes != b.classes || a.dim != b.dim || a.layer1_template != b.layer1_template) return false;
    if (!a.layer1.bitwise_equal(b.layer1) || a.layer2.size() != b.layer2.size()) return false;
    for (const auto& [key, e] : a.layer2) {
        const auto it = b.layer2.find(key);
        if (it == b.layer2.end()) return false;
        const auto& f = it->second;
        if (e.candidate_classes != f.candidate_classes || e.prompt_texts != f.prompt_texts ||
            e.prompt_style != f.prompt_style || !e.embeddings.bitwise_equal(f.embeddings)) {
            return false;
        }
    }
    return true;
}

/// Scaled-down reference geometry for tests that only need something fast.
inline mvzero::SyntheticSpec small_spec(std::uint64_t seed = 3) {
    mvzero::SyntheticSpec s;
    s.classes = 6;
    s.dim = 24;
    s.shapes_per_class = 12;
    s.layer2_sizes = {2, 3, 4};
    s.seed = seed;
    return s;
}

}  // namespace fixture
