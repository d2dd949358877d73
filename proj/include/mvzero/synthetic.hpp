#pragma once

// Seed-deterministic planted fixtures.
//
// Geometry (D = dim, K = classes):
//   u_c   orthonormal visual anchors, one per class
//   e_c   unit "template bias" directions orthogonal to span(u)
//   layer-1 prompt  t_c = normalize(u_c + text_bias * e_c)
//   layer-2 prompt  for candidate c of set S:
//                   normalize(u_c + blur(|S|) * sum_{j in S, j != c} w_j u_j),
//                   w random non-negative with |w| = 1,
//                   blur(s) = min(0.9, layer2_blur * (s - 2))
//   clean view      normalize(u_c + z + noise_sigma * g + modality_gap * b),
//                   z = drift_ratio * noise_sigma * g_shape
//   ambiguous view  uniform_mixture:  normalize(sum_j u_j / sqrt(K) + ambiguous_sigma * g + modality_gap * b)
//                   wrong_class_leak: the same plus leak * u_w for a random wrong class w
//   b               unit direction orthogonal to every prompt; it shrinks all
//                   view-prompt cosines the way image and text embeddings of
//                   contrastive encoders sit far apart
// with g, g_shape ~ N(0, I/D). View order within a shape is shuffled.
//
// The bias e_c only perturbs layer-1 matching, so layer 2 is the sharper
// matcher inside small candidate sets. With noise_sigma = 0 a clean view is
// exactly u_c and every configuration classifies it correctly (blur < 1 and
// w_c <= 1 keep u_c . row_c > u_c . row_j).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mvzero/dataset.hpp"
#include "mvzero/embedding_io.hpp"
#include "mvzero/prompt_bank.hpp"

namespace mvzero {

enum class AmbiguousMode { uniform_mixture, wrong_class_leak };

constexpr std::string_view to_string(AmbiguousMode m) {
    return m == AmbiguousMode::uniform_mixture ? "uniform_mixture" : "wrong_class_leak";
}

inline AmbiguousMode parse_ambiguous_mode(std::string_view s) {
    if (s == "uniform_mixture") return AmbiguousMode::uniform_mixture;
    if (s == "wrong_class_leak") return AmbiguousMode::wrong_class_leak;
    throw Error(ErrorCode::InvalidConfig, "unknown ambiguous mode \"" + std::string(s) + "\"");
}

struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t dim = 64;
    std::size_t shapes_per_class = 50;
    std::size_t views = 20;
    std::size_t clean_views = 4;
    double noise_sigma = 0.3;
    double drift_ratio = 4.0;
    double ambiguous_sigma = 2.5;
    AmbiguousMode ambiguous_mode = AmbiguousMode::uniform_mixture;
    double leak = 0.6;
    double text_bias = 1.0;
    double layer2_blur = 0.45;
    double modality_gap = 3.0;
    std::vector<std::size_t> layer2_sizes = {3};
    std::uint64_t seed = 7;
    std::string view_config = "circular";

    void validate() const {
        if (classes < 2) throw Error(ErrorCode::InvalidConfig, "need at least 2 classes");
        if (dim < classes) {
            throw Error(ErrorCode::DimTooSmall, "dim " + std::to_string(dim) + " < classes " +
                                                    std::to_string(classes) + ": orthonormal anchors impossible");
        }
        if (views == 0 || clean_views > views) {
            throw Error(ErrorCode::InvalidConfig, "need 0 < views and clean_views <= views");
        }
        for (std::size_t s : layer2_sizes) {
            if (s < 2 || s > classes) {
                throw Error(ErrorCode::InvalidConfig, "layer-2 set size " + std::to_string(s) + " out of [2, K]");
            }
        }
        if (noise_sigma < 0 || ambiguous_sigma < 0 || drift_ratio < 0 || text_bias < 0 || layer2_blur < 0 || leak < 0 ||
            modality_gap < 0) {
            throw Error(ErrorCode::InvalidConfig, "synthetic noise parameters must be non-negative");
        }
    }
};

struct SyntheticFixture {
    DatasetManifest manifest;
    EmbeddingMatrix views;  // raw rows, as a bridge would write them
    PromptBank bank;

    Dataset dataset() const { return make_dataset(manifest, views); }
};

namespace detail {

using Vec = std::vector<double>;

inline Vec gaussian(std::mt19937_64& rng, std::size_t dim, double scale) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec v(dim);
    const double s = scale / std::sqrt(static_cast<double>(dim));
    for (double& x : v) x = n(rng) * s;
    return v;
}

inline double vdot(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline void axpy(double a, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline bool normalize_in_place(Vec& v) {
    const double n = std::sqrt(vdot(v, v));
    if (n < 1e-12) return false;
    for (double& x : v) x /= n;
    return true;
}

/// Removes the components of v along each (orthonormal) basis vector, twice
/// for numerical safety.
inline void project_out(Vec& v, const std::vector<Vec>& basis) {
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis) axpy(-vdot(v, b), b, v);
    }
}

inline std::vector<float> to_f32(const Vec& v) { return {v.begin(), v.end()}; }

}  // namespace detail

inline std::string synthetic_class_name(std::size_t c) {
    std::string s = "class";
    if (c < 10) s += '0';
    return s + std::to_string(c);
}

inline SyntheticFixture generate_synthetic(const SyntheticSpec& spec) {
    using detail::Vec;
    spec.validate();
    const std::size_t K = spec.classes;
    const std::size_t D = spec.dim;
    // Independent streams: the layer-2 population does not perturb the views.
    auto stream = [&](std::uint64_t id) {
        std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                          static_cast<std::uint32_t>(id)};
        return std::mt19937_64(seq);
    };
    std::mt19937_64 rng = stream(0);
    std::mt19937_64 prompt_rng = stream(1);
    std::mt19937_64 view_rng = stream(2);

    std::vector<Vec> anchors;
    while (anchors.size() < K) {
        Vec v = detail::gaussian(rng, D, 1.0);
        detail::project_out(v, anchors);
        if (detail::normalize_in_place(v)) anchors.push_back(std::move(v));
    }
    const bool has_complement = D > K;
    std::vector<Vec> bias(K, Vec(D, 0.0));
    if (has_complement) {
        for (auto& e : bias) {
            do {
                e = detail::gaussian(rng, D, 1.0);
                detail::project_out(e, anchors);
            } while (!detail::normalize_in_place(e));
        }
    }

    // Shared view offset, orthogonal to anchors and bias directions.
    Vec gap(D, 0.0);
    if (D > 2 * K) {
        std::vector<Vec> basis = anchors;
        for (const auto& e : bias) {
            Vec q = e;
            detail::project_out(q, basis);
            if (detail::normalize_in_place(q)) basis.push_back(std::move(q));
        }
        do {
            gap = detail::gaussian(rng, D, 1.0);
            detail::project_out(gap, basis);
        } while (!detail::normalize_in_place(gap));
    }

    SyntheticFixture fx;
    std::vector<std::string> names;
    for (std::size_t c = 0; c < K; ++c) names.push_back(synthetic_class_name(c));

    // Layer 1.
    std::vector<float> l1;
    for (std::size_t c = 0; c < K; ++c) {
        Vec t = anchors[c];
        detail::axpy(spec.text_bias, bias[c], t);
        detail::normalize_in_place(t);
        l1.insert(l1.end(), t.begin(), t.end());
    }
    fx.bank.classes = names;
    fx.bank.dim = D;
    fx.bank.layer1 = EmbeddingMatrix(K, D, std::move(l1));

    // Layer 2: every subset of each requested size, enumerated in
    // lexicographic index order so the RNG stream is reproducible.
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::size_t> sizes = spec.layer2_sizes;
    std::sort(sizes.begin(), sizes.end());
    sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
    for (std::size_t s : sizes) {
        const double blur = std::min(0.9, spec.layer2_blur * static_cast<double>(s - 2));
        std::vector<bool> mask(K, false);
        std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(s), true);
        do {
            std::vector<std::size_t> members;
            for (std::size_t c = 0; c < K; ++c) {
                if (mask[c]) members.push_back(c);
            }
            Layer2Entry e;
            e.candidate_classes = members;
            std::vector<float> rows;
            for (std::size_t c : members) {
                Vec t = anchors[c];
                std::vector<double> w;
                double total = 0.0;
                for (std::size_t j = 0; j + 1 < s; ++j) {
                    w.push_back(unit(prompt_rng) + 1e-3);
                    total += w.back() * w.back();
                }
                std::size_t wi = 0;
                for (std::size_t j : members) {
                    if (j == c) continue;
                    detail::axpy(blur * w[wi++] / std::sqrt(total), anchors[j], t);
                }
                detail::normalize_in_place(t);
                rows.insert(rows.end(), t.begin(), t.end());
                e.prompt_texts.push_back("Planted description of " + names[c] + " among " +
                                         std::to_string(s) + " candidates.");
            }
            e.embeddings = EmbeddingMatrix(s, D, std::move(rows));
            fx.bank.layer2.emplace(key_for_indices(members, names), std::move(e));
        } while (std::prev_permutation(mask.begin(), mask.end()));
    }

    // Views.
    Vec mixture(D, 0.0);
    for (const auto& a : anchors) detail::axpy(1.0 / std::sqrt(static_cast<double>(K)), a, mixture);

    fx.manifest.dataset_name = "synthetic-seed" + std::to_string(spec.seed);
    fx.manifest.classes = names;
    fx.manifest.dim = D;
    fx.manifest.embedding_file = "views.emb";
    std::vector<float> rows;
    std::size_t next_row = 0;
    std::uniform_int_distribution<std::size_t> wrong(0, K - 2);
    for (std::size_t c = 0; c < K; ++c) {
        for (std::size_t s = 0; s < spec.shapes_per_class; ++s) {
            const Vec drift = detail::gaussian(view_rng, D, spec.drift_ratio * spec.noise_sigma);
            std::vector<Vec> shape_views;
            for (std::size_t v = 0; v < spec.views; ++v) {
                Vec x;
                if (v < spec.clean_views) {
                    x = anchors[c];
                    detail::axpy(1.0, drift, x);
                    detail::axpy(1.0, detail::gaussian(view_rng, D, spec.noise_sigma), x);
                } else {
                    x = mixture;
                    if (spec.ambiguous_mode == AmbiguousMode::wrong_class_leak) {
                        std::size_t w = wrong(view_rng);
                        if (w >= c) ++w;
                        detail::axpy(spec.leak, anchors[w], x);
                    }
                    detail::axpy(1.0, detail::gaussian(view_rng, D, spec.ambiguous_sigma), x);
                }
                detail::axpy(spec.modality_gap, gap, x);
                detail::normalize_in_place(x);
                shape_views.push_back(std::move(x));
            }
            std::shuffle(shape_views.begin(), shape_views.end(), view_rng);
            ShapeRecord rec;
            rec.shape_id = names[c] + "_" + std::to_string(s);
            rec.label = names[c];
            rec.view_config = spec.view_config;
            for (const auto& x : shape_views) {
                rows.insert(rows.end(), x.begin(), x.end());
                rec.view_rows.push_back(next_row++);
            }
            fx.manifest.shapes.push_back(std::move(rec));
        }
    }
    fx.views = EmbeddingMatrix(next_row, D, std::move(rows));
    return fx;
}

/// Writes manifest.json, views.emb and bank.json (+ its two blobs) into dir.
inline void write_fixture(const SyntheticFixture& fx, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_embeddings(fx.views, dir / fx.manifest.embedding_file);
    save_manifest(fx.manifest, dir / "manifest.json");
    save_bank(fx.bank, dir / "bank.json");
}

/// Reference fixture: 4 clean + 16 uniform-mixture views per shape, 10
/// classes x 50 shapes.
inline SyntheticSpec reference_synthetic_spec() { return SyntheticSpec{}; }

/// Conflict fixture: ambiguous views lean toward a random wrong class.
inline SyntheticSpec conflict_synthetic_spec() {
    SyntheticSpec s;
    s.ambiguous_mode = AmbiguousMode::wrong_class_leak;
    return s;
}

}  // namespace mvzero
