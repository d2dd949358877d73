#include <gtest/gtest.h>

#include <filesystem>
#include <functional>

#include "mvzero/dataset.hpp"
#include "mvzero/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace mvzero;

namespace {

DatasetManifest two_shape_manifest() {
    DatasetManifest m;
    m.dataset_name = "toy";
    m.classes = {"chair", "table"};
    m.dim = 3;
    m.embedding_file = "views.emb";
    m.shapes = {{"s0", "chair", {0, 1}, "circular"}, {"s1", "table", {2, 3, 4}, "spherical"}};
    return m;
}

EmbeddingMatrix five_rows() {
    return EmbeddingMatrix::from_rows(
        {{1, 0, 0}, {2, 0, 0}, {0, 3, 0}, {0, 0, 0.5f}, {1, 1, 1}});
}

ErrorCode failure_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;  // sentinel: nothing thrown
}

}  // namespace

TEST(Dataset, LoadsAndNormalizes) {
    TempDir dir;
    save_embeddings(five_rows(), dir.path() / "views.emb");
    save_manifest(two_shape_manifest(), dir.path() / "manifest.json");
    const auto d = load_dataset(dir.path() / "manifest.json");
    EXPECT_EQ(d.manifest, two_shape_manifest());
    EXPECT_TRUE(d.views.normalized());
    EXPECT_TRUE(non_unit_rows(d.views).empty());
    ASSERT_EQ(d.labels.size(), 2u);
    EXPECT_EQ(d.labels[1], 1u);
}

TEST(Dataset, RowOutOfRange) {
    auto m = two_shape_manifest();
    m.shapes[0].view_rows = {7};
    EXPECT_EQ(failure_of([&] { make_dataset(m, five_rows()); }), ErrorCode::IndexOutOfRange);
}

TEST(Dataset, DimMismatch) {
    auto m = two_shape_manifest();
    m.dim = 512;
    EXPECT_EQ(failure_of([&] { make_dataset(m, five_rows()); }), ErrorCode::DimMismatch);
}

TEST(Dataset, UnknownLabel) {
    auto m = two_shape_manifest();
    m.shapes[1].label = "unicorn";
    EXPECT_EQ(failure_of([&] { make_dataset(m, five_rows()); }), ErrorCode::UnknownLabel);
}

TEST(Dataset, UnlabelledShapesAreAllowed) {
    auto m = two_shape_manifest();
    m.shapes[0].label.reset();
    const auto d = make_dataset(m, five_rows());
    EXPECT_FALSE(d.labels[0].has_value());
}

TEST(Dataset, JsonRoundTrip) {
    const auto fx = generate_synthetic({.classes = 4, .dim = 8, .shapes_per_class = 3, .views = 5, .clean_views = 2});
    EXPECT_EQ(parse_manifest(to_json(fx.manifest)), fx.manifest);
}

// Every single-field corruption of a valid manifest must be rejected with a
// typed error, and the valid manifest itself must be accepted.
TEST(Dataset, SingleFieldCorruptionsRejected) {
    const auto good = to_json(two_shape_manifest());
    const auto views = five_rows();
    ASSERT_NO_THROW(make_dataset(parse_manifest(good), views));

    std::vector<std::pair<std::string, std::function<void(nlohmann::json&)>>> mutations = {
        {"drop dataset_name", [](auto& j) { j.erase("dataset_name"); }},
        {"drop classes", [](auto& j) { j.erase("classes"); }},
        {"drop dim", [](auto& j) { j.erase("dim"); }},
        {"drop embedding_file", [](auto& j) { j.erase("embedding_file"); }},
        {"drop shapes", [](auto& j) { j.erase("shapes"); }},
        {"dim wrong", [](auto& j) { j["dim"] = 4; }},
        {"dim zero", [](auto& j) { j["dim"] = 0; }},
        {"dim negative", [](auto& j) { j["dim"] = -3; }},
        {"dim string", [](auto& j) { j["dim"] = "3"; }},
        {"classes not array", [](auto& j) { j["classes"] = "chair"; }},
        {"duplicate class", [](auto& j) { j["classes"] = {"chair", "chair"}; }},
        {"class not string", [](auto& j) { j["classes"][0] = 1; }},
        {"shapes not array", [](auto& j) { j["shapes"] = 1; }},
        {"shape drop id", [](auto& j) { j["shapes"][0].erase("shape_id"); }},
        {"shape drop rows", [](auto& j) { j["shapes"][0].erase("view_rows"); }},
        {"shape drop config", [](auto& j) { j["shapes"][0].erase("view_config"); }},
        {"empty rows", [](auto& j) { j["shapes"][0]["view_rows"] = nlohmann::json::array(); }},
        {"row out of range", [](auto& j) { j["shapes"][1]["view_rows"][2] = 5; }},
        {"row negative", [](auto& j) { j["shapes"][1]["view_rows"][0] = -1; }},
        {"duplicate row", [](auto& j) { j["shapes"][1]["view_rows"][1] = 2; }},
        {"bad label", [](auto& j) { j["shapes"][0]["label"] = "sofa"; }},
        {"label not string", [](auto& j) { j["shapes"][0]["label"] = 3; }},
        {"bad view config", [](auto& j) { j["shapes"][0]["view_config"] = "orbital"; }},
        {"duplicate id", [](auto& j) { j["shapes"][1]["shape_id"] = "s0"; }},
        {"root not object", [](auto& j) { j = nlohmann::json::array(); }},
    };
    for (const auto& [name, mutate] : mutations) {
        auto j = good;
        mutate(j);
        bool rejected = false;
        try {
            make_dataset(parse_manifest(j), views);
        } catch (const Error&) {
            rejected = true;
        }
        EXPECT_TRUE(rejected) << name;
    }
}

TEST(Dataset, MissingEmbeddingFileIsIoError) {
    TempDir dir;
    save_manifest(two_shape_manifest(), dir.path() / "manifest.json");
    EXPECT_EQ(failure_of([&] { load_dataset(dir.path() / "manifest.json"); }), ErrorCode::IoError);
}
