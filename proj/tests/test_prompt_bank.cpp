#include <gtest/gtest.h>

#include "mvzero/prompt_bank.hpp"
#include "mvzero/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/temp_dir.hpp"

using namespace mvzero;

namespace {

PromptBank furniture() {
    auto b = fixture::bank_from_rows({"bed", "desk", "dresser", "table", "wardrobe"},
                                     {{1, 0, 0, 0, 0}, {0, 1, 0, 0, 0}, {0, 0, 1, 0, 0}, {0, 0, 0, 1, 0}, {0, 0, 0, 0, 1}});
    fixture::add_entry(b, {2, 4}, {{0, 0, 1, 0, 0.1f}, {0, 0, 0.1f, 0, 1}});
    return b;
}

}  // namespace

TEST(CandidateKey, SortedByClassIndex) {
    const auto b = furniture();
    EXPECT_EQ(candidate_key({"wardrobe", "dresser"}, b), "dresser|wardrobe");
    EXPECT_EQ(candidate_key({"dresser", "wardrobe"}, b), "dresser|wardrobe");
    const std::vector<std::size_t> idx{3, 0, 1};
    EXPECT_EQ(candidate_key(std::span<const std::size_t>(idx), b), "bed|desk|table");
}

TEST(CandidateKey, Errors) {
    const auto b = furniture();
    try {
        candidate_key({"dresser", "sofa"}, b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownClass);
        EXPECT_EQ(e.subject(), "sofa");
    }
    try {
        candidate_key({"dresser"}, b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    }
}

TEST(Layer2Lookup, MissingEntryNamesKey) {
    const auto b = furniture();
    const std::vector<std::size_t> cands{3, 0, 1};
    try {
        lookup_layer2(cands, b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingPromptEntry);
        EXPECT_EQ(e.subject(), "bed|desk|table");
    }
    const std::vector<std::size_t> present{4, 2};
    EXPECT_EQ(lookup_layer2(present, b).candidate_classes, (std::vector<std::size_t>{2, 4}));
}

TEST(Layer2Lookup, RegeneratedEntryIsFoundAfterReload) {
    TempDir dir;
    auto b = furniture();
    const std::vector<std::size_t> cands{3, 0, 1};
    EXPECT_THROW(lookup_layer2(cands, b), Error);
    fixture::add_entry(b, {0, 1, 3}, {{1, 0.1f, 0, 0, 0}, {0.1f, 1, 0, 0, 0}, {0, 0, 0, 1, 0.1f}});
    save_bank(b, dir.path() / "bank.json");
    const auto reloaded = load_bank(dir.path() / "bank.json");
    EXPECT_EQ(lookup_layer2(cands, reloaded).embeddings.rows(), 3u);
}

TEST(BankValidation, CleanBankHasNoFindings) {
    EXPECT_TRUE(validate_bank(furniture()).empty());
    EXPECT_TRUE(validate_bank(generate_synthetic(fixture::small_spec()).bank).empty());
}

TEST(BankValidation, ReportsEachProblem) {
    auto b = furniture();
    b.layer1 = EmbeddingMatrix::from_rows({{1, 0, 0, 0, 0}, {0, 2, 0, 0, 0}, {0, 0, 1, 0, 0}, {0, 0, 0, 1, 0}, {0, 0, 0, 0, 1}});
    Layer2Entry small;
    small.candidate_classes = {1};
    small.embeddings = EmbeddingMatrix::from_rows({{0, 1, 0, 0, 0}});
    small.prompt_texts = {"a desk"};
    b.layer2.emplace("desk", small);
    const auto f = validate_bank(b);
    auto has = [&](const std::string& code, const std::string& loc) {
        return std::find(f.begin(), f.end(), Finding{code, loc}) != f.end();
    };
    EXPECT_TRUE(has("NORM_VIOLATION", "layer1[1]"));
    EXPECT_TRUE(has("CANDIDATE_SET_TOO_SMALL", "layer2[desk]"));
    EXPECT_EQ(f.size(), 2u);
}

TEST(BankValidation, StructuralFindings) {
    auto b = furniture();
    b.classes.push_back("bed");
    auto& e = b.layer2.begin()->second;
    e.prompt_texts.pop_back();
    const auto f = validate_bank(b);
    std::set<std::string> codes;
    for (const auto& x : f) codes.insert(x.code);
    EXPECT_TRUE(codes.count("DUPLICATE_CLASS"));
    EXPECT_TRUE(codes.count("LAYER1_ROW_COUNT"));
    EXPECT_TRUE(codes.count("PROMPT_TEXT_COUNT"));
}

TEST(BankIo, RoundTrip) {
    TempDir dir;
    const auto b = generate_synthetic(fixture::small_spec()).bank;
    save_bank(b, dir.path() / "bank.json");
    EXPECT_TRUE(fixture::banks_equal(load_bank(dir.path() / "bank.json"), b));
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "bank_layer1.emb"));
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "bank_layer2.emb"));
}

TEST(BankIo, SyntheticBankCoversAllSubsets) {
    const auto b = generate_synthetic(fixture::small_spec()).bank;
    // C(6,2) + C(6,3) + C(6,4)
    EXPECT_EQ(b.layer2.size(), 15u + 20u + 15u);
}

TEST(BankIo, ParseRejectsBadEntries) {
    TempDir dir;
    const auto b = furniture();
    save_bank(b, dir.path() / "bank.json");
    const auto j = read_json_file(dir.path() / "bank.json", ErrorCode::BankSchemaError);
    const auto l1 = load_embeddings(dir.path() / "bank_layer1.emb");
    const auto l2 = load_embeddings(dir.path() / "bank_layer2.emb");
    ASSERT_NO_THROW(parse_bank(j, l1, l2));

    auto expect_code = [&](nlohmann::json bad, ErrorCode code) {
        try {
            parse_bank(bad, l1, l2);
            ADD_FAILURE() << bad.dump();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), code) << bad.dump();
        }
    };
    auto k = j;
    k["layer2_entries"][0]["key"] = "wardrobe|dresser";
    expect_code(k, ErrorCode::BankSchemaError);
    auto u = j;
    u["layer2_entries"][0]["classes"][0] = "sofa";
    expect_code(u, ErrorCode::UnknownClass);
    auto r = j;
    r["layer2_entries"][0]["row_start"] = 1;
    expect_code(r, ErrorCode::IndexOutOfRange);
    auto d = j;
    d["dim"] = 4;
    expect_code(d, ErrorCode::DimMismatch);
    auto s = j;
    s["layer2_entries"][0]["prompt_style"] = "poetic";
    expect_code(s, ErrorCode::BankSchemaError);
    auto dup = j;
    dup["layer2_entries"].push_back(j["layer2_entries"][0]);
    expect_code(dup, ErrorCode::BankSchemaError);
}
