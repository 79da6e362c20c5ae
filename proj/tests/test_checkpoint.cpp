#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gatgpt/checkpoint.hpp"

using namespace gatgpt;
using nlohmann::json;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.layers = 2;
    c.d_model = 8;
    c.n_heads = 2;
    c.gat_heads = 2;
    return c;
}

std::pair<json, std::string> split(const std::string& bytes) {
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i)
        len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[static_cast<std::size_t>(i)])) << (8 * i);
    return {json::parse(bytes.substr(8, len)), bytes.substr(8 + len)};
}

std::string join(const json& header, const std::string& payload) {
    const std::string text = header.dump();
    std::string out;
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xFF));
    return out + text + payload;
}

std::string error_of(const std::string& bytes) {
    try {
        parse_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
    const auto p = init_model(small_config(), 3);
    const std::string a = serialize_checkpoint(p);
    const auto q = parse_checkpoint(a);
    EXPECT_EQ(serialize_checkpoint(q), a);
    std::vector<Parameter> lhs, rhs;
    p.for_each([&](const Parameter& t) { lhs.push_back(t); });
    q.for_each([&](const Parameter& t) { rhs.push_back(t); });
    ASSERT_EQ(lhs.size(), rhs.size());
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        EXPECT_EQ(lhs[i].name, rhs[i].name);
        EXPECT_EQ(lhs[i].shape, rhs[i].shape);
        EXPECT_EQ(lhs[i].frozen, rhs[i].frozen);
        EXPECT_EQ(lhs[i].value, rhs[i].value) << lhs[i].name;
    }
}

TEST(Checkpoint, FileRoundTripWithStats) {
    const auto dir = std::filesystem::temp_directory_path() / "gatgpt_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto p = init_model(small_config(), 4);
    const NormStats stats{{12.25}, {3.0 / 7.0}};
    save_checkpoint(p, dir / "a.ckpt", stats);
    NormStats back;
    const auto q = load_checkpoint(dir / "a.ckpt", &back);
    save_checkpoint(q, dir / "b.ckpt", back);
    std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_EQ(sa, sb);
    EXPECT_EQ(back.mean, stats.mean);
    EXPECT_EQ(back.std, stats.std);
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, HeaderLayout) {
    const auto bytes = serialize_checkpoint(init_model(small_config(), 1));
    const auto [header, payload] = split(bytes);
    ASSERT_TRUE(header.contains("__metadata__"));
    const auto& w = header.at("embed.conv.weight");
    EXPECT_EQ(w.at("dtype"), "f32");
    EXPECT_EQ(w.at("shape"), json::array({8, 2, 3}));
    EXPECT_EQ(w.at("offset"), 0);
    EXPECT_EQ(w.at("frozen"), false);
    EXPECT_EQ(header.at("block1.attn.q.weight").at("frozen"), true);
    EXPECT_EQ(payload.size(), 4 * init_model(small_config(), 1).total_count());
}

TEST(Checkpoint, TruncatedPayload) {
    const auto bytes = serialize_checkpoint(init_model(small_config(), 1));
    const auto msg = error_of(bytes.substr(0, bytes.size() - 1));
    EXPECT_NE(msg.find("truncated payload"), std::string::npos) << msg;
    EXPECT_NE(msg.find("head.bias"), std::string::npos) << msg;
}

TEST(Checkpoint, TruncatedHeader) {
    const auto bytes = serialize_checkpoint(init_model(small_config(), 1));
    EXPECT_NE(error_of(bytes.substr(0, 5)).find("truncated"), std::string::npos);
    EXPECT_NE(error_of(bytes.substr(0, 40)).find("truncated"), std::string::npos);
}

TEST(Checkpoint, MalformedHeader) {
    auto bytes = serialize_checkpoint(init_model(small_config(), 1));
    bytes[8] = '[';
    EXPECT_NE(error_of(bytes).find("malformed"), std::string::npos);
}

TEST(Checkpoint, UnknownTensorName) {
    auto [header, payload] = split(serialize_checkpoint(init_model(small_config(), 1)));
    header["block9.ln1.scale"] = header["block0.ln1.scale"];
    const auto msg = error_of(join(header, payload));
    EXPECT_NE(msg.find("unknown tensor name 'block9.ln1.scale'"), std::string::npos) << msg;
}

TEST(Checkpoint, ShapeMismatch) {
    auto [header, payload] = split(serialize_checkpoint(init_model(small_config(), 1)));
    header["head.weight"]["shape"] = json::array({1, 8});
    const auto msg = error_of(join(header, payload));
    EXPECT_NE(msg.find("shape mismatch for tensor 'head.weight'"), std::string::npos) << msg;
}

TEST(Checkpoint, MissingTensor) {
    auto [header, payload] = split(serialize_checkpoint(init_model(small_config(), 1)));
    header.erase("gat.h1.a");
    const auto msg = error_of(join(header, payload));
    EXPECT_NE(msg.find("missing tensor 'gat.h1.a'"), std::string::npos) << msg;
}

TEST(Checkpoint, BadOffsetAndDtype) {
    auto [header, payload] = split(serialize_checkpoint(init_model(small_config(), 1)));
    auto h1 = header;
    h1["head.bias"]["offset"] = "zero";
    EXPECT_NE(error_of(join(h1, payload)).find("head.bias"), std::string::npos);
    auto h2 = header;
    h2["head.bias"]["dtype"] = "f16";
    EXPECT_NE(error_of(join(h2, payload)).find("dtype"), std::string::npos);
}

TEST(Checkpoint, ExpectedConfigMismatch) {
    const auto bytes = serialize_checkpoint(init_model(small_config(), 1));
    ModelConfig other = small_config();
    other.layers = 3;
    EXPECT_THROW(parse_checkpoint(bytes, nullptr, other), CheckpointError);
    EXPECT_NO_THROW(parse_checkpoint(bytes, nullptr, small_config()));
}

TEST(Checkpoint, MissingFile) {
    EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.ckpt"), CheckpointError);
}
