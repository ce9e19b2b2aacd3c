#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "kng/kng.hpp"
#include "support.hpp"

using namespace kng;
using testing_support::TempDir;

namespace {

void append_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void append_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void append_f32(std::vector<std::uint8_t>& b, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    append_u32(b, bits);
}

std::vector<std::uint8_t> header(std::initializer_list<std::uint64_t> dims, std::uint8_t dtype,
                                 const char* magic = "FTEN") {
    std::vector<std::uint8_t> b(magic, magic + 4);
    append_u32(b, 1);
    append_u32(b, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) append_u64(b, d);
    b.push_back(dtype);
    return b;
}

} // namespace

TEST(TensorIo, ZeroScalarIs41Bytes) {
    TempDir dir("ften");
    FeatureTensor t(1, 1, 1);
    write_tensor(t, dir / "z.ften");
    const auto bytes = binary::read_file(dir / "z.ften");
    ASSERT_EQ(bytes.size(), 41u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FTEN");
    EXPECT_EQ(bytes[4], 1);  // version
    EXPECT_EQ(bytes[8], 3);  // rank
    EXPECT_EQ(bytes[36], 1); // dtype f32
    for (std::size_t i = 37; i < 41; ++i) EXPECT_EQ(bytes[i], 0);
}

TEST(TensorIo, RoundtripIsBitExact) {
    TempDir dir("ften");
    std::mt19937_64 gen(11);
    const auto t = testing_support::random_tensor(7, 5, 448, gen);
    write_tensor(t, dir / "t.ften");
    const auto back = read_tensor_as<FeatureTensor>(dir / "t.ften");
    ASSERT_EQ(back.height, 7u);
    ASSERT_EQ(back.width, 5u);
    ASSERT_EQ(back.dim, 448u);
    EXPECT_EQ(std::memcmp(back.data.data(), t.data.data(), t.data.size() * sizeof(float)), 0);
}

TEST(TensorIo, MaskAndMapRoundtrip) {
    TempDir dir("ften");
    MaskTensor m(3, 4);
    m.at(1, 2) = 1;
    m.at(2, 3) = 1;
    write_tensor(m, dir / "m.ften");
    EXPECT_EQ(read_tensor_as<MaskTensor>(dir / "m.ften"), m);

    AnomalyMap a(2, 3);
    for (std::size_t i = 0; i < a.scores.size(); ++i) a.scores[i] = 0.25 * static_cast<double>(i);
    write_tensor(a, dir / "a.ften");
    EXPECT_EQ(read_tensor_as<AnomalyMap>(dir / "a.ften"), a);
    EXPECT_THROW(read_tensor_as<FeatureTensor>(dir / "a.ften"), FormatError);
}

TEST(TensorIo, NanRejectedBeforeWrite) {
    TempDir dir("ften");
    FeatureTensor t(1, 2, 2);
    t.data[3] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(write_tensor(t, dir / "nan.ften"), ValidationError);
    EXPECT_FALSE(std::filesystem::exists(dir / "nan.ften"));
}

TEST(TensorIo, NanInPayloadIsValidationError) {
    auto b = header({1, 1, 2}, 1);
    append_f32(b, 1.0f);
    append_f32(b, std::numeric_limits<float>::quiet_NaN());
    EXPECT_THROW(decode_tensor(b, "mem"), ValidationError);
}

TEST(TensorIo, BadMagicVersionDtype) {
    auto b = header({1, 1, 1}, 1, "XXXX");
    append_f32(b, 0.0f);
    EXPECT_THROW(decode_tensor(b, "mem"), FormatError);

    auto v = header({1, 1, 1}, 1);
    v[4] = 2;
    append_f32(v, 0.0f);
    EXPECT_THROW(decode_tensor(v, "mem"), FormatError);

    auto d = header({1, 1, 1}, 9);
    append_f32(d, 0.0f);
    EXPECT_THROW(decode_tensor(d, "mem"), FormatError);
}

TEST(TensorIo, HandBuiltFileReadsRowMajor) {
    TempDir dir("ften");
    auto b = header({2, 2, 3}, 1);
    for (int i = 0; i < 12; ++i) append_f32(b, static_cast<float>(i) + 0.5f);
    binary::write_file(dir / "h.ften", b);
    const auto t = read_tensor_as<FeatureTensor>(dir / "h.ften");
    ASSERT_EQ(t.data.size(), 12u);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t k = 0; k < 3; ++k)
                EXPECT_EQ(t.at(r, c, k), static_cast<float>((r * 2 + c) * 3 + k) + 0.5f);
}

TEST(TensorIo, TruncatedPayload) {
    auto b = header({1, 2, 5}, 1);
    for (int i = 0; i < 8; ++i) append_f32(b, 1.0f);
    EXPECT_THROW(decode_tensor(b, "mem"), FormatError);
    auto trailing = header({1, 1, 1}, 1);
    append_f32(trailing, 1.0f);
    trailing.push_back(0);
    EXPECT_THROW(decode_tensor(trailing, "mem"), FormatError);
    auto short_header = header({1, 1, 1}, 1);
    short_header.resize(20);
    EXPECT_THROW(decode_tensor(short_header, "mem"), FormatError);
}

TEST(TensorIo, MissingFileIsIoError) {
    EXPECT_THROW(read_tensor("/nonexistent/dir/x.ften"), IoError);
    EXPECT_THROW(write_tensor(FeatureTensor(1, 1, 1), "/nonexistent/dir/x.ften"), IoError);
}

TEST(Selection, DeterministicAndValid) {
    const auto a = make_selection(448, 100, 7);
    const auto b = make_selection(448, 100, 7);
    EXPECT_EQ(a, b);
    ASSERT_EQ(a.indices.size(), 100u);
    EXPECT_TRUE(std::is_sorted(a.indices.begin(), a.indices.end()));
    EXPECT_EQ(std::set<std::uint64_t>(a.indices.begin(), a.indices.end()).size(), 100u);
    EXPECT_LT(a.indices.back(), 448u);
    EXPECT_NE(a.indices, make_selection(448, 100, 8).indices);
}

TEST(Selection, FullSelection) {
    for (std::uint64_t seed : {0ull, 5ull, 123456789ull})
        EXPECT_EQ(make_selection(5, 5, seed).indices, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
}

TEST(Selection, InvalidSizes) {
    EXPECT_THROW(make_selection(5, 6, 0), ArgumentError);
    EXPECT_THROW(make_selection(5, 0, 0), ArgumentError);
}

TEST(Selection, SamplingIsRoughlyUniform) {
    std::vector<int> hits(20, 0);
    for (std::uint64_t seed = 0; seed < 4000; ++seed)
        for (auto i : make_selection(20, 5, seed).indices) ++hits[i];
    // expected 1000 per channel; binomial sd ~27
    for (int h : hits) EXPECT_NEAR(h, 1000, 150);
}

TEST(Selection, ApplyIdentityAndReorder) {
    std::mt19937_64 gen(3);
    const auto t = testing_support::random_tensor(2, 3, 3, gen);
    EXPECT_EQ(apply_selection(t, make_selection(3, 3, 1)), t);

    const ChannelSelection s{3, {2, 0}, 0};
    const auto out = apply_selection(t, s);
    ASSERT_EQ(out.dim, 2u);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) {
            EXPECT_EQ(out.at(r, c, 0), t.at(r, c, 2));
            EXPECT_EQ(out.at(r, c, 1), t.at(r, c, 0));
        }
    EXPECT_THROW(apply_selection(testing_support::random_tensor(1, 1, 4, gen), s), ArgumentError);
}

TEST(Selection, ApplyMatchesGather) {
    std::mt19937_64 gen(5);
    const auto t = testing_support::random_tensor(4, 6, 448, gen);
    const auto s = make_selection(448, 100, 7);
    const auto out = apply_selection(t, s);
    for (std::size_t r = 0; r < t.height; ++r)
        for (std::size_t c = 0; c < t.width; ++c)
            for (std::size_t k = 0; k < 100; ++k) ASSERT_EQ(out.at(r, c, k), t.at(r, c, s.indices[k]));
}

TEST(Selection, CommutesWithCropping) {
    std::mt19937_64 gen(9);
    const auto t = testing_support::random_tensor(6, 7, 30, gen);
    const auto s = make_selection(30, 10, 2);
    auto crop = [](const FeatureTensor& x, std::size_t r0, std::size_t c0, std::size_t h, std::size_t w) {
        FeatureTensor out(h, w, x.dim);
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c)
                for (std::size_t k = 0; k < x.dim; ++k) out.at(r, c, k) = x.at(r0 + r, c0 + c, k);
        return out;
    };
    EXPECT_EQ(crop(apply_selection(t, s), 1, 2, 4, 3), apply_selection(crop(t, 1, 2, 4, 3), s));
}

TEST(Rng, KnownSequenceIsStable) {
    Xoshiro256 a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
    auto state = a.state();
    auto c = Xoshiro256::from_state(state);
    EXPECT_EQ(a.next(), c.next());
    for (int i = 0; i < 1000; ++i) EXPECT_LT(a.bounded(7), 7u);
}

TEST(Manifest, ParsesDocumentAndJsonl) {
    TempDir dir("manifest");
    write_tensor(FeatureTensor(1, 1, 2), dir / "a.ften");
    write_tensor(FeatureTensor(1, 1, 2), dir / "b.ften");
    write_tensor(MaskTensor(2, 2), dir / "b_mask.ften");

    const std::string doc = R"({"items":[{"id":"a","features":"a.ften","label":null,"mask":null},
        {"id":"b","features":"b.ften","label":"anomalous","mask":"b_mask.ften"}]})";
    const auto m = parse_manifest(doc, dir.path());
    ASSERT_EQ(m.items.size(), 2u);
    EXPECT_FALSE(m.items[0].label.has_value());
    EXPECT_EQ(*m.items[1].label, Label::anomalous);
    EXPECT_EQ(*m.items[1].mask, dir / "b_mask.ften");
    EXPECT_NO_THROW(validate(m));

    const std::string jsonl = "{\"id\":\"a\",\"features\":\"a.ften\"}\n\n{\"id\":\"b\",\"features\":\"b.ften\","
                              "\"label\":\"normal\"}\n";
    const auto l = parse_manifest(jsonl, dir.path());
    ASSERT_EQ(l.items.size(), 2u);
    EXPECT_EQ(*l.items[1].label, Label::normal);
}

TEST(Manifest, SaveLoadRoundtrip) {
    TempDir dir("manifest");
    write_tensor(FeatureTensor(1, 1, 2), dir / "a.ften");
    write_tensor(MaskTensor(2, 2), dir / "a_mask.ften");
    Manifest m;
    m.items.push_back({"a", dir / "a.ften", Label::anomalous, dir / "a_mask.ften"});
    save_manifest(m, dir / "m.json");
    const auto back = load_manifest(dir / "m.json");
    ASSERT_EQ(back.items.size(), 1u);
    EXPECT_EQ(back.items[0].features, dir / "a.ften");
    EXPECT_EQ(*back.items[0].mask, dir / "a_mask.ften");
}

TEST(Manifest, InvariantViolations) {
    TempDir dir("manifest");
    write_tensor(FeatureTensor(1, 1, 2), dir / "a.ften");
    EXPECT_THROW(validate(parse_manifest(R"({"items":[{"id":"a","features":"a.ften"},{"id":"a","features":"a.ften"}]})",
                                         dir.path())),
                 ValidationError);
    EXPECT_THROW(validate(parse_manifest(R"({"items":[{"id":"a","features":"a.ften","mask":"a.ften"}]})", dir.path())),
                 ValidationError);
    EXPECT_THROW(validate(parse_manifest(R"({"items":[{"id":"a","features":"missing.ften"}]})", dir.path())),
                 IoError);
    EXPECT_THROW(parse_manifest("{not json\n", dir.path()), FormatError);
}
