#include <gtest/gtest.h>

#include <cstdio>
#include <daponet/weights.hpp>
#include <filesystem>
#include <fstream>

using namespace daponet;

namespace {

WeightStore sample_store() {
    WeightStore ws;
    ws.fingerprint = "0123456789abcdef";
    ws.seed = 42;
    StoredTensor a;
    a.name = "layer.weight";
    a.shape = {2, 3};
    a.data = {1.0f, -2.5f, 0.0f, 3.25f, 1e-7f, -6.0f};
    StoredTensor b;
    b.name = "layer.running_mean";
    b.shape = {2};
    b.data = {0.5f, -0.5f};
    b.buffer = true;
    ws.tensors = {a, b};
    return ws;
}

std::vector<unsigned char> to_bytes(const std::string& s) {
    return std::vector<unsigned char>(s.begin(), s.end());
}

}  // namespace

TEST(WeightStore, RoundTripIsExact) {
    const auto ws = sample_store();
    const auto back = WeightStore::deserialize(to_bytes(ws.serialize()));
    EXPECT_EQ(back.fingerprint, ws.fingerprint);
    EXPECT_EQ(back.seed, ws.seed);
    ASSERT_EQ(back.tensors.size(), 2u);
    EXPECT_EQ(back.tensors[0].name, "layer.weight");
    EXPECT_EQ(back.tensors[0].shape, (std::vector<std::int64_t>{2, 3}));
    EXPECT_FALSE(back.tensors[0].buffer);
    EXPECT_TRUE(back.tensors[1].buffer);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(back.tensors[0].data[i], ws.tensors[0].data[i]);
}

TEST(WeightStore, SerializationIsDeterministic) {
    EXPECT_EQ(sample_store().serialize(), sample_store().serialize());
}

TEST(WeightStore, ElementCountRespectsBufferFlag) {
    const auto ws = sample_store();
    EXPECT_EQ(ws.element_count(true), 8);
    EXPECT_EQ(ws.element_count(false), 6);
    EXPECT_NE(ws.find("layer.weight"), nullptr);
    EXPECT_EQ(ws.find("missing"), nullptr);
}

TEST(WeightStore, CorruptedPayloadFailsChecksum) {
    auto bytes = to_bytes(sample_store().serialize());
    bytes[bytes.size() - 8] ^= 0x01;  // flip a payload bit, CRC trailer intact
    EXPECT_THROW(WeightStore::deserialize(bytes), ChecksumError);
    // ChecksumError is a FormatError, so format-level handling catches it too
    try {
        WeightStore::deserialize(bytes);
        FAIL() << "expected ChecksumError";
    } catch (const FormatError&) {
    }
}

TEST(WeightStore, StructuralErrorsAreFormatErrors) {
    const auto good = to_bytes(sample_store().serialize());
    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_THROW(WeightStore::deserialize(bad_magic), FormatError);
    auto bad_version = good;
    bad_version[4] = 9;
    EXPECT_THROW(WeightStore::deserialize(bad_version), FormatError);
    auto truncated = good;
    truncated.resize(truncated.size() / 2);
    EXPECT_THROW(WeightStore::deserialize(truncated), FormatError);
    std::vector<unsigned char> tiny = {'D', 'A', 'P', 'W'};
    EXPECT_THROW(WeightStore::deserialize(tiny), FormatError);
    // garbage in the JSON header
    auto mangled = good;
    mangled[13] = '!';
    EXPECT_THROW(WeightStore::deserialize(mangled), FormatError);
}

TEST(WeightStore, SaveLoadAndMissingFile) {
    const auto dir = std::filesystem::temp_directory_path();
    const auto path = (dir / "daponet_test_store.dapw").string();
    const auto ws = sample_store();
    ws.save(path);
    const auto back = WeightStore::load(path);
    EXPECT_EQ(back.serialize(), ws.serialize());
    // atomic write leaves no temp droppings behind
    for (const auto& e : std::filesystem::directory_iterator(dir))
        EXPECT_EQ(e.path().string().find("daponet_test_store.dapw."), std::string::npos)
            << e.path();
    std::remove(path.c_str());
    EXPECT_THROW(WeightStore::load(path), IoError);
}

TEST(WeightStore, EmptyStoreStillRoundTrips) {
    WeightStore ws;
    ws.fingerprint = "deadbeefdeadbeef";
    ws.seed = 0;
    const auto back = WeightStore::deserialize(to_bytes(ws.serialize()));
    EXPECT_TRUE(back.tensors.empty());
    EXPECT_EQ(back.fingerprint, "deadbeefdeadbeef");
}
