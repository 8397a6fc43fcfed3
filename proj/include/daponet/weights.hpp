#pragma once

// Bit-exact weight container.
//
// File layout:
//   bytes 0..3   magic "DAPW"
//   bytes 4..7   format version, u32 little-endian (currently 1)
//   bytes 8..11  header length in bytes, u32 little-endian
//   header       UTF-8 JSON: {"fingerprint", "seed", "tensors": {name ->
//                {"dtype":"f32", "shape":[...], "offset", "length"
//                [, "buffer":true]}}} with offsets relative to the payload
//                region and lengths in bytes
//   payload      contiguous little-endian IEEE-754 binary32 tensor data in
//                header order
//   trailer      CRC-32 (reflected, poly 0xEDB88320) of the payload region,
//                u32 little-endian
//
// "buffer" marks stored-but-not-learnable tensors (BatchNorm running stats);
// they ship with the weights but are excluded from parameter counts.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tensor.hpp"

namespace daponet {

// Filesystem trouble: unreadable, unwritable, missing files.
struct IoError : Error {
    using Error::Error;
};

// Structurally broken container: bad magic, unsupported version, truncation,
// unparseable or inconsistent header.
struct FormatError : Error {
    using Error::Error;
};

// Payload bytes do not match the stored CRC-32.
struct ChecksumError : FormatError {
    using FormatError::FormatError;
};

// Weights belong to a different configuration than the consumer's.
struct FingerprintError : Error {
    using Error::Error;
};

inline std::uint32_t crc32(const unsigned char* data, std::size_t len, std::uint32_t seed = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int b = 0; b < 8; ++b) c = (c & 1) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = ~seed;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return ~c;
}

// Write-to-temp-then-rename, so failures never leave a partial file behind.
inline void atomic_write_file(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            out.close();
            std::remove(tmp.c_str());
            throw IoError("write failed: " + tmp);
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw IoError("cannot rename " + tmp + " to " + path);
    }
}

namespace detail {
inline void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}
inline std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
}  // namespace detail

struct StoredTensor {
    std::string name;
    Shape shape;
    std::vector<float> data;
    bool buffer = false;
};

struct WeightStore {
    static constexpr std::uint32_t kVersion = 1;

    std::string fingerprint;
    std::uint64_t seed = 0;
    std::vector<StoredTensor> tensors;

    std::int64_t element_count(bool include_buffers) const {
        std::int64_t n = 0;
        for (const auto& t : tensors)
            if (include_buffers || !t.buffer) n += static_cast<std::int64_t>(t.data.size());
        return n;
    }

    const StoredTensor* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }

    std::string serialize() const {
        nlohmann::ordered_json header;
        header["fingerprint"] = fingerprint;
        header["seed"] = seed;
        nlohmann::ordered_json table = nlohmann::ordered_json::object();
        std::uint64_t offset = 0;
        for (const auto& t : tensors) {
            nlohmann::ordered_json entry;
            entry["dtype"] = "f32";
            entry["shape"] = t.shape;
            entry["offset"] = offset;
            entry["length"] = t.data.size() * 4;
            if (t.buffer) entry["buffer"] = true;
            table[t.name] = std::move(entry);
            offset += t.data.size() * 4;
        }
        header["tensors"] = std::move(table);
        const std::string hdr = header.dump();

        std::string out;
        out.reserve(12 + hdr.size() + offset + 4);
        out += "DAPW";
        detail::put_u32_le(out, kVersion);
        detail::put_u32_le(out, static_cast<std::uint32_t>(hdr.size()));
        out += hdr;
        const std::size_t payload_start = out.size();
        for (const auto& t : tensors)
            for (float v : t.data) {
                const auto bits = std::bit_cast<std::uint32_t>(v);
                detail::put_u32_le(out, bits);
            }
        const auto crc = crc32(reinterpret_cast<const unsigned char*>(out.data()) + payload_start,
                               out.size() - payload_start);
        detail::put_u32_le(out, crc);
        return out;
    }

    void save(const std::string& path) const { atomic_write_file(path, serialize()); }

    static WeightStore deserialize(const std::vector<unsigned char>& bytes) {
        if (bytes.size() < 16) throw FormatError("weight container truncated before header");
        if (std::memcmp(bytes.data(), "DAPW", 4) != 0)
            throw FormatError("bad magic, not a weight container");
        const std::uint32_t version = detail::get_u32_le(bytes.data() + 4);
        if (version != kVersion)
            throw FormatError("unsupported container version " + std::to_string(version));
        const std::uint32_t hdr_len = detail::get_u32_le(bytes.data() + 8);
        if (bytes.size() < 12ull + hdr_len + 4)
            throw FormatError("weight container truncated inside header");

        nlohmann::ordered_json header;
        try {
            header = nlohmann::ordered_json::parse(bytes.begin() + 12, bytes.begin() + 12 + hdr_len);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("unparseable container header: ") + e.what());
        }

        const std::size_t payload_start = 12 + hdr_len;
        const std::size_t payload_len = bytes.size() - payload_start - 4;
        const std::uint32_t stored_crc = detail::get_u32_le(bytes.data() + bytes.size() - 4);
        const std::uint32_t actual_crc = crc32(bytes.data() + payload_start, payload_len);
        if (stored_crc != actual_crc)
            throw ChecksumError("payload checksum mismatch: stored " + std::to_string(stored_crc) +
                                ", computed " + std::to_string(actual_crc));

        WeightStore ws;
        try {
            ws.fingerprint = header.at("fingerprint").get<std::string>();
            ws.seed = header.at("seed").get<std::uint64_t>();
            for (const auto& [name, entry] : header.at("tensors").items()) {
                StoredTensor t;
                t.name = name;
                if (entry.at("dtype").get<std::string>() != "f32")
                    throw FormatError("tensor " + name + " has unsupported dtype");
                t.shape = entry.at("shape").get<Shape>();
                t.buffer = entry.value("buffer", false);
                const auto offset = entry.at("offset").get<std::uint64_t>();
                const auto length = entry.at("length").get<std::uint64_t>();
                if (length != static_cast<std::uint64_t>(numel(t.shape)) * 4)
                    throw FormatError("tensor " + name + " length disagrees with its shape");
                if (offset + length > payload_len)
                    throw FormatError("tensor " + name + " extends past the payload");
                t.data.resize(length / 4);
                const unsigned char* src = bytes.data() + payload_start + offset;
                for (std::size_t i = 0; i < t.data.size(); ++i)
                    t.data[i] = std::bit_cast<float>(detail::get_u32_le(src + i * 4));
                ws.tensors.push_back(std::move(t));
            }
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("malformed container header: ") + e.what());
        }
        return ws;
    }

    static WeightStore load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open weight container: " + path);
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
        if (in.bad()) throw IoError("read failed: " + path);
        return deserialize(bytes);
    }
};

}  // namespace daponet
