// SPDX-License-Identifier: Apache-2.0
#include "peta/numerics/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace peta::numerics {
namespace {

constexpr uint32_t kMagic = 0x4B435450;  // "PTCK"
constexpr uint32_t kVersion = 1;

void put_bytes(std::string& buf, const void* p, size_t n) {
    buf.append(static_cast<const char*>(p), n);
}

template <typename T>
void put(std::string& buf, T v) {
    put_bytes(buf, &v, sizeof(T));
}

template <typename T>
T take(const std::string& buf, size_t& off, const std::string& path) {
    if (off + sizeof(T) > buf.size()) throw IoError("checkpoint '" + path + "': truncated");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& params, const std::string& meta_json) {
    std::string buf;
    put(buf, kMagic);
    put(buf, kVersion);
    put(buf, static_cast<uint32_t>(meta_json.size()));
    put_bytes(buf, meta_json.data(), meta_json.size());
    put(buf, static_cast<uint64_t>(params.count()));
    for (const auto& [name, t] : params.items()) {
        put(buf, static_cast<uint16_t>(name.size()));
        put_bytes(buf, name.data(), name.size());
        put(buf, static_cast<uint8_t>(t.rank()));
        for (auto d : t.shape()) put(buf, static_cast<uint64_t>(d));
        put_bytes(buf, t.data(), sizeof(double) * static_cast<size_t>(t.size()));
    }
    put(buf, fnv1a64(buf.data(), buf.size()));

    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < sizeof(uint64_t)) throw IoError("checkpoint '" + path + "': truncated");
    uint64_t stored_sum;
    std::memcpy(&stored_sum, buf.data() + buf.size() - sizeof(uint64_t), sizeof(uint64_t));
    const uint64_t actual = fnv1a64(buf.data(), buf.size() - sizeof(uint64_t));
    if (stored_sum != actual) {
        throw IoError("checkpoint '" + path + "': checksum mismatch (stored " + hex64(stored_sum) + ", computed " +
                      hex64(actual) + "); file is corrupted or incomplete");
    }

    size_t off = 0;
    const auto magic = take<uint32_t>(buf, off, path);
    if (magic != kMagic) throw IoError("checkpoint '" + path + "': bad magic");
    const auto version = take<uint32_t>(buf, off, path);
    if (version != kVersion) {
        throw IoError("checkpoint '" + path + "': unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kVersion) + ")");
    }

    Checkpoint ck;
    const auto meta_len = take<uint32_t>(buf, off, path);
    if (off + meta_len > buf.size()) throw IoError("checkpoint '" + path + "': truncated metadata");
    ck.meta_json.assign(buf.data() + off, meta_len);
    off += meta_len;

    const auto count = take<uint64_t>(buf, off, path);
    for (uint64_t e = 0; e < count; ++e) {
        const auto name_len = take<uint16_t>(buf, off, path);
        if (off + name_len > buf.size()) throw IoError("checkpoint '" + path + "': truncated name");
        std::string name(buf.data() + off, name_len);
        off += name_len;
        const auto rank = take<uint8_t>(buf, off, path);
        std::vector<int64_t> shape;
        int64_t numel = 1;
        for (uint8_t r = 0; r < rank; ++r) {
            const auto d = static_cast<int64_t>(take<uint64_t>(buf, off, path));
            shape.push_back(d);
            numel *= d;
        }
        const size_t bytes = sizeof(double) * static_cast<size_t>(numel);
        if (off + bytes > buf.size()) throw IoError("checkpoint '" + path + "': truncated tensor '" + name + "'");
        std::vector<double> data(static_cast<size_t>(numel));
        std::memcpy(data.data(), buf.data() + off, bytes);
        off += bytes;
        ck.params.add(name, Tensor(std::move(shape), std::move(data)));
    }
    return ck;
}

}  // namespace peta::numerics
