#include "cmfuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace cmfuse {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'F', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw IoError("corrupt checkpoint (truncated): " + path);
    }
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const ParamMap<float>& state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<uint32_t>(config_json.size()));
    os.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    put_u32(os, static_cast<uint32_t>(state.size()));
    for (const auto& [name, t] : state.items) {
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<uint32_t>(t.rank()));
        for (int64_t e : t.shape()) put_u32(os, static_cast<uint32_t>(e));
        for (float v : t.data()) put_u32(os, std::bit_cast<uint32_t>(v));
    }
    if (!os) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("missing checkpoint: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("corrupt checkpoint (bad magic): " + path);
    }
    const uint32_t version = get_u32(is, path);
    if (version != kVersion) {
        throw IoError("checkpoint version " + std::to_string(version) + " unsupported: " + path);
    }
    Checkpoint ck;
    const uint32_t cfg_len = get_u32(is, path);
    ck.config_json.resize(cfg_len);
    if (cfg_len > 0 && !is.read(ck.config_json.data(), cfg_len)) {
        throw IoError("corrupt checkpoint (truncated config): " + path);
    }
    const uint32_t count = get_u32(is, path);
    ck.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = get_u32(is, path);
        std::string name(name_len, '\0');
        if (name_len > 0 && !is.read(name.data(), name_len)) {
            throw IoError("corrupt checkpoint (truncated name): " + path);
        }
        const uint32_t rank = get_u32(is, path);
        if (rank > 8) throw IoError("corrupt checkpoint (rank): " + path);
        Shape shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int64_t>(get_u32(is, path));
        const int64_t n = numel_of(shape);
        std::vector<float> values(n);
        for (int64_t k = 0; k < n; ++k) values[k] = std::bit_cast<float>(get_u32(is, path));
        ck.tensors.emplace_back(std::move(name), TensorF(std::move(shape), std::move(values)));
    }
    return ck;
}

}  // namespace cmfuse
