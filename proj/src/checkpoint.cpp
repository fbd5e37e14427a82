#include "cdsl/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace cdsl {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'S', 'L'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::ofstream& f, std::uint16_t v) {
    const std::uint8_t b[2] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)};
    f.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ofstream& f, std::uint32_t v) {
    const std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                               static_cast<std::uint8_t>(v >> 16),
                               static_cast<std::uint8_t>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t get_u16(std::ifstream& f, const std::string& path) {
    std::uint8_t b[2];
    if (!f.read(reinterpret_cast<char*>(b), 2)) throw DataError(path + ": truncated checkpoint");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::ifstream& f, const std::string& path) {
    std::uint8_t b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) throw DataError(path + ": truncated checkpoint");
    return b[0] | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

} // namespace

void save_checkpoint(const nn::ParameterStore<float>& store, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write checkpoint: " + path);
    f.write(kMagic, 4);
    put_u32(f, kVersion);
    put_u32(f, static_cast<std::uint32_t>(store.entries.size()));
    put_u32(f, 0); // reserved
    for (const auto& e : store.entries) {
        if (e.name.size() > UINT16_MAX) throw DataError("checkpoint: tensor name too long");
        put_u16(f, static_cast<std::uint16_t>(e.name.size()));
        f.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        f.put(static_cast<char>(4));
        put_u32(f, static_cast<std::uint32_t>(e.value.n()));
        put_u32(f, static_cast<std::uint32_t>(e.value.c()));
        put_u32(f, static_cast<std::uint32_t>(e.value.h()));
        put_u32(f, static_cast<std::uint32_t>(e.value.w()));
        static_assert(sizeof(float) == 4);
        f.write(reinterpret_cast<const char*>(e.value.data.data()),
                static_cast<std::streamsize>(e.value.data.size() * 4));
    }
    if (!f) throw DataError("short write to checkpoint: " + path);
}

nn::ParameterStore<float> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError(path + ": bad checkpoint magic");
    const std::uint32_t version = get_u32(f, path);
    if (version != kVersion)
        throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = get_u32(f, path);
    get_u32(f, path); // reserved

    nn::ParameterStore<float> store;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint16_t name_len = get_u16(f, path);
        std::string name(name_len, '\0');
        if (!f.read(name.data(), name_len)) throw DataError(path + ": truncated checkpoint");
        const int ndim = f.get();
        if (ndim != 4) throw DataError(path + ": unsupported tensor rank");
        int dims[4];
        for (int& d : dims) {
            d = static_cast<int>(get_u32(f, path));
            if (d < 1) throw DataError(path + ": bad tensor dimension");
        }
        TensorF tensor(dims[0], dims[1], dims[2], dims[3]);
        if (!f.read(reinterpret_cast<char*>(tensor.data.data()),
                    static_cast<std::streamsize>(tensor.data.size() * 4)))
            throw DataError(path + ": truncated tensor payload");
        const bool trainable = !(name.ends_with(".running_mean") || name.ends_with(".running_var"));
        store.add(name, std::move(tensor), trainable);
    }
    return store;
}

} // namespace cdsl
