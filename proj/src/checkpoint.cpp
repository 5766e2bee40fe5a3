#include "sad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sad {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<Parameter>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.put(static_cast<char>(kCheckpointVersion));
    put_u32(os, static_cast<uint32_t>(params.size()));
    for (const Parameter& p : params) {
        put_u32(os, static_cast<uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put_u32(os, static_cast<uint32_t>(p.value.rank()));
        for (size_t d : p.value.shape()) put_u64(os, static_cast<uint64_t>(d));
        for (size_t i = 0; i < p.value.size(); ++i) {
            put_u64(os, std::bit_cast<uint64_t>(p.value[i]));
        }
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::vector<Parameter> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    const int version = is.get();
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
    }
    const uint32_t count = get_u32(is);
    std::vector<Parameter> params;
    params.reserve(count);
    for (uint32_t p = 0; p < count; ++p) {
        const uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated file");
        const uint32_t rank = get_u32(is);
        std::vector<size_t> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<size_t>(get_u64(is));
        std::vector<double> data(shape_product(shape));
        for (double& v : data) v = std::bit_cast<double>(get_u64(is));
        params.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    }
    return params;
}

}  // namespace sad
