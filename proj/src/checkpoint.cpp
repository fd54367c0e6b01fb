#include "branchnet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

namespace branchnet {

namespace {

constexpr char kMagic[6] = {'B', 'R', 'N', 'E', 'T', '1'};

void put_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    f.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ofstream& f, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    f.write(reinterpret_cast<char*>(b), 8);
}

bool get_u32(std::ifstream& f, uint32_t& v) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return true;
}

uint64_t get_u64(std::ifstream& f, const std::string& path) {
    unsigned char b[8];
    if (!f.read(reinterpret_cast<char*>(b), 8))
        throw IoError("truncated tensor file: " + path);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_tensor_file(const std::string& path,
                       const std::vector<std::pair<std::string, const Tensor4*>>& tensors) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    for (const auto& [name, t] : tensors) {
        put_u32(f, static_cast<uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(f, static_cast<uint64_t>(t->rows));
        put_u64(f, static_cast<uint64_t>(t->height));
        put_u64(f, static_cast<uint64_t>(t->width));
        put_u64(f, static_cast<uint64_t>(t->channels));
        static_assert(sizeof(float) == 4);
        f.write(reinterpret_cast<const char*>(t->data.data()),
                static_cast<std::streamsize>(t->data.size() * sizeof(float)));
    }
    if (!f) throw IoError("write failed: " + path);
}

std::vector<std::pair<std::string, Tensor4>> read_tensor_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[sizeof(kMagic)];
    if (!f.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("not a BRNET1 tensor file: " + path);
    std::vector<std::pair<std::string, Tensor4>> out;
    uint32_t name_len;
    while (get_u32(f, name_len)) {
        if (name_len > (1u << 16)) throw IoError("implausible name length in " + path);
        std::string name(name_len, '\0');
        if (!f.read(name.data(), name_len)) throw IoError("truncated tensor file: " + path);
        uint64_t dims[4];
        for (auto& d : dims) d = get_u64(f, path);
        uint64_t n = dims[0] * dims[1] * dims[2] * dims[3];
        if (n > (1ull << 33)) throw IoError("implausible tensor size in " + path);
        Tensor4 t(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                  static_cast<int>(dims[2]), static_cast<int>(dims[3]));
        if (!f.read(reinterpret_cast<char*>(t.data.data()),
                    static_cast<std::streamsize>(n * sizeof(float))))
            throw IoError("truncated tensor data for '" + name + "' in " + path);
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

void save_checkpoint(Network& net, const std::string& path) {
    std::vector<std::pair<std::string, const Tensor4*>> tensors;
    for (auto& [name, t] : net.state_tensors()) tensors.emplace_back(name, t);
    write_tensor_file(path, tensors);
}

void load_checkpoint(Network& net, const std::string& path) {
    auto loaded = read_tensor_file(path);
    std::map<std::string, Tensor4*> by_name;
    for (auto& [name, t] : loaded) by_name[name] = &t;
    auto state = net.state_tensors();
    if (by_name.size() != loaded.size())
        throw IoError("duplicate tensor names in " + path);
    if (state.size() != loaded.size())
        throw IoError("checkpoint " + path + " has " + std::to_string(loaded.size()) +
                      " tensors, model expects " + std::to_string(state.size()));
    for (auto& [name, dst] : state) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw IoError("checkpoint missing tensor '" + name + "'");
        if (!dst->same_shape(*it->second))
            throw IoError("checkpoint tensor '" + name + "' shape " +
                          it->second->shape_str() + " vs model " + dst->shape_str());
        *dst = std::move(*it->second);
    }
}

}  // namespace branchnet
