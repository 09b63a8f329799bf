#include "mtlkit/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace mtlkit::checkpoint {

namespace {
constexpr char kMagic[8] = {'M', 'T', 'L', 'K', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("checkpoint: truncated file");
    return v;
}
}  // namespace

const diffcore::Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError(cat("checkpoint: cannot write ", path));
    os.write(kMagic, sizeof(kMagic));
    std::string meta_str = meta.dump();
    write_pod<uint64_t>(os, meta_str.size());
    os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    write_pod<uint64_t>(os, tensors.size());
    for (const auto& [name, t] : tensors) {
        write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<uint32_t>(os, static_cast<uint32_t>(t->shape.size()));
        for (long d : t->shape) write_pod<int64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t->values.data()),
                 static_cast<std::streamsize>(t->values.size() * sizeof(double)));
    }
    if (!os) throw DataError(cat("checkpoint: write failed for ", path));
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError(cat("checkpoint: cannot read ", path));
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError(cat("checkpoint: bad magic in ", path));
    Checkpoint ck;
    auto meta_len = read_pod<uint64_t>(is);
    std::string meta_str(meta_len, '\0');
    is.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    ck.meta = nlohmann::json::parse(meta_str);
    auto count = read_pod<uint64_t>(is);
    for (uint64_t i = 0; i < count; ++i) {
        auto name_len = read_pod<uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        auto ndim = read_pod<uint32_t>(is);
        std::vector<long> shape;
        for (uint32_t k = 0; k < ndim; ++k) shape.push_back(static_cast<long>(read_pod<int64_t>(is)));
        auto t = diffcore::make_tensor(shape);
        is.read(reinterpret_cast<char*>(t->values.data()),
                static_cast<std::streamsize>(t->values.size() * sizeof(double)));
        if (!is) throw DataError("checkpoint: truncated tensor payload");
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

}  // namespace mtlkit::checkpoint
