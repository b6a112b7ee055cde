#include "ppseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ppseg {
namespace {

constexpr char kMagic[6] = {'P', 'P', 'S', 'E', 'G', '1'};

template <typename T>
T byteswap_int(T v) {
    T out;
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
    return out;
}

template <typename T>
void write_le(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        if constexpr (sizeof(T) > 1) {
            if constexpr (std::is_floating_point_v<T>) {
                uint64_t bits;
                std::memcpy(&bits, &v, sizeof(bits));
                bits = byteswap_int(bits);
                std::memcpy(&v, &bits, sizeof(v));
            } else {
                v = byteswap_int(v);
            }
        }
    }
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& path) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("checkpoint '" + path + "': truncated");
    if constexpr (std::endian::native == std::endian::big) {
        if constexpr (sizeof(T) > 1) {
            if constexpr (std::is_floating_point_v<T>) {
                uint64_t bits;
                std::memcpy(&bits, &v, sizeof(bits));
                bits = byteswap_int(bits);
                std::memcpy(&v, &bits, sizeof(v));
            } else {
                v = byteswap_int(v);
            }
        }
    }
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const std::string& meta,
                     const std::vector<Tensor>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    write_le<uint32_t>(os, static_cast<uint32_t>(meta.size()));
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_le<uint32_t>(os, static_cast<uint32_t>(params.size()));
    for (const auto& p : params) {
        const std::string& name = p.name();
        write_le<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_le<uint32_t>(os, static_cast<uint32_t>(p.ndim()));
        for (int d = 0; d < p.ndim(); ++d) write_le<int64_t>(os, p.dim(d));
        const double* data = p.data();
        for (int64_t i = 0; i < p.numel(); ++i) write_le<double>(os, data[i]);
    }
    if (!os) throw DataError("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open '" + path + "'");
    char magic[6];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("checkpoint '" + path + "': bad magic (not a PPSEG1 file)");
    }
    Checkpoint ck;
    const uint32_t meta_len = read_le<uint32_t>(is, path);
    ck.meta.resize(meta_len);
    is.read(ck.meta.data(), meta_len);
    if (!is) throw DataError("checkpoint '" + path + "': truncated meta");
    const uint32_t count = read_le<uint32_t>(is, path);
    for (uint32_t e = 0; e < count; ++e) {
        const uint32_t name_len = read_le<uint32_t>(is, path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw DataError("checkpoint '" + path + "': truncated entry name");
        const uint32_t ndim = read_le<uint32_t>(is, path);
        Shape shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = read_le<int64_t>(is, path);
        const int64_t n = shape_numel(shape);
        std::vector<double> values(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) values[static_cast<size_t>(i)] = read_le<double>(is, path);
        Tensor t = Tensor::from_values(std::move(shape), std::move(values));
        t.set_name(name);
        ck.entries.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

} // namespace ppseg
