#include "ppseg/lidar_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ppseg {
namespace {

std::vector<uint8_t> read_all_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw DataError("cannot open '" + path + "'");
    const std::streamsize size = is.tellg();
    is.seekg(0);
    std::vector<uint8_t> bytes(static_cast<size_t>(size));
    if (size > 0) is.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!is) throw DataError("read failed for '" + path + "'");
    return bytes;
}

float f32_from_le(const uint8_t* p) {
    uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                    (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(bits);
}

uint32_t u32_from_le(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void u32_to_le(uint32_t v, uint8_t* p) {
    p[0] = static_cast<uint8_t>(v);
    p[1] = static_cast<uint8_t>(v >> 8);
    p[2] = static_cast<uint8_t>(v >> 16);
    p[3] = static_cast<uint8_t>(v >> 24);
}

} // namespace

// ---------------------------------------------------------------------------
// LabelMap

LabelMap LabelMap::parse_string(const std::string& text) {
    LabelMap map;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    int32_t max_train = -1;
    struct Entry {
        uint16_t raw;
        int32_t train;
        std::string name;
    };
    std::vector<Entry> entries;
    while (std::getline(is, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        long raw = 0;
        long train = 0;
        std::string name;
        if (!(ls >> raw)) continue; // blank line
        if (!(ls >> train >> name)) {
            throw ConfigError("label map line " + std::to_string(line_no) +
                              ": expected 'raw_id train_id name'");
        }
        if (raw < 0 || raw > 65535) {
            throw ConfigError("label map line " + std::to_string(line_no) +
                              ": raw id out of 16-bit range");
        }
        entries.push_back({static_cast<uint16_t>(raw), static_cast<int32_t>(train), name});
        max_train = std::max(max_train, static_cast<int32_t>(train));
    }
    map.n_classes_ = max_train + 1;
    map.train2raw_.assign(static_cast<size_t>(map.n_classes_), -1);
    map.names_.assign(static_cast<size_t>(map.n_classes_), "");
    for (const auto& e : entries) {
        if (e.train >= map.n_classes_ || (e.train < 0 && e.train != kIgnoreClass)) {
            throw ConfigError("label map: train id " + std::to_string(e.train) + " invalid");
        }
        map.raw2train_[e.raw] = e.train;
        map.mapped_[e.raw] = true;
        if (e.train >= 0) {
            // first raw id listed for a class is the canonical inverse
            if (map.train2raw_[static_cast<size_t>(e.train)] < 0) {
                map.train2raw_[static_cast<size_t>(e.train)] = e.raw;
                map.names_[static_cast<size_t>(e.train)] = e.name;
            }
        }
    }
    return map;
}

LabelMap LabelMap::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open label map '" + path + "'");
    std::ostringstream os;
    os << is.rdbuf();
    return parse_string(os.str());
}

LabelMap LabelMap::identity(int n_classes) {
    LabelMap map;
    map.n_classes_ = n_classes;
    map.train2raw_.resize(static_cast<size_t>(n_classes));
    map.names_.resize(static_cast<size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c) {
        map.raw2train_[static_cast<size_t>(c)] = c;
        map.mapped_[static_cast<size_t>(c)] = true;
        map.train2raw_[static_cast<size_t>(c)] = c;
        map.names_[static_cast<size_t>(c)] = "class" + std::to_string(c);
    }
    return map;
}

int32_t LabelMap::to_train(uint16_t raw) const { return raw2train_[raw]; }

uint16_t LabelMap::to_raw(int32_t train) const {
    if (train < 0 || train >= n_classes_ || train2raw_[static_cast<size_t>(train)] < 0) {
        throw UsageError("label map: train class " + std::to_string(train) +
                         " has no raw id to export");
    }
    return static_cast<uint16_t>(train2raw_[static_cast<size_t>(train)]);
}

const std::string& LabelMap::class_name(int32_t train) const {
    static const std::string unknown = "?";
    if (train < 0 || train >= n_classes_) return unknown;
    return names_[static_cast<size_t>(train)];
}

// ---------------------------------------------------------------------------
// Scan / label IO

PointCloud read_scan(const std::string& path) {
    const std::vector<uint8_t> bytes = read_all_bytes(path);
    if (bytes.size() % 16 != 0) {
        throw DataError("scan '" + path + "': size " + std::to_string(bytes.size()) +
                        " bytes is not a multiple of 16 (truncated at byte offset " +
                        std::to_string(bytes.size() - bytes.size() % 16) + ")");
    }
    const size_t n = bytes.size() / 16;
    PointCloud cloud;
    cloud.x.resize(n);
    cloud.y.resize(n);
    cloud.z.resize(n);
    cloud.remission.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const uint8_t* rec = bytes.data() + i * 16;
        cloud.x[i] = static_cast<double>(f32_from_le(rec + 0));
        cloud.y[i] = static_cast<double>(f32_from_le(rec + 4));
        cloud.z[i] = static_cast<double>(f32_from_le(rec + 8));
        cloud.remission[i] = static_cast<double>(f32_from_le(rec + 12));
    }
    return cloud;
}

LabelReadResult read_labels(const std::string& path, const LabelMap& map, PointCloud& cloud) {
    const std::vector<uint8_t> bytes = read_all_bytes(path);
    if (bytes.size() % 4 != 0) {
        throw DataError("labels '" + path + "': size not a multiple of 4");
    }
    const size_t n = bytes.size() / 4;
    if (static_cast<int64_t>(n) != cloud.n()) {
        throw DataError("labels '" + path + "': " + std::to_string(n) + " entries for " +
                        std::to_string(cloud.n()) + " points");
    }
    LabelReadResult res;
    cloud.label.resize(n);
    cloud.raw_label.resize(n);
    cloud.instance.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const uint32_t v = u32_from_le(bytes.data() + i * 4);
        const uint16_t sem = static_cast<uint16_t>(v & 0xffffu);
        cloud.raw_label[i] = sem;
        cloud.instance[i] = static_cast<uint16_t>(v >> 16);
        const int32_t train = map.to_train(sem);
        cloud.label[i] = train;
        if (sem != 0 && !map.is_mapped(sem)) ++res.unknown_raw_ids;
    }
    return res;
}

std::vector<int32_t> read_label_classes(const std::string& path, const LabelMap& map) {
    const std::vector<uint8_t> bytes = read_all_bytes(path);
    if (bytes.size() % 4 != 0) {
        throw DataError("labels '" + path + "': size not a multiple of 4");
    }
    std::vector<int32_t> out(bytes.size() / 4);
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = map.to_train(static_cast<uint16_t>(u32_from_le(bytes.data() + i * 4) & 0xffffu));
    }
    return out;
}

void write_predictions(const std::string& path, const PointCloud& cloud,
                       const std::vector<int32_t>& preds, const LabelMap& map) {
    if (static_cast<int64_t>(preds.size()) != cloud.n()) {
        throw UsageError("write_predictions: " + std::to_string(preds.size()) +
                         " predictions for " + std::to_string(cloud.n()) + " points");
    }
    std::vector<uint8_t> bytes(preds.size() * 4);
    for (size_t i = 0; i < preds.size(); ++i) {
        const uint16_t raw = map.to_raw(preds[i]);
        u32_to_le(static_cast<uint32_t>(raw), bytes.data() + i * 4); // instance bits zero
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("write failed for '" + path + "'");
}

} // namespace ppseg
