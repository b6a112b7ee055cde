#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppseg/errors.hpp"

namespace ppseg {

constexpr int32_t kIgnoreClass = -1;

// One LiDAR scan. Coordinates are stored SoA (meters); labels, when present,
// live in train-class space with kIgnoreClass for unlabeled points.
struct PointCloud {
    std::vector<double> x, y, z;
    std::vector<double> remission;
    std::vector<int32_t> label;       // empty or size n
    std::vector<uint16_t> raw_label;  // empty or size n (semantic ids)
    std::vector<uint16_t> instance;   // empty or size n

    int64_t n() const { return static_cast<int64_t>(x.size()); }
    bool has_labels() const { return !label.empty(); }
};

// raw 16-bit semantic id <-> train class remap, parsed from a text config of
// "raw_id train_id name" triples ('#' starts a comment; train_id -1 = ignore).
class LabelMap {
public:
    static LabelMap parse_file(const std::string& path);
    static LabelMap parse_string(const std::string& text);
    // Identity map over n_classes (train id == raw id); handy for synthetic data.
    static LabelMap identity(int n_classes);

    int n_classes() const { return n_classes_; }
    int32_t to_train(uint16_t raw) const; // kIgnoreClass when unmapped
    uint16_t to_raw(int32_t train) const; // throws UsageError when unmappable
    bool is_mapped(uint16_t raw) const { return mapped_[raw]; }
    const std::string& class_name(int32_t train) const;

private:
    std::vector<int32_t> raw2train_ = std::vector<int32_t>(65536, kIgnoreClass);
    std::vector<bool> mapped_ = std::vector<bool>(65536, false);
    std::vector<int32_t> train2raw_; // -1 when no raw id maps to the class
    std::vector<std::string> names_;
    int n_classes_ = 0;
};

// .bin scan: four little-endian f32 per point (x, y, z, remission).
PointCloud read_scan(const std::string& path);

struct LabelReadResult {
    int64_t unknown_raw_ids = 0; // counted and mapped to ignore
};
// .label: one little-endian u32 per point; low 16 bits semantic id, high 16
// instance id. Fills cloud.label/raw_label/instance. Errors if the count
// does not match cloud.n().
LabelReadResult read_labels(const std::string& path, const LabelMap& map, PointCloud& cloud);

// Writes per-point train-class predictions as a .label file (instance bits
// zero, semantic id = inverse-mapped raw id).
void write_predictions(const std::string& path, const PointCloud& cloud,
                       const std::vector<int32_t>& preds, const LabelMap& map);

// Standalone .label read (no paired scan): remapped train classes.
std::vector<int32_t> read_label_classes(const std::string& path, const LabelMap& map);

} // namespace ppseg
