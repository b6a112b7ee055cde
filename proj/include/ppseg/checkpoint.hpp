#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ppseg/tensor.hpp"

// Parameter checkpoint archive. Layout (all integers little-endian):
//   "PPSEG1"                          magic, 6 bytes
//   u32 meta_len, meta bytes          UTF-8 text (the resolved model config,
//                                     which carries the network descriptors)
//   u32 entry_count
//   per entry: u32 name_len, name, u32 ndim, ndim x i64 extents,
//              numel x f64 payload

namespace ppseg {

void save_checkpoint(const std::string& path, const std::string& meta,
                     const std::vector<Tensor>& params);

struct Checkpoint {
    std::string meta;
    std::vector<std::pair<std::string, Tensor>> entries;
};

Checkpoint load_checkpoint(const std::string& path);

} // namespace ppseg
