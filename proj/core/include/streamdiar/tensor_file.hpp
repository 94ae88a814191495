#pragma once

#include "streamdiar/matrix.hpp"

#include <string>
#include <utility>
#include <vector>

namespace streamdiar {

// Named-tensor container used for checkpoints, feature dumps and label dumps.
//
// Layout (all integers little-endian):
//   8 bytes  magic+version "SDTNSR01"
//   u32      record count
//   records: u32 name length, name bytes (UTF-8),
//            u32 rank, u64 dims[rank],
//            f32 data[prod(dims)] little-endian
//
// Matrices are stored rank-2 (rows, cols). Round-trips are bit-exact.
struct NamedTensors {
    std::vector<std::pair<std::string, MatrixF>> items;

    bool contains(const std::string& name) const;
    const MatrixF& get(const std::string& name) const;
    MatrixF& get(const std::string& name);
    void put(const std::string& name, MatrixF value);
    void put_scalar(const std::string& name, float value);
    float get_scalar(const std::string& name) const;
};

void save_tensors(const std::string& path, const NamedTensors& tensors);
NamedTensors load_tensors(const std::string& path);

// FNV-1a over the serialized bytes; recorded in run manifests.
std::uint64_t file_digest(const std::string& path);

} // namespace streamdiar
