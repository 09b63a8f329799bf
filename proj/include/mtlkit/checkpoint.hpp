#pragma once

#include <string>

#include "json.hpp"
#include "mtlkit/tensor.hpp"

namespace mtlkit::checkpoint {

/// Named-tensor container with a JSON metadata block. The on-disk format is
/// binary (raw little-endian f64 payloads), so a save/load round trip is
/// value-exact.
struct Checkpoint {
    nlohmann::json meta;
    std::vector<std::pair<std::string, diffcore::Tensor>> tensors;

    void add(const std::string& name, const diffcore::Tensor& t) { tensors.emplace_back(name, t); }
    const diffcore::Tensor* find(const std::string& name) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

}  // namespace mtlkit::checkpoint
