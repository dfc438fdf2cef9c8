#pragma once

// Versioned binary parameter checkpoints. Layout:
//   magic "LDDC" | u32 version | u32 meta count | meta entries |
//   u32 param count | per param: u32 name len, name, u32 rank, u32 extents..., f64 payload
// Metadata entries are length-prefixed UTF-8 "key=value" strings.
// Round-trips are bit-exact.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ldd/tensor.hpp"

namespace ldd {

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<NamedTensor> params;

    const Tensor* find(const std::string& name) const;
    const std::string* meta(const std::string& key) const;
    uint64_t param_hash() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ldd
