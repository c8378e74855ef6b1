#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "derivgen/numeric/tensor.hpp"

namespace derivgen::numeric {

/// Binary container: "DGTENSOR", u32 version, u32 count, then per tensor
/// u32 name length, name bytes, u32 rank, u64 dims, float64 values.
/// All integers and floats little-endian; entries in name order.
void save_tensors(std::ostream& out, const std::map<std::string, const Tensor*>& tensors);
void save_tensors(const std::filesystem::path& path,
                  const std::map<std::string, const Tensor*>& tensors);

std::map<std::string, Tensor> load_tensors(std::istream& in);
std::map<std::string, Tensor> load_tensors(const std::filesystem::path& path);

/// True when the stream starts with the container magic; the stream is rewound.
bool is_tensor_container(std::istream& in);

}  // namespace derivgen::numeric
