#include "derivgen/numeric/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "derivgen/error.hpp"

namespace derivgen::numeric {

namespace {

constexpr char kMagic[8] = {'D', 'G', 'T', 'E', 'N', 'S', 'O', 'R'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kMaxRank = 8;

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw ModelError("truncated tensor container");
  }
  T value = 0;
  for (size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void save_tensors(std::ostream& out, const std::map<std::string, const Tensor*>& tensors) {
  out.write(kMagic, sizeof kMagic);
  put_le<uint32_t>(out, kVersion);
  put_le<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_le<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<uint32_t>(out, static_cast<uint32_t>(t->rank()));
    for (size_t d : t->shape()) put_le<uint64_t>(out, d);
    for (double v : t->values()) put_le<uint64_t>(out, std::bit_cast<uint64_t>(v));
  }
  if (!out) throw ModelError("failed writing tensor container");
}

void save_tensors(const std::filesystem::path& path,
                  const std::map<std::string, const Tensor*>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write " + path.string());
  save_tensors(out, tensors);
}

std::map<std::string, Tensor> load_tensors(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ModelError("not a tensor container");
  }
  const auto version = get_le<uint32_t>(in);
  if (version != kVersion) {
    throw ModelError("unsupported tensor container version " + std::to_string(version));
  }
  const auto count = get_le<uint32_t>(in);
  std::map<std::string, Tensor> tensors;
  for (uint32_t k = 0; k < count; ++k) {
    const auto name_len = get_le<uint32_t>(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw ModelError("truncated tensor container");
    const auto rank = get_le<uint32_t>(in);
    if (rank > kMaxRank) throw ModelError("tensor " + name + " has implausible rank");
    Shape shape;
    for (uint32_t d = 0; d < rank; ++d) shape.push_back(get_le<uint64_t>(in));
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = std::bit_cast<double>(get_le<uint64_t>(in));
    if (!tensors.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
      throw ModelError("duplicate tensor " + name);
    }
  }
  return tensors;
}

std::map<std::string, Tensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot read " + path.string());
  return load_tensors(in);
}

bool is_tensor_container(std::istream& in) {
  char magic[sizeof kMagic];
  const auto start = in.tellg();
  const bool ok = static_cast<bool>(in.read(magic, sizeof magic)) &&
                  std::memcmp(magic, kMagic, sizeof kMagic) == 0;
  in.clear();
  in.seekg(start);
  return ok;
}

}  // namespace derivgen::numeric
