#include "spl/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace spl {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<Parameter>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path +
                                    "' for writing");
  os.write(kMagic, sizeof(kMagic));
  write_raw(os, kVersion);
  write_raw(os, static_cast<uint32_t>(params.size()));
  for (const Parameter& p : params) {
    write_raw(os, static_cast<uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Shape& shape = p.tensor.shape();
    write_raw(os, static_cast<uint32_t>(shape.size()));
    for (int64_t e : shape) write_raw(os, static_cast<uint64_t>(e));
    const auto& data = p.tensor.values();
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

std::vector<Parameter> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  const auto version = read_raw<uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version));
  const auto count = read_raw<uint32_t>(is);
  std::vector<Parameter> params;
  params.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_raw<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = read_raw<uint32_t>(is);
    Shape shape(rank);
    for (uint32_t r = 0; r < rank; ++r)
      shape[r] = static_cast<int64_t>(read_raw<uint64_t>(is));
    std::vector<double> data(static_cast<size_t>(numel(shape)));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    params.push_back({name, Tensor::from_vector(shape, std::move(data), true)});
  }
  return params;
}

void load_checkpoint(const std::string& path, std::vector<Parameter>& params) {
  std::vector<Parameter> stored = read_checkpoint(path);
  std::map<std::string, Tensor> by_name;
  for (Parameter& p : stored) by_name.emplace(p.name, p.tensor);
  if (by_name.size() != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch (" +
                             std::to_string(by_name.size()) + " stored vs " +
                             std::to_string(params.size()) + " expected)");
  for (Parameter& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: missing parameter '" + p.name + "'");
    if (it->second.shape() != p.tensor.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + p.name +
                               "': stored " + shape_str(it->second.shape()) +
                               " vs expected " + shape_str(p.tensor.shape()));
    p.tensor.mutable_values() = it->second.values();
  }
}

}  // namespace spl
