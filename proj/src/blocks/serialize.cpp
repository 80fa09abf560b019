#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "tabseq/blocks.h"
#include "tabseq/error.h"

namespace tabseq::nn {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'S', 'Q', 'T'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("tensor file truncated");
  return v;
}

}  // namespace

void write_tensors(std::ostream& out, const ParameterList& tensors) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kTensorFileVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto dim : t.shape()) put<std::uint64_t>(out, dim);
    for (double v : t.values()) put<float>(out, static_cast<float>(v));
  }
  if (!out) throw IoError("failed writing tensor file");
}

ParameterList read_tensors(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a tensor file (bad magic)");
  const auto version = get<std::uint32_t>(in);
  if (version != kTensorFileVersion) {
    throw IoError("unsupported tensor file version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in);
  ParameterList out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw IoError("tensor file truncated");
    const auto rank = get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& dim : shape) dim = static_cast<std::size_t>(get<std::uint64_t>(in));
    std::vector<double> values(numel(shape));
    for (auto& v : values) v = get<float>(in);
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return out;
}

void load_parameters(const ParameterList& target, const ParameterList& source) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : source) by_name[name] = &t;
  for (const auto& [name, t] : target) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("missing tensor '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw IoError("tensor '" + name + "' has shape " + to_string(it->second->shape()) + ", expected " +
                    to_string(t.shape()));
    }
    auto dst = t.mutable_values();
    auto src = it->second->values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace tabseq::nn
