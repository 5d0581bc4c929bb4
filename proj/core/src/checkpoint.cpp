#include "t2f/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "t2f/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");
static_assert(sizeof(double) == 8);

namespace t2f {

namespace {

constexpr char kMagic[4] = {'T', '2', 'F', 'L'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return static_cast<size_t>(in.gcount()) == sizeof(T);
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kMagic, 4);
  write_pod<uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(t.rank()));
    for (size_t e : t.shape()) write_pod<uint64_t>(out, e);
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path);
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path + ": not a T2FL checkpoint");
  }
  uint32_t version = 0;
  if (!read_pod(in, version) || version != kCheckpointVersion) {
    throw DataError(path + ": unsupported checkpoint version " +
                    std::to_string(version));
  }
  NamedTensors out;
  while (true) {
    uint32_t name_len = 0;
    if (!read_pod(in, name_len)) {
      if (in.eof()) break;
      throw DataError(path + ": truncated checkpoint");
    }
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint32_t rank = 0;
    if (static_cast<size_t>(in.gcount()) != name_len || !read_pod(in, rank)) {
      throw DataError(path + ": truncated checkpoint record");
    }
    Shape shape(rank);
    for (auto& e : shape) {
      uint64_t v = 0;
      if (!read_pod(in, v)) {
        throw DataError(path + ": truncated checkpoint record");
      }
      e = static_cast<size_t>(v);
    }
    std::vector<double> data(shape_numel(shape));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (static_cast<size_t>(in.gcount()) != data.size() * sizeof(double)) {
      throw DataError(path + ": truncated checkpoint payload for '" + name +
                      "'");
    }
    out.emplace_back(std::move(name),
                     Tensor::from_data(std::move(shape), std::move(data)));
  }
  return out;
}

Tensor find_tensor(const NamedTensors& ts, const std::string& name) {
  for (const auto& [n, t] : ts) {
    if (n == name) return t;
  }
  return Tensor();
}

Tensor require_tensor(const NamedTensors& ts, const std::string& name) {
  Tensor t = find_tensor(ts, name);
  if (!t.defined()) {
    throw DataError("checkpoint missing tensor '" + name + "'");
  }
  return t;
}

}  // namespace t2f
