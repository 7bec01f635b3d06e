#include "qmvos/weights_io.hpp"

#include <cstring>
#include <fstream>

#include "qmvos/error.hpp"

namespace qmvos {

namespace {

constexpr char kMagic[5] = {'Q', 'M', 'V', 'W', '1'};

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

uint64_t get_u64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (is.gcount() != 8) throw io_error("truncated weight file while reading " + what);
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is, const std::string& what) {
  const uint64_t bits = get_u64(is, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_weights(const ParamStore& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  for (const auto& [name, t] : params.items()) {
    put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(os, static_cast<uint64_t>(t.rank()));
    for (int64_t e : t.shape()) put_u64(os, static_cast<uint64_t>(e));
    for (double v : t.data()) put_f64(os, v);
  }
  if (!os) throw io_error("write failed for " + path);
}

ParamStore load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  char magic[5];
  is.read(magic, 5);
  if (is.gcount() != 5 || std::memcmp(magic, kMagic, 5) != 0) {
    throw io_error(path + " is not a QMVW1 weight file");
  }
  ParamStore params;
  while (true) {
    is.peek();
    if (is.eof()) break;
    const uint64_t name_len = get_u64(is, "name length");
    if (name_len > 4096) throw io_error("unreasonable parameter name length in " + path);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    if (is.gcount() != static_cast<std::streamsize>(name_len)) {
      throw io_error("truncated weight file while reading name");
    }
    const uint64_t rank = get_u64(is, "rank of " + name);
    if (rank > 8) throw io_error("unreasonable rank for " + name);
    Shape shape;
    int64_t total = 1;
    for (uint64_t i = 0; i < rank; ++i) {
      const auto e = static_cast<int64_t>(get_u64(is, "extent of " + name));
      if (e <= 0) throw io_error("non-positive extent for " + name);
      shape.push_back(e);
      total *= e;
    }
    std::vector<double> data(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) data[static_cast<size_t>(i)] = get_f64(is, "data of " + name);
    params.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return params;
}

}  // namespace qmvos
