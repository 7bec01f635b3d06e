#include "qmvos/image_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace qmvos {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& is, const std::string& path) {
  std::string tok;
  int c = is.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    } else if (std::isspace(c)) {
      c = is.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = is.get();
  }
  if (tok.empty()) throw io_error("truncated netpbm header in " + path);
  return tok;
}

int64_t header_int(std::istream& is, const std::string& path, const char* what) {
  const std::string tok = next_token(is, path);
  try {
    return std::stoll(tok);
  } catch (const std::exception&) {
    throw io_error(std::string("bad ") + what + " '" + tok + "' in " + path);
  }
}

}  // namespace

void write_ppm(const RgbImage& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  os << "P6\n" << img.w << " " << img.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()),
           static_cast<std::streamsize>(img.rgb.size()));
  if (!os) throw io_error("write failed for " + path);
}

RgbImage read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  if (next_token(is, path) != "P6") throw io_error(path + " is not a binary PPM (P6)");
  const int64_t w = header_int(is, path, "width");
  const int64_t h = header_int(is, path, "height");
  const int64_t maxval = header_int(is, path, "maxval");
  if (w < 1 || h < 1) throw io_error("bad extents in " + path);
  if (maxval != 255) throw io_error(path + ": only maxval 255 is supported");
  RgbImage img(h, w);
  is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (is.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
    throw io_error("truncated pixel data in " + path);
  }
  return img;
}

void write_pgm(const LabelMap& map, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  os << "P5\n" << map.w << " " << map.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(map.v.data()), static_cast<std::streamsize>(map.v.size()));
  if (!os) throw io_error("write failed for " + path);
}

LabelMap read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  if (next_token(is, path) != "P5") throw io_error(path + " is not a binary PGM (P5)");
  const int64_t w = header_int(is, path, "width");
  const int64_t h = header_int(is, path, "height");
  const int64_t maxval = header_int(is, path, "maxval");
  if (w < 1 || h < 1) throw io_error("bad extents in " + path);
  if (maxval != 255) throw io_error(path + ": only maxval 255 is supported");
  LabelMap map(h, w);
  is.read(reinterpret_cast<char*>(map.v.data()), static_cast<std::streamsize>(map.v.size()));
  if (is.gcount() != static_cast<std::streamsize>(map.v.size())) {
    throw io_error("truncated pixel data in " + path);
  }
  return map;
}

void write_manifest(const std::vector<std::string>& frame_files, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open " + path + " for writing");
  for (const std::string& f : frame_files) os << f << "\n";
  if (!os) throw io_error("write failed for " + path);
}

std::vector<std::string> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open manifest " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

Tensor image_to_tensor(const RgbImage& img) {
  const int64_t p = img.h * img.w;
  std::vector<double> data(static_cast<size_t>(3 * p));
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t c = 0; c < 3; ++c) {
      data[static_cast<size_t>(c * p + i)] =
          static_cast<double>(img.rgb[static_cast<size_t>(i * 3 + c)]) / 255.0;
    }
  }
  return Tensor(Shape{3, img.h, img.w}, std::move(data));
}

RgbImage tensor_to_image(const Tensor& t) {
  if (t.rank() != 3 || t.extent(0) != 3) {
    throw shape_error("tensor_to_image: expected 3xHxW, got " + shape_str(t.shape()));
  }
  const int64_t h = t.extent(1), w = t.extent(2), p = h * w;
  RgbImage img(h, w);
  const auto& d = t.data();
  for (int64_t i = 0; i < p; ++i) {
    for (int64_t c = 0; c < 3; ++c) {
      double v = d[static_cast<size_t>(c * p + i)] * 255.0;
      v = std::min(255.0, std::max(0.0, std::round(v)));
      img.rgb[static_cast<size_t>(i * 3 + c)] = static_cast<uint8_t>(v);
    }
  }
  return img;
}

}  // namespace qmvos
