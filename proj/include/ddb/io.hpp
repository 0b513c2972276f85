#pragma once

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ddb/errors.hpp"
#include "ddb/tensor.hpp"

namespace ddb {

static_assert(std::endian::native == std::endian::little,
              "tensor file I/O assumes a little-endian host");

// Text header "DDBT1 <rank> <dim0> <dim1> ...\n" followed by raw little-endian
// 64-bit floats in row-major order. Round-trips finite doubles bit-exactly.
inline void write_tensor(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "DDBT1 " << t.rank();
  for (std::size_t d : t.shape) f << ' ' << d;
  f << '\n';
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!f) throw IoError("write failed: " + path);
}

inline Tensor read_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string header;
  if (!std::getline(f, header)) throw IoError("missing header: " + path);
  std::istringstream hs(header);
  std::string magic;
  std::size_t rank = 0;
  if (!(hs >> magic >> rank) || magic != "DDBT1")
    throw IoError("not a DDBT1 tensor file: " + path);
  if (rank == 0 || rank > 8) throw IoError("bad tensor rank in " + path);
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i)
    if (!(hs >> shape[i]) || shape[i] == 0)
      throw IoError("bad tensor dims in " + path);
  Tensor t(shape);
  f.read(reinterpret_cast<char*>(t.data.data()),
         static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (f.gcount() != static_cast<std::streamsize>(t.size() * sizeof(double)))
    throw IoError("truncated tensor data in " + path);
  return t;
}

namespace detail {

inline int pgm_next_token(std::istream& in, std::string& tok) {
  tok.clear();
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {  // comment to end of line
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      if (!tok.empty()) return 1;
    } else {
      tok.push_back(static_cast<char>(c));
    }
    c = in.get();
  }
  return tok.empty() ? 0 : 1;
}

}  // namespace detail

// Reads P2/P5 into [0,1] by linear scaling with the stored maxval.
// 16-bit P5 samples are big-endian per the netpbm convention.
inline Tensor read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string tok;
  auto next = [&]() {
    if (!detail::pgm_next_token(f, tok)) throw IoError("malformed PGM header: " + path);
    return tok;
  };
  const std::string magic = next();
  if (magic != "P2" && magic != "P5") throw IoError("not a PGM (P2/P5) file: " + path);
  std::size_t width = 0, height = 0;
  unsigned long maxval = 0;
  try {
    width = std::stoul(next());
    height = std::stoul(next());
    maxval = std::stoul(next());
  } catch (const std::exception&) {
    throw IoError("malformed PGM header: " + path);
  }
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535)
    throw IoError("unsupported PGM dimensions/maxval in " + path);

  Tensor img({height, width});
  const double scale = 1.0 / static_cast<double>(maxval);
  if (magic == "P2") {
    for (std::size_t i = 0; i < img.size(); ++i) {
      unsigned long v = 0;
      try {
        v = std::stoul(next());
      } catch (const std::exception&) {
        throw IoError("truncated P2 data in " + path);
      }
      if (v > maxval) throw IoError("P2 sample exceeds maxval in " + path);
      img[i] = static_cast<double>(v) * scale;
    }
  } else {
    // Exactly one whitespace byte separates the header from binary data.
    const std::size_t bytes_per = (maxval > 255) ? 2 : 1;
    std::vector<unsigned char> buf(img.size() * bytes_per);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (f.gcount() != static_cast<std::streamsize>(buf.size()))
      throw IoError("truncated P5 data in " + path);
    for (std::size_t i = 0; i < img.size(); ++i) {
      unsigned long v = (bytes_per == 1)
                            ? buf[i]
                            : (static_cast<unsigned long>(buf[2 * i]) << 8) | buf[2 * i + 1];
      img[i] = static_cast<double>(v) * scale;
    }
  }
  return img;
}

// Writes binary P5 with round-half-even quantization after clamping to [0,1].
inline void write_pgm(const std::string& path, const Tensor& img,
                      unsigned maxval = 255) {
  if (img.rank() != 2) throw ShapeError("write_pgm needs a rank-2 tensor");
  if (maxval == 0 || maxval > 65535) throw ConfigError("pgm maxval must be in [1,65535]");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "P5\n" << img.shape[1] << ' ' << img.shape[0] << '\n' << maxval << '\n';
  for (std::size_t i = 0; i < img.size(); ++i) {
    double v = std::min(1.0, std::max(0.0, img[i])) * maxval;
    const auto q = static_cast<unsigned long>(std::nearbyint(v));  // ties to even
    if (maxval > 255) {
      const unsigned char hi = static_cast<unsigned char>((q >> 8) & 0xFF);
      const unsigned char lo = static_cast<unsigned char>(q & 0xFF);
      f.put(static_cast<char>(hi));
      f.put(static_cast<char>(lo));
    } else {
      f.put(static_cast<char>(static_cast<unsigned char>(q)));
    }
  }
  if (!f) throw IoError("write failed: " + path);
}

// Masks are PGMs thresholded at 0.5.
inline Tensor read_mask_pgm(const std::string& path) {
  Tensor img = read_pgm(path);
  for (double& v : img.data) v = (v >= 0.5) ? 1.0 : 0.0;
  return img;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << content;
  if (!f) throw IoError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Shortest round-trippable decimal form.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace ddb
