#pragma once

// Binary image/coil files, dataset directories, PGM masks and small file helpers.
//
// Image file: "img1", ny nz nt as uint32 LE, then (re, im) binary64 LE pairs in
// [t][y][z] order. Coil file: "coi1", ny nz nc, then pairs in [coil][y][z] order.
// Dataset directory: "dataset.txt" manifest plus NNNN.img / NNNN.coil per item.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "vnsp/dataset.hpp"
#include "vnsp/errors.hpp"
#include "vnsp/kspace.hpp"
#include "vnsp/varnet.hpp"

namespace vnsp {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

namespace detail {

inline std::string encode_complex_block(const char* magic, int a, int b, int c, const std::vector<cplx>& v) {
  std::string buf(magic, 4);
  put_u32(buf, static_cast<std::uint32_t>(a));
  put_u32(buf, static_cast<std::uint32_t>(b));
  put_u32(buf, static_cast<std::uint32_t>(c));
  buf.reserve(buf.size() + 16 * v.size());
  for (const cplx& z : v) {
    put_f64(buf, z.real());
    put_f64(buf, z.imag());
  }
  return buf;
}

struct ComplexBlock {
  int a = 0, b = 0, c = 0;
  std::vector<cplx> values;
};

inline ComplexBlock decode_complex_block(const char* magic, const std::string& buf, const std::string& what) {
  if (buf.size() < 16 || buf.compare(0, 4, magic) != 0) throw ParseError(what + ": bad header");
  ComplexBlock blk;
  blk.a = static_cast<int>(get_le(buf, 4, 4));
  blk.b = static_cast<int>(get_le(buf, 8, 4));
  blk.c = static_cast<int>(get_le(buf, 12, 4));
  if (blk.a < 1 || blk.b < 1 || blk.c < 1) throw ParseError(what + ": invalid dimensions");
  const std::size_t n = static_cast<std::size_t>(blk.a) * blk.b * blk.c;
  if (buf.size() != 16 + 16 * n) throw ParseError(what + ": payload length mismatch");
  blk.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    blk.values[i] = {std::bit_cast<double>(get_le(buf, 16 + 16 * i, 8)),
                     std::bit_cast<double>(get_le(buf, 24 + 16 * i, 8))};
  }
  return blk;
}

}  // namespace detail

inline std::string encode_image(const ImageStack& x) {
  return detail::encode_complex_block("img1", x.shape.ny, x.shape.nz, x.shape.nt, x.data);
}

inline ImageStack decode_image(const std::string& buf) {
  auto blk = detail::decode_complex_block("img1", buf, "image file");
  return ImageStack(GridShape{blk.a, blk.b, blk.c, 1}, std::move(blk.values));
}

inline std::string encode_coils(const CoilMap& c) {
  return detail::encode_complex_block("coi1", c.shape().ny, c.shape().nz, c.shape().nc, c.data());
}

inline CoilMap decode_coils(const std::string& buf) {
  auto blk = detail::decode_complex_block("coi1", buf, "coil file");
  return CoilMap(GridShape{blk.a, blk.b, 1, blk.c}, std::move(blk.values));
}

inline void write_image(const ImageStack& x, const fs::path& path) { write_file(path, encode_image(x)); }
inline ImageStack read_image(const fs::path& path) { return decode_image(read_file(path)); }

inline std::string item_name(std::size_t i) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

inline const char* split_name(Dataset::Split s) { return s == Dataset::Split::kTrain ? "train" : "test"; }

inline void write_dataset(const Dataset& d, const fs::path& dir) {
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "dataset v1 " << split_name(d.split) << ' ' << d.grid.ny << ' ' << d.grid.nz << ' ' << d.grid.nt
           << ' ' << d.grid.nc << ' ' << d.size() << ' ' << d.seed << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    write_file(dir / (item_name(i) + ".img"), encode_image(d.items[i].image));
    write_file(dir / (item_name(i) + ".coil"), encode_coils(d.items[i].coils));
  }
  write_file(dir / "dataset.txt", manifest.str());
}

inline Dataset read_dataset(const fs::path& dir) {
  std::istringstream ms(read_file(dir / "dataset.txt"));
  std::string magic, version, split;
  Dataset d;
  std::size_t count = 0;
  if (!(ms >> magic >> version >> split >> d.grid.ny >> d.grid.nz >> d.grid.nt >> d.grid.nc >> count >> d.seed) ||
      magic != "dataset" || version != "v1" || (split != "train" && split != "test")) {
    throw ParseError("dataset manifest " + (dir / "dataset.txt").string() + ": malformed", 1);
  }
  d.split = split == "train" ? Dataset::Split::kTrain : Dataset::Split::kTest;
  d.grid.validate();
  for (std::size_t i = 0; i < count; ++i) {
    ImageStack x = read_image(dir / (item_name(i) + ".img"));
    CoilMap c = decode_coils(read_file(dir / (item_name(i) + ".coil")));
    if (!x.shape.same_grid(d.grid) || c.shape().ny != d.grid.ny || c.shape().nz != d.grid.nz ||
        c.shape().nc != d.grid.nc) {
      throw ShapeError("dataset item " + item_name(i) + " does not match manifest grid " + d.grid.str());
    }
    x.shape = d.grid;
    d.items.push_back({std::move(x), std::move(c)});
  }
  return d;
}

/// Sorted *.img file names in a directory.
inline std::vector<std::string> list_images(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".img") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

/// Binary PGM of the mask: 0 unsampled, 255 sampled, 128 calibration. Frames
/// are tiled left to right (width nz * nt, height ny).
inline std::string encode_pgm(const SamplingPattern& sp) {
  const GridShape& g = sp.grid();
  std::string out = "P5\n" + std::to_string(g.nz * g.nt) + " " + std::to_string(g.ny) + "\n255\n";
  for (int y = 0; y < g.ny; ++y)
    for (int t = 0; t < g.nt; ++t)
      for (int z = 0; z < g.nz; ++z) {
        const Point p{y, z, t};
        const unsigned char v = sp.is_calibration(p) ? 128 : sp.contains(p) ? 255 : 0;
        out.push_back(static_cast<char>(v));
      }
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace vnsp
