#include <zlib.h>

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mural/error.hpp"
#include "mural/sim.hpp"

namespace mural::sim {

namespace {

/// Rows top (max z) to bottom, one byte per cell.
std::vector<std::uint8_t> image_rows(const PaintRaster& r) {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(r.nx()) * r.nz());
  for (int j = r.nz() - 1; j >= 0; --j) {
    for (int i = 0; i < r.nx(); ++i) out.push_back(r.color(i, j));
  }
  return out;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

void write_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!f) throw Error(ErrorCode::io_error, "write failed: " + path.string());
}

constexpr char kRasterMagic[4] = {'M', 'R', 'S', 'T'};

template <typename T>
void put_raw(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get_raw(std::span<const std::uint8_t> in, std::size_t& at) {
  if (at + sizeof(T) > in.size()) throw Error(ErrorCode::parse_error, "raster snapshot truncated");
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

}  // namespace

std::string to_pgm(const PaintRaster& r) {
  std::string out = "P5\n" + std::to_string(r.nx()) + " " + std::to_string(r.nz()) + "\n255\n";
  const auto rows = image_rows(r);
  out.append(rows.begin(), rows.end());
  return out;
}

namespace {

/// 8-bit PNG from top-to-bottom rows; colour type 0 (grey) or 2 (RGB).
std::vector<std::uint8_t> encode_png(int width, int height, int channels, const std::vector<std::uint8_t>& pixels) {
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  std::vector<std::uint8_t> raw;
  raw.reserve(pixels.size() + height);
  for (int j = 0; j < height; ++j) {
    raw.push_back(0);
    const auto* row = pixels.data() + static_cast<std::size_t>(j) * stride;
    raw.insert(raw.end(), row, row + stride);
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(len);
  if (compress2(z.data(), &len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw Error(ErrorCode::io_error, "png compression failed");
  }
  z.resize(len);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.insert(ihdr.end(), {8, static_cast<std::uint8_t>(channels == 3 ? 2 : 0), 0, 0, 0});
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", {});
  return out;
}

std::array<std::uint8_t, 3> parse_hex(const std::string& c) {
  if (c.size() != 7 || c[0] != '#') throw Error(ErrorCode::invalid_argument, "palette entry \"" + c + "\" is not #rrggbb");
  std::array<std::uint8_t, 3> rgb{};
  for (int k = 0; k < 3; ++k) {
    const auto part = c.substr(1 + 2 * k, 2);
    if (part.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos) {
      throw Error(ErrorCode::invalid_argument, "palette entry \"" + c + "\" is not #rrggbb");
    }
    rgb[k] = static_cast<std::uint8_t>(std::stoi(part, nullptr, 16));
  }
  return rgb;
}

}  // namespace

std::vector<std::uint8_t> to_png(const PaintRaster& r) { return encode_png(r.nx(), r.nz(), 1, image_rows(r)); }

std::vector<std::uint8_t> to_png(const PaintRaster& r, std::span<const std::string> palette) {
  std::vector<std::array<std::uint8_t, 3>> lut(256, {255, 0, 255});
  for (std::size_t i = 0; i < palette.size() && i < lut.size(); ++i) lut[i] = parse_hex(palette[i]);
  const auto rows = image_rows(r);
  std::vector<std::uint8_t> rgb;
  rgb.reserve(rows.size() * 3);
  for (const auto c : rows) rgb.insert(rgb.end(), lut[c].begin(), lut[c].end());
  return encode_png(r.nx(), r.nz(), 3, rgb);
}

void write_pgm(const PaintRaster& r, const std::filesystem::path& path) {
  const std::string s = to_pgm(r);
  write_bytes(path, s.data(), s.size());
}

void write_png(const PaintRaster& r, const std::filesystem::path& path) {
  const auto s = to_png(r);
  write_bytes(path, s.data(), s.size());
}

std::string trace_csv(std::span<const TraceRow> rows) {
  std::ostringstream o;
  o.precision(9);
  o << "time,x,y,z,vx,vy,vz,yaw,battery,paint,valve,cmd_vx,cmd_vy,cmd_vz,cmd_yaw_rate,event\n";
  for (const auto& r : rows) {
    const auto& s = r.state;
    o << static_cast<double>(r.time_us) * 1e-6 << ',' << s.position.x() << ',' << s.position.y() << ','
      << s.position.z() << ',' << s.velocity.x() << ',' << s.velocity.y() << ',' << s.velocity.z() << ',' << s.yaw
      << ',' << s.battery << ',' << s.paint << ',' << (s.spray_valve ? 1 : 0) << ',' << r.command.velocity.x()
      << ',' << r.command.velocity.y() << ',' << r.command.velocity.z() << ',' << r.command.yaw_rate << ','
      << r.event << '\n';
  }
  return o.str();
}

void write_trace_csv(std::span<const TraceRow> rows, const std::filesystem::path& path) {
  const std::string s = trace_csv(rows);
  write_bytes(path, s.data(), s.size());
}

std::vector<std::uint8_t> serialize_raster(const PaintRaster& r) {
  std::vector<std::uint8_t> out(kRasterMagic, kRasterMagic + 4);
  const auto& w = r.wall();
  put_raw(out, w.x0);
  put_raw(out, w.z0);
  put_raw(out, w.width);
  put_raw(out, w.height);
  put_raw(out, r.cell());
  out.insert(out.end(), r.colors().begin(), r.colors().end());
  for (int j = 0; j < r.nz(); ++j) {
    for (int i = 0; i < r.nx(); ++i) put_raw(out, r.path_index(i, j));
  }
  return out;
}

PaintRaster deserialize_raster(std::span<const std::uint8_t> in) {
  if (in.size() < 4 || std::memcmp(in.data(), kRasterMagic, 4) != 0) {
    throw Error(ErrorCode::parse_error, "not a raster snapshot");
  }
  std::size_t at = 4;
  svg::WallRect w;
  w.x0 = get_raw<double>(in, at);
  w.z0 = get_raw<double>(in, at);
  w.width = get_raw<double>(in, at);
  w.height = get_raw<double>(in, at);
  const double cell = get_raw<double>(in, at);
  PaintRaster r(w, cell);
  const std::size_t n = static_cast<std::size_t>(r.nx()) * r.nz();
  if (in.size() != at + n * (1 + sizeof(std::int32_t))) throw Error(ErrorCode::parse_error, "raster size mismatch");
  for (int j = 0; j < r.nz(); ++j) {
    for (int i = 0; i < r.nx(); ++i) {
      const std::uint8_t c = in[at + static_cast<std::size_t>(j) * r.nx() + i];
      std::int32_t p;
      std::memcpy(&p, in.data() + at + n + (static_cast<std::size_t>(j) * r.nx() + i) * sizeof(std::int32_t),
                  sizeof(p));
      r.set(i, j, c, p);
    }
  }
  return r;
}

}  // namespace mural::sim
