#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fracmatch/error.hpp"
#include "fracmatch/heightmap.hpp"

namespace fracmatch {
namespace {

constexpr std::array<char, 4> kMagic{'H', 'M', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 8;

template <class T>
T read_le(const unsigned char* p) {
  std::array<unsigned char, sizeof(T)> buf;
  std::memcpy(buf.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
  T v;
  std::memcpy(&v, buf.data(), sizeof(T));
  return v;
}

template <class T>
void write_le(std::ostream& os, T v) {
  std::array<unsigned char, sizeof(T)> buf;
  std::memcpy(buf.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
  os.write(reinterpret_cast<const char*>(buf.data()), sizeof(T));
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_failure, "cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

HeightMap load_binary(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < kHeaderBytes) {
    throw Error(ErrorCode::malformed_header, path.string() + ": truncated header");
  }
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw Error(ErrorCode::bad_magic, path.string() + ": not an HMAP file");
  }
  const auto version = read_le<std::uint32_t>(bytes.data() + 4);
  if (version != kVersion) {
    throw Error(ErrorCode::bad_version,
                path.string() + ": unsupported HMAP version " + std::to_string(version));
  }
  const auto width = read_le<std::uint32_t>(bytes.data() + 8);
  const auto height = read_le<std::uint32_t>(bytes.data() + 12);
  const auto pitch = read_le<double>(bytes.data() + 16);
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (bytes.size() != kHeaderBytes + 4 * n) {
    throw Error(ErrorCode::malformed_header,
                path.string() + ": payload size does not match " + std::to_string(width) + "x" +
                    std::to_string(height));
  }
  if (!(pitch > 0.0) || !std::isfinite(pitch)) {
    throw Error(ErrorCode::bad_pitch, path.string() + ": non-positive pitch");
  }
  std::vector<double> heights(n);
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < n; ++i) heights[i] = read_le<float>(p + 4 * i);
  return HeightMap(width, height, pitch, std::move(heights), path.stem().string());
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

HeightMap load_csv(const std::filesystem::path& path, double pitch_um) {
  if (!(pitch_um > 0.0) || !std::isfinite(pitch_um)) {
    throw Error(ErrorCode::bad_pitch, path.string() + ": CSV grids need a positive --pitch-um");
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_failure, "cannot open " + path.string());
  std::vector<double> heights;
  std::size_t width = 0, height = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::size_t cells = 0;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      const std::string_view cell = trim(rest.substr(0, comma));
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw Error(ErrorCode::parse_error, path.string() + ":" + std::to_string(line_no) +
                                                ": cannot parse cell '" + std::string(cell) + "'");
      }
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::non_finite,
                    path.string() + ":" + std::to_string(line_no) + ": non-finite height");
      }
      heights.push_back(v);
      ++cells;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (height == 0) {
      width = cells;
    } else if (cells != width) {
      throw Error(ErrorCode::non_rectangular, path.string() + ":" + std::to_string(line_no) +
                                                  ": expected " + std::to_string(width) +
                                                  " cells, got " + std::to_string(cells));
    }
    ++height;
  }
  if (height == 0) throw Error(ErrorCode::parse_error, path.string() + ": empty grid");
  return HeightMap(width, height, pitch_um, std::move(heights), path.stem().string());
}

}  // namespace

HeightMap load_heightmap(const std::filesystem::path& path, HeightMapFormat format,
                         double pitch_um) {
  return format == HeightMapFormat::csv_grid ? load_csv(path, pitch_um) : load_binary(path);
}

HeightMap load_heightmap(const std::filesystem::path& path, double pitch_um) {
  const bool csv = path.extension() == ".csv";
  return load_heightmap(path, csv ? HeightMapFormat::csv_grid : HeightMapFormat::hmap_binary,
                        pitch_um);
}

void save_heightmap(const HeightMap& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.width()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.height()));
  write_le<double>(out, m.pitch_um());
  for (double v : m.values()) write_le<float>(out, static_cast<float>(v));
  if (!out) throw Error(ErrorCode::io_failure, "short write to " + path.string());
}

void save_heightmap_csv(const HeightMap& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  out << std::setprecision(17);
  for (std::size_t y = 0; y < m.height(); ++y) {
    const auto r = m.row(y);
    for (std::size_t x = 0; x < r.size(); ++x) {
      if (x) out << ',';
      out << r[x];
    }
    out << '\n';
  }
}

}  // namespace fracmatch
