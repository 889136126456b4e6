#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fracmatch {

/// Rectangular grid of surface heights (µm), row-major, with a physical
/// pixel pitch. Immutable once constructed; the constructor enforces the
/// size, pitch and finiteness invariants.
class HeightMap {
 public:
  static constexpr std::size_t kMinSide = 8;

  HeightMap() = default;
  HeightMap(std::size_t width, std::size_t height, double pitch_um,
            std::vector<double> heights, std::string label = {});

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return heights_.size(); }
  double pitch_um() const noexcept { return pitch_um_; }
  const std::string& label() const noexcept { return label_; }

  double at(std::size_t x, std::size_t y) const { return heights_[y * width_ + x]; }
  std::span<const double> values() const noexcept { return heights_; }
  std::span<const double> row(std::size_t y) const {
    return std::span<const double>(heights_).subspan(y * width_, width_);
  }

  /// Field of view along x, in mm.
  double fov_x_mm() const noexcept { return static_cast<double>(width_) * pitch_um_ / 1000.0; }
  double fov_y_mm() const noexcept { return static_cast<double>(height_) * pitch_um_ / 1000.0; }
  /// Spacing between adjacent frequency lines along x, in mm⁻¹.
  double freq_resolution_x() const noexcept { return 1.0 / fov_x_mm(); }
  double freq_resolution_y() const noexcept { return 1.0 / fov_y_mm(); }

  HeightMap with_values(std::vector<double> heights) const;
  HeightMap with_label(std::string label) const;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  double pitch_um_ = 0.0;
  std::vector<double> heights_;
  std::string label_;
};

enum class SurfaceRole { base, tip, replica };
enum class MirrorAxis { horizontal, vertical, off };

const char* to_string(SurfaceRole role) noexcept;
SurfaceRole parse_role(const std::string& s);
const char* to_string(MirrorAxis axis) noexcept;
MirrorAxis parse_mirror_axis(const std::string& s);

/// Ordered images acquired along one surface with a fixed overlap.
struct ImageSequence {
  std::vector<HeightMap> images;
  double overlap_fraction = 0.5;
  SurfaceRole role = SurfaceRole::base;

  std::size_t count() const noexcept { return images.size(); }
  /// Throws if the images disagree on width, height or pitch.
  void validate() const;
};

// Preprocessing -------------------------------------------------------------

/// Subtracts the least-squares plane a·x + b·y + c.
HeightMap remove_tilt(const HeightMap& m);

struct SpikeResult {
  HeightMap map;
  std::size_t replaced = 0;
};

/// Replaces every pixel deviating more than k standard deviations from the
/// mean of its disc neighbourhood (Euclidean radius, border clipped, centre
/// included). Statistics come from the original values in a single pass.
SpikeResult remove_spikes(const HeightMap& m, int radius = 7, double k = 1.0);

HeightMap mirror(const HeightMap& m, MirrorAxis axis = MirrorAxis::horizontal);

/// Cuts `count` square windows left to right at stride window·(1-overlap).
ImageSequence extract_windows(const HeightMap& strip, std::size_t window, std::size_t count,
                              double overlap_fraction, SurfaceRole role = SurfaceRole::base);

/// Minimum strip width holding `count` windows at the given overlap.
std::size_t required_strip_width(std::size_t window, std::size_t count, double overlap_fraction);

// I/O -------------------------------------------------------------------------

enum class HeightMapFormat { hmap_binary, csv_grid };

/// CSV grids carry no pitch; `pitch_um` must be supplied (> 0) for them and
/// is ignored for the binary format, which embeds it.
HeightMap load_heightmap(const std::filesystem::path& path, HeightMapFormat format,
                         double pitch_um = 0.0);
/// Picks the format from the extension (.csv, anything else binary).
HeightMap load_heightmap(const std::filesystem::path& path, double pitch_um = 0.0);
void save_heightmap(const HeightMap& m, const std::filesystem::path& path);
void save_heightmap_csv(const HeightMap& m, const std::filesystem::path& path);

}  // namespace fracmatch
