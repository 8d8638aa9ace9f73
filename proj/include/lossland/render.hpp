#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lossland/surface.hpp"

namespace lossland {

struct RenderOptions {
  bool log_scale = true;  // cell value = ln(max(loss, 1e-12))
  std::string color_map = "viridis";  // "viridis" | "gray"
  std::vector<double> contour_levels;  // raw loss units; wins over count
  std::size_t contour_count = 0;       // evenly spaced when levels empty
  std::optional<double> clip_radius;   // omit points with sqrt(a^2+b^2) > r
  std::size_t image_px = 512;          // target size of the plot area

  void validate() const;
};

// Writes a binary PPM (P6) heatmap: plot area, vertical color bar, and the
// color scale bounds printed beside it. Sentinel cells use a reserved
// color. Byte-deterministic for fixed inputs.
void render_heatmap(const SurfaceGrid& grid, const RenderOptions& opts,
                    const std::filesystem::path& path);

struct Polyline {
  std::vector<std::array<double, 2>> points;  // (alpha, beta)
  bool closed = false;
};

struct ContourSet {
  double level = 0.0;
  std::vector<Polyline> lines;
};

// Marching-squares isolines with linear interpolation along cell edges.
// Sentinel grid values count as above every level; the saddle ambiguity is
// resolved by the cell-average rule.
std::vector<ContourSet> extract_contours(const SurfaceGrid& grid,
                                         const std::vector<double>& levels);

// Levels implied by the options: the explicit list if given, otherwise
// contour_count levels evenly spaced over the (possibly log-scaled) range
// of finite grid values, mapped back to raw loss units.
std::vector<double> choose_contour_levels(const SurfaceGrid& grid,
                                          const RenderOptions& opts);

// Plain text surface export: metadata preamble plus one
// "alpha<TAB>beta<TAB>loss" row per grid point.
void write_surface_text(const SurfaceGrid& grid,
                        const std::filesystem::path& path);

void write_contours_text(const std::vector<ContourSet>& contours,
                         const std::filesystem::path& path);

}  // namespace lossland
