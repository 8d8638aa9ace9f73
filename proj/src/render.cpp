#include "lossland/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace lossland {

void RenderOptions::validate() const {
  if (color_map != "viridis" && color_map != "gray")
    throw std::invalid_argument("render: unknown color map '" + color_map +
                                "'");
  if (clip_radius.has_value() && *clip_radius <= 0.0)
    throw std::invalid_argument("render: clip radius must be > 0");
  if (image_px < 16)
    throw std::invalid_argument("render: image size too small");
}

namespace {

constexpr double kLogFloor = 1e-12;

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr Rgb kSentinelColor{255, 0, 255};
constexpr Rgb kClippedColor{235, 235, 235};
constexpr Rgb kContourColor{0, 0, 0};

// 16 anchors of the viridis map, linearly interpolated.
constexpr Rgb kViridis[16] = {
    {68, 1, 84},    {72, 26, 108},  {71, 47, 125},  {65, 68, 135},
    {57, 86, 140},  {49, 104, 142}, {42, 120, 142}, {35, 136, 142},
    {31, 152, 139}, {34, 168, 132}, {53, 183, 121}, {84, 197, 104},
    {122, 209, 81}, {165, 219, 54}, {210, 226, 27}, {253, 231, 37}};

Rgb color_at(const std::string& map, double t) {
  t = std::clamp(t, 0.0, 1.0);
  if (map == "gray") {
    auto v = static_cast<std::uint8_t>(std::lround(t * 255.0));
    return {v, v, v};
  }
  double pos = t * 15.0;
  std::size_t lo = static_cast<std::size_t>(pos);
  if (lo >= 15) return kViridis[15];
  double f = pos - static_cast<double>(lo);
  auto lerp = [&](std::uint8_t a, std::uint8_t b) {
    return static_cast<std::uint8_t>(std::lround(a + (b - a) * f));
  };
  return {lerp(kViridis[lo].r, kViridis[lo + 1].r),
          lerp(kViridis[lo].g, kViridis[lo + 1].g),
          lerp(kViridis[lo].b, kViridis[lo + 1].b)};
}

struct Image {
  std::size_t w = 0, h = 0;
  std::vector<std::uint8_t> rgb;  // 3 bytes per pixel

  Image(std::size_t width, std::size_t height, Rgb fill)
      : w(width), h(height), rgb(width * height * 3) {
    for (std::size_t i = 0; i < width * height; ++i) set_index(i, fill);
  }
  void set_index(std::size_t i, Rgb c) {
    rgb[i * 3] = c.r;
    rgb[i * 3 + 1] = c.g;
    rgb[i * 3 + 2] = c.b;
  }
  void set(std::size_t x, std::size_t y, Rgb c) {
    if (x < w && y < h) set_index(y * w + x, c);
  }
  void line(long x0, long y0, long x1, long y1, Rgb c) {
    long dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    long dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
      if (x0 >= 0 && y0 >= 0) set(static_cast<std::size_t>(x0),
                                  static_cast<std::size_t>(y0), c);
      if (x0 == x1 && y0 == y1) break;
      long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

// 5x7 bitmap glyphs for the legend labels; bit 4 is the leftmost column.
struct Glyph {
  char ch;
  std::uint8_t rows[7];
};

constexpr Glyph kFont[] = {
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
    {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
    {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
    {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
    {'i', {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
    {'f', {0x06, 0x08, 0x08, 0x1C, 0x08, 0x08, 0x08}},
};

void draw_text(Image& img, std::size_t x, std::size_t y,
               const std::string& text, Rgb c) {
  std::size_t cx = x;
  for (char ch : text) {
    for (const Glyph& g : kFont) {
      if (g.ch != ch) continue;
      for (int row = 0; row < 7; ++row)
        for (int col = 0; col < 5; ++col)
          if (g.rows[row] & (1u << (4 - col)))
            img.set(cx + col, y + row, c);
      break;
    }
    cx += 6;
  }
}

std::string fmt_bound(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double rendered_value(double loss, bool log_scale) {
  if (!finite_loss(loss)) return loss;
  return log_scale ? std::log(std::max(loss, kLogFloor)) : loss;
}

}  // namespace

void render_heatmap(const SurfaceGrid& grid, const RenderOptions& opts,
                    const std::filesystem::path& path) {
  opts.validate();
  grid.spec.validate();
  std::size_t ra = grid.spec.res_a, rb = grid.spec.res_b;

  // Rendered values and clip marks.
  std::vector<double> val(ra * rb);
  std::vector<bool> clipped(ra * rb, false);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t finite = 0;
  for (std::size_t ia = 0; ia < ra; ++ia)
    for (std::size_t ib = 0; ib < rb; ++ib) {
      std::size_t i = ia * rb + ib;
      double a = grid.spec.alpha_at(ia), b = grid.spec.beta_at(ib);
      if (opts.clip_radius.has_value() &&
          std::sqrt(a * a + b * b) > *opts.clip_radius)
        clipped[i] = true;
      val[i] = rendered_value(grid.losses[i], opts.log_scale);
      if (!clipped[i] && finite_loss(val[i])) {
        lo = std::min(lo, val[i]);
        hi = std::max(hi, val[i]);
        ++finite;
      }
    }
  if (finite == 0)
    throw std::runtime_error("render: no finite grid values to draw");

  std::size_t cell =
      std::max<std::size_t>(1, opts.image_px / std::max(ra, rb));
  std::size_t plot_w = cell * ra, plot_h = cell * rb;
  std::size_t bar_x = plot_w + 8, bar_w = 16;
  std::size_t text_x = bar_x + bar_w + 4;
  std::size_t width = text_x + 6 * 12, height = std::max<std::size_t>(plot_h, 24);

  Image img(width, height, Rgb{255, 255, 255});

  auto scale01 = [&](double v) {
    return hi > lo ? (v - lo) / (hi - lo) : 0.0;
  };

  // Grid cells; beta grows upward, image rows grow downward.
  for (std::size_t ia = 0; ia < ra; ++ia)
    for (std::size_t ib = 0; ib < rb; ++ib) {
      std::size_t i = ia * rb + ib;
      Rgb c;
      if (clipped[i])
        c = kClippedColor;
      else if (!finite_loss(val[i]))
        c = kSentinelColor;
      else
        c = color_at(opts.color_map, scale01(val[i]));
      std::size_t x0 = ia * cell, y0 = (rb - 1 - ib) * cell;
      for (std::size_t dy = 0; dy < cell; ++dy)
        for (std::size_t dx = 0; dx < cell; ++dx)
          img.set(x0 + dx, y0 + dy, c);
    }

  // Contour overlay.
  std::vector<double> levels = choose_contour_levels(grid, opts);
  if (!levels.empty()) {
    auto px = [&](double a) {
      return static_cast<long>(
          ((a - grid.spec.alpha_min) /
               (grid.spec.alpha_max - grid.spec.alpha_min) *
               static_cast<double>(ra - 1) +
           0.5) *
          static_cast<double>(cell));
    };
    auto py = [&](double b) {
      return static_cast<long>(
          (static_cast<double>(rb - 1) -
           (b - grid.spec.beta_min) /
               (grid.spec.beta_max - grid.spec.beta_min) *
               static_cast<double>(rb - 1) +
           0.5) *
          static_cast<double>(cell));
    };
    for (const ContourSet& cs : extract_contours(grid, levels))
      for (const Polyline& pl : cs.lines)
        for (std::size_t k = 1; k < pl.points.size(); ++k)
          img.line(px(pl.points[k - 1][0]), py(pl.points[k - 1][1]),
                   px(pl.points[k][0]), py(pl.points[k][1]), kContourColor);
  }

  // Color bar (top = hi) with the scale bounds next to it.
  for (std::size_t y = 0; y < plot_h; ++y) {
    double t = plot_h > 1
                   ? 1.0 - static_cast<double>(y) /
                               static_cast<double>(plot_h - 1)
                   : 0.0;
    Rgb c = color_at(opts.color_map, t);
    for (std::size_t dx = 0; dx < bar_w; ++dx) img.set(bar_x + dx, y, c);
  }
  draw_text(img, text_x, 0, fmt_bound(hi), Rgb{0, 0, 0});
  draw_text(img, text_x, plot_h >= 8 ? plot_h - 8 : 0, fmt_bound(lo),
            Rgb{0, 0, 0});

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("render: cannot open for writing: " +
                             path.string());
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw std::runtime_error("render: write failed: " + path.string());
}

std::vector<double> choose_contour_levels(const SurfaceGrid& grid,
                                          const RenderOptions& opts) {
  if (!opts.contour_levels.empty()) return opts.contour_levels;
  if (opts.contour_count == 0) return {};
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : grid.losses) {
    double r = rendered_value(v, opts.log_scale);
    if (!finite_loss(r)) continue;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  std::vector<double> levels;
  if (!(lo < hi)) return levels;
  for (std::size_t k = 1; k <= opts.contour_count; ++k) {
    double t =
        static_cast<double>(k) / static_cast<double>(opts.contour_count + 1);
    double rv = lo + t * (hi - lo);
    levels.push_back(opts.log_scale ? std::exp(rv) : rv);
  }
  return levels;
}

namespace {

// Sentinel values act as "above every level" in contour extraction.
constexpr double kHuge = 1e300;

double clamped(double v) { return finite_loss(v) ? v : kHuge; }

// Edge ids: axis 0 runs along alpha from grid point (ia,ib) to (ia+1,ib),
// axis 1 along beta to (ia,ib+1).
std::uint64_t edge_id(int axis, std::size_t ia, std::size_t ib) {
  return (static_cast<std::uint64_t>(axis) << 62) |
         (static_cast<std::uint64_t>(ia) << 31) | static_cast<std::uint64_t>(ib);
}

struct Segment {
  std::size_t a, b;  // vertex indices
};

}  // namespace

std::vector<ContourSet> extract_contours(const SurfaceGrid& grid,
                                         const std::vector<double>& levels) {
  grid.spec.validate();
  for (double level : levels)
    if (!std::isfinite(level))
      throw std::invalid_argument("contours: level must be finite");

  std::size_t ra = grid.spec.res_a, rb = grid.spec.res_b;
  std::vector<ContourSet> out;

  for (double level : levels) {
    ContourSet cs;
    cs.level = level;

    std::map<std::uint64_t, std::size_t> edge_vertex;
    std::vector<std::array<double, 2>> verts;
    std::vector<Segment> segs;

    // Interpolated crossing on the given edge, computed once per edge so
    // neighboring cells share bit-identical vertices.
    auto crossing = [&](int axis, std::size_t ia, std::size_t ib) {
      std::uint64_t id = edge_id(axis, ia, ib);
      auto it = edge_vertex.find(id);
      if (it != edge_vertex.end()) return it->second;
      double v0 = clamped(grid.at(ia, ib));
      double v1 = axis == 0 ? clamped(grid.at(ia + 1, ib))
                            : clamped(grid.at(ia, ib + 1));
      double t = (v1 == v0) ? 0.5 : (level - v0) / (v1 - v0);
      t = std::clamp(t, 0.0, 1.0);
      double a0 = grid.spec.alpha_at(ia), b0 = grid.spec.beta_at(ib);
      std::array<double, 2> p;
      if (axis == 0)
        p = {a0 + t * (grid.spec.alpha_at(ia + 1) - a0), b0};
      else
        p = {a0, b0 + t * (grid.spec.beta_at(ib + 1) - b0)};
      verts.push_back(p);
      edge_vertex[id] = verts.size() - 1;
      return verts.size() - 1;
    };

    for (std::size_t ia = 0; ia + 1 < ra; ++ia)
      for (std::size_t ib = 0; ib + 1 < rb; ++ib) {
        double c00 = clamped(grid.at(ia, ib));
        double c10 = clamped(grid.at(ia + 1, ib));
        double c11 = clamped(grid.at(ia + 1, ib + 1));
        double c01 = clamped(grid.at(ia, ib + 1));
        int mask = (c00 >= level ? 1 : 0) | (c10 >= level ? 2 : 0) |
                   (c11 >= level ? 4 : 0) | (c01 >= level ? 8 : 0);
        if (mask == 0 || mask == 15) continue;

        auto S = [&] { return crossing(0, ia, ib); };
        auto N = [&] { return crossing(0, ia, ib + 1); };
        auto W = [&] { return crossing(1, ia, ib); };
        auto E = [&] { return crossing(1, ia + 1, ib); };

        // Vertices are created in a fixed order (first endpoint, then
        // second) so the polyline output is byte-reproducible.
        auto add = [&](std::size_t a, std::size_t b) {
          segs.push_back({a, b});
        };
        auto add2 = [&](auto& ea, auto& eb) {
          std::size_t a = ea();
          std::size_t b = eb();
          add(a, b);
        };

        switch (mask) {
          case 1: case 14: add2(W, S); break;
          case 2: case 13: add2(S, E); break;
          case 3: case 12: add2(W, E); break;
          case 4: case 11: add2(E, N); break;
          case 6: case 9:  add2(S, N); break;
          case 7: case 8:  add2(W, N); break;
          case 5: {
            double avg = (c00 + c10 + c11 + c01) / 4.0;
            if (avg >= level) {
              add2(W, N);
              add2(E, S);
            } else {
              add2(W, S);
              add2(E, N);
            }
            break;
          }
          case 10: {
            double avg = (c00 + c10 + c11 + c01) / 4.0;
            if (avg >= level) {
              add2(S, W);
              add2(N, E);
            } else {
              add2(S, E);
              add2(N, W);
            }
            break;
          }
        }
      }

    // Chain segments into polylines; every vertex has degree <= 2.
    std::vector<std::vector<std::size_t>> incident(verts.size());
    for (std::size_t s = 0; s < segs.size(); ++s) {
      incident[segs[s].a].push_back(s);
      incident[segs[s].b].push_back(s);
    }
    std::vector<bool> used(segs.size(), false);

    auto walk = [&](std::size_t start_seg) {
      std::vector<std::size_t> chain;  // vertex indices
      used[start_seg] = true;
      chain.push_back(segs[start_seg].a);
      chain.push_back(segs[start_seg].b);
      // Extend forward then backward.
      for (int dirn = 0; dirn < 2; ++dirn) {
        for (;;) {
          std::size_t tip = dirn == 0 ? chain.back() : chain.front();
          std::size_t next_seg = segs.size();
          for (std::size_t s : incident[tip])
            if (!used[s]) {
              next_seg = s;
              break;
            }
          if (next_seg == segs.size()) break;
          used[next_seg] = true;
          std::size_t other =
              segs[next_seg].a == tip ? segs[next_seg].b : segs[next_seg].a;
          if (dirn == 0)
            chain.push_back(other);
          else
            chain.insert(chain.begin(), other);
        }
      }
      Polyline pl;
      pl.closed = chain.size() > 2 && chain.front() == chain.back();
      for (std::size_t v : chain) pl.points.push_back(verts[v]);
      return pl;
    };

    for (std::size_t s = 0; s < segs.size(); ++s)
      if (!used[s]) cs.lines.push_back(walk(s));

    out.push_back(std::move(cs));
  }
  return out;
}

void write_surface_text(const SurfaceGrid& grid,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("surface text: cannot open for writing: " +
                             path.string());
  char buf[64];
  auto num = [&](double v) {
    if (!std::isfinite(v)) return std::string("nan");
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "# lossland surface\n";
  out << "# checkpoint: " << grid.meta.checkpoint_digest << "\n";
  out << "# mask: "
      << (grid.meta.mask_digest.empty() ? "none" : grid.meta.mask_digest)
      << "\n";
  out << "# d1_seed: " << grid.meta.d1_seed << "\n";
  out << "# d2_seed: " << grid.meta.d2_seed << "\n";
  out << "# subset: source=" << grid.meta.subset_source
      << " n=" << grid.meta.subset_n << " seed=" << grid.meta.subset_seed
      << "\n";
  out << "# loss_kind: " << grid.meta.loss_kind << "\n";
  out << "# grid: alpha [" << num(grid.spec.alpha_min) << ","
      << num(grid.spec.alpha_max) << "] beta [" << num(grid.spec.beta_min)
      << "," << num(grid.spec.beta_max) << "] res " << grid.spec.res_a << "x"
      << grid.spec.res_b << "\n";
  out << "# center_loss: " << num(grid.center_loss) << "\n";
  for (const auto& [k, v] : grid.meta.extra)
    out << "# " << k << ": " << v << "\n";
  out << "alpha\tbeta\tloss\n";
  for (std::size_t ia = 0; ia < grid.spec.res_a; ++ia)
    for (std::size_t ib = 0; ib < grid.spec.res_b; ++ib)
      out << num(grid.spec.alpha_at(ia)) << "\t" << num(grid.spec.beta_at(ib))
          << "\t" << num(grid.at(ia, ib)) << "\n";
  if (!out)
    throw std::runtime_error("surface text: write failed: " + path.string());
}

void write_contours_text(const std::vector<ContourSet>& contours,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("contours: cannot open for writing: " +
                             path.string());
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "# lossland contours\n";
  for (const ContourSet& cs : contours) {
    out << "level " << num(cs.level) << " lines " << cs.lines.size() << "\n";
    for (const Polyline& pl : cs.lines) {
      out << "line points " << pl.points.size()
          << (pl.closed ? " closed" : " open") << "\n";
      for (const auto& p : pl.points)
        out << num(p[0]) << "\t" << num(p[1]) << "\n";
    }
  }
}

}  // namespace lossland
