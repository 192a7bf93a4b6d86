// Copyright 2026 The dqn-drive Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DRIVE_TRACKMAP_HPP_
#define DRIVE_TRACKMAP_HPP_

// Track representation: a binary occupancy grid with a spawn pose and
// optional ordered checkpoints, the TRK1 text format, parametric track
// generators, and the unit-step ray cast used by the car's sensors.
//
// Coordinates: x grows rightward, y grows downward, one world unit is one
// cell edge. A heading theta (degrees) points along (cos theta, sin theta),
// so turning right increases theta.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "drive/error.hpp"

namespace drive {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // degrees, un-normalized

  Point position() const { return {x, y}; }

  friend bool operator==(const Pose&, const Pose&) = default;
};

inline double normalize_degrees(double theta) {
  double t = std::fmod(theta, 360.0);
  if (t < 0.0) t += 360.0;
  if (t >= 360.0) t -= 360.0;
  return t;
}

// Unit direction for a heading in degrees. Multiples of 90 are exact so that
// axis-aligned cars never pick up a sub-ulp lateral drift.
inline Point direction(double theta_deg) {
  const double t = normalize_degrees(theta_deg);
  if (t == 0.0) return {1.0, 0.0};
  if (t == 90.0) return {0.0, 1.0};
  if (t == 180.0) return {-1.0, 0.0};
  if (t == 270.0) return {0.0, -1.0};
  const double rad = t * (std::numbers::pi / 180.0);
  return {std::cos(rad), std::sin(rad)};
}

class OccupancyGrid {
 public:
  OccupancyGrid() = default;

  // All cells drivable.
  OccupancyGrid(int width, int height) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw Error(ErrorCode::InvalidDimensions,
                  "grid must be at least 1x1, got " + std::to_string(width) +
                      "x" + std::to_string(height));
    }
    cells_.assign(static_cast<std::size_t>(width) * height, false);
  }

  OccupancyGrid(int width, int height, std::vector<bool> cells)
      : width_(width), height_(height), cells_(std::move(cells)) {
    if (width < 1 || height < 1 ||
        cells_.size() != static_cast<std::size_t>(width) * height) {
      throw Error(ErrorCode::DimensionMismatch,
                  "cell count does not match width x height");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<bool>& cells() const { return cells_; }

  bool in_bounds(int cx, int cy) const {
    return cx >= 0 && cy >= 0 && cx < width_ && cy < height_;
  }

  // Out-of-bounds cells read as occupied.
  bool cell(int cx, int cy) const {
    if (!in_bounds(cx, cy)) return true;
    return cells_[static_cast<std::size_t>(cy) * width_ + cx];
  }

  void set(int cx, int cy, bool occupied) {
    if (!in_bounds(cx, cy)) {
      throw Error(ErrorCode::InvalidDimensions, "cell out of range");
    }
    cells_[static_cast<std::size_t>(cy) * width_ + cx] = occupied;
  }

  std::size_t occupied_count() const {
    return static_cast<std::size_t>(
        std::count(cells_.begin(), cells_.end(), true));
  }

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<bool> cells_;
};

// Point membership: true iff (x, y) is outside the grid or lands in an
// occupied cell under floor() mapping.
inline bool is_occupied(const OccupancyGrid& grid, double x, double y) {
  if (!(x >= 0.0) || !(y >= 0.0)) return true;  // also rejects NaN
  if (x >= grid.width() || y >= grid.height()) return true;
  return grid.cell(static_cast<int>(std::floor(x)),
                   static_cast<int>(std::floor(y)));
}

inline constexpr int kDefaultMaxRay = 1000;

// Marches from origin in steps of `step` along angle_deg and returns the
// first step count t in [1, max_len] whose sample point
//   (origin.x + (t * step) * dir.x, origin.y + (t * step) * dir.y)
// is occupied, max_len if none is, and 0 if the origin itself is occupied.
inline int ray_cast(const OccupancyGrid& grid, Point origin, double angle_deg,
                    int max_len = kDefaultMaxRay, double step = 1.0) {
  if (is_occupied(grid, origin.x, origin.y)) return 0;
  const Point dir = direction(angle_deg);
  for (int t = 1; t < max_len; ++t) {
    const double s = t * step;
    if (is_occupied(grid, origin.x + s * dir.x, origin.y + s * dir.y)) {
      return t;
    }
  }
  return max_len;
}

struct Checkpoint {
  double x = 0.0;
  double y = 0.0;
  double radius = 1.0;
  int index = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct TrackSpec {
  std::string name;
  OccupancyGrid grid;
  Pose spawn;
  std::vector<Checkpoint> checkpoints;

  friend bool operator==(const TrackSpec&, const TrackSpec&) = default;
};

// Throws SpawnOccupied / CheckpointOccupied / DimensionMismatch when the
// TrackSpec invariants do not hold.
inline void validate_track(const TrackSpec& spec) {
  if (is_occupied(spec.grid, spec.spawn.x, spec.spawn.y)) {
    throw Error(ErrorCode::SpawnOccupied, "spawn cell is not drivable");
  }
  for (std::size_t i = 0; i < spec.checkpoints.size(); ++i) {
    const Checkpoint& cp = spec.checkpoints[i];
    if (cp.index != static_cast<int>(i)) {
      throw Error(ErrorCode::DimensionMismatch,
                  "checkpoint indices must be 0..n-1 in order");
    }
    if (is_occupied(spec.grid, cp.x, cp.y)) {
      throw Error(ErrorCode::CheckpointOccupied,
                  "checkpoint " + std::to_string(i) + " center is not drivable");
    }
  }
}

namespace detail {

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

// Header lines separate tokens by runs of spaces or tabs.
inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t begin = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > begin) out.push_back(line.substr(begin, i - begin));
  }
  return out;
}

inline double parse_real(std::string_view token, std::string_view what) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw Error(ErrorCode::BadNumber,
                std::string(what) + ": '" + std::string(token) + "'");
  }
  return value;
}

inline int parse_count(std::string_view token, std::string_view what) {
  int value = 0;
  const auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || value < 1) {
    throw Error(ErrorCode::BadNumber,
                std::string(what) + ": '" + std::string(token) + "'");
  }
  return value;
}

inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

// Parses a TRK1 document. The format carries no track name, so the caller
// may supply one.
inline TrackSpec parse_trk(std::string_view text, std::string name = {}) {
  using detail::split_fields;
  const auto lines = detail::split_lines(text);
  std::size_t ln = 0;
  auto header_line = [&](std::string_view keyword) {
    if (ln >= lines.size()) {
      throw Error(ErrorCode::MissingHeaderField,
                  "expected '" + std::string(keyword) + "' line");
    }
    auto fields = split_fields(lines[ln]);
    if (fields.empty() || fields[0] != keyword) {
      throw Error(ErrorCode::MissingHeaderField,
                  "line " + std::to_string(ln + 1) + ": expected '" +
                      std::string(keyword) + "'");
    }
    ++ln;
    return fields;
  };

  {
    const auto magic = header_line("TRK1");
    if (magic.size() != 1) {
      throw Error(ErrorCode::MissingHeaderField, "line 1 must be exactly TRK1");
    }
  }
  const auto size = header_line("size");
  if (size.size() != 3) {
    throw Error(ErrorCode::MissingHeaderField, "size needs <width> <height>");
  }
  const int width = detail::parse_count(size[1], "size width");
  const int height = detail::parse_count(size[2], "size height");

  const auto spawn = header_line("spawn");
  if (spawn.size() != 4) {
    throw Error(ErrorCode::MissingHeaderField, "spawn needs <x> <y> <theta>");
  }
  TrackSpec spec;
  spec.name = std::move(name);
  spec.spawn = {detail::parse_real(spawn[1], "spawn x"),
                detail::parse_real(spawn[2], "spawn y"),
                detail::parse_real(spawn[3], "spawn theta")};

  while (ln < lines.size()) {
    auto fields = split_fields(lines[ln]);
    if (fields.empty() || fields[0] != "checkpoint") break;
    if (fields.size() != 4) {
      throw Error(ErrorCode::MissingHeaderField,
                  "checkpoint needs <x> <y> <radius>");
    }
    Checkpoint cp;
    cp.x = detail::parse_real(fields[1], "checkpoint x");
    cp.y = detail::parse_real(fields[2], "checkpoint y");
    cp.radius = detail::parse_real(fields[3], "checkpoint radius");
    if (!(cp.radius > 0.0)) {
      throw Error(ErrorCode::BadNumber, "checkpoint radius must be > 0");
    }
    cp.index = static_cast<int>(spec.checkpoints.size());
    spec.checkpoints.push_back(cp);
    ++ln;
  }
  {
    const auto grid_kw = header_line("grid");
    if (grid_kw.size() != 1) {
      throw Error(ErrorCode::MissingHeaderField, "grid line takes no fields");
    }
  }

  std::vector<bool> cells;
  cells.reserve(static_cast<std::size_t>(width) * height);
  for (int r = 0; r < height; ++r, ++ln) {
    if (ln >= lines.size()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "expected " + std::to_string(height) + " grid rows, got " +
                      std::to_string(r));
    }
    const std::string_view row = lines[ln];
    if (row.size() != static_cast<std::size_t>(width)) {
      throw Error(ErrorCode::DimensionMismatch,
                  "grid row " + std::to_string(r) + " has " +
                      std::to_string(row.size()) + " chars, expected " +
                      std::to_string(width));
    }
    for (char c : row) {
      if (c == '.') {
        cells.push_back(false);
      } else if (c == '#') {
        cells.push_back(true);
      } else {
        throw Error(ErrorCode::InvalidCell,
                    "grid row " + std::to_string(r) + " contains '" +
                        std::string(1, c) + "'");
      }
    }
  }
  for (; ln < lines.size(); ++ln) {
    if (!lines[ln].empty()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "trailing content after " + std::to_string(height) +
                      " grid rows");
    }
  }
  spec.grid = OccupancyGrid(width, height, std::move(cells));
  validate_track(spec);
  return spec;
}

// Canonical TRK1: fixed field order, shortest round-trip numbers, LF endings.
inline std::string serialize_trk(const TrackSpec& spec) {
  using detail::format_real;
  std::string out;
  const int w = spec.grid.width();
  const int h = spec.grid.height();
  out.reserve(static_cast<std::size_t>(w + 1) * h + 128);
  out += "TRK1\n";
  out += "size " + std::to_string(w) + " " + std::to_string(h) + "\n";
  out += "spawn " + format_real(spec.spawn.x) + " " + format_real(spec.spawn.y) +
         " " + format_real(spec.spawn.theta) + "\n";
  for (const Checkpoint& cp : spec.checkpoints) {
    out += "checkpoint " + format_real(cp.x) + " " + format_real(cp.y) + " " +
           format_real(cp.radius) + "\n";
  }
  out += "grid\n";
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out += spec.grid.cell(c, r) ? '#' : '.';
    out += '\n';
  }
  return out;
}

struct RingParams {
  int width = 240;
  int height = 240;
  double outer_radius = 110.0;
  double inner_radius = 80.0;
  int n_checkpoints = 8;

  friend bool operator==(const RingParams&, const RingParams&) = default;
};

// Annulus around the grid center. The spawn sits on the mid-annulus circle at
// polar angle 0 heading 90 degrees (clockwise on screen); checkpoint k sits at
// polar angle 360k/n, so index 0 is at the spawn and indices increase along
// the direction of travel.
inline TrackSpec gen_ring_track(const RingParams& p) {
  if (p.width < 1 || p.height < 1) {
    throw Error(ErrorCode::InvalidDimensions, "ring grid must be at least 1x1");
  }
  const double half_min = std::min(p.width, p.height) / 2.0;
  if (!(p.inner_radius > 0.0) || !(p.inner_radius < p.outer_radius) ||
      !(p.outer_radius <= half_min)) {
    throw Error(ErrorCode::InvalidRadii,
                "need 0 < inner < outer <= min(width, height)/2");
  }
  if (p.n_checkpoints < 0) {
    throw Error(ErrorCode::InvalidDimensions, "n_checkpoints must be >= 0");
  }
  const double cx = p.width / 2.0;
  const double cy = p.height / 2.0;
  OccupancyGrid grid(p.width, p.height);
  for (int r = 0; r < p.height; ++r) {
    for (int c = 0; c < p.width; ++c) {
      const double d = std::hypot(c + 0.5 - cx, r + 0.5 - cy);
      grid.set(c, r, !(d >= p.inner_radius && d <= p.outer_radius));
    }
  }
  const double mid = (p.inner_radius + p.outer_radius) / 2.0;
  TrackSpec spec;
  spec.name = "ring";
  spec.grid = std::move(grid);
  spec.spawn = {cx + mid, cy, 90.0};
  for (int k = 0; k < p.n_checkpoints; ++k) {
    const Point d = direction(360.0 * k / p.n_checkpoints);
    spec.checkpoints.push_back({cx + mid * d.x, cy + mid * d.y,
                                (p.outer_radius - p.inner_radius) / 2.0, k});
  }
  try {
    validate_track(spec);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidRadii,
                std::string("annulus too thin for spawn/checkpoints: ") +
                    e.what());
  }
  return spec;
}

inline TrackSpec gen_ring_track(int width, int height, double outer_radius,
                                double inner_radius, int n_checkpoints) {
  return gen_ring_track(
      RingParams{width, height, outer_radius, inner_radius, n_checkpoints});
}

// Straight horizontal band of drivable cells, walled on every side: columns
// 1..length and rows 1..corridor_width. The spawn is inset from the left wall
// by up to 8 units so a car footprint fits, centered vertically, heading 0.
inline TrackSpec gen_corridor_track(int length, int corridor_width) {
  if (length < 3 || corridor_width < 1) {
    throw Error(ErrorCode::InvalidDimensions,
                "corridor needs length >= 3 and width >= 1");
  }
  OccupancyGrid grid(length + 2, corridor_width + 2);
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) {
      const bool wall = r == 0 || c == 0 || r == grid.height() - 1 ||
                        c == grid.width() - 1;
      grid.set(c, r, wall);
    }
  }
  TrackSpec spec;
  spec.name = "corridor";
  spec.grid = std::move(grid);
  spec.spawn = {1.0 + std::min(8.0, length / 2.0),
                1.0 + corridor_width / 2.0, 0.0};
  validate_track(spec);
  return spec;
}

// Left-right reflection: x -> width - x, theta -> 180 - theta. Steering
// LEFT on the mirror image corresponds to RIGHT on the original.
inline TrackSpec mirror_horizontal(const TrackSpec& spec) {
  const int w = spec.grid.width();
  const int h = spec.grid.height();
  OccupancyGrid grid(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) grid.set(w - 1 - c, r, spec.grid.cell(c, r));
  }
  TrackSpec out;
  out.name = spec.name + "-mirror";
  out.grid = std::move(grid);
  out.spawn = {w - spec.spawn.x, spec.spawn.y, 180.0 - spec.spawn.theta};
  for (const Checkpoint& cp : spec.checkpoints) {
    out.checkpoints.push_back({w - cp.x, cp.y, cp.radius, cp.index});
  }
  return out;
}

}  // namespace drive

#endif  // DRIVE_TRACKMAP_HPP_
