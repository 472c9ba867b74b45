#pragma once

// Marching-squares iso-contours over pixel-centre samples.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "exmap/confmap.hpp"
#include "exmap/error.hpp"
#include "exmap/geometry.hpp"
#include "exmap/raster.hpp"

namespace exmap {

using Polyline = std::vector<Point2>;

struct ContourSet {
  std::vector<double> levels;
  /// polylines[i] holds the chains for levels[i]; a closed chain repeats its
  /// first vertex at the end.
  std::vector<std::vector<Polyline>> polylines;
};

inline std::vector<double> default_contour_levels() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

/// Bilinear interpolation of field at a point inside the grid.
inline double bilinear_at(const ScalarField& field, Point2 p) {
  const int x0 = std::clamp(static_cast<int>(std::floor(p.x)), 0, field.width() - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(p.y)), 0, field.height() - 1);
  const int x1 = std::min(x0 + 1, field.width() - 1);
  const int y1 = std::min(y0 + 1, field.height() - 1);
  const double fx = p.x - x0;
  const double fy = p.y - y0;
  const double top = field(x0, y0) + fx * (field(x1, y0) - field(x0, y0));
  const double bottom = field(x0, y1) + fx * (field(x1, y1) - field(x0, y1));
  return top + fy * (bottom - top);
}

namespace detail {

// A crossing lives on a grid edge. Horizontal edge (x,y)-(x+1,y) has id
// 2*(y*w+x); vertical edge (x,y)-(x,y+1) has id 2*(y*w+x)+1.
struct Crossing {
  std::int64_t edge;
  Point2 at;
};

inline std::vector<Polyline> trace_level(const ScalarField& f, double level) {
  const int w = f.width();
  const int h = f.height();
  const auto above = [&](int x, int y) { return f(x, y) >= level; };
  const auto interp = [&](int xa, int ya, int xb, int yb) {
    const double va = f(xa, ya);
    const double vb = f(xb, yb);
    const double t = (level - va) / (vb - va);
    return Point2{xa + t * (xb - xa), ya + t * (yb - ya)};
  };
  const auto hedge = [&](int x, int y) { return 2 * (static_cast<std::int64_t>(y) * w + x); };
  const auto vedge = [&](int x, int y) { return hedge(x, y) + 1; };

  std::unordered_map<std::int64_t, Point2> where;
  std::unordered_map<std::int64_t, std::vector<std::int64_t>> links;
  const auto link = [&](const Crossing& a, const Crossing& b) {
    where.emplace(a.edge, a.at);
    where.emplace(b.edge, b.at);
    links[a.edge].push_back(b.edge);
    links[b.edge].push_back(a.edge);
  };

  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      const bool tl = above(x, y), tr = above(x + 1, y);
      const bool br = above(x + 1, y + 1), bl = above(x, y + 1);
      const int code = tl | (tr << 1) | (br << 2) | (bl << 3);
      if (code == 0 || code == 15) continue;

      std::array<Crossing, 4> edges{};  // top, right, bottom, left
      std::array<bool, 4> crosses{tl != tr, tr != br, bl != br, tl != bl};
      if (crosses[0]) edges[0] = {hedge(x, y), interp(x, y, x + 1, y)};
      if (crosses[1]) edges[1] = {vedge(x + 1, y), interp(x + 1, y, x + 1, y + 1)};
      if (crosses[2]) edges[2] = {hedge(x, y + 1), interp(x, y + 1, x + 1, y + 1)};
      if (crosses[3]) edges[3] = {vedge(x, y), interp(x, y, x, y + 1)};

      if (code == 5 || code == 10) {
        // saddle: the centre sample decides which diagonal pair is joined
        const double centre = 0.25 * (f(x, y) + f(x + 1, y) + f(x + 1, y + 1) + f(x, y + 1));
        const bool centre_above = centre >= level;
        const bool cut_tr_bl = (code == 5) == centre_above;
        if (cut_tr_bl) {
          link(edges[0], edges[1]);
          link(edges[3], edges[2]);
        } else {
          link(edges[3], edges[0]);
          link(edges[1], edges[2]);
        }
        continue;
      }
      int first = -1;
      for (int i = 0; i < 4; ++i) {
        if (!crosses[i]) continue;
        if (first < 0) {
          first = i;
        } else {
          link(edges[first], edges[i]);
        }
      }
    }
  }

  std::vector<Polyline> chains;
  std::unordered_map<std::int64_t, bool> used;
  const auto walk = [&](std::int64_t start) {
    Polyline chain{where.at(start)};
    used[start] = true;
    std::int64_t prev = -1;
    std::int64_t cur = start;
    while (true) {
      std::int64_t next = -1;
      for (std::int64_t n : links.at(cur)) {
        if (n != prev && !used[n]) {
          next = n;
          break;
        }
      }
      if (next < 0) {
        // close the loop when the chain returns to its start
        const auto& around = links.at(cur);
        if (cur != start && chain.size() > 2 &&
            std::find(around.begin(), around.end(), start) != around.end()) {
          chain.push_back(where.at(start));
        }
        break;
      }
      used[next] = true;
      chain.push_back(where.at(next));
      prev = cur;
      cur = next;
    }
    chains.push_back(std::move(chain));
  };

  // ordered by edge id so output is deterministic
  std::vector<std::int64_t> ids;
  ids.reserve(links.size());
  for (const auto& [id, _] : links) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (std::int64_t id : ids) {
    if (!used[id] && links.at(id).size() == 1) walk(id);
  }
  for (std::int64_t id : ids) {
    if (!used[id]) walk(id);
  }
  return chains;
}

}  // namespace detail

/// Iso-lines of field at each level. Levels must lie strictly inside (0, 1)
/// and be strictly increasing; a level with no crossing yields no polylines.
inline ContourSet iso_contours(const ScalarField& field, const std::vector<double>& levels) {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0 && levels[i] < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "contour level " + std::to_string(levels[i]) +
                                                  " outside (0, 1)");
    }
    if (i > 0 && !(levels[i] > levels[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "contour levels must be strictly increasing");
    }
  }
  ContourSet out;
  out.levels = levels;
  for (double level : levels) out.polylines.push_back(detail::trace_level(field, level));
  return out;
}

inline ContourSet iso_contours(const ConfidenceMap& map, const std::vector<double>& levels) {
  return iso_contours(map.field, levels);
}

}  // namespace exmap
