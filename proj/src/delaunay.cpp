#include "phasemap/domain.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace phasemap {

namespace {

struct Triangle {
  std::size_t a, b, c;
  double cx, cy, r2;
};

struct Point2 {
  double x, y;
};

Triangle make_triangle(const std::vector<Point2>& pts, std::size_t a, std::size_t b, std::size_t c) {
  const Point2& p = pts[a];
  const Point2& q = pts[b];
  const Point2& r = pts[c];
  const double d = 2.0 * (p.x * (q.y - r.y) + q.x * (r.y - p.y) + r.x * (p.y - q.y));
  Triangle t{a, b, c, 0.0, 0.0, std::numeric_limits<double>::infinity()};
  if (d == 0.0) return t;  // degenerate: contains everything, removed on next insertion
  const double p2 = p.x * p.x + p.y * p.y;
  const double q2 = q.x * q.x + q.y * q.y;
  const double r2 = r.x * r.x + r.y * r.y;
  t.cx = (p2 * (q.y - r.y) + q2 * (r.y - p.y) + r2 * (p.y - q.y)) / d;
  t.cy = (p2 * (r.x - q.x) + q2 * (p.x - r.x) + r2 * (q.x - p.x)) / d;
  t.r2 = (p.x - t.cx) * (p.x - t.cx) + (p.y - t.cy) * (p.y - t.cy);
  return t;
}

// Strictly inside with a relative tolerance so cocircular points count as
// outside consistently.
bool in_circumcircle(const Triangle& t, const Point2& p) {
  if (!std::isfinite(t.r2)) return true;
  const double d2 = (p.x - t.cx) * (p.x - t.cx) + (p.y - t.cy) * (p.y - t.cy);
  return d2 < t.r2 * (1.0 - 1e-10);
}

}  // namespace

std::vector<Edge> delaunay_edges(std::span<const std::array<double, 2>> input) {
  const std::size_t n = input.size();
  if (n < 3) return {};
  double min_x = input[0][0], max_x = input[0][0], min_y = input[0][1], max_y = input[0][1];
  for (const auto& p : input) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  const double extent = std::max({max_x - min_x, max_y - min_y, 1e-12});
  const double mx = 0.5 * (min_x + max_x);
  const double my = 0.5 * (min_y + max_y);

  std::vector<Point2> pts;
  pts.reserve(n + 3);
  for (const auto& p : input) pts.push_back({p[0], p[1]});
  const double big = 1e4 * extent;
  pts.push_back({mx - big, my - big});
  pts.push_back({mx + big, my - big});
  pts.push_back({mx, my + big});

  std::vector<Triangle> tris{make_triangle(pts, n, n + 1, n + 2)};
  std::vector<Triangle> keep;
  std::map<std::pair<std::size_t, std::size_t>, int> boundary;
  for (std::size_t i = 0; i < n; ++i) {
    keep.clear();
    boundary.clear();
    for (const Triangle& t : tris) {
      if (in_circumcircle(t, pts[i])) {
        for (auto [u, v] : {std::pair{t.a, t.b}, std::pair{t.b, t.c}, std::pair{t.c, t.a}}) {
          ++boundary[{std::min(u, v), std::max(u, v)}];
        }
      } else {
        keep.push_back(t);
      }
    }
    for (const auto& [e, count] : boundary) {
      if (count == 1) keep.push_back(make_triangle(pts, e.first, e.second, i));
    }
    tris.swap(keep);
  }

  std::vector<Edge> edges;
  for (const Triangle& t : tris) {
    if (t.a >= n || t.b >= n || t.c >= n) continue;
    // Skip zero-area slivers from exactly collinear triples.
    const Point2 &p = pts[t.a], &q = pts[t.b], &r = pts[t.c];
    const double area2 = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    if (std::abs(area2) <= 1e-14 * extent * extent) continue;
    for (auto [u, v] : {std::pair{t.a, t.b}, std::pair{t.b, t.c}, std::pair{t.c, t.a}}) {
      edges.push_back({std::min(u, v), std::max(u, v)});
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

}  // namespace phasemap
