#include "crushsim/geometry.hpp"

#include <algorithm>

namespace crush {

Vec2 closest_point(const Segment& s, Vec2 p) {
  const Vec2 ab = s.b - s.a;
  const double len2 = ab.norm2();
  if (len2 == 0.0) return s.a;
  const double t = std::clamp(dot(p - s.a, ab) / len2, 0.0, 1.0);
  return s.a + ab * t;
}

namespace {

int orientation(Vec2 a, Vec2 b, Vec2 c) {
  const double v = cross(b - a, c - a);
  if (v > 0.0) return 1;
  if (v < 0.0) return -1;
  return 0;
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

}  // namespace

bool segments_intersect(const Segment& p, const Segment& q) {
  const int o1 = orientation(p.a, p.b, q.a);
  const int o2 = orientation(p.a, p.b, q.b);
  const int o3 = orientation(q.a, q.b, p.a);
  const int o4 = orientation(q.a, q.b, p.b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p.a, p.b, q.a)) return true;
  if (o2 == 0 && on_segment(p.a, p.b, q.b)) return true;
  if (o3 == 0 && on_segment(q.a, q.b, p.a)) return true;
  if (o4 == 0 && on_segment(q.a, q.b, p.b)) return true;
  return false;
}

bool inside_convex(const std::vector<Vec2>& polygon, Vec2 p) {
  if (polygon.size() < 3) return false;
  int sign = 0;
  for (std::size_t k = 0; k < polygon.size(); ++k) {
    const Vec2 a = polygon[k];
    const Vec2 b = polygon[(k + 1) % polygon.size()];
    const int o = orientation(a, b, p);
    if (o == 0) continue;
    if (sign == 0) sign = o;
    else if (o != sign) return false;
  }
  return true;
}

std::vector<Segment> polygon_edges(const std::vector<Vec2>& polygon) {
  std::vector<Segment> edges;
  if (polygon.size() < 2) return edges;
  edges.reserve(polygon.size());
  for (std::size_t k = 0; k < polygon.size(); ++k)
    edges.push_back({polygon[k], polygon[(k + 1) % polygon.size()]});
  return edges;
}

}  // namespace crush
