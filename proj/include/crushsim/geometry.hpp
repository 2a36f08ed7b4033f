#pragma once

#include <vector>

#include "crushsim/vec2.hpp"

namespace crush {

struct Segment {
  Vec2 a;
  Vec2 b;

  double length() const { return (b - a).norm(); }
  bool operator==(const Segment&) const = default;
};

struct Rect {
  Vec2 min;
  Vec2 max;

  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  bool contains(Vec2 p, double tol = 0.0) const {
    return p.x >= min.x - tol && p.x <= max.x + tol && p.y >= min.y - tol &&
           p.y <= max.y + tol;
  }
};

// Closest point on segment `s` to `p`.
Vec2 closest_point(const Segment& s, Vec2 p);

inline double distance(const Segment& s, Vec2 p) {
  return (p - closest_point(s, p)).norm();
}

// Proper or touching intersection of the closed segments `p` and `q`.
bool segments_intersect(const Segment& p, const Segment& q);

// Point-in-convex-polygon test; vertices in either winding order.
bool inside_convex(const std::vector<Vec2>& polygon, Vec2 p);

// Edges of a closed polygon.
std::vector<Segment> polygon_edges(const std::vector<Vec2>& polygon);

}  // namespace crush
