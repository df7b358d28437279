#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "litsim/geometry.hpp"
#include "litsim/scenario.hpp"

namespace litsim::testing {

/// NGSIM-style CSV text for one vehicle moving along +x at `speed_fps`.
inline std::string ngsim_rows(int vehicle, int first_frame, int n, double speed_fps,
                              double x0_ft = 0.0, double y_ft = 6.0) {
  std::ostringstream out;
  for (int i = 0; i < n; ++i) {
    out << vehicle << ',' << first_frame + i << ',' << x0_ft + speed_fps * 0.1 * i << ',' << y_ft
        << ",15,6," << speed_fps << ",1\n";
  }
  return out.str();
}

inline const char* kNgsimHeader = "Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Length,v_Width,v_Vel,Lane_ID\n";

/// Track moving at constant velocity from (x0, y0) with heading `yaw`.
inline TrackHistory straight_track(AgentId id, Tick first, int n, double x0, double y0, double yaw,
                                   double speed, double width = 1.8, double length = 4.5) {
  TrackHistory t;
  t.id = id;
  t.first_step = first;
  for (int i = 0; i < n; ++i) {
    const double d = speed * kTickSeconds * i;
    t.states.push_back(make_state(x0 + d * std::cos(yaw), y0 + d * std::sin(yaw), width, length,
                                  yaw, speed));
  }
  return t;
}

/// Point-sampling containment oracle: true when some sample of one box lies
/// inside the other, on a grid of pitch `step`.
inline bool sampled_overlap(const OrientedBox& a, const OrientedBox& b, double step = 0.02) {
  auto inside = [](const OrientedBox& box, Vec2 p) {
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const Vec2 d = p - box.center;
    const double u = d.x * c + d.y * s;
    const double v = -d.x * s + d.y * c;
    return std::abs(u) <= box.half_extents.x + 1e-12 && std::abs(v) <= box.half_extents.y + 1e-12;
  };
  auto probe = [&](const OrientedBox& from, const OrientedBox& into) {
    const double c = std::cos(from.yaw), s = std::sin(from.yaw);
    const int nu = static_cast<int>(std::ceil(2.0 * from.half_extents.x / step));
    const int nv = static_cast<int>(std::ceil(2.0 * from.half_extents.y / step));
    for (int i = 0; i <= nu; ++i) {
      const double u = -from.half_extents.x + 2.0 * from.half_extents.x * i / nu;
      for (int j = 0; j <= nv; ++j) {
        const double v = -from.half_extents.y + 2.0 * from.half_extents.y * j / nv;
        const Vec2 p{from.center.x + u * c - v * s, from.center.y + u * s + v * c};
        if (inside(into, p)) return true;
      }
    }
    return false;
  };
  return probe(a, b) || probe(b, a);
}

/// Distance between two boxes' closest corners/edges, computed from the
/// corner sets of both (0 when they overlap).
inline double boundary_gap(const OrientedBox& a, const OrientedBox& b) {
  auto seg_dist = [](Vec2 p, Vec2 q, Vec2 r) {
    const Vec2 d = r - q;
    const double len2 = d.x * d.x + d.y * d.y;
    double t = len2 > 0 ? ((p.x - q.x) * d.x + (p.y - q.y) * d.y) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = q.x + t * d.x - p.x, dy = q.y + t * d.y - p.y;
    return std::sqrt(dx * dx + dy * dy);
  };
  const auto ca = corners(a), cb = corners(b);
  double best = 1e300;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      best = std::min(best, seg_dist(ca[i], cb[j], cb[(j + 1) % 4]));
      best = std::min(best, seg_dist(cb[i], ca[j], ca[(j + 1) % 4]));
    }
  }
  return best;
}

using Quad = std::array<Vec2, 4>;

/// Corners of a width x length rectangle centered at c, counter-clockwise.
inline Quad quad(Vec2 c, double yaw, double width, double length) {
  const double cs = std::cos(yaw), sn = std::sin(yaw);
  const double hl = 0.5 * length, hw = 0.5 * width;
  const double u[4] = {hl, -hl, -hl, hl};
  const double v[4] = {hw, hw, -hw, -hw};
  Quad q;
  for (int i = 0; i < 4; ++i) q[i] = {c.x + u[i] * cs - v[i] * sn, c.y + u[i] * sn + v[i] * cs};
  return q;
}

/// Edge-crossing plus containment test on closed quads.
inline bool quads_overlap(const Quad& a, const Quad& b) {
  auto side = [](Vec2 p, Vec2 q, Vec2 r) { return (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x); };
  auto between = [](Vec2 p, Vec2 q, Vec2 r) {
    return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
           r.y <= std::max(p.y, q.y);
  };
  auto crosses = [&](Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
    const double d1 = side(q1, q2, p1), d2 = side(q1, q2, p2);
    const double d3 = side(p1, p2, q1), d4 = side(p1, p2, q2);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
    return (d1 == 0 && between(q1, q2, p1)) || (d2 == 0 && between(q1, q2, p2)) ||
           (d3 == 0 && between(p1, p2, q1)) || (d4 == 0 && between(p1, p2, q2));
  };
  auto inside = [&](const Quad& q, Vec2 p) {
    for (int i = 0; i < 4; ++i) {
      if (side(q[i], q[(i + 1) % 4], p) < 0) return false;
    }
    return true;
  };
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (crosses(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4])) return true;
    }
  }
  return inside(a, b[0]) || inside(b, a[0]);
}

/// Smallest corner-to-edge distance between two quads.
inline double quad_gap(const Quad& a, const Quad& b) {
  auto seg_dist = [](Vec2 p, Vec2 q, Vec2 r) {
    const double dx = r.x - q.x, dy = r.y - q.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - q.x) * dx + (p.y - q.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(q.x + t * dx - p.x, q.y + t * dy - p.y);
  };
  double best = 1e300;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      best = std::min(best, seg_dist(a[i], b[j], b[(j + 1) % 4]));
      best = std::min(best, seg_dist(b[i], a[j], a[(j + 1) % 4]));
    }
  }
  return best;
}

/// Distance from p to the polyline through `pts`.
inline double polyline_distance(const std::vector<Vec2>& pts, Vec2 p) {
  if (pts.size() == 1) return std::hypot(p.x - pts[0].x, p.y - pts[0].y);
  double best = 1e300;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const Vec2 a = pts[i], b = pts[i + 1];
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, std::hypot(a.x + t * dx - p.x, a.y + t * dy - p.y));
  }
  return best;
}

}  // namespace litsim::testing
