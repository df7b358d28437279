#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "litsim/scenario.hpp"
#include "litsim/vec2.hpp"

namespace litsim {

/// Rectangle with half_extents.x along the heading (half length) and
/// half_extents.y across it (half width).
struct OrientedBox {
  Vec2 center;
  Vec2 half_extents;
  double yaw = 0.0;
};

OrientedBox box_of(const AgentState& s, double inflation = 0.0);
OrientedBox box_at(Vec2 center, double yaw, double width, double length, double inflation = 0.0);
std::array<Vec2, 4> corners(const OrientedBox& b);

/// Separating-axis test on closed boxes: touching boxes overlap.
bool obb_overlap(const OrientedBox& a, const OrientedBox& b);

/// Smallest projected overlap over the four candidate axes; negative when
/// the boxes are separated.
double obb_penetration(const OrientedBox& a, const OrientedBox& b);

/// A single Bézier curve of arbitrary degree.
struct BezierCurve {
  std::vector<Vec2> control_points;

  int degree() const { return static_cast<int>(control_points.size()) - 1; }
  /// de Casteljau evaluation, t in [0, 1].
  Vec2 evaluate(double t) const;
  Vec2 derivative(double t) const;
};

/// Piecewise Bézier path parameterized on u in [0, 1], with each piece owning
/// a sub-interval proportional to its chord length.
class BezierPath {
 public:
  BezierPath() = default;
  explicit BezierPath(std::vector<BezierCurve> pieces);

  Vec2 evaluate(double u) const;
  Vec2 derivative(double u) const;
  /// Unit tangent at u.
  Vec2 tangent(double u) const;

  double length() const { return table_.empty() ? 0.0 : table_.back().second; }
  /// (parameter, cumulative arclength) pairs, strictly increasing in both.
  const std::vector<std::pair<double, double>>& arclength_table() const { return table_; }
  double parameter_at_distance(double s) const;
  Vec2 point_at_distance(double s) const;
  /// Arclength of the closest point on the path.
  double project(Vec2 p) const;

  const std::vector<BezierCurve>& pieces() const { return pieces_; }
  std::size_t piece_count() const { return pieces_.size(); }
  bool empty() const { return pieces_.empty(); }

 private:
  std::pair<std::size_t, double> locate(double u) const;

  std::vector<BezierCurve> pieces_;
  std::vector<double> breaks_;
  std::vector<std::pair<double, double>> table_;
  std::vector<Vec2> samples_;
};

/// Piecewise cubic fit through the first and last waypoint with C1 joins;
/// pieces are re-split until the path stays within `tolerance` of the
/// waypoint polyline.
BezierPath bezier_fit(const std::vector<Vec2>& waypoints, double tolerance = 0.5);

struct PolylineProjection {
  double s = 0.0;         // arclength of the foot point
  double d = 0.0;         // signed lateral offset, left positive
  double distance = 0.0;  // Euclidean distance to the foot point
  double heading = 0.0;   // direction of the segment holding the foot point
  std::size_t segment = 0;
  Vec2 foot;
};

double polyline_length(const std::vector<Vec2>& poly);
PolylineProjection project_to_polyline(const std::vector<Vec2>& poly, Vec2 p);
Vec2 polyline_point_at(const std::vector<Vec2>& poly, double s);
double polyline_heading_at(const std::vector<Vec2>& poly, double s);

/// Signed curvature of the circle through three points (left turn positive).
double three_point_curvature(Vec2 a, Vec2 b, Vec2 c);
/// Circumradius curvature with samples `spacing` apart around arclength s;
/// magnitudes under 1e-4 1/m are reported as 0.
double centerline_curvature(const std::vector<Vec2>& poly, double s, double spacing = 2.0);

struct LaneFrame {
  LaneId lane_id = 0;
  double s = 0.0;
  double d = 0.0;
  double heading_err = 0.0;
  double curvature = 0.0;
};

inline constexpr double kRoadSentinel = 100.0;

struct LaneProjection {
  LaneFrame frame;
  double lane_width = 0.0;
  double marker_left = 0.0;
  double marker_right = 0.0;
  double road_left = kRoadSentinel;
  double road_right = kRoadSentinel;
};

/// Nearest heading-compatible lane by perpendicular distance. Throws
/// Error(kNoLaneWithinRange) when nothing lies within 20 m.
LaneProjection project_to_lane(const HDMap& map, Vec2 p, double yaw);
std::optional<LaneProjection> try_project_to_lane(const HDMap& map, Vec2 p, double yaw);
/// Projection onto one specific lane without range gating.
LaneProjection project_onto(const HDMap& map, const Lane& lane, Vec2 p, double yaw);

}  // namespace litsim
