#include "litsim/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>

#include "litsim/error.hpp"

namespace litsim {

AgentState make_state(double x, double y, double width, double length, double yaw, double speed) {
  AgentState s{x, y, width, length, wrap_angle(yaw), speed};
  if (!is_valid(s)) {
    throw Error(ErrorCode::kInvalidArgument, "agent state violates extent/speed invariants");
  }
  return s;
}

bool is_valid(const AgentState& s) {
  return std::isfinite(s.x) && std::isfinite(s.y) && s.width > 0.0 && s.length > 0.0 &&
         s.speed >= 0.0 && s.yaw >= -std::numbers::pi && s.yaw < std::numbers::pi;
}

bool is_physically_plausible(const TrackHistory& track, double slack) {
  for (std::size_t i = 1; i < track.states.size(); ++i) {
    const auto& a = track.states[i - 1];
    const auto& b = track.states[i];
    const double step = distance(a.position(), b.position());
    if (step > std::max(a.speed, b.speed) * kTickSeconds + slack) return false;
  }
  return true;
}

const Lane* HDMap::find_lane(LaneId id) const {
  auto it = std::find_if(lanes.begin(), lanes.end(), [id](const Lane& l) { return l.id == id; });
  return it == lanes.end() ? nullptr : &*it;
}

void validate_map(const HDMap& map) {
  std::set<LaneId> ids;
  for (const auto& lane : map.lanes) {
    if (!ids.insert(lane.id).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate lane id " + std::to_string(lane.id));
    }
    if (lane.centerline.size() < 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "lane " + std::to_string(lane.id) + " centerline needs >= 2 points");
    }
    for (std::size_t i = 1; i < lane.centerline.size(); ++i) {
      if (!(distance(lane.centerline[i - 1], lane.centerline[i]) > 0.0)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "lane " + std::to_string(lane.id) + " has a zero-length centerline segment");
      }
    }
    if (!(lane.width > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "lane " + std::to_string(lane.id) + " width <= 0");
    }
  }
  for (const auto& e : map.adjacency) {
    if (!ids.contains(e.from) || !ids.contains(e.to)) {
      throw Error(ErrorCode::kInvalidArgument, "adjacency references unknown lane " +
                                                   std::to_string(e.from) + "->" +
                                                   std::to_string(e.to));
    }
  }
}

std::vector<double> derive_yaw(const std::vector<Vec2>& positions) {
  constexpr double kMinDisplacement = 0.05;
  const std::size_t n = positions.size();
  std::vector<double> yaw(n, 0.0);
  std::vector<bool> valid(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    const std::size_t hi = std::min(n - 1, i + 1);
    const Vec2 d = positions[hi] - positions[lo];
    if (d.norm() >= kMinDisplacement) {
      yaw[i] = wrap_angle(std::atan2(d.y, d.x));
      valid[i] = true;
    }
  }
  auto first = std::find(valid.begin(), valid.end(), true);
  if (first == valid.end()) return yaw;
  const double lead = yaw[static_cast<std::size_t>(first - valid.begin())];
  double held = lead;
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i]) {
      held = yaw[i];
    } else {
      yaw[i] = held;
    }
  }
  return yaw;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no, const std::string& column) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ", column " + column +
                                       ": cannot parse '" + std::string(field) + "'");
  }
  return value;
}

struct RawRow {
  Tick frame;
  double x, y, length, width, speed;
};

}  // namespace

LogScenario parse_ngsim_csv(std::istream& in, const ColumnMap& columns, HDMap map) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kMissingColumn, "empty input, header row absent");

  const auto header = split_csv(line);
  const std::vector<std::string> wanted = {columns.vehicle_id, columns.frame,  columns.local_x,
                                           columns.local_y,    columns.length, columns.width,
                                           columns.velocity,   columns.lane_id};
  std::vector<std::size_t> index(wanted.size());
  std::string missing;
  for (std::size_t k = 0; k < wanted.size(); ++k) {
    auto it = std::find(header.begin(), header.end(), wanted[k]);
    if (it == header.end()) {
      missing += (missing.empty() ? "" : ", ") + wanted[k];
    } else {
      index[k] = static_cast<std::size_t>(it - header.begin());
    }
  }
  if (!missing.empty()) throw Error(ErrorCode::kMissingColumn, "missing column(s): " + missing);
  const std::size_t needed = *std::max_element(index.begin(), index.end()) + 1;

  std::map<AgentId, std::vector<RawRow>> rows;
  Tick min_frame = std::numeric_limits<Tick>::max();
  std::size_t line_no = 1;
  const double k = columns.unit_scale;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() < needed) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected at least " +
                                         std::to_string(needed) + " fields");
    }
    const auto id = parse_number<AgentId>(f[index[0]], line_no, wanted[0]);
    RawRow r{};
    r.frame = parse_number<Tick>(f[index[1]], line_no, wanted[1]);
    r.x = parse_number<double>(f[index[2]], line_no, wanted[2]) * k;
    r.y = parse_number<double>(f[index[3]], line_no, wanted[3]) * k;
    r.length = parse_number<double>(f[index[4]], line_no, wanted[4]) * k;
    r.width = parse_number<double>(f[index[5]], line_no, wanted[5]) * k;
    r.speed = parse_number<double>(f[index[6]], line_no, wanted[6]) * k;
    (void)parse_number<std::int64_t>(f[index[7]], line_no, wanted[7]);
    if (r.speed > 70.0) {
      throw Error(ErrorCode::kUnitRange,
                  "line " + std::to_string(line_no) + ": speed " + std::to_string(r.speed) +
                      " m/s after conversion exceeds 70 m/s; check the unit scale (feet vs meters)");
    }
    if (r.speed < 0.0 || !(r.length > 0.0) || !(r.width > 0.0)) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) +
                                         ": non-positive extent or negative speed");
    }
    auto& list = rows[id];
    if (!list.empty() && r.frame <= list.back().frame) {
      throw Error(ErrorCode::kNonMonotonicFrames, "line " + std::to_string(line_no) + ": vehicle " +
                                                      std::to_string(id) + " frame " +
                                                      std::to_string(r.frame) + " after " +
                                                      std::to_string(list.back().frame));
    }
    if (!list.empty() && r.frame != list.back().frame + 1) {
      throw Error(ErrorCode::kFrameGap, "line " + std::to_string(line_no) + ": vehicle " +
                                            std::to_string(id) + " skips from frame " +
                                            std::to_string(list.back().frame) + " to " +
                                            std::to_string(r.frame) + "; logs must be 10 Hz");
    }
    list.push_back(r);
    min_frame = std::min(min_frame, r.frame);
  }

  LogScenario log;
  log.map = std::move(map);
  for (auto& [id, list] : rows) {
    TrackHistory track;
    track.id = id;
    track.first_step = list.front().frame - min_frame;
    std::vector<Vec2> pts;
    pts.reserve(list.size());
    for (const auto& r : list) pts.push_back({r.x, r.y});
    const auto yaw = derive_yaw(pts);
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto& r = list[i];
      track.states.push_back(make_state(r.x, r.y, r.width, r.length, yaw[i], r.speed));
    }
    log.duration_steps = std::max(log.duration_steps, track.last_step() + 1);
    log.tracks.emplace(id, std::move(track));
  }
  return log;
}

Segment make_segment(const LogScenario& log, Tick start) {
  if (start < 0 || start + kSegmentSteps > log.duration_steps) {
    throw Error(ErrorCode::kTooShort, "segment [" + std::to_string(start) + ", " +
                                          std::to_string(start + kSegmentSteps) +
                                          ") exceeds log duration " +
                                          std::to_string(log.duration_steps));
  }
  Segment seg;
  seg.source_start = start;
  seg.log.map = log.map;
  seg.log.tick_hz = log.tick_hz;
  seg.log.duration_steps = kSegmentSteps;
  const Tick end = start + kSegmentSteps;
  for (const auto& [id, track] : log.tracks) {
    const Tick lo = std::max(start, track.first_step);
    const Tick hi = std::min(end - 1, track.last_step());
    if (lo > hi) continue;
    TrackHistory t;
    t.id = id;
    t.first_step = lo - start;
    t.states.assign(track.states.begin() + (lo - track.first_step),
                    track.states.begin() + (hi - track.first_step) + 1);
    // Anything not present from tick 0 lacks a full history window when it
    // first becomes simulated.
    if (t.first_step > 0) seg.late_entrants.insert(id);
    seg.log.tracks.emplace(id, std::move(t));
  }
  return seg;
}

std::vector<Segment> segment_log(const LogScenario& log) {
  if (log.duration_steps < kSegmentSteps) {
    throw Error(ErrorCode::kTooShort, "log duration " + std::to_string(log.duration_steps) +
                                          " < " + std::to_string(kSegmentSteps) + " steps");
  }
  std::vector<Segment> out;
  for (Tick start = 0; start + kSegmentSteps <= log.duration_steps; start += kSegmentSteps) {
    out.push_back(make_segment(log, start));
  }
  return out;
}

}  // namespace litsim
