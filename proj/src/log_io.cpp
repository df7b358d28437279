#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "litsim/error.hpp"
#include "litsim/scenario.hpp"
#include "litsim/text_io.hpp"

namespace litsim {

namespace {

constexpr std::string_view kLogMagic = "# litsim-log 1";
constexpr std::string_view kLogColumns = "step,agent_id,x,y,yaw,speed,width,length";

nlohmann::json polyline_to_json(const std::vector<Vec2>& pts) {
  auto arr = nlohmann::json::array();
  for (const auto& p : pts) arr.push_back({p.x, p.y});
  return arr;
}

std::vector<Vec2> polyline_from_json(const nlohmann::json& j) {
  std::vector<Vec2> pts;
  for (const auto& p : j) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return pts;
}

std::string_view relation_name(LaneRelation r) {
  switch (r) {
    case LaneRelation::kSuccessor: return "successor";
    case LaneRelation::kLeft: return "left";
    case LaneRelation::kRight: return "right";
  }
  return "successor";
}

LaneRelation relation_from(const std::string& s) {
  if (s == "successor") return LaneRelation::kSuccessor;
  if (s == "left") return LaneRelation::kLeft;
  if (s == "right") return LaneRelation::kRight;
  throw Error(ErrorCode::kParse, "unknown lane relation '" + s + "'");
}

}  // namespace

void write_canonical_log(const LogScenario& log, std::ostream& sink) {
  sink << kLogMagic << " tick_hz=" << log.tick_hz << " duration=" << log.duration_steps << '\n'
       << kLogColumns << '\n';
  for (Tick t = 0; t < log.duration_steps; ++t) {
    for (const auto& [id, track] : log.tracks) {
      if (!track.covers(t)) continue;
      const auto& s = track.at(t);
      sink << t << ',' << id << ',' << text::format_double(s.x) << ',' << text::format_double(s.y)
           << ',' << text::format_double(s.yaw) << ',' << text::format_double(s.speed) << ','
           << text::format_double(s.width) << ',' << text::format_double(s.length) << '\n';
    }
  }
  sink.flush();
  if (!sink) throw Error(ErrorCode::kSinkFailure, "failed writing canonical log");
}

LogScenario read_canonical_log(std::istream& in, HDMap map) {
  std::string line;
  if (!std::getline(in, line) || !line.starts_with(kLogMagic)) {
    throw Error(ErrorCode::kParse, "missing canonical log header");
  }
  LogScenario log;
  log.map = std::move(map);
  for (auto field : text::split(std::string_view(line).substr(kLogMagic.size()), ' ')) {
    if (field.starts_with("tick_hz=")) {
      log.tick_hz = text::parse_field<int>(field.substr(8), "tick_hz");
    } else if (field.starts_with("duration=")) {
      log.duration_steps = text::parse_field<Tick>(field.substr(9), "duration");
    }
  }
  if (log.tick_hz != kTickHz) {
    throw Error(ErrorCode::kInvalidArgument, "only 10 Hz logs are supported");
  }
  if (!std::getline(in, line) || line != kLogColumns) {
    throw Error(ErrorCode::kParse, "missing canonical log column row");
  }
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 8) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected 8 fields");
    }
    const Tick t = text::parse_field<Tick>(f[0], "step");
    const AgentId id = text::parse_field<AgentId>(f[1], "agent_id");
    AgentState s;
    s.x = text::parse_field<double>(f[2], "x");
    s.y = text::parse_field<double>(f[3], "y");
    s.yaw = text::parse_field<double>(f[4], "yaw");
    s.speed = text::parse_field<double>(f[5], "speed");
    s.width = text::parse_field<double>(f[6], "width");
    s.length = text::parse_field<double>(f[7], "length");
    if (!is_valid(s)) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": invalid agent state");
    }
    auto [it, fresh] = log.tracks.try_emplace(id);
    auto& track = it->second;
    if (fresh) {
      track.id = id;
      track.first_step = t;
    } else if (t != track.last_step() + 1) {
      throw Error(ErrorCode::kNonMonotonicFrames,
                  "line " + std::to_string(line_no) + ": agent " + std::to_string(id) +
                      " step " + std::to_string(t) + " does not follow " +
                      std::to_string(track.last_step()));
    }
    track.states.push_back(s);
    if (t >= log.duration_steps) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": step beyond duration");
    }
  }
  return log;
}

void write_map_document(const HDMap& map, std::ostream& sink) {
  nlohmann::json doc;
  doc["lanes"] = nlohmann::json::array();
  for (const auto& lane : map.lanes) {
    doc["lanes"].push_back({{"id", lane.id},
                            {"centerline", polyline_to_json(lane.centerline)},
                            {"left", polyline_to_json(lane.left_marking)},
                            {"right", polyline_to_json(lane.right_marking)},
                            {"width", lane.width}});
  }
  doc["edges"] = nlohmann::json::array();
  for (const auto& edge : map.road_edges) doc["edges"].push_back(polyline_to_json(edge));
  doc["adjacency"] = nlohmann::json::array();
  for (const auto& a : map.adjacency) {
    doc["adjacency"].push_back(
        {{"from", a.from}, {"to", a.to}, {"relation", std::string(relation_name(a.relation))}});
  }
  sink << doc.dump(1) << '\n';
  if (!sink) throw Error(ErrorCode::kSinkFailure, "failed writing map document");
}

HDMap read_map_document(std::istream& in) {
  HDMap map;
  try {
    const auto doc = nlohmann::json::parse(in);
    for (const auto& l : doc.at("lanes")) {
      Lane lane;
      lane.id = l.at("id").get<LaneId>();
      lane.centerline = polyline_from_json(l.at("centerline"));
      if (l.contains("left")) lane.left_marking = polyline_from_json(l.at("left"));
      if (l.contains("right")) lane.right_marking = polyline_from_json(l.at("right"));
      lane.width = l.at("width").get<double>();
      map.lanes.push_back(std::move(lane));
    }
    if (doc.contains("edges")) {
      for (const auto& e : doc.at("edges")) map.road_edges.push_back(polyline_from_json(e));
    }
    if (doc.contains("adjacency")) {
      for (const auto& a : doc.at("adjacency")) {
        map.adjacency.push_back({a.at("from").get<LaneId>(), a.at("to").get<LaneId>(),
                                 relation_from(a.at("relation").get<std::string>())});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("map document: ") + e.what());
  }
  validate_map(map);
  return map;
}

}  // namespace litsim
