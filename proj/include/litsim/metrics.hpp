#pragma once

#include <array>
#include <set>
#include <string>
#include <vector>

#include "litsim/scenario.hpp"
#include "litsim/trace.hpp"

namespace litsim {

struct IdmParams {
  double desired_speed = 30.0;  // v0, m/s
  double time_headway = 1.5;    // T, s
  double max_accel = 1.4;       // a, m/s^2
  double comfort_decel = 2.0;   // b, m/s^2
  double min_gap = 2.0;         // s0, m
  double delta = 4.0;
};

/// Intelligent driver model acceleration clamped to [-8, 4]. A non-positive
/// gap returns -8; pass an infinite gap for free road.
double idm_accel(double speed, double lead_speed, double gap, const IdmParams& p = {});

/// Mean over ticks [sim_start, sim_start + 10 h) of the per-tick mean
/// position error over agents present in both trace and log. Returns 0 when
/// no agent pair is comparable.
double ade(const SimTrace& trace, const LogScenario& log, double horizon_s);

/// Closed polygon intersection test by edge crossing and containment.
bool polygons_intersect(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b);

/// Agents whose box touches another agent's box at any traced tick.
std::set<AgentId> colliding_agents(const SimTrace& trace);

std::set<AgentId> all_agents(const SimTrace& trace);
std::set<AgentId> taken_over_agents(const SimTrace& trace);

/// Mean travelled distance per agent.
double mean_progress(const SimTrace& trace);

struct ScenarioMetrics {
  std::string name;
  int agents = 0;
  int colliding = 0;
  int taken_over = 0;
  std::vector<double> ade;  // one entry per horizon
  double progress = 0.0;
  int infeasible_yields = 0;
};

struct MetricsReport {
  std::vector<double> horizons_s;
  std::vector<double> ade;
  double collision_rate = 0.0;  // colliding agents / agents
  double reactivity = 0.0;      // collision-free scenarios / scenarios
  double relevant_ratio = 0.0;  // distinct taken-over agents / agents
  double progress = 0.0;
  std::vector<ScenarioMetrics> scenarios;
};

ScenarioMetrics scenario_metrics(const SimTrace& trace, const LogScenario& log,
                                 const std::vector<double>& horizons_s, std::string name = {});

MetricsReport aggregate(std::vector<ScenarioMetrics> scenarios, const std::vector<double>& horizons_s);

}  // namespace litsim
