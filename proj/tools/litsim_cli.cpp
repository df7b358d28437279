// litsim: import, segment, simulate, train, evaluate and synthesize traffic logs.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "litsim/checkpoint.hpp"
#include "litsim/engine.hpp"
#include "litsim/error.hpp"
#include "litsim/metrics.hpp"
#include "litsim/policy_learning.hpp"
#include "litsim/predictor.hpp"
#include "litsim/scenario.hpp"
#include "litsim/synthetic.hpp"
#include "litsim/text_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace litsim;

namespace {

constexpr const char* kVersion = "1.0.0";
const std::vector<double> kHorizons = {5.0, 10.0, 15.0, 20.0, 25.0};

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingColumn:
    case ErrorCode::kNonMonotonicFrames:
    case ErrorCode::kFrameGap:
    case ErrorCode::kParse:
      return 2;
    case ErrorCode::kSinkFailure:
    case ErrorCode::kNonFiniteLoss:
    case ErrorCode::kNonFiniteGradient:
      return 1;
    default:
      return 3;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kParse, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
  if (!out) throw Error(ErrorCode::kSinkFailure, "cannot write " + path.string());
}

std::string hash_of(const std::string& bytes) { return text::hex64(text::fnv1a(bytes)); }

json input_entry(const std::string& path) {
  return {{"path", path}, {"fnv1a", hash_of(read_file(path))}};
}

HDMap load_map(const std::string& path) {
  std::istringstream in(read_file(path));
  HDMap map = read_map_document(in);
  validate_map(map);
  return map;
}

LogScenario load_log(const std::string& log_path, const std::string& map_path) {
  std::istringstream in(read_file(log_path));
  return read_canonical_log(in, map_path.empty() ? HDMap{} : load_map(map_path));
}

/// Collects written artifacts and their fingerprints for the manifest.
class ArtifactSet {
 public:
  explicit ArtifactSet(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  void write(const std::string& rel, const std::string& bytes) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    write_file(p, bytes);
    entries_.push_back({{"path", rel}, {"fnv1a", hash_of(bytes)}});
  }
  template <typename Fn>
  void write_stream(const std::string& rel, Fn&& fn) {
    std::ostringstream out;
    fn(out);
    write(rel, out.str());
  }
  const fs::path& root() const { return root_; }
  const json& entries() const { return entries_; }

 private:
  fs::path root_;
  json entries_ = json::array();
};

/// Every option of `cmd` with its effective value, keyed by long name.
json option_snapshot(const CLI::App& cmd) {
  json out = json::object();
  for (const CLI::Option* opt : cmd.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config" || name == "out-dir" || name == "out") continue;
    if (opt->get_expected_max() == 0) {
      out[name] = opt->count() > 0 ? "true" : "false";
    } else if (opt->count() > 0) {
      std::string joined;
      for (const auto& r : opt->reduced_results()) joined += (joined.empty() ? "" : ",") + r;
      out[name] = joined;
    } else {
      const std::string d = opt->get_default_str();
      out[name] = d == "{}" || d == "[]" ? "" : d;
    }
  }
  return out;
}

json make_manifest(const CLI::App& cmd, json inputs, json extra, const json& artifacts) {
  json m;
  m["tool"] = "litsim";
  m["version"] = kVersion;
  m["command"] = cmd.get_name();
  m["config"] = option_snapshot(cmd);
  json positionals = json::array();
  for (const CLI::Option* opt : cmd.get_options()) {
    if (opt->get_lnames().empty() && opt->get_positional() && opt->count() > 0) {
      positionals.push_back(opt->as<std::string>());
    }
  }
  m["positionals"] = positionals;
  m["inputs"] = std::move(inputs);
  for (auto& [k, v] : extra.items()) m[k] = v;
  m["artifacts"] = artifacts;
  return m;
}

/// Flat key=value lines become --key=value arguments placed before the
/// command-line flags, so flags win.
std::vector<std::string> config_args(const std::string& path) {
  std::vector<std::string> args;
  std::istringstream in(read_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kParse, path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value == "true") {
      args.push_back("--" + key);
    } else if (value != "false") {
      args.push_back("--" + key + "=" + value);
    }
  }
  return args;
}

// ---------------------------------------------------------------------------
// Options

struct SimOptions {
  std::string log, map, config;
  std::string out_dir;
  double roi = 30.0;
  std::string ego = "random";
  std::string ego_policy = "replay";
  std::string predictor = "kinematic";
  std::string background = "litsim";
  std::string predictor_checkpoint;
  std::string policy_checkpoint;
  std::uint64_t seed = 0;
  bool disable_takeover = false;
  int change_tick = 50;
  int direction = 1;
  std::vector<double> turn_goal;
  int segment = -1;
};

struct ImportOptions {
  std::string ngsim, map, out;
  double unit_scale = 0.3048;
};

struct SegmentOptions {
  std::string log, map, out_dir;
};

struct TrainOptions {
  std::string kind;
  std::string data;
  std::string out_dir;
  std::uint64_t seed = 0;
  int epochs = 20;
  int updates = 200;
  int expert_episodes = 100;
  double learning_rate = 0.0;
  int hidden = 0;
  bool free_running = false;
};

struct EvalOptions {
  std::string traces, log, map, out;
};

struct SynthOptions {
  std::string kind;
  std::string out_dir;
  std::uint64_t seed = 1;
  int count = 20;
};

// ---------------------------------------------------------------------------
// Commands

int cmd_import(const ImportOptions& o) {
  ColumnMap cols;
  cols.unit_scale = o.unit_scale;
  std::istringstream in(read_file(o.ngsim));
  const LogScenario log = parse_ngsim_csv(in, cols, o.map.empty() ? HDMap{} : load_map(o.map));
  std::ostringstream out;
  write_canonical_log(log, out);
  write_file(o.out, out.str());
  const std::size_t n = log.tracks.size();
  std::cout << n << (n == 1 ? " track, " : " tracks, ") << log.duration_steps << " steps\n";
  return 0;
}

int cmd_segment(const SegmentOptions& o) {
  const LogScenario log = load_log(o.log, o.map);
  const auto segs = segment_log(log);
  fs::create_directories(o.out_dir);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    std::ostringstream out;
    write_canonical_log(segs[i].log, out);
    char name[32];
    std::snprintf(name, sizeof(name), "seg_%03zu.csv", i);
    write_file(fs::path(o.out_dir) / name, out.str());
  }
  std::cout << segs.size() << " segment(s)\n";
  return 0;
}

std::string segment_dir(std::size_t i) {
  char name[32];
  std::snprintf(name, sizeof(name), "seg_%03zu", i);
  return name;
}

int cmd_simulate(const SimOptions& o, const CLI::App& cmd) {
  const LogScenario log = load_log(o.log, o.map);
  const auto segs = segment_log(log);
  if (segs.empty()) throw Error(ErrorCode::kTooShort, "log shorter than one segment");

  SimConfig cfg;
  cfg.roi_radius = o.roi;
  cfg.seed = o.seed;
  if (o.ego != "random") {
    try {
      cfg.ego = static_cast<AgentId>(std::stoll(o.ego));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "--ego expects an agent id or 'random'");
    }
  }
  cfg.ego_script.kind = parse_ego_policy_kind(o.ego_policy);
  cfg.ego_script.change_tick = o.change_tick;
  cfg.ego_script.direction = o.direction;
  if (!o.turn_goal.empty()) {
    if (o.turn_goal.size() != 2) throw Error(ErrorCode::kInvalidArgument, "--turn-goal expects x,y");
    cfg.ego_script.turn_goal = {o.turn_goal[0], o.turn_goal[1]};
  }
  cfg.predictor = parse_predictor_kind(o.predictor);
  cfg.background = o.disable_takeover ? BackgroundMode::kReplay : parse_background_mode(o.background);
  validate(cfg);

  json inputs = {{"log", input_entry(o.log)}, {"map", input_entry(o.map)}};
  std::optional<ModelParams> predictor;
  std::unique_ptr<LearnedTakeover> takeover;
  Models models;
  if (!o.predictor_checkpoint.empty()) {
    predictor = load_predictor(read_checkpoint(o.predictor_checkpoint));
    models.predictor = &*predictor;
    inputs["predictor_checkpoint"] = input_entry(o.predictor_checkpoint);
  }
  if (!o.policy_checkpoint.empty()) {
    takeover = std::make_unique<LearnedTakeover>(load_policy(read_checkpoint(o.policy_checkpoint)),
                                                 cfg.controller);
    models.takeover = takeover.get();
    inputs["policy_checkpoint"] = input_entry(o.policy_checkpoint);
  }

  std::vector<std::size_t> which;
  if (o.segment >= 0) {
    if (static_cast<std::size_t>(o.segment) >= segs.size()) {
      throw Error(ErrorCode::kInvalidArgument, "--segment " + std::to_string(o.segment) +
                                                   " out of range (" + std::to_string(segs.size()) +
                                                   " segments)");
    }
    which.push_back(static_cast<std::size_t>(o.segment));
  } else {
    for (std::size_t i = 0; i < segs.size(); ++i) which.push_back(i);
  }

  ArtifactSet out(o.out_dir);
  json seg_info = json::array();
  int collisions = 0;
  int takeovers = 0;
  for (std::size_t i : which) {
    const SimTrace trace = run_segment(segs[i], cfg, models);
    const std::string dir = segment_dir(i);
    out.write_stream(dir + "/trace.csv", [&](std::ostream& s) { write_trace(trace, s); });
    out.write_stream(dir + "/conflicts.csv", [&](std::ostream& s) { write_conflicts(trace, s); });
    out.write_stream(dir + "/audit.csv", [&](std::ostream& s) { write_audit(trace, s); });
    out.write_stream(dir + "/ego_divergence.csv",
                     [&](std::ostream& s) { write_ego_divergence(trace, s); });
    const auto colliding = colliding_agents(trace);
    const auto taken = taken_over_agents(trace);
    collisions += static_cast<int>(colliding.size());
    takeovers += static_cast<int>(taken.size());
    seg_info.push_back({{"index", i},
                        {"source_start", segs[i].source_start},
                        {"ego", trace.ego},
                        {"colliding_agents", colliding.size()},
                        {"taken_over_agents", taken.size()}});
  }
  const json manifest =
      make_manifest(cmd, std::move(inputs), {{"seeds", {{"run", o.seed}}}, {"segments", seg_info}},
                    out.entries());
  write_file(out.root() / "manifest.json", manifest.dump(1) + "\n");
  std::cout << which.size() << " segment(s) simulated, " << collisions << " colliding agent(s), "
            << takeovers << " taken-over agent(s)\n";
  return 0;
}

/// A directory holding log.csv and map.json, or whose subdirectories do.
std::vector<std::pair<std::string, std::string>> find_scenarios(const std::string& root) {
  std::vector<std::pair<std::string, std::string>> out;
  auto add = [&out](const fs::path& dir) {
    if (fs::exists(dir / "log.csv") && fs::exists(dir / "map.json")) {
      out.emplace_back((dir / "log.csv").string(), (dir / "map.json").string());
    }
  };
  add(root);
  if (out.empty() && fs::is_directory(root)) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory()) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) add(d);
  }
  if (out.empty()) throw Error(ErrorCode::kParse, "no log.csv/map.json pairs under " + root);
  return out;
}

int cmd_train(const TrainOptions& o, const CLI::App& cmd) {
  ArtifactSet out(o.out_dir);
  json inputs = json::object();
  json extra = {{"seeds", {{"run", o.seed}}}};
  if (o.kind == "predictor") {
    if (o.data.empty()) throw Error(ErrorCode::kInvalidArgument, "train predictor needs --data");
    std::vector<Segment> data;
    json listed = json::array();
    for (const auto& [log_path, map_path] : find_scenarios(o.data)) {
      for (auto& s : segment_log(load_log(log_path, map_path))) data.push_back(std::move(s));
      listed.push_back(input_entry(log_path));
      listed.push_back(input_entry(map_path));
    }
    inputs["data"] = listed;
    PredictorConfig cfg;
    cfg.epochs = o.epochs;
    if (o.learning_rate > 0.0) cfg.learning_rate = o.learning_rate;
    if (o.hidden > 0) cfg.encoder_hidden = cfg.decoder_hidden = o.hidden;
    cfg.teacher_forcing = !o.free_running;
    const PredictorTraining trained = train_predictor(data, cfg, o.seed);
    out.write("predictor.ckpt.json", serialize_checkpoint(predictor_checkpoint(trained.model, o.seed)));
    std::ostringstream curve;
    curve << "step,loss\n";
    for (std::size_t i = 0; i < trained.loss_curve.size(); ++i) {
      curve << i << ',' << text::format_double(trained.loss_curve[i]) << '\n';
    }
    out.write("loss_curve.csv", curve.str());
    std::cout << "predictor trained on " << data.size() << " segment(s), loss "
              << trained.loss_curve.front() << " -> " << trained.loss_curve.back() << '\n';
  } else if (o.kind == "policy") {
    EnvConfig env;
    const auto expert = generate_expert_data(env, o.expert_episodes, o.seed ^ 0x9e3779b97f4a7c15ULL);
    std::mt19937_64 rng(o.seed);
    PolicyParams init;
    init.init(rng);
    PpoConfig ppo;
    if (o.learning_rate > 0.0) ppo.learning_rate = o.learning_rate;
    PpoTrainer trainer(init, expert, ppo, RewardConfig{}, env, o.seed);
    for (int i = 0; i < o.updates; ++i) trainer.update();
    out.write("policy.ckpt.json", serialize_checkpoint(policy_checkpoint(trainer.params(), o.seed)));
    std::ostringstream curve;
    curve << "update,return,disc_accuracy\n";
    for (const auto& s : trainer.curve()) {
      curve << s.update << ',' << text::format_double(s.mean_return) << ','
            << text::format_double(s.disc_accuracy) << '\n';
    }
    out.write("training_curve.csv", curve.str());
    extra["expert_samples"] = expert.size();
    std::cout << "policy trained for " << o.updates << " update(s) on " << expert.size()
              << " expert samples\n";
  } else {
    throw Error(ErrorCode::kInvalidArgument, "train expects 'predictor' or 'policy'");
  }
  const json manifest = make_manifest(cmd, std::move(inputs), std::move(extra), out.entries());
  write_file(out.root() / "manifest.json", manifest.dump(1) + "\n");
  return 0;
}

json metrics_json(const MetricsReport& r) {
  json ade = json::object();
  for (std::size_t i = 0; i < r.horizons_s.size(); ++i) {
    ade[text::format_double(r.horizons_s[i])] = r.ade[i];
  }
  int agents = 0, colliding = 0, taken = 0;
  for (const auto& s : r.scenarios) {
    agents += s.agents;
    colliding += s.colliding;
    taken += s.taken_over;
  }
  return {{"ade_at_s", ade},
          {"collision_rate", r.collision_rate},
          {"reactivity_rate", r.reactivity},
          {"relevant_ratio", r.relevant_ratio},
          {"progress_m", r.progress},
          {"counts",
           {{"scenarios", r.scenarios.size()},
            {"agents", agents},
            {"colliding_agents", colliding},
            {"taken_over_agents", taken}}}};
}

int cmd_evaluate(const EvalOptions& o, const CLI::App& cmd) {
  const LogScenario log = load_log(o.log, o.map);
  const auto segs = segment_log(log);
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(o.traces)) {
    if (e.is_directory() && e.path().filename().string().starts_with("seg_")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw Error(ErrorCode::kParse, "no seg_* trace directories under " + o.traces);

  json inputs = {{"log", input_entry(o.log)}, {"map", input_entry(o.map)}};
  json trace_inputs = json::array();
  std::vector<ScenarioMetrics> per;
  for (const auto& d : dirs) {
    const std::string name = d.filename().string();
    std::size_t index = 0;
    try {
      index = std::stoul(name.substr(4));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, "cannot read a segment index from " + name);
    }
    if (index >= segs.size()) {
      throw Error(ErrorCode::kLengthMismatch, name + " has no matching segment in the log");
    }
    const std::string trace_path = (d / "trace.csv").string();
    std::istringstream in(read_file(trace_path));
    const SimTrace trace = read_trace(in);
    std::istringstream audit_in(read_file((d / "audit.csv").string()));
    SimTrace full = trace;
    full.audit = read_audit(audit_in);
    per.push_back(scenario_metrics(full, segs[index].log, kHorizons, name));
    trace_inputs.push_back(input_entry(trace_path));
  }
  inputs["traces"] = trace_inputs;
  const MetricsReport report = aggregate(per, kHorizons);

  std::ostringstream breakdown;
  breakdown << "scenario,agents,colliding,taken_over,progress,infeasible_yields";
  for (double h : kHorizons) breakdown << ",ade_" << text::format_double(h);
  breakdown << '\n';
  for (const auto& s : report.scenarios) {
    breakdown << s.name << ',' << s.agents << ',' << s.colliding << ',' << s.taken_over << ','
              << text::format_double(s.progress) << ',' << s.infeasible_yields;
    for (double a : s.ade) breakdown << ',' << text::format_double(a);
    breakdown << '\n';
  }
  const fs::path out_path(o.out);
  const fs::path breakdown_path = out_path.parent_path() / (out_path.stem().string() + "_scenarios.csv");
  if (!out_path.parent_path().empty()) fs::create_directories(out_path.parent_path());
  write_file(breakdown_path, breakdown.str());

  json doc;
  doc["metrics"] = metrics_json(report);
  json artifacts = json::array();
  artifacts.push_back({{"path", breakdown_path.filename().string()}, {"fnv1a", hash_of(breakdown.str())}});
  doc["manifest"] = make_manifest(cmd, std::move(inputs), json::object(), artifacts);
  write_file(out_path, doc.dump(1) + "\n");
  std::cout << "collision_rate " << report.collision_rate << " reactivity " << report.reactivity
            << " relevant_ratio " << report.relevant_ratio << " ade@25s " << report.ade.back()
            << '\n';
  return 0;
}

void write_scenario(const fs::path& dir, const synth::Scenario& s) {
  fs::create_directories(dir);
  std::ostringstream log, map;
  write_canonical_log(s.segment.log, log);
  write_map_document(s.segment.log.map, map);
  write_file(dir / "log.csv", log.str());
  write_file(dir / "map.json", map.str());
  std::ostringstream cfg;
  cfg << "# " << s.name << "\n"
      << "ego = " << s.ego << "\n"
      << "ego-policy = " << to_string(s.script.kind) << "\n"
      << "change-tick = " << s.script.change_tick << "\n"
      << "direction = " << s.script.direction << "\n";
  if (s.script.kind == EgoPolicyKind::kUnprotectedLeft) {
    cfg << "turn-goal = " << text::format_double(s.script.turn_goal.x) << ','
        << text::format_double(s.script.turn_goal.y) << "\n";
  }
  write_file(dir / "scenario.cfg", cfg.str());
}

int cmd_synth(const SynthOptions& o) {
  const fs::path root(o.out_dir);
  std::vector<synth::Scenario> corpus;
  if (o.kind == "cut-in") {
    synth::CutInParams p;
    p.seed = o.seed;
    write_scenario(root, synth::cut_in(p));
    std::cout << "1 scenario\n";
    return 0;
  }
  if (o.kind == "unprotected-left") {
    synth::LeftTurnParams p;
    p.seed = o.seed;
    write_scenario(root, synth::unprotected_left(p));
    std::cout << "1 scenario\n";
    return 0;
  }
  if (o.kind == "conflict-corpus") {
    corpus = synth::conflict_corpus(o.count, o.seed);
  } else if (o.kind == "quiet-corpus") {
    corpus = synth::quiet_corpus(o.count, o.seed);
  } else if (o.kind == "constant-velocity") {
    int i = 0;
    for (auto& seg : synth::constant_velocity_segments(o.count, o.seed)) {
      synth::Scenario s;
      s.name = "constant_velocity_" + std::to_string(i++);
      s.ego = seg.log.tracks.begin()->first;
      s.segment = std::move(seg);
      corpus.push_back(std::move(s));
    }
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown synth kind '" + o.kind + "'");
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scenario_%03zu", i);
    write_scenario(root / name, corpus[i]);
  }
  std::cout << corpus.size() << " scenarios\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run(std::vector<std::string> args);

int cmd_rerun(const std::string& manifest_path, const std::string& out_dir) {
  const json m = json::parse(read_file(manifest_path));
  const json& root = m.contains("manifest") ? m.at("manifest") : m;
  std::vector<std::string> args = {"litsim", root.at("command").get<std::string>()};
  for (const auto& p : root.value("positionals", json::array())) args.push_back(p.get<std::string>());
  for (const auto& [key, value] : root.at("config").items()) {
    const std::string v = value.get<std::string>();
    if (v == "true") {
      args.push_back("--" + key);
    } else if (v != "false" && !v.empty()) {
      args.push_back("--" + key + "=" + v);
    }
  }
  args.push_back(root.at("command") == "evaluate" ? "--out=" + out_dir : "--out-dir=" + out_dir);
  return run(std::move(args));
}

int run(std::vector<std::string> args) {
  CLI::App app{"LitSim closed-loop traffic simulation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

  ImportOptions imp;
  auto* c_import = app.add_subcommand("import", "Convert an NGSIM CSV into a canonical log");
  c_import->add_option("--ngsim", imp.ngsim, "NGSIM trajectory CSV")->required()->check(CLI::ExistingFile);
  c_import->add_option("--map", imp.map, "Map document")->check(CLI::ExistingFile);
  c_import->add_option("--out", imp.out, "Canonical log to write")->required();
  c_import->add_option("--unit-scale", imp.unit_scale, "Metres per source length unit");

  SegmentOptions sg;
  auto* c_segment = app.add_subcommand("segment", "Split a log into 28 s segments");
  c_segment->add_option("--log", sg.log)->required()->check(CLI::ExistingFile);
  c_segment->add_option("--map", sg.map)->check(CLI::ExistingFile);
  c_segment->add_option("--out-dir", sg.out_dir)->required();

  SimOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Run the closed-loop engine on every segment");
  c_sim->add_option("--config", sim.config, "Flat key=value file; flags override it");
  c_sim->add_option("--log", sim.log)->required()->check(CLI::ExistingFile);
  c_sim->add_option("--map", sim.map)->required()->check(CLI::ExistingFile);
  c_sim->add_option("--out-dir", sim.out_dir)->required();
  c_sim->add_option("--roi", sim.roi, "ROI radius around the ego, m");
  c_sim->add_option("--ego", sim.ego, "Ego agent id or 'random'");
  c_sim->add_option("--ego-policy", sim.ego_policy, "replay | lane-change | unprotected-left | idm");
  c_sim->add_option("--predictor", sim.predictor, "replay | kinematic | learned");
  c_sim->add_option("--predictor-checkpoint", sim.predictor_checkpoint)->check(CLI::ExistingFile);
  c_sim->add_option("--policy-checkpoint", sim.policy_checkpoint, "Learned takeover policy")
      ->check(CLI::ExistingFile);
  c_sim->add_option("--background", sim.background, "litsim | replay | idm");
  c_sim->add_option("--seed", sim.seed);
  c_sim->add_flag("--disable-takeover", sim.disable_takeover, "Pure log replay baseline");
  c_sim->add_option("--change-tick", sim.change_tick, "Lane-change start tick");
  c_sim->add_option("--direction", sim.direction, "+1 left, -1 right");
  c_sim->add_option("--turn-goal", sim.turn_goal, "x,y end of the left turn")->delimiter(',')->expected(2);
  c_sim->add_option("--segment", sim.segment, "Only this segment index");

  TrainOptions tr;
  auto* c_train = app.add_subcommand("train", "Train the predictor or the takeover policy");
  c_train->add_option("kind", tr.kind, "predictor | policy")->required();
  c_train->add_option("--data", tr.data, "Scenario directory or corpus of them");
  c_train->add_option("--out-dir", tr.out_dir)->required();
  c_train->add_option("--seed", tr.seed);
  c_train->add_option("--epochs", tr.epochs, "Predictor epochs");
  c_train->add_option("--updates", tr.updates, "Policy updates");
  c_train->add_option("--expert-episodes", tr.expert_episodes);
  c_train->add_option("--learning-rate", tr.learning_rate, "0 keeps the model default");
  c_train->add_option("--hidden", tr.hidden, "Predictor GRU width, 0 keeps the default");
  c_train->add_flag("--free-running", tr.free_running,
                    "Feed the predictor decoder its own outputs during training");

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score simulated traces against their log");
  c_eval->add_option("--traces", ev.traces, "Output directory of simulate")->required()
      ->check(CLI::ExistingDirectory);
  c_eval->add_option("--log", ev.log)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--map", ev.map)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--out", ev.out, "Report document")->required();

  SynthOptions sy;
  auto* c_synth = app.add_subcommand("synth", "Write synthetic scenarios");
  c_synth->add_option("kind", sy.kind,
                      "cut-in | unprotected-left | conflict-corpus | quiet-corpus | constant-velocity")
      ->required();
  c_synth->add_option("--out-dir", sy.out_dir)->required();
  c_synth->add_option("--seed", sy.seed);
  c_synth->add_option("--count", sy.count, "Corpus size");

  std::string manifest, rerun_out;
  auto* c_rerun = app.add_subcommand("rerun", "Repeat the command recorded in a manifest");
  c_rerun->add_option("--manifest", manifest, "manifest.json or evaluate report")->required()
      ->check(CLI::ExistingFile);
  c_rerun->add_option("--out", rerun_out, "Output directory (or report path)")->required();

  // Config-file values go first so that explicit flags take precedence.
  for (std::size_t i = 1; i + 1 < args.size(); ++i) {
    std::string value;
    if (args[i] == "--config") {
      value = args[i + 1];
    } else if (args[i].starts_with("--config=")) {
      value = args[i].substr(9);
    } else {
      continue;
    }
    const auto extra = config_args(value);
    auto at = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a == "simulate"; });
    if (at != args.end()) args.insert(at + 1, extra.begin(), extra.end());
    break;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }

  if (c_import->parsed()) return cmd_import(imp);
  if (c_segment->parsed()) return cmd_segment(sg);
  if (c_sim->parsed()) return cmd_simulate(sim, *c_sim);
  if (c_train->parsed()) return cmd_train(tr, *c_train);
  if (c_eval->parsed()) return cmd_evaluate(ev, *c_eval);
  if (c_synth->parsed()) return cmd_synth(sy);
  if (c_rerun->parsed()) return cmd_rerun(manifest, rerun_out);
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(std::vector<std::string>(argv, argv + argc));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
