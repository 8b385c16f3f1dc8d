// offload: command line front end for trace generation, experiments, sweeps,
// scenario switches and report aggregation.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "offload/harness.hpp"

using namespace offload;
namespace fs = std::filesystem;

namespace {

// Experiment flags shared by run, sweep and switch. Explicit flags win over the config file.
struct ExperimentFlags {
  std::string config_file;
  std::vector<std::string> settings;  // key=value
  std::map<std::string, std::string> direct;

  void attach(CLI::App* app, const std::string& prefix = "") {
    app->add_option("--" + prefix + "config", config_file, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--" + prefix + "set", settings, "override any config key, e.g. --set gamma=0.9");
    for (const char* key : {"scenario", "trace", "deadline", "control_step", "controller", "n_runs", "seed",
                            "interested_fraction", "droid_w", "droid_c", "bins"}) {
      std::string flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      app->add_option_function<std::string>("--" + prefix + flag,
                                            [this, key](const std::string& v) { direct[key] = v; });
    }
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c;
    if (!config_file.empty()) c = load_config(config_file);
    auto apply = [&](const std::string& k, const std::string& v) {
      if (!apply_setting(c, k, v)) throw ValidationError("unknown config key '" + k + "'");
    };
    for (const auto& [k, v] : direct) apply(k, v);
    for (const auto& kv : settings) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
      apply(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return c;
  }
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

void print_summary(const std::string& label, const std::vector<RunReport>& runs) {
  std::vector<double> means, lasts;
  for (const auto& r : runs) {
    if (!r.error.empty()) {
      std::cerr << "run " << r.run << " failed: " << r.error << "\n";
      continue;
    }
    means.push_back(r.mean_ratio());
    lasts.push_back(r.last_quarter_mean());
  }
  const auto m = summarize(means), l = summarize(lasts);
  std::cout << std::fixed << std::setprecision(4) << label << "  mean ratio " << m.mean << " +- " << m.std
            << "  last quarter " << l.mean << " +- " << l.std << "  (" << means.size() << " runs)\n";
}

int cmd_gen_trace(const std::string& preset, std::uint64_t seed, const std::string& out,
                  const std::map<std::string, double>& overrides) {
  MobilityConfig m = mobility_preset(preset);
  for (const auto& [k, v] : overrides) {
    if (k == "area-side") m.area_side = v;
    else if (k == "grid-rows") m.grid_rows = static_cast<std::uint32_t>(v);
    else if (k == "grid-cols") m.grid_cols = static_cast<std::uint32_t>(v);
    else if (k == "nodes") m.n_nodes = static_cast<std::uint32_t>(v);
    else if (k == "communities") m.n_communities = static_cast<std::uint32_t>(v);
    else if (k == "travellers") m.n_travellers = static_cast<std::uint32_t>(v);
    else if (k == "speed-min") m.speed_min = v;
    else if (k == "speed-max") m.speed_max = v;
    else if (k == "tx-range") m.tx_range = v;
    else if (k == "duration") m.sim_duration = v;
    else if (k == "sample-interval") m.sample_interval = v;
  }
  const auto trace = generate_trace(m, seed);
  save_trace(trace, out);
  std::cout << out << ": " << trace.events.size() << " contacts, " << trace.n_nodes << " nodes, "
            << format_seconds(trace.duration) << " s (" << trace.provenance << ")\n";
  return 0;
}

int cmd_run(const ExperimentConfig& c) {
  TraceCache cache;
  const auto rep = run_experiment(c, &cache);
  write_report(c.output_dir, c, rep.runs);
  print_summary(std::string(to_string(c.controller)), rep.runs);
  std::cout << "wrote " << c.output_dir << "\n";
  return 0;
}

int cmd_sweep(ExperimentConfig base, const std::vector<double>& windows, const std::vector<double>& clips,
              std::vector<double> deadlines, std::vector<std::string> controllers) {
  TraceCache cache;
  if (deadlines.empty()) deadlines = {base.deadline};
  if (controllers.empty()) controllers = {"DR"};
  fs::create_directories(base.output_dir);
  std::vector<SweepPoint> droid_points;
  std::ofstream ctrl(fs::path(base.output_dir) / "controllers.csv");
  ctrl << "scenario,deadline,controller,mean_offloading_ratio,std,last_quarter_mean\n";
  for (double d : deadlines) {
    ExperimentConfig c = base;
    c.deadline = d;
    if (std::abs(std::remainder(d, c.control_step)) > 1e-9) c.control_step = d <= 150.0 ? 2.0 : 5.0;
    for (const auto& name : controllers) {
      c.controller = parse_controller(name);
      if (c.controller == ControllerKind::DR) {
        auto points = sweep_droid(c, windows, clips, &cache);
        const auto& best = best_point(points);
        std::cout << std::fixed << std::setprecision(4) << best.scenario << " @" << format_seconds(d)
                  << " s: best W=" << format_seconds(best.W) << " c=" << format_seconds(best.c) << " ratio "
                  << best.ratio.mean << " +- " << best.ratio.std << "\n";
        droid_points.insert(droid_points.end(), points.begin(), points.end());
      } else {
        const auto rep = run_experiment(c, &cache);
        ctrl << (c.trace_path.empty() ? c.scenario : c.trace_path) << ',' << format_seconds(d) << ','
             << to_string(c.controller) << ',' << format_seconds(rep.ratio.mean) << ','
             << format_seconds(rep.ratio.std) << ',' << format_seconds(rep.last_quarter.mean) << '\n';
        print_summary(std::string(to_string(c.controller)) + " @" + format_seconds(d) + " s", rep.runs);
      }
    }
  }
  std::ofstream out(fs::path(base.output_dir) / "sweep.csv");
  write_sweep_csv(out, droid_points);
  std::cout << "wrote " << base.output_dir << "\n";
  return 0;
}

int cmd_switch(const ExperimentConfig& a, ExperimentConfig b) {
  b.controller = a.controller;
  TraceCache cache;
  const auto runs = parallel_runs(a.n_runs, [&](std::uint32_t run) {
    try {
      return dynamic_switch_run(a, b, run, &cache);
    } catch (const std::exception& e) {
      RunReport failed;
      failed.run = run;
      failed.controller = a.controller;
      failed.error = e.what();
      return failed;
    }
  });
  write_report(a.output_dir, a, runs);
  std::vector<double> p1, p2_first, p2_last;
  for (const auto& r : runs) {
    if (!r.error.empty()) {
      std::cerr << "run " << r.run << " failed: " << r.error << "\n";
      continue;
    }
    p1.push_back(r.mean_ratio(0, r.phase_split));
    p2_first.push_back(r.first_quarter_mean(r.phase_split));
    p2_last.push_back(r.last_quarter_mean(r.phase_split));
  }
  std::cout << std::fixed << std::setprecision(4) << to_string(a.controller) << "  phase 1 mean "
            << summarize(p1).mean << "  phase 2 first quarter " << summarize(p2_first).mean << "  last quarter "
            << summarize(p2_last).mean << "\n";
  std::cout << "wrote " << a.output_dir << "\n";
  return 0;
}

// Aggregates results.csv files: per (controller, phase) statistics and a
// moving-average curve averaged over runs.
int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir, std::size_t window) {
  struct Row {
    int run, phase;
    std::string controller;
    double ratio;
  };
  std::vector<Row> rows;
  for (const auto& in : inputs) {
    const fs::path path = fs::is_directory(in) ? fs::path(in) / "results.csv" : fs::path(in);
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string line;
    std::getline(f, line);
    const auto header = split(line, ',');
    auto col = [&](const std::string& name) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw std::runtime_error(path.string() + ": missing column " + name);
      return static_cast<std::size_t>(it - header.begin());
    };
    const auto c_run = col("run"), c_phase = col("phase"), c_ctrl = col("controller"), c_ratio = col("offloading_ratio");
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto cells = split(line, ',');
      if (cells.size() != header.size()) throw ParseError(line_no, path.string() + ": wrong column count");
      rows.push_back({std::stoi(cells[c_run]), std::stoi(cells[c_phase]), cells[c_ctrl], std::stod(cells[c_ratio])});
    }
  }

  // (controller, phase) -> run -> ratios in content order
  std::map<std::pair<std::string, int>, std::map<int, std::vector<double>>> series;
  for (const auto& r : rows) series[{r.controller, r.phase}][r.run].push_back(r.ratio);

  fs::create_directories(out_dir);
  std::ofstream summary(fs::path(out_dir) / "report_summary.csv");
  std::ofstream curve(fs::path(out_dir) / "report_curve.csv");
  summary << "controller,phase,runs,contents_per_run,mean_ratio,std,first_quarter_mean,last_quarter_mean\n";
  curve << "controller,phase,position,moving_average\n";
  std::cout << std::left << std::setw(11) << "controller" << std::setw(7) << "phase" << std::setw(6) << "runs"
            << std::setw(10) << "mean" << std::setw(10) << "std" << std::setw(10) << "first q" << "last q\n";
  for (const auto& [key, by_run] : series) {
    std::vector<double> means, firsts, lasts;
    std::size_t shortest = std::numeric_limits<std::size_t>::max();
    for (const auto& [run, ratios] : by_run) {
      RunReport tmp;
      for (double v : ratios) tmp.results.push_back(ContentResult{.ratio = v});
      means.push_back(tmp.mean_ratio());
      firsts.push_back(tmp.first_quarter_mean());
      lasts.push_back(tmp.last_quarter_mean());
      shortest = std::min(shortest, ratios.size());
    }
    const auto m = summarize(means);
    summary << key.first << ',' << key.second << ',' << by_run.size() << ',' << shortest << ','
            << format_seconds(m.mean) << ',' << format_seconds(m.std) << ',' << format_seconds(summarize(firsts).mean)
            << ',' << format_seconds(summarize(lasts).mean) << '\n';
    std::cout << std::setw(11) << key.first << std::setw(7) << key.second << std::setw(6) << by_run.size()
              << std::fixed << std::setprecision(4) << std::setw(10) << m.mean << std::setw(10) << m.std
              << std::setw(10) << summarize(firsts).mean << summarize(lasts).mean << "\n";
    std::vector<double> avg(shortest, 0.0);
    for (const auto& [run, ratios] : by_run) {
      std::vector<ContentResult> rs;
      for (std::size_t i = 0; i < shortest; ++i) rs.push_back(ContentResult{.ratio = ratios[i]});
      const auto ma = moving_average(rs, window);
      for (std::size_t i = 0; i < shortest; ++i) avg[i] += ma[i] / static_cast<double>(by_run.size());
    }
    for (std::size_t i = 0; i < avg.size(); ++i)
      curve << key.first << ',' << key.second << ',' << i << ',' << format_seconds(avg[i]) << '\n';
  }
  std::cout << "wrote " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reinforcement-learning controlled content offloading over opportunistic networks"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-trace", "generate a contact trace from a mobility preset");
  std::string preset = "sc", trace_out;
  std::uint64_t trace_seed = 1;
  std::map<std::string, double> mob;
  gen->add_option("--preset", preset, "sc, mc2, mc5 or a -mini variant")
      ->check(CLI::IsMember({"sc", "mc2", "mc5", "sc-mini", "mc2-mini", "mc5-mini"}));
  gen->add_option("--seed", trace_seed);
  gen->add_option("--out", trace_out)->required();
  for (const char* key : {"area-side", "grid-rows", "grid-cols", "nodes", "communities", "travellers", "speed-min",
                          "speed-max", "tx-range", "duration", "sample-interval"}) {
    gen->add_option_function<double>(std::string("--") + key, [&mob, key](double v) { mob[key] = v; });
  }

  auto* run = app.add_subcommand("run", "run an experiment (n_runs independent runs)");
  ExperimentFlags run_flags;
  std::string run_out;
  bool run_steps = false, run_deliveries = false, run_tables = false;
  run_flags.attach(run);
  run->add_option("--out", run_out, "output directory");
  run->add_flag("--log-steps", run_steps, "write steps_run<k>.csv");
  run->add_flag("--log-deliveries", run_deliveries, "write deliveries_run<k>.csv");
  run->add_flag("--dump-tables", run_tables, "write learner tables under tables/");

  auto* sweep = app.add_subcommand("sweep", "grid over Droid W and c, deadlines and controllers");
  ExperimentFlags sweep_flags;
  std::string sweep_out;
  std::vector<double> windows{10, 20, 30, 50, 80, 100, 150, 200}, clips{0.1}, deadlines;
  std::vector<std::string> controllers;
  sweep_flags.attach(sweep);
  sweep->add_option("--windows", windows)->delimiter(',');
  sweep->add_option("--clips", clips)->delimiter(',');
  sweep->add_option("--deadlines", deadlines)->delimiter(',');
  sweep->add_option("--controllers", controllers)->delimiter(',');
  sweep->add_option("--out", sweep_out);

  auto* sw = app.add_subcommand("switch", "phase 1 under config A, then phase 2 under config B, state carried over");
  ExperimentFlags a_flags, b_flags;
  std::string sw_out;
  bool sw_steps = false, sw_tables = false;
  a_flags.attach(sw, "a-");
  b_flags.attach(sw, "b-");
  sw->add_option("--out", sw_out);
  sw->add_flag("--log-steps", sw_steps);
  sw->add_flag("--dump-tables", sw_tables);

  auto* rep = app.add_subcommand("report", "aggregate results.csv files into summary tables and curves");
  std::vector<std::string> inputs;
  std::string rep_out = "report";
  std::size_t rep_window = 50;
  rep->add_option("inputs", inputs, "result directories or results.csv files")->required();
  rep->add_option("--out", rep_out);
  rep->add_option("--window", rep_window, "moving-average window in contents")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_trace(preset, trace_seed, trace_out, mob);
    if (*run) {
      auto c = run_flags.resolve();
      if (!run_out.empty()) c.output_dir = run_out;
      c.log_steps = c.log_steps || run_steps;
      c.log_deliveries = c.log_deliveries || run_deliveries;
      c.dump_tables = c.dump_tables || run_tables;
      return cmd_run(c);
    }
    if (*sweep) {
      auto c = sweep_flags.resolve();
      if (!sweep_out.empty()) c.output_dir = sweep_out;
      return cmd_sweep(c, windows, clips, deadlines, controllers);
    }
    if (*sw) {
      auto a = a_flags.resolve();
      const auto b = b_flags.resolve();
      if (!sw_out.empty()) a.output_dir = sw_out;
      a.log_steps = a.log_steps || sw_steps;
      a.dump_tables = a.dump_tables || sw_tables;
      return cmd_switch(a, b);
    }
    if (*rep) return cmd_report(inputs, rep_out, rep_window);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
