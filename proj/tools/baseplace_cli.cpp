// Command-line front end: plan a single trial, evaluate a suite, run the
// ablations, and render stored traces.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "baseplace/harness.hpp"
#include "baseplace/http_oracle.hpp"

namespace fs = std::filesystem;
using namespace baseplace;

namespace {

enum Exit { kOk = 0, kPlanningFailure = 2, kOracleFailure = 3, kConfigError = 4 };

struct CommonOptions {
  double epsilon = 0.05;
  std::string oracle = "scripted";
  std::string oracle_url;
  std::string model = "gpt-4o";
  unsigned threads = 0;
};

void add_common(CLI::App* cmd, CommonOptions& c) {
  cmd->add_option("--epsilon", c.epsilon, "Scripted oracle corruption rate")->check(CLI::Range(0.0, 0.999));
  cmd->add_option("--oracle", c.oracle, "scripted or http")->check(CLI::IsMember({"scripted", "http"}));
  cmd->add_option("--oracle-url", c.oracle_url, "Endpoint for --oracle http");
  cmd->add_option("--model", c.model, "Model name sent to the http oracle");
  cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
}

RunOptions run_options(const CommonOptions& c) {
  RunOptions o;
  o.oracle.noise_epsilon = c.epsilon;
  o.threads = c.threads;
  if (c.oracle == "http") {
    if (c.oracle_url.empty()) throw std::invalid_argument("--oracle http needs --oracle-url");
    HttpOracleConfig hc;
    hc.url = c.oracle_url;
    hc.model = c.model;
    auto prompts = std::make_shared<PromptBook>(hc.prompt_dir);
    o.oracle_factory = [hc, prompts](const TrialWorld&, Method, std::uint64_t) {
      return std::make_unique<HttpOracle>(hc, *prompts);
    };
  }
  return o;
}

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << s;
}

void write_report(const fs::path& dir, const SuiteResult& r, bool store_traces) {
  fs::create_directories(dir);
  nlohmann::json j = to_json(r.report);
  j["hash"] = report_hash(r.report);
  write_text(dir / "report.json", j.dump(2) + "\n");
  write_text(dir / "report.txt", to_text(r.report));
  if (!store_traces) return;
  for (const auto& tr : r.traces) {
    std::ostringstream name;
    name << "trial_" << std::setw(3) << std::setfill('0') << tr.trial << ".json";
    write_text(dir / "traces" / tr.method / tr.task / name.str(), serialize(tr));
  }
}

int exit_code_for(const PlanTrace& tr) {
  if (tr.placement) return kOk;
  if (!tr.abort) return kPlanningFailure;
  switch (tr.abort->reason) {
    case AbortReason::NoDirectionMajority:
    case AbortReason::OracleFailure: return kOracleFailure;
    default: return kPlanningFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Affordance-guided robot base placement"};
  app.require_subcommand(1);

  // plan
  auto* plan = app.add_subcommand("plan", "Run one method on one randomized trial");
  std::string scene_file, task_file, method_name = "ours", out_dir = "out/plan";
  std::uint64_t seed = 0;
  int trial = 0;
  CommonOptions plan_common;
  plan->add_option("--task", task_file, "Task file")->required()->check(CLI::ExistingFile);
  plan->add_option("--scene", scene_file, "Scene file (overrides the task's scene)")->check(CLI::ExistingFile);
  plan->add_option("--method", method_name, "Placement method");
  plan->add_option("--seed", seed, "Trial seed");
  plan->add_option("--trial", trial, "Trial index recorded in the trace");
  plan->add_option("--out", out_dir, "Output directory");
  add_common(plan, plan_common);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate methods over a task suite");
  std::string suite_file = std::string(BASEPLACE_DATA_DIR) + "/suite.json", eval_out = "out/eval";
  int trials = 20;
  std::uint64_t base_seed = 0;
  std::vector<std::string> methods;
  bool no_traces = false;
  CommonOptions eval_common;
  eval->add_option("--suite", suite_file, "Suite file")->check(CLI::ExistingFile);
  eval->add_option("--trials", trials, "Trials per task")->check(CLI::NonNegativeNumber);
  eval->add_option("--base-seed", base_seed, "Base seed");
  eval->add_option("--methods", methods, "Methods to run (default: all)");
  eval->add_option("--out", eval_out, "Output directory");
  eval->add_flag("--no-traces", no_traces, "Skip writing per-trial traces");
  add_common(eval, eval_common);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Alpha-schedule or projection ablation");
  std::string mode = "alpha", ablate_out = "out/ablate";
  CommonOptions ablate_common;
  ablate->add_option("--mode", mode, "alpha or projection")->check(CLI::IsMember({"alpha", "projection"}));
  ablate->add_option("--suite", suite_file, "Suite file")->check(CLI::ExistingFile);
  ablate->add_option("--trials", trials, "Trials per task")->check(CLI::NonNegativeNumber);
  ablate->add_option("--base-seed", base_seed, "Base seed");
  ablate->add_option("--out", ablate_out, "Output directory");
  ablate->add_flag("--no-traces", no_traces, "Skip writing per-trial traces");
  add_common(ablate, ablate_common);

  // render
  auto* render = app.add_subcommand("render", "Render candidate heatmaps for a stored trace");
  std::string trace_file, render_out = "out/render", render_task;
  render->add_option("--trace", trace_file, "Trace JSON")->required()->check(CLI::ExistingFile);
  render->add_option("--task", render_task, "Task file the trace was run on")->required()->check(CLI::ExistingFile);
  render->add_option("--out", render_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*plan) {
      TaskBundle bundle = load_task_bundle(task_file);
      if (!scene_file.empty()) bundle.scene = load_scene_file(scene_file);
      RunOptions opt = run_options(plan_common);
      TrialWorld w = build_trial_world(bundle, trial, seed, opt.perception);
      PlanTrace tr = run_method(w, method_from_string(method_name), opt);
      const fs::path out(out_dir);
      write_text(out / "trace.json", serialize(tr));

      AffordanceContext ctx = w.context;
      if (tr.affordance) {
        ctx.selected = tr.affordance->selected;
        ctx.keypoint = tr.affordance->keypoint;
      }
      std::vector<IndexedPoint> markers;
      if (tr.placement) markers.push_back({0, tr.placement->position()});
      auto view = make_obstacle_map_plus(w.occupancy, ctx, w.start, markers);
      write_ppm((out / "obstacle_map_plus.ppm").string(), render_obstacle_map_plus(view));
      write_text(out / "obstacle_map_plus.svg", render_obstacle_map_plus_svg(view));

      std::cout << tr.method << " on " << tr.task << " seed " << tr.seed << ": ";
      if (tr.placement)
        std::cout << "placement (" << tr.placement->x << ", " << tr.placement->y << ", " << tr.placement->theta << ")";
      else
        std::cout << "aborted (" << to_string(tr.abort->reason) << ": " << tr.abort->detail << ")";
      std::cout << ", " << (tr.evaluation->success ? "success" : "failure: " + tr.evaluation->reason) << "\n";
      return exit_code_for(tr);
    }
    if (*eval) {
      auto tasks = load_suite(suite_file);
      std::vector<Method> ms;
      if (methods.empty()) ms = all_methods();
      for (const auto& m : methods) ms.push_back(method_from_string(m));
      auto r = run_suite(tasks, ms, trials, base_seed, run_options(eval_common));
      write_report(eval_out, r, !no_traces);
      std::cout << to_text(r.report) << "report hash " << report_hash(r.report) << "\n";
      return kOk;
    }
    if (*ablate) {
      auto tasks = load_suite(suite_file);
      RunOptions opt = run_options(ablate_common);
      auto r = mode == "alpha" ? ablate_alpha(tasks, trials, base_seed, opt) : ablate_projection(tasks, trials, base_seed, opt);
      write_report(ablate_out, r, !no_traces);
      std::cout << to_text(r.report);
      if (mode == "alpha")
        for (const auto& row : r.report.rows)
          if (auto s = r.report.total(row).spread())
            std::cout << row.label << " final-candidate spread " << *s << "\n";
      std::cout << "report hash " << report_hash(r.report) << "\n";
      return kOk;
    }
    if (*render) {
      PlanTrace tr = trace_from_json(nlohmann::json::parse(detail::read_bytes(trace_file)));
      TaskBundle bundle = load_task_bundle(render_task);
      TrialWorld w = world_for_trace(bundle, tr);
      auto frames = render_heatmap(tr, w.occupancy);
      const fs::path out(render_out);
      fs::create_directories(out);
      for (std::size_t i = 0; i < frames.size(); ++i)
        write_ppm((out / ("heatmap_iter" + std::to_string(i + 1) + ".ppm")).string(), frames[i]);
      std::cout << "wrote " << frames.size() << " heatmap(s) to " << out << "\n";
      return kOk;
    }
  } catch (const SceneError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const TrialError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}
