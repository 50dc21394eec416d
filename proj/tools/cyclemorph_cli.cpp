// Command-line entry point for the sketch-to-policy pipeline:
//   project  sketch pixels -> normalized planar target
//   train    target -> model checkpoint
//   rollout  model -> trajectory CSV
//   eval     model vs target -> tracking report JSON
//   field    model -> planar velocity grid CSV
//   serve    HTTP facade for the sketch studio
//
// Exit codes: 0 success, 2 usage, 3 input or output file problem,
// 4 numerical failure. One-line diagnostics go to standard error.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cyclemorph/base_system.hpp"
#include "cyclemorph/checkpoint.hpp"
#include "cyclemorph/coupling_map.hpp"
#include "cyclemorph/errors.hpp"
#include "cyclemorph/geometry.hpp"
#include "cyclemorph/io_formats.hpp"
#include "cyclemorph/projection.hpp"
#include "cyclemorph/rng.hpp"
#include "cyclemorph/rollout.hpp"
#include "cyclemorph/service.hpp"
#include "cyclemorph/trainer.hpp"

namespace {

using namespace cyclemorph;
using nlohmann::json;

volatile std::sig_atomic_t g_signal = 0;

// Parses "a,b,c,..." into exactly n doubles; flag syntax problems are usage
// errors, so they surface as exit code 2 like any other bad argument.
std::vector<double> parse_csv_doubles(const std::string& text, std::size_t n,
                                      const std::string& flag) {
  std::vector<double> vals;
  const char* cursor = text.c_str();
  for (std::size_t i = 0; i < n; ++i) {
    char* end = nullptr;
    errno = 0;
    vals.push_back(std::strtod(cursor, &end));
    if (end == cursor || errno != 0 || !std::isfinite(vals.back())) {
      throw CLI::ValidationError(flag, "expected " + std::to_string(n) + " comma-separated numbers");
    }
    cursor = end;
    if (i + 1 < n) {
      if (*cursor != ',') {
        throw CLI::ValidationError(flag, "expected " + std::to_string(n) + " comma-separated numbers");
      }
      ++cursor;
    }
  }
  if (*cursor != '\0') {
    throw CLI::ValidationError(flag, "expected " + std::to_string(n) + " comma-separated numbers");
  }
  return vals;
}

IntegrationMethod parse_method(const std::string& name) {
  if (name == "euler") return IntegrationMethod::kEuler;
  return IntegrationMethod::kRk4;  // the option validator only lets rk4|euler through
}

struct ProjectArgs {
  std::string sketch, camera, plane, out;
};

void run_project(const ProjectArgs& a) {
  const std::vector<SketchPoint> sketch = load_sketch(a.sketch);
  const CameraModel camera = a.camera.empty() ? default_studio_camera() : load_camera(a.camera);
  const PlaneSpec plane = a.plane.empty() ? default_studio_plane() : load_plane(a.plane);
  const ProjectionResult r = project_sketch(camera, sketch, plane.plane, plane.hint_x);
  save_target(TargetFile{r.points, r.transform}, a.out);
  std::printf("projected %zu points -> %s (scale %.6g)\n", r.points.size(), a.out.c_str(),
              r.transform.scale);
}

struct TrainArgs {
  std::string target, config, out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int epochs = 0;
  bool epochs_set = false;
  bool quiet = false;
};

void run_train(const TrainArgs& a) {
  const TargetFile target = load_target(a.target);
  TrainConfig config = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
  if (a.seed_set) config.seed = a.seed;
  if (a.epochs_set) config.epochs = a.epochs;

  ProgressFn progress;
  if (!a.quiet) {
    progress = [&](int epoch, const EpochLoss& loss) {
      if (epoch % 250 == 0 || epoch + 1 == config.epochs) {
        std::fprintf(stderr, "epoch %5d  loss %.6f  (shape %.6f)\n", epoch, loss.total,
                     loss.hausdorff);
      }
    };
  }
  const TrainReport report = train(target.points, BaseParams{}, config, std::nullopt, progress);

  TrainingMeta meta;
  meta.seed = config.seed;
  meta.epochs = config.epochs;
  meta.best_epoch = report.best_epoch;
  meta.final_loss = report.history.at(static_cast<std::size_t>(report.best_epoch));
  save_model(ModelCheckpoint::from_training(report.params, BaseParams{}, target.transform, meta),
             a.out);
  std::printf("wrote %s (best epoch %d, loss %.6f)\n", a.out.c_str(), report.best_epoch,
              report.best_loss);
}

struct RolloutArgs {
  std::string model, start, out;
  double duration = 50.0;
  double step = 1e-3;
  std::string method = "rk4";
};

void run_rollout(const RolloutArgs& a) {
  const std::vector<double> s = parse_csv_doubles(a.start, 3, "--start");
  const ModelCheckpoint ckpt = load_model(a.model);
  IntegratorConfig config;
  config.method = parse_method(a.method);
  config.step = a.step;
  config.duration = a.duration;
  const Trajectory traj = integrate({s[0], s[1], s[2]}, ckpt.to_diffeo(), ckpt.base, config);
  write_trajectory_csv(traj, a.out);
  std::printf("wrote %s (%zu states)\n", a.out.c_str(), traj.states.size());
}

struct EvalArgs {
  std::string model, target, report;
  int starts = 20;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double duration = 50.0;
  double step = 1e-3;
  std::string method = "rk4";
};

// Scores tracking from `starts` random basin states: radius in [0.1, 3] and
// angle drawn in the base frame (then pushed through the map so the sample
// covers the learned basin), y in [-2, 2]. Draw order per start is r, theta,
// y; reordering would silently change every seeded evaluation.
void run_eval(const EvalArgs& a) {
  const ModelCheckpoint ckpt = load_model(a.model);
  const TargetFile target = load_target(a.target);
  const DiffeoParams params = ckpt.to_diffeo();
  const std::uint64_t master = a.seed_set ? a.seed : ckpt.meta.seed;

  IntegratorConfig config;
  config.method = parse_method(a.method);
  config.step = a.step;
  config.duration = a.duration;
  config.validate();

  // Dense reference for the settle scan; the target sampling itself is too
  // coarse to hold a 1e-2 settle threshold against.
  const PointSet2 eval_cycle = mapped_cycle(params, ckpt.base, 1024);
  PointSet2 target_plane = target.points;
  for (Vec2& p : target_plane) p = target.transform.denormalize(p);

  Rng rng = named_stream(master, "eval-starts");
  json results = json::array();
  double h_max = 0.0;
  double h_sum = 0.0;
  int h_count = 0;
  int converged = 0;

  for (int i = 0; i < a.starts; ++i) {
    const double r = rng.uniform(0.1, 3.0);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double y0 = rng.uniform(-2.0, 2.0);
    const Vec2 planar = inn_forward({r * std::cos(theta), r * std::sin(theta)}, params);
    const State3 x0{planar.x, y0, planar.z};

    const Trajectory traj = integrate(x0, params, ckpt.base, config);
    const TrackingReport tracking = evaluate_tracking(traj, target.points, eval_cycle);

    // Reported Hausdorff is measured in sketch-plane units: both the contact
    // set and the target go back through their stored transforms first.
    std::optional<double> h_plane;
    PointSet2 contacts = contact_points(traj);
    if (!contacts.empty()) {
      for (Vec2& p : contacts) p = ckpt.shape_transform.denormalize(p);
      h_plane = hausdorff(contacts, target_plane);
      h_max = std::max(h_max, *h_plane);
      h_sum += *h_plane;
      ++h_count;
    }
    if (tracking.converged()) ++converged;

    json entry{{"start", {x0.x, x0.y, x0.z}},
               {"hausdorff", h_plane ? json(*h_plane) : json(nullptr)},
               {"contact_fraction", tracking.contact_fraction},
               {"settle_time", tracking.settle_time ? json(*tracking.settle_time) : json(nullptr)},
               {"converged", tracking.converged()}};
    results.push_back(std::move(entry));
  }

  json report{{"v", 1},
              {"model", a.model},
              {"target", a.target},
              {"starts", a.starts},
              {"seed", master},
              {"integrator",
               {{"method", a.method}, {"step", config.step}, {"duration", config.duration}}},
              {"results", std::move(results)},
              {"aggregate",
               {{"hausdorff_max", h_count > 0 ? json(h_max) : json(nullptr)},
                {"hausdorff_mean", h_count > 0 ? json(h_sum / h_count) : json(nullptr)},
                {"converged", converged},
                {"all_converged", converged == a.starts}}}};

  write_text_file(report.dump(2) + "\n", a.report);
  if (h_count > 0) {
    std::printf("%d/%d starts converged, hausdorff max %.6g mean %.6g -> %s\n", converged,
                a.starts, h_max, h_sum / h_count, a.report.c_str());
  } else {
    std::printf("%d/%d starts converged, no plane contacts -> %s\n", converged, a.starts,
                a.report.c_str());
  }
}

struct FieldArgs {
  std::string model, region, out;
  int res = kDefaultFieldResolution;
};

void run_field(const FieldArgs& a) {
  std::optional<Box2> region;
  if (!a.region.empty()) {
    const std::vector<double> v = parse_csv_doubles(a.region, 4, "--region");
    if (!(v[0] < v[2]) || !(v[1] < v[3])) {
      throw CLI::ValidationError("--region", "needs x0 < x1 and z0 < z1");
    }
    region = Box2{{v[0], v[1]}, {v[2], v[3]}};
  }
  const ModelCheckpoint ckpt = load_model(a.model);
  const DiffeoParams params = ckpt.to_diffeo();
  const Box2 box = region ? *region : default_field_region(params, ckpt.base);
  write_field_csv(vector_field_grid(params, ckpt.base, box, a.res), a.out);
  std::printf("wrote %s (%d x %d samples)\n", a.out.c_str(), a.res, a.res);
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir, models_dir;
};

void run_serve(const ServeArgs& a) {
  ServiceOptions options;
  options.host = a.host;
  options.port = a.port;
  options.static_dir = a.static_dir;
  options.models_dir = a.models_dir;

  Service service(options);
  service.start();
  std::printf("listening on http://%s:%d\n", a.host.c_str(), service.port());
  std::fflush(stdout);

  std::signal(SIGINT, [](int) { g_signal = 1; });
  std::signal(SIGTERM, [](int) { g_signal = 1; });
  while (g_signal == 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  std::fprintf(stderr, "shutting down\n");
  service.stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn a stable 3D dynamical system whose limit cycle traces a drawn closed curve"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  ProjectArgs project_args;
  auto* project = app.add_subcommand("project", "Trace a sketch onto the surface plane");
  project->add_option("--sketch", project_args.sketch, "Sketch file: JSON [{u,v[,depth]},...] or CSV u,v[,depth]")
      ->required();
  project->add_option("--camera", project_args.camera,
                      "Camera JSON; omitted = built-in top-down studio camera");
  project->add_option("--plane", project_args.plane,
                      "Plane JSON {point, normal, hint_x}; omitted = y=0 studio plane");
  project->add_option("--out", project_args.out, "Output target JSON")->required();
  project->callback([&] { run_project(project_args); });

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Fit the coupling map to a target shape");
  train_cmd->add_option("--target", train_args.target, "Target JSON from `project`")->required();
  train_cmd->add_option("--config", train_args.config, "Training config JSON (defaults apply)");
  train_cmd->add_option("--out", train_args.out, "Output model JSON")->required();
  auto* seed_opt = train_cmd->add_option("--seed", train_args.seed, "Master seed (overrides config)");
  auto* epochs_opt =
      train_cmd->add_option("--epochs", train_args.epochs, "Epoch count (overrides config)")
          ->check(CLI::PositiveNumber);
  train_cmd->add_flag("--quiet", train_args.quiet, "Suppress progress lines on stderr");
  train_cmd->callback([&] {
    train_args.seed_set = seed_opt->count() > 0;
    train_args.epochs_set = epochs_opt->count() > 0;
    run_train(train_args);
  });

  RolloutArgs rollout_args;
  auto* rollout_cmd = app.add_subcommand("rollout", "Integrate the learned system from a start state");
  rollout_cmd->add_option("--model", rollout_args.model, "Model JSON from `train`")->required();
  rollout_cmd->add_option("--start", rollout_args.start, "Initial state \"x,y,z\"")->required();
  rollout_cmd->add_option("--duration", rollout_args.duration, "Integration time (default 50)")
      ->check(CLI::PositiveNumber);
  rollout_cmd->add_option("--step", rollout_args.step, "Step size (default 1e-3)")
      ->check(CLI::PositiveNumber);
  rollout_cmd->add_option("--method", rollout_args.method, "rk4 or euler (default rk4)")
      ->check(CLI::IsMember({"rk4", "euler"}));
  rollout_cmd->add_option("--out", rollout_args.out, "Output CSV (t,x,y,z)")->required();
  rollout_cmd->callback([&] { run_rollout(rollout_args); });

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score cycle tracking from random starts");
  eval_cmd->add_option("--model", eval_args.model, "Model JSON from `train`")->required();
  eval_cmd->add_option("--target", eval_args.target, "Target JSON the model should trace")->required();
  eval_cmd->add_option("--starts", eval_args.starts, "Number of random starts (default 20)")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--report", eval_args.report, "Output report JSON")->required();
  auto* eval_seed_opt =
      eval_cmd->add_option("--seed", eval_args.seed, "Start-state seed (default: model's training seed)");
  eval_cmd->add_option("--duration", eval_args.duration, "Integration time (default 50)")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--step", eval_args.step, "Step size (default 1e-3)")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--method", eval_args.method, "rk4 or euler (default rk4)")
      ->check(CLI::IsMember({"rk4", "euler"}));
  eval_cmd->callback([&] {
    eval_args.seed_set = eval_seed_opt->count() > 0;
    run_eval(eval_args);
  });

  FieldArgs field_args;
  auto* field_cmd = app.add_subcommand("field", "Sample the learned planar velocity field");
  field_cmd->add_option("--model", field_args.model, "Model JSON from `train`")->required();
  field_cmd->add_option("--region", field_args.region,
                        "Box \"x0,z0,x1,z1\" (default: cycle bounds + 50%)");
  field_cmd->add_option("--res", field_args.res, "Grid resolution per axis (default 20)")
      ->check(CLI::PositiveNumber);
  field_cmd->add_option("--out", field_args.out, "Output CSV (x,z,vx,vz)")->required();
  field_cmd->callback([&] { run_field(field_args); });

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service for the sketch studio");
  serve_cmd->add_option("--host", serve_args.host, "Bind address (default 127.0.0.1)");
  serve_cmd->add_option("--port", serve_args.port, "Port, 0 = pick a free one (default 8080)");
  serve_cmd->add_option("--static", serve_args.static_dir, "Directory served at /");
  serve_cmd->add_option("--models-dir", serve_args.models_dir,
                        "Persist and reload models in this directory");
  serve_cmd->callback([&] { run_serve(serve_args); });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
