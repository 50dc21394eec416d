#include "cyclemorph/service.hpp"

#include <atomic>
#include <cerrno>
#include <climits>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cyclemorph/base_system.hpp"
#include "cyclemorph/checkpoint.hpp"
#include "cyclemorph/errors.hpp"
#include "cyclemorph/geometry.hpp"
#include "cyclemorph/io_formats.hpp"
#include "cyclemorph/projection.hpp"
#include "cyclemorph/rollout.hpp"
#include "cyclemorph/trainer.hpp"

namespace cyclemorph {
namespace {

using nlohmann::json;

// Thrown from the progress callback to unwind a running training job when the
// service shuts down. Deliberately not derived from std::exception so no
// catch-all on the way up can swallow it.
struct ShutdownSignal {};

enum class JobState { kQueued, kRunning, kDone, kFailed };

const char* job_state_name(JobState s) {
  switch (s) {
    case JobState::kQueued:
      return "queued";
    case JobState::kRunning:
      return "running";
    case JobState::kDone:
      return "done";
    case JobState::kFailed:
      return "failed";
  }
  return "unknown";
}

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply_json(res, status, json{{"v", 1}, {"error", message}});
}

// Exception-to-status mapping shared by every handler: domain and parse
// problems are the client's fault, numerical blowups get their own code so
// the studio can tell "bad request" from "the math diverged".
template <class Fn>
void guard(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const NumericalError& e) {
    reply_error(res, 422, e.what());
  } catch (const Error& e) {
    reply_error(res, 400, e.what());
  } catch (const json::exception& e) {
    reply_error(res, 400, e.what());
  } catch (const std::exception& e) {
    reply_error(res, 500, e.what());
  }
}

json parse_body(const httplib::Request& req, const std::string& context) {
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded()) throw MalformedFileError(context + ": body is not valid JSON");
  if (!j.is_object()) throw MalformedFileError(context + ": body must be a JSON object");
  // "v" may be omitted, but a declared version has to be one we understand.
  if (j.contains("v") && j.at("v") != 1) {
    throw MalformedFileError(context + ": unsupported schema version");
  }
  return j;
}

double body_number(const json& j, const std::string& field, const std::string& context) {
  if (!j.contains(field)) throw MalformedFileError(context + ": missing \"" + field + "\"");
  const json& v = j.at(field);
  if (!v.is_number() || !std::isfinite(v.get<double>())) {
    throw MalformedFileError(context + ": \"" + field + "\" must be a finite number");
  }
  return v.get<double>();
}

State3 body_state(const json& j, const std::string& field, const std::string& context) {
  if (!j.contains(field)) throw MalformedFileError(context + ": missing \"" + field + "\"");
  const json& v = j.at(field);
  if (!v.is_array() || v.size() != 3) {
    throw MalformedFileError(context + ": \"" + field + "\" must be [x, y, z]");
  }
  State3 s;
  double* comps[3] = {&s.x, &s.y, &s.z};
  for (int i = 0; i < 3; ++i) {
    if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
      throw MalformedFileError(context + ": \"" + field + "\" must hold finite numbers");
    }
    *comps[i] = v[i].get<double>();
  }
  return s;
}

int parse_int_param(const std::string& text, const std::string& name) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(text.c_str(), &end, 10);
  if (errno != 0 || end == text.c_str() || *end != '\0' || v < INT_MIN || v > INT_MAX) {
    throw MalformedFileError("query parameter \"" + name + "\" must be an integer");
  }
  return static_cast<int>(v);
}

Box2 parse_region(const std::string& text) {
  double vals[4];
  const char* cursor = text.c_str();
  for (int i = 0; i < 4; ++i) {
    char* end = nullptr;
    errno = 0;
    vals[i] = std::strtod(cursor, &end);
    if (end == cursor || errno != 0 || !std::isfinite(vals[i])) {
      throw MalformedFileError("query parameter \"region\" must be x0,z0,x1,z1");
    }
    cursor = end;
    if (i < 3) {
      if (*cursor != ',') throw MalformedFileError("query parameter \"region\" must be x0,z0,x1,z1");
      ++cursor;
    }
  }
  if (*cursor != '\0') throw MalformedFileError("query parameter \"region\" must be x0,z0,x1,z1");
  if (!(vals[0] < vals[2]) || !(vals[1] < vals[3])) {
    throw MalformedFileError("region must satisfy x0 < x1 and z0 < z1");
  }
  return Box2{{vals[0], vals[1]}, {vals[2], vals[3]}};
}

json points_to_json(const PointSet2& points) {
  json arr = json::array();
  for (const Vec2& p : points) arr.push_back({p.x, p.z});
  return arr;
}

json transform_to_json(const ShapeTransform& t) {
  return json{{"translation", {t.translation.x, t.translation.z}}, {"scale", t.scale}};
}

}  // namespace

struct Service::Impl {
  explicit Impl(ServiceOptions opts) : options(std::move(opts)) {}

  ServiceOptions options;
  httplib::Server server;
  std::thread server_thread;
  std::thread worker_thread;
  std::atomic<bool> stop_requested{false};
  bool started = false;
  bool stopped = false;
  int bound_port = -1;

  std::mutex mu;
  std::condition_variable cv;
  bool stopping = false;
  bool paused = false;

  struct SketchEntry {
    PointSet2 points;          // normalized target shape
    ShapeTransform transform;  // back to sketch-plane coordinates
  };

  struct JobEntry {
    std::string sketch_id;
    JobState state = JobState::kQueued;
    TrainConfig config;
    int epoch = -1;     // last sampled epoch, -1 before the first sample
    double loss = 0.0;  // total loss at that epoch
    std::vector<std::pair<int, double>> history;
    std::string model_id;  // set once done
    std::string error;     // set once failed
  };

  std::map<std::string, SketchEntry> sketches;
  std::map<std::string, JobEntry> jobs;
  std::map<std::string, ModelCheckpoint> models;
  std::deque<std::string> queue;
  int next_sketch = 1;
  int next_job = 1;
  int next_model = 1;

  void load_existing_models();
  void register_routes();
  void worker_loop();
  void run_job(const std::string& job_id, const PointSet2& target, const ShapeTransform& transform,
               const TrainConfig& config);

  void handle_sketches(const httplib::Request& req, httplib::Response& res);
  void handle_train(const httplib::Request& req, httplib::Response& res);
  void handle_job(const httplib::Request& req, httplib::Response& res);
  void handle_cycle(const httplib::Request& req, httplib::Response& res);
  void handle_rollout(const httplib::Request& req, httplib::Response& res);
  void handle_field(const httplib::Request& req, httplib::Response& res);

  // Fetches a checkpoint copy under the lock; replies 404 and returns empty
  // when the id is unknown.
  std::optional<ModelCheckpoint> find_model(const std::string& id, httplib::Response& res);
};

void Service::Impl::load_existing_models() {
  if (options.models_dir.empty()) return;
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(options.models_dir, ec);
  if (ec) throw IoError("could not create models directory " + options.models_dir + ": " + ec.message());
  for (const auto& entry : fs::directory_iterator(options.models_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    const std::string stem = entry.path().stem().string();
    try {
      models[stem] = load_model(entry.path().string());
    } catch (const Error& e) {
      std::fprintf(stderr, "serve: skipping %s: %s\n", entry.path().c_str(), e.what());
      continue;
    }
    // Keep fresh ids clear of anything already on disk.
    if (stem.size() > 1 && stem[0] == 'm' &&
        stem.find_first_not_of("0123456789", 1) == std::string::npos) {
      const long n = std::strtol(stem.c_str() + 1, nullptr, 10);
      if (n >= next_model && n < INT_MAX) next_model = static_cast<int>(n) + 1;
    }
  }
}

void Service::Impl::handle_sketches(const httplib::Request& req, httplib::Response& res) {
  const json body = parse_body(req, "POST /sketches");
  if (!body.contains("points")) throw MalformedFileError("POST /sketches: missing \"points\"");
  const std::vector<SketchPoint> sketch = sketch_from_json(body.at("points"), "POST /sketches");
  const CameraModel camera = body.contains("camera")
                                 ? camera_from_json(body.at("camera"), "POST /sketches")
                                 : default_studio_camera();
  const PlaneSpec plane = body.contains("plane") ? plane_from_json(body.at("plane"), "POST /sketches")
                                                 : default_studio_plane();

  const ProjectionResult projected = project_sketch(camera, sketch, plane.plane, plane.hint_x);

  std::string id;
  {
    std::lock_guard<std::mutex> lk(mu);
    id = "s" + std::to_string(next_sketch++);
    sketches.emplace(id, SketchEntry{projected.points, projected.transform});
  }
  reply_json(res, 200,
             json{{"v", 1},
                  {"sketch_id", id},
                  {"points", points_to_json(projected.points)},
                  {"transform", transform_to_json(projected.transform)}});
}

void Service::Impl::handle_train(const httplib::Request& req, httplib::Response& res) {
  const json body = parse_body(req, "POST /train");
  if (!body.contains("sketch_id") || !body.at("sketch_id").is_string()) {
    throw MalformedFileError("POST /train: missing \"sketch_id\"");
  }
  const std::string sketch_id = body.at("sketch_id").get<std::string>();
  TrainConfig config;
  if (body.contains("config")) config = train_config_from_json(body.at("config"));
  config.validate();  // reject bad configs at submission, not inside the worker

  std::string job_id;
  {
    std::lock_guard<std::mutex> lk(mu);
    if (sketches.find(sketch_id) == sketches.end()) {
      reply_error(res, 404, "unknown sketch id: " + sketch_id);
      return;
    }
    if (queue.size() >= static_cast<std::size_t>(kTrainQueueDepth)) {
      reply_error(res, 409, "training queue is full (depth " + std::to_string(kTrainQueueDepth) + ")");
      return;
    }
    job_id = "j" + std::to_string(next_job++);
    JobEntry job;
    job.sketch_id = sketch_id;
    job.config = config;
    jobs.emplace(job_id, std::move(job));
    queue.push_back(job_id);
  }
  cv.notify_all();
  reply_json(res, 200, json{{"v", 1}, {"job_id", job_id}});
}

void Service::Impl::handle_job(const httplib::Request& req, httplib::Response& res) {
  const std::string id = req.path_params.at("id");
  std::lock_guard<std::mutex> lk(mu);
  const auto it = jobs.find(id);
  if (it == jobs.end()) {
    reply_error(res, 404, "unknown job id: " + id);
    return;
  }
  const JobEntry& job = it->second;
  json history = json::array();
  constexpr std::size_t kTail = 100;
  const std::size_t begin = job.history.size() > kTail ? job.history.size() - kTail : 0;
  for (std::size_t i = begin; i < job.history.size(); ++i) {
    history.push_back({job.history[i].first, job.history[i].second});
  }
  json out{{"v", 1},
           {"id", id},
           {"state", job_state_name(job.state)},
           {"sketch_id", job.sketch_id},
           {"epoch", job.epoch},
           {"loss", job.epoch >= 0 ? json(job.loss) : json(nullptr)},
           {"history", history}};
  if (job.state == JobState::kDone) out["model_id"] = job.model_id;
  if (job.state == JobState::kFailed) out["error"] = job.error;
  reply_json(res, 200, out);
}

std::optional<ModelCheckpoint> Service::Impl::find_model(const std::string& id,
                                                         httplib::Response& res) {
  std::lock_guard<std::mutex> lk(mu);
  const auto it = models.find(id);
  if (it == models.end()) {
    reply_error(res, 404, "unknown model id: " + id);
    return std::nullopt;
  }
  return it->second;
}

void Service::Impl::handle_cycle(const httplib::Request& req, httplib::Response& res) {
  const std::string id = req.path_params.at("id");
  int k = 256;
  if (req.has_param("k")) k = parse_int_param(req.get_param_value("k"), "k");
  const auto ckpt = find_model(id, res);
  if (!ckpt) return;

  PointSet2 cycle = mapped_cycle(ckpt->to_diffeo(), ckpt->base, k);
  for (Vec2& p : cycle) p = ckpt->shape_transform.denormalize(p);
  reply_json(res, 200,
             json{{"v", 1}, {"model_id", id}, {"k", k}, {"points", points_to_json(cycle)}});
}

void Service::Impl::handle_rollout(const httplib::Request& req, httplib::Response& res) {
  const std::string id = req.path_params.at("id");
  const json body = parse_body(req, "POST rollout");
  const auto ckpt = find_model(id, res);
  if (!ckpt) return;

  IntegratorConfig config;
  const State3 start = body_state(body, "start", "POST rollout");
  if (body.contains("duration")) config.duration = body_number(body, "duration", "POST rollout");
  if (body.contains("step")) config.step = body_number(body, "step", "POST rollout");
  if (body.contains("method")) {
    const json& m = body.at("method");
    if (m == "euler") {
      config.method = IntegrationMethod::kEuler;
    } else if (m == "rk4") {
      config.method = IntegrationMethod::kRk4;
    } else {
      throw MalformedFileError("POST rollout: \"method\" must be \"euler\" or \"rk4\"");
    }
  }

  const Trajectory traj = integrate(start, ckpt->to_diffeo(), ckpt->base, config);
  json times = json::array();
  json states = json::array();
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    times.push_back(traj.times[i]);
    const State3& s = traj.states[i];
    states.push_back({s.x, s.y, s.z});
  }
  reply_json(res, 200,
             json{{"v", 1}, {"model_id", id}, {"times", std::move(times)}, {"states", std::move(states)}});
}

void Service::Impl::handle_field(const httplib::Request& req, httplib::Response& res) {
  const std::string id = req.path_params.at("id");
  int resolution = kDefaultFieldResolution;
  if (req.has_param("res")) resolution = parse_int_param(req.get_param_value("res"), "res");
  const auto ckpt = find_model(id, res);
  if (!ckpt) return;

  const DiffeoParams params = ckpt->to_diffeo();
  const Box2 region = req.has_param("region") ? parse_region(req.get_param_value("region"))
                                              : default_field_region(params, ckpt->base);

  const std::vector<FieldSample> samples = vector_field_grid(params, ckpt->base, region, resolution);
  json arr = json::array();
  for (const FieldSample& s : samples) arr.push_back({s.x, s.z, s.vx, s.vz});
  reply_json(res, 200,
             json{{"v", 1},
                  {"model_id", id},
                  {"res", resolution},
                  {"region", {region.lo.x, region.lo.z, region.hi.x, region.hi.z}},
                  {"samples", std::move(arr)}});
}

void Service::Impl::register_routes() {
  server.Post("/sketches", [this](const httplib::Request& req, httplib::Response& res) {
    guard(res, [&] { handle_sketches(req, res); });
  });
  server.Post("/train", [this](const httplib::Request& req, httplib::Response& res) {
    guard(res, [&] { handle_train(req, res); });
  });
  server.Get("/jobs/:id", [this](const httplib::Request& req, httplib::Response& res) {
    guard(res, [&] { handle_job(req, res); });
  });
  server.Get("/models/:id/cycle", [this](const httplib::Request& req, httplib::Response& res) {
    guard(res, [&] { handle_cycle(req, res); });
  });
  server.Post("/models/:id/rollout", [this](const httplib::Request& req, httplib::Response& res) {
    guard(res, [&] { handle_rollout(req, res); });
  });
  server.Get("/models/:id/field", [this](const httplib::Request& req, httplib::Response& res) {
    guard(res, [&] { handle_field(req, res); });
  });

  if (!options.static_dir.empty()) {
    server.set_mount_point("/", options.static_dir);
  } else {
    server.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(
          "<!doctype html><title>cyclemorph</title>"
          "<p>cyclemorph service is running. Start with --static DIR to serve a studio bundle.</p>",
          "text/html");
    });
  }
}

void Service::Impl::worker_loop() {
  for (;;) {
    std::string job_id;
    PointSet2 target;
    ShapeTransform transform;
    TrainConfig config;
    {
      std::unique_lock<std::mutex> lk(mu);
      cv.wait(lk, [&] { return stopping || (!queue.empty() && !paused); });
      if (stopping) return;
      job_id = queue.front();
      queue.pop_front();
      JobEntry& job = jobs.at(job_id);
      job.state = JobState::kRunning;
      const SketchEntry& sketch = sketches.at(job.sketch_id);
      target = sketch.points;
      transform = sketch.transform;
      config = job.config;
    }
    run_job(job_id, target, transform, config);
  }
}

void Service::Impl::run_job(const std::string& job_id, const PointSet2& target,
                            const ShapeTransform& transform, const TrainConfig& config) {
  try {
    const auto progress = [&](int epoch, const EpochLoss& loss) {
      if (stop_requested.load(std::memory_order_relaxed)) throw ShutdownSignal{};
      // Sampled, not per-epoch, so polls stay cheap; the last epoch always
      // lands so "done" shows the final loss.
      if (epoch % 10 == 0 || epoch + 1 == config.epochs) {
        std::lock_guard<std::mutex> lk(mu);
        JobEntry& job = jobs.at(job_id);
        job.epoch = epoch;
        job.loss = loss.total;
        job.history.emplace_back(epoch, loss.total);
      }
    };
    const TrainReport report = train(target, BaseParams{}, config, std::nullopt, progress);

    TrainingMeta meta;
    meta.seed = config.seed;
    meta.epochs = config.epochs;
    meta.best_epoch = report.best_epoch;
    meta.final_loss = report.history.at(static_cast<std::size_t>(report.best_epoch));
    const ModelCheckpoint ckpt =
        ModelCheckpoint::from_training(report.params, BaseParams{}, transform, meta);

    std::string model_id;
    {
      std::lock_guard<std::mutex> lk(mu);
      model_id = "m" + std::to_string(next_model++);
    }
    // Persist before publishing; save_model writes temp-then-rename, so a
    // failure here leaves no torn file and the job reports the error.
    if (!options.models_dir.empty()) {
      save_model(ckpt, options.models_dir + "/" + model_id + ".json");
    }
    {
      std::lock_guard<std::mutex> lk(mu);
      models.emplace(model_id, ckpt);
      JobEntry& job = jobs.at(job_id);
      job.state = JobState::kDone;
      job.model_id = model_id;
    }
  } catch (const ShutdownSignal&) {
    std::lock_guard<std::mutex> lk(mu);
    JobEntry& job = jobs.at(job_id);
    job.state = JobState::kFailed;
    job.error = "interrupted by service shutdown";
  } catch (const std::exception& e) {
    std::lock_guard<std::mutex> lk(mu);
    JobEntry& job = jobs.at(job_id);
    job.state = JobState::kFailed;
    job.error = e.what();
  }
}

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() { stop(); }

void Service::start() {
  Impl& im = *impl_;
  if (im.started || im.stopped) throw Error("service can only be started once");
  im.load_existing_models();
  im.register_routes();

  if (im.options.port == 0) {
    im.bound_port = im.server.bind_to_any_port(im.options.host);
    if (im.bound_port < 0) {
      throw IoError("could not bind a free port on " + im.options.host);
    }
  } else {
    if (!im.server.bind_to_port(im.options.host, im.options.port)) {
      throw IoError("could not bind " + im.options.host + ":" + std::to_string(im.options.port));
    }
    im.bound_port = im.options.port;
  }
  im.server_thread = std::thread([&im] { im.server.listen_after_bind(); });
  im.server.wait_until_ready();
  im.worker_thread = std::thread([&im] { im.worker_loop(); });
  im.started = true;
}

void Service::stop() {
  Impl& im = *impl_;
  if (!im.started || im.stopped) return;
  im.stop_requested.store(true);
  im.server.stop();
  if (im.server_thread.joinable()) im.server_thread.join();
  {
    std::lock_guard<std::mutex> lk(im.mu);
    im.stopping = true;
  }
  im.cv.notify_all();
  if (im.worker_thread.joinable()) im.worker_thread.join();
  im.stopped = true;
}

int Service::port() const { return impl_->bound_port; }

void Service::set_worker_paused(bool paused) {
  {
    std::lock_guard<std::mutex> lk(impl_->mu);
    impl_->paused = paused;
  }
  impl_->cv.notify_all();
}

}  // namespace cyclemorph
