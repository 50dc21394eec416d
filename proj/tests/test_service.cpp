#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cyclemorph/checkpoint.hpp"
#include "cyclemorph/geometry.hpp"
#include "cyclemorph/service.hpp"

using namespace cyclemorph;
using nlohmann::json;

#ifndef CYCLEMORPH_CLI_PATH
#error "CYCLEMORPH_CLI_PATH must point at the cyclemorph binary"
#endif

namespace {

// One service per test case on an ephemeral port, with its own model store.
struct TestService {
  std::string dir;
  Service service;
  httplib::Client client;

  explicit TestService(const std::string& name, std::string static_dir = "")
      : dir("svc_" + name),
        service([&] {
          std::filesystem::remove_all("svc_" + name);
          ServiceOptions opts;
          opts.host = "127.0.0.1";
          opts.port = 0;
          opts.models_dir = "svc_" + name;
          opts.static_dir = std::move(static_dir);
          return opts;
        }()),
        client("127.0.0.1", (service.start(), service.port())) {
    client.set_read_timeout(120, 0);
  }

  ~TestService() {
    service.stop();
    std::filesystem::remove_all(dir);
  }
};

json circle_sketch_body(int n = 36, double radius_px = 100.0) {
  json points = json::array();
  for (int i = 0; i < n; ++i) {
    double th = 2.0 * 3.14159265358979323846 * i / n;
    points.push_back({{"u", 320.0 + radius_px * std::cos(th)},
                      {"v", 320.0 + radius_px * std::sin(th)}});
  }
  return json{{"v", 1}, {"points", points}};
}

json quick_config(int epochs, std::uint64_t seed = 1) {
  return json{{"epochs", epochs},
              {"cycle_samples", 24},
              {"reg_samples", 8},
              {"seed", seed}};
}

json post_json(httplib::Client& client, const std::string& path, const json& body,
               int expect_status) {
  auto res = client.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == expect_status);
  return json::parse(res->body);
}

json get_json(httplib::Client& client, const std::string& path, int expect_status) {
  auto res = client.Get(path);
  REQUIRE(res);
  CHECK(res->status == expect_status);
  return json::parse(res->body);
}

// Polls the job until it leaves queued/running or the deadline passes.
json wait_for_job(httplib::Client& client, const std::string& job_id, int timeout_s = 120) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(timeout_s);
  for (;;) {
    json job = get_json(client, "/jobs/" + job_id, 200);
    const std::string state = job.at("state").get<std::string>();
    if (state == "done" || state == "failed") return job;
    if (std::chrono::steady_clock::now() > deadline) {
      FAIL("job ", job_id, " still ", state, " after ", timeout_s, "s");
      return job;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

}  // namespace

TEST_CASE("sketch projection endpoint returns normalized points and transform") {
  TestService ts("sketch");
  json out = post_json(ts.client, "/sketches", circle_sketch_body(), 200);
  CHECK(out.at("v") == 1);
  CHECK(out.at("sketch_id") == "s1");
  REQUIRE(out.at("points").size() == 36);
  // 100 px at fx 500 from height 1.5 is 0.3 world units; normalization then
  // scales the circle to unit radius and stores 0.3 in the transform.
  CHECK(out.at("transform").at("scale").get<double>() == doctest::Approx(0.3).epsilon(1e-9));
  double r0 = std::hypot(out.at("points")[0][0].get<double>(),
                         out.at("points")[0][1].get<double>());
  CHECK(r0 == doctest::Approx(1.0).epsilon(1e-9));

  // Sketches get distinct ids.
  json out2 = post_json(ts.client, "/sketches", circle_sketch_body(), 200);
  CHECK(out2.at("sketch_id") == "s2");
}

TEST_CASE("sketch endpoint rejects bad requests with 400") {
  TestService ts("sketch_bad");

  json two = json{{"v", 1},
                  {"points", json::array({{{"u", 0.0}, {"v", 0.0}}, {{"u", 1.0}, {"v", 1.0}}})}};
  json err = post_json(ts.client, "/sketches", two, 400);
  CHECK(err.at("error").get<std::string>().find("at least 3 points") != std::string::npos);

  auto res = ts.client.Post("/sketches", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  json wrong_version = circle_sketch_body();
  wrong_version["v"] = 2;
  post_json(ts.client, "/sketches", wrong_version, 400);

  post_json(ts.client, "/sketches", json{{"v", 1}}, 400);  // missing points
}

TEST_CASE("train endpoint validates the sketch id and config") {
  TestService ts("train_bad");
  json err = post_json(ts.client, "/train", json{{"v", 1}, {"sketch_id", "s99"}}, 404);
  CHECK(err.at("error").get<std::string>().find("s99") != std::string::npos);

  post_json(ts.client, "/train", json{{"v", 1}}, 400);

  post_json(ts.client, "/sketches", circle_sketch_body(), 200);
  post_json(ts.client, "/train",
            json{{"v", 1}, {"sketch_id", "s1"}, {"config", {{"nope", 1}}}}, 400);
  post_json(ts.client, "/train",
            json{{"v", 1}, {"sketch_id", "s1"}, {"config", {{"epochs", 0}}}}, 400);
}

TEST_CASE("a training job runs to completion with sampled progress") {
  TestService ts("job");
  post_json(ts.client, "/sketches", circle_sketch_body(), 200);
  json submit = post_json(ts.client, "/train",
                          json{{"v", 1}, {"sketch_id", "s1"}, {"config", quick_config(25)}}, 200);
  CHECK(submit.at("job_id") == "j1");

  json job = wait_for_job(ts.client, "j1");
  REQUIRE(job.at("state") == "done");
  CHECK(job.at("model_id") == "m1");
  CHECK(job.at("sketch_id") == "s1");
  // Progress is sampled every 10 epochs plus the final one: 0, 10, 20, 24.
  CHECK(job.at("epoch") == 24);
  REQUIRE(job.at("history").size() == 4);
  CHECK(job.at("history")[0][0] == 0);
  CHECK(job.at("history")[1][0] == 10);
  CHECK(job.at("history")[2][0] == 20);
  CHECK(job.at("history")[3][0] == 24);
  CHECK(job.at("loss").is_number());

  json missing = get_json(ts.client, "/jobs/j42", 404);
  CHECK(missing.at("error").get<std::string>().find("j42") != std::string::npos);
}

TEST_CASE("model endpoints serve cycle, rollout and field") {
  TestService ts("model");
  post_json(ts.client, "/sketches", circle_sketch_body(), 200);
  post_json(ts.client, "/train",
            json{{"v", 1}, {"sketch_id", "s1"}, {"config", quick_config(10)}}, 200);
  json job = wait_for_job(ts.client, "j1");
  REQUIRE(job.at("state") == "done");

  // Cycle points come back in sketch-plane units (pixel circle was 0.3 world
  // units; with a near-identity map the cycle sits close to that radius).
  json cycle = get_json(ts.client, "/models/m1/cycle?k=32", 200);
  CHECK(cycle.at("k") == 32);
  REQUIRE(cycle.at("points").size() == 32);
  double mean_r = 0.0;
  for (const auto& p : cycle.at("points")) {
    mean_r += std::hypot(p[0].get<double>(), p[1].get<double>());
  }
  mean_r /= 32.0;
  CHECK(mean_r > 0.15);
  CHECK(mean_r < 0.5);

  json cycle_default = get_json(ts.client, "/models/m1/cycle", 200);
  CHECK(cycle_default.at("points").size() == 256);

  json rollout = post_json(ts.client, "/models/m1/rollout",
                           json{{"v", 1},
                                {"start", {1.2, 0.4, 0.0}},
                                {"duration", 1.0},
                                {"step", 1e-3}},
                           200);
  REQUIRE(rollout.at("times").size() == 1001);
  REQUIRE(rollout.at("states").size() == 1001);
  CHECK(rollout.at("states")[0][0].get<double>() == 1.2);
  CHECK(rollout.at("states")[0][1].get<double>() == 0.4);
  // y decays under the learned flow.
  CHECK(std::abs(rollout.at("states")[1000][1].get<double>()) < 0.4);

  post_json(ts.client, "/models/m1/rollout", json{{"v", 1}}, 400);  // missing start
  post_json(ts.client, "/models/m1/rollout",
            json{{"v", 1}, {"start", {1.0, 0.0, 0.0}}, {"method", "verlet"}}, 400);
  post_json(ts.client, "/models/m9/rollout", json{{"v", 1}, {"start", {1.0, 0.0, 0.0}}}, 404);

  json field = get_json(ts.client, "/models/m1/field?res=4", 200);
  CHECK(field.at("res") == 4);
  REQUIRE(field.at("samples").size() == 16);
  REQUIRE(field.at("region").size() == 4);

  json field_region = get_json(ts.client, "/models/m1/field?region=-1,-1,1,1&res=3", 200);
  REQUIRE(field_region.at("samples").size() == 9);
  CHECK(field_region.at("samples")[0][0].get<double>() == doctest::Approx(-1.0));
  CHECK(field_region.at("samples")[0][1].get<double>() == doctest::Approx(-1.0));

  // res=1 is the degenerate one-point grid; zero is a domain error.
  json field_one = get_json(ts.client, "/models/m1/field?region=-1,-1,1,1&res=1", 200);
  REQUIRE(field_one.at("samples").size() == 1);
  CHECK(field_one.at("samples")[0][0].get<double>() == doctest::Approx(-1.0));
  get_json(ts.client, "/models/m1/field?res=0", 400);
  get_json(ts.client, "/models/m1/field?region=1,2,3&res=4", 400);
  get_json(ts.client, "/models/m9/field", 404);
  get_json(ts.client, "/models/m9/cycle", 404);
}

TEST_CASE("a diverging rollout request maps to 422") {
  TestService ts("diverge");
  post_json(ts.client, "/sketches", circle_sketch_body(), 200);
  post_json(ts.client, "/train",
            json{{"v", 1}, {"sketch_id", "s1"}, {"config", quick_config(1)}}, 200);
  REQUIRE(wait_for_job(ts.client, "j1").at("state") == "done");

  json err = post_json(ts.client, "/models/m1/rollout",
                       json{{"v", 1},
                            {"start", {3.0, 0.0, 0.0}},
                            {"method", "euler"},
                            {"step", 10.0},
                            {"duration", 1000.0}},
                       422);
  CHECK(err.at("error").get<std::string>().size() > 0);
}

TEST_CASE("the queue holds eight jobs and rejects the ninth") {
  TestService ts("queue");
  post_json(ts.client, "/sketches", circle_sketch_body(), 200);

  ts.service.set_worker_paused(true);
  for (int i = 1; i <= kTrainQueueDepth; ++i) {
    json submit = post_json(
        ts.client, "/train",
        json{{"v", 1}, {"sketch_id", "s1"}, {"config", quick_config(1, 100 + i)}}, 200);
    CHECK(submit.at("job_id") == "j" + std::to_string(i));
  }
  json rejected = post_json(
      ts.client, "/train",
      json{{"v", 1}, {"sketch_id", "s1"}, {"config", quick_config(1, 999)}}, 409);
  CHECK(rejected.at("error").get<std::string>().find("queue") != std::string::npos);

  // Everything already queued still runs once the worker resumes.
  ts.service.set_worker_paused(false);
  for (int i = 1; i <= kTrainQueueDepth; ++i) {
    json job = wait_for_job(ts.client, "j" + std::to_string(i));
    CHECK(job.at("state") == "done");
  }
  // With the queue drained, submissions work again.
  json again = post_json(
      ts.client, "/train",
      json{{"v", 1}, {"sketch_id", "s1"}, {"config", quick_config(1, 7)}}, 200);
  CHECK(wait_for_job(ts.client, again.at("job_id").get<std::string>()).at("state") == "done");
}

TEST_CASE("models persist to disk and load into a fresh service") {
  const std::string dir = "svc_persist";
  std::filesystem::remove_all(dir);
  json first_cycle;
  {
    ServiceOptions opts;
    opts.host = "127.0.0.1";
    opts.port = 0;
    opts.models_dir = dir;
    Service service(opts);
    service.start();
    httplib::Client client("127.0.0.1", service.port());
    client.set_read_timeout(120, 0);

    post_json(client, "/sketches", circle_sketch_body(), 200);
    post_json(client, "/train",
              json{{"v", 1}, {"sketch_id", "s1"}, {"config", quick_config(5)}}, 200);
    REQUIRE(wait_for_job(client, "j1").at("state") == "done");
    first_cycle = get_json(client, "/models/m1/cycle?k=16", 200);
    service.stop();
  }

  // The checkpoint is a plain model file on disk.
  REQUIRE(std::filesystem::exists(dir + "/m1.json"));
  ModelCheckpoint ckpt = load_model(dir + "/m1.json");
  CHECK(ckpt.meta.epochs == 5);

  {
    ServiceOptions opts;
    opts.host = "127.0.0.1";
    opts.port = 0;
    opts.models_dir = dir;
    Service service(opts);
    service.start();
    httplib::Client client("127.0.0.1", service.port());
    client.set_read_timeout(120, 0);

    // The reloaded model serves identical results.
    json cycle = get_json(client, "/models/m1/cycle?k=16", 200);
    CHECK(cycle.at("points") == first_cycle.at("points"));

    // New models do not collide with the one already on disk.
    post_json(client, "/sketches", circle_sketch_body(), 200);
    post_json(client, "/train",
              json{{"v", 1}, {"sketch_id", "s1"}, {"config", quick_config(1)}}, 200);
    json job = wait_for_job(client, "j1");
    REQUIRE(job.at("state") == "done");
    CHECK(job.at("model_id") == "m2");
    service.stop();
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("service rollout matches the command line on the same model") {
  TestService ts("parity");
  post_json(ts.client, "/sketches", circle_sketch_body(), 200);
  post_json(ts.client, "/train",
            json{{"v", 1}, {"sketch_id", "s1"}, {"config", quick_config(5)}}, 200);
  REQUIRE(wait_for_job(ts.client, "j1").at("state") == "done");

  json api = post_json(ts.client, "/models/m1/rollout",
                       json{{"v", 1},
                            {"start", {1.1, 0.2, -0.3}},
                            {"duration", 0.5},
                            {"step", 1e-3}},
                       200);

  const std::string traj_csv = "svc_parity_traj.csv";
  const std::string cmd = std::string(CYCLEMORPH_CLI_PATH) + " rollout --model " + ts.dir +
                          "/m1.json --start 1.1,0.2,-0.3 --duration 0.5 --step 0.001 --out " +
                          traj_csv + " > /dev/null 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);

  std::ifstream in(traj_csv);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);  // header
  std::size_t i = 0;
  while (std::getline(in, line)) {
    double t = 0, x = 0, y = 0, z = 0;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &t, &x, &y, &z) == 4);
    REQUIRE(i < api.at("states").size());
    // %.17g CSV round-trips doubles exactly, so equality is exact.
    CHECK(x == api.at("states")[i][0].get<double>());
    CHECK(y == api.at("states")[i][1].get<double>());
    CHECK(z == api.at("states")[i][2].get<double>());
    ++i;
  }
  CHECK(i == api.at("states").size());
  std::remove(traj_csv.c_str());
}

TEST_CASE("the root page responds even without a static directory") {
  TestService ts("root");
  auto res = ts.client.Get("/");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body.find("cyclemorph") != std::string::npos);
}
