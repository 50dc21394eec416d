#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclemorph/checkpoint.hpp"
#include "cyclemorph/io_formats.hpp"

using namespace cyclemorph;
using nlohmann::json;

#ifndef CYCLEMORPH_CLI_PATH
#error "CYCLEMORPH_CLI_PATH must point at the cyclemorph binary"
#endif
#ifndef CYCLEMORPH_ASSETS_DIR
#error "CYCLEMORPH_ASSETS_DIR must point at the repository asset directory"
#endif

namespace {

const std::string kCli = CYCLEMORPH_CLI_PATH;
const std::string kAssets = CYCLEMORPH_ASSETS_DIR;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  ++counter;
  const std::string out_path = "cli_stdout_" + std::to_string(counter) + ".txt";
  const std::string err_path = "cli_stderr_" + std::to_string(counter) + ".txt";
  const std::string cmd = kCli + " " + args + " > " + out_path + " 2> " + err_path;
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  std::remove(out_path.c_str());
  std::remove(err_path.c_str());
  return r;
}

struct FileGuard {
  std::string path;
  ~FileGuard() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("running without a subcommand fails with usage help") {
  RunResult r = run_cli("");
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
}

TEST_CASE("--help exits cleanly") {
  RunResult r = run_cli("--help");
  CHECK(r.code == 0);
  CHECK(r.out.find("project") != std::string::npos);
  CHECK(r.out.find("train") != std::string::npos);
  CHECK(r.out.find("serve") != std::string::npos);
}

TEST_CASE("unknown subcommands and bad flags are usage errors") {
  CHECK(run_cli("frobnicate").code == 2);
  CHECK(run_cli("rollout --model x.json --start banana --out t.csv").code == 2);
  CHECK(run_cli("rollout --model x.json --start 1,0 --out t.csv").code == 2);
  CHECK(run_cli("train --target x.json --out m.json --method sympletic").code == 2);
}

TEST_CASE("missing input files exit with the io error code") {
  RunResult r = run_cli("project --sketch no_such_sketch.json --out t.json");
  CHECK(r.code == 3);
  CHECK(r.err.find("error:") != std::string::npos);
  CHECK(run_cli("train --target nope.json --out m.json").code == 3);
  CHECK(run_cli("eval --model nope.json --target also_nope.json --report r.json").code == 3);
}

TEST_CASE("project with studio defaults reproduces the golden target") {
  const std::string out = "cli_target.json";
  FileGuard guard{out};
  RunResult r = run_cli("project --sketch " + kAssets + "/sketches/pentagon.json --out " + out);
  REQUIRE(r.code == 0);

  TargetFile produced = load_target(out);
  TargetFile golden = load_target(kAssets + "/golden/pentagon_projected.json");
  REQUIRE(produced.points.size() == golden.points.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < produced.points.size(); ++i) {
    worst = std::max(worst, norm(produced.points[i] - golden.points[i]));
  }
  CHECK(worst <= 1e-9);
  CHECK(produced.transform.scale == doctest::Approx(golden.transform.scale).epsilon(1e-12));
}

TEST_CASE("project accepts explicit camera and plane files") {
  const std::string out = "cli_target_explicit.json";
  FileGuard guard{out};
  RunResult r = run_cli("project --sketch " + kAssets + "/sketches/pentagon.json --camera " +
                        kAssets + "/sketches/studio_camera.json --plane " + kAssets +
                        "/sketches/studio_plane.json --out " + out);
  REQUIRE(r.code == 0);
  TargetFile explicit_files = load_target(out);
  TargetFile golden = load_target(kAssets + "/golden/pentagon_projected.json");
  double worst = 0.0;
  for (std::size_t i = 0; i < explicit_files.points.size(); ++i) {
    worst = std::max(worst, norm(explicit_files.points[i] - golden.points[i]));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("the full pipeline runs end to end at reduced depth") {
  const std::string model = "cli_model.json";
  const std::string traj = "cli_traj.csv";
  const std::string report = "cli_report.json";
  const std::string field = "cli_field.csv";
  FileGuard g1{model}, g2{traj}, g3{report}, g4{field};

  RunResult tr = run_cli("train --target " + kAssets + "/shapes/star.json --out " + model +
                         " --epochs 10 --seed 5 --quiet");
  REQUIRE(tr.code == 0);

  ModelCheckpoint ckpt = load_model(model);
  CHECK(ckpt.meta.epochs == 10);
  CHECK(ckpt.meta.seed == 5);
  CHECK(ckpt.meta.best_epoch >= 0);

  RunResult ro = run_cli("rollout --model " + model +
                         " --start 1.2,0.5,0 --duration 2 --step 0.001 --out " + traj);
  REQUIRE(ro.code == 0);
  std::string csv = slurp(traj);
  CHECK(csv.rfind("t,x,y,z\n", 0) == 0);
  // 2000 steps + header + initial sample.
  std::size_t lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
  CHECK(lines == 2002);

  RunResult ev = run_cli("eval --model " + model + " --target " + kAssets +
                         "/shapes/star.json --starts 3 --duration 30 --report " + report);
  REQUIRE(ev.code == 0);
  json rep = json::parse(slurp(report));
  CHECK(rep.at("v") == 1);
  CHECK(rep.at("starts") == 3);
  REQUIRE(rep.at("results").size() == 3);
  CHECK(rep.at("aggregate").contains("hausdorff_max"));
  CHECK(rep.at("aggregate").contains("all_converged"));
  // 10 epochs cannot fit a star; the aggregate must reflect an honest miss.
  CHECK(rep.at("aggregate").at("hausdorff_max").get<double>() > 0.02);

  RunResult fi = run_cli("field --model " + model + " --res 5 --out " + field);
  REQUIRE(fi.code == 0);
  std::string fcsv = slurp(field);
  CHECK(fcsv.rfind("x,z,vx,vz\n", 0) == 0);
  CHECK(std::count(fcsv.begin(), fcsv.end(), '\n') == 26);  // header + 25 samples
}

TEST_CASE("field accepts an explicit region") {
  const std::string model = "cli_model_region.json";
  const std::string field = "cli_field_region.csv";
  FileGuard g1{model}, g2{field};
  REQUIRE(run_cli("train --target " + kAssets + "/shapes/star.json --out " + model +
                  " --epochs 1 --quiet")
              .code == 0);
  RunResult r = run_cli("field --model " + model + " --region -1,-1,1,1 --res 3 --out " + field);
  REQUIRE(r.code == 0);
  std::string csv = slurp(field);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);  // header
  std::getline(lines, line);
  double x = 0, z = 0, vx = 0, vz = 0;
  REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &x, &z, &vx, &vz) == 4);
  CHECK(x == -1.0);
  CHECK(z == -1.0);

  CHECK(run_cli("field --model " + model + " --region 1,2,3 --res 3 --out " + field).code == 2);
}

TEST_CASE("training twice with the same seed emits byte-identical models") {
  const std::string m1 = "cli_det_1.json";
  const std::string m2 = "cli_det_2.json";
  FileGuard g1{m1}, g2{m2};
  const std::string args = "train --target " + kAssets + "/shapes/pentagon.json --epochs 8" +
                           " --seed 123 --quiet --out ";
  REQUIRE(run_cli(args + m1).code == 0);
  REQUIRE(run_cli(args + m2).code == 0);
  std::string b1 = slurp(m1);
  std::string b2 = slurp(m2);
  REQUIRE(b1.size() > 0);
  CHECK(b1 == b2);
}

TEST_CASE("a numerically diverging rollout exits with the numeric error code") {
  const std::string model = "cli_model_diverge.json";
  const std::string traj = "cli_traj_diverge.csv";
  FileGuard g1{model}, g2{traj};
  REQUIRE(run_cli("train --target " + kAssets + "/shapes/star.json --out " + model +
                  " --epochs 1 --quiet")
              .code == 0);
  // Euler with a giant step on a cubic contraction term explodes fast.
  RunResult r = run_cli("rollout --model " + model +
                        " --start 3,0,0 --method euler --step 10 --duration 1000 --out " + traj);
  CHECK(r.code == 4);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("train rejects a malformed config file cleanly") {
  const std::string cfg = "cli_bad_config.json";
  const std::string model = "cli_model_bad_cfg.json";
  FileGuard g1{cfg}, g2{model};
  {
    std::ofstream out(cfg);
    out << R"({"learning_rate": 0.001})";  // belongs under "adam"
  }
  RunResult r = run_cli("train --target " + kAssets + "/shapes/star.json --config " + cfg +
                        " --out " + model);
  CHECK(r.code == 3);
  CHECK(r.err.find("error:") != std::string::npos);
}
