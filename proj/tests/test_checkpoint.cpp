#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cyclemorph/checkpoint.hpp"
#include "cyclemorph/coupling_map.hpp"
#include "cyclemorph/errors.hpp"
#include "cyclemorph/rng.hpp"

using namespace cyclemorph;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("checkpoint_test_") + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

ModelCheckpoint sample_checkpoint(std::uint64_t seed) {
  SubnetSpec spec;
  spec.hidden_layers = {6};
  Rng stream(seed);
  DiffeoParams params = DiffeoParams::random(3, spec, 2.0, stream);
  ShapeTransform transform{{0.25, -1.5}, 2.75};
  TrainingMeta meta;
  meta.seed = seed;
  meta.epochs = 100;
  meta.best_epoch = 42;
  meta.final_loss = {0.125, 0.1, 25.0};
  return ModelCheckpoint::from_training(params, BaseParams(1.0, 2.0, 1.0), transform, meta);
}

}  // namespace

TEST_CASE("hex encoding round-trips exact doubles") {
  for (double v : {0.0, -0.0, 1.0, -1.5, 0.1, 1e-300, 1e300, 3.141592653589793,
                   std::numeric_limits<double>::denorm_min(),
                   std::numeric_limits<double>::max(),
                   -std::numeric_limits<double>::min()}) {
    std::string text = double_to_hex(v);
    double back = hex_to_double(text);
    // Bit-exact, including signed zero.
    CHECK(std::memcmp(&v, &back, sizeof v) == 0);
  }
}

TEST_CASE("hex decoding rejects junk") {
  CHECK_THROWS_AS(hex_to_double("not a number"), Error);
  CHECK_THROWS_AS(hex_to_double(""), Error);
  CHECK_THROWS_AS(hex_to_double("0x1.8p1 trailing"), Error);
  CHECK_THROWS_AS(hex_to_double("nan"), Error);
  CHECK_THROWS_AS(hex_to_double("inf"), Error);
}

TEST_CASE("from_training captures the architecture and weights") {
  ModelCheckpoint ckpt = sample_checkpoint(7);
  CHECK(ckpt.block_count == 3);
  CHECK(ckpt.subnet.hidden_layers == std::vector<int>{6});
  // One subnet with hidden width 6: 6 + 6 weights, 6 + 1 biases = 19 doubles.
  CHECK(ckpt.parameters.size() == 3 * 4 * 19);
  CHECK(ckpt.meta.best_epoch == 42);

  DiffeoParams rebuilt = ckpt.to_diffeo();
  CHECK(rebuilt.block_count() == 3);
  auto flat = rebuilt.flat();
  REQUIRE(flat.size() == ckpt.parameters.size());
  for (std::size_t i = 0; i < flat.size(); ++i) CHECK(flat[i] == ckpt.parameters[i]);
}

TEST_CASE("to_diffeo rejects a parameter count that does not fit") {
  ModelCheckpoint ckpt = sample_checkpoint(9);
  ckpt.parameters.pop_back();
  CHECK_THROWS_AS(ckpt.to_diffeo(), CountMismatchError);
}

TEST_CASE("save and load preserve every field bit-exactly") {
  ModelCheckpoint ckpt = sample_checkpoint(11);
  const std::string path = temp_path("roundtrip.json");
  save_model(ckpt, path);
  ModelCheckpoint back = load_model(path);
  std::remove(path.c_str());

  CHECK(back.base.mu == ckpt.base.mu);
  CHECK(back.base.alpha_y == ckpt.base.alpha_y);
  CHECK(back.base.radius == ckpt.base.radius);
  CHECK(back.block_count == ckpt.block_count);
  CHECK(back.subnet.hidden_layers == ckpt.subnet.hidden_layers);
  CHECK(back.subnet.leaky_slope == ckpt.subnet.leaky_slope);
  CHECK(back.scale_clamp == ckpt.scale_clamp);
  REQUIRE(back.parameters.size() == ckpt.parameters.size());
  for (std::size_t i = 0; i < back.parameters.size(); ++i) {
    CHECK(back.parameters[i] == ckpt.parameters[i]);
  }
  CHECK(back.shape_transform.translation.x == ckpt.shape_transform.translation.x);
  CHECK(back.shape_transform.translation.z == ckpt.shape_transform.translation.z);
  CHECK(back.shape_transform.scale == ckpt.shape_transform.scale);
  CHECK(back.meta.seed == ckpt.meta.seed);
  CHECK(back.meta.epochs == ckpt.meta.epochs);
  CHECK(back.meta.best_epoch == ckpt.meta.best_epoch);
  CHECK(back.meta.final_loss.total == ckpt.meta.final_loss.total);
  CHECK(back.meta.final_loss.hausdorff == ckpt.meta.final_loss.hausdorff);
  CHECK(back.meta.final_loss.regularizer == ckpt.meta.final_loss.regularizer);
}

TEST_CASE("save, load, save emits byte-identical files") {
  ModelCheckpoint ckpt = sample_checkpoint(13);
  const std::string p1 = temp_path("bytes1.json");
  const std::string p2 = temp_path("bytes2.json");
  save_model(ckpt, p1);
  ModelCheckpoint back = load_model(p1);
  save_model(back, p2);
  std::string b1 = slurp(p1);
  std::string b2 = slurp(p2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
  REQUIRE(b1.size() > 0);
  CHECK(b1 == b2);
}

TEST_CASE("loading a missing file is an io error, not a parse error") {
  CHECK_THROWS_AS(load_model("definitely_not_here.json"), IoError);
}

TEST_CASE("truncated and malformed files are rejected cleanly") {
  ModelCheckpoint ckpt = sample_checkpoint(17);
  const std::string path = temp_path("trunc.json");
  save_model(ckpt, path);
  std::string full = slurp(path);

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << full.substr(0, full.size() / 2);
  }
  CHECK_THROWS_AS(load_model(path), MalformedFileError);

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "{\"v\": 1, \"wrong\": true}";
  }
  CHECK_THROWS_AS(load_model(path), MalformedFileError);
  std::remove(path.c_str());
}

TEST_CASE("unknown format versions are refused") {
  ModelCheckpoint ckpt = sample_checkpoint(19);
  const std::string path = temp_path("version.json");
  save_model(ckpt, path);
  std::string text = slurp(path);
  auto pos = text.find("\"format_version\": 1");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 19, "\"format_version\": 9");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
  }
  CHECK_THROWS_AS(load_model(path), VersionMismatchError);
  std::remove(path.c_str());
}

TEST_CASE("a parameter count mismatch in the file is its own error") {
  ModelCheckpoint ckpt = sample_checkpoint(23);
  ckpt.parameters.push_back(0.5);  // one weight too many for the architecture
  const std::string path = temp_path("count.json");
  save_model(ckpt, path);
  CHECK_THROWS_AS(load_model(path), CountMismatchError);
  std::remove(path.c_str());
}

TEST_CASE("checkpoints preserve model behavior exactly") {
  ModelCheckpoint ckpt = sample_checkpoint(29);
  const std::string path = temp_path("behavior.json");
  save_model(ckpt, path);
  ModelCheckpoint back = load_model(path);
  std::remove(path.c_str());

  DiffeoParams a = ckpt.to_diffeo();
  DiffeoParams b = back.to_diffeo();
  for (Vec2 u : {Vec2{0.3, -0.8}, Vec2{1.7, 0.4}}) {
    Vec2 va = inn_forward(u, a);
    Vec2 vb = inn_forward(u, b);
    CHECK(va.x == vb.x);  // bit-exact, not approximately equal
    CHECK(va.z == vb.z);
  }
}
