#include "cyclemorph/checkpoint.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cyclemorph/errors.hpp"
#include "cyclemorph/io_formats.hpp"

namespace cyclemorph {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string activation_name(Activation a) {
  return a == Activation::kTanh ? "tanh" : "leaky_relu";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  throw MalformedFileError("model file: unknown activation \"" + name + "\"");
}

double require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw MalformedFileError(std::string("model file: non-finite ") + what);
  return v;
}

}  // namespace

std::string double_to_hex(double value) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", value);
  return buf;
}

double hex_to_double(const std::string& text) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  // strtod happily parses "nan" and "inf"; model parameters must be finite.
  if (end != text.c_str() + text.size() || text.empty() || !std::isfinite(v)) {
    throw MalformedFileError("model file: invalid float literal \"" + text + "\"");
  }
  return v;
}

DiffeoParams ModelCheckpoint::to_diffeo() const {
  DiffeoParams params(block_count, subnet, scale_clamp);
  if (params.parameter_count() != parameters.size()) {
    throw CountMismatchError("model: architecture expects " +
                             std::to_string(params.parameter_count()) + " parameters, file has " +
                             std::to_string(parameters.size()));
  }
  params.assign_flat(parameters);
  return params;
}

ModelCheckpoint ModelCheckpoint::from_training(const DiffeoParams& params, const BaseParams& base,
                                               const ShapeTransform& transform,
                                               const TrainingMeta& meta) {
  ModelCheckpoint ckpt;
  ckpt.base = base;
  ckpt.block_count = params.block_count();
  ckpt.subnet = params.subnet();
  ckpt.scale_clamp = params.scale_clamp();
  ckpt.parameters.assign(params.flat().begin(), params.flat().end());
  ckpt.shape_transform = transform;
  ckpt.meta = meta;
  return ckpt;
}

void save_model(const ModelCheckpoint& ckpt, const std::string& path) {
  ordered_json j;
  j["format"] = "cyclemorph-model";
  j["format_version"] = kModelFormatVersion;
  j["base"] = {{"mu", ckpt.base.mu}, {"alpha_y", ckpt.base.alpha_y}, {"radius", ckpt.base.radius}};
  j["architecture"] = {
      {"block_count", ckpt.block_count},
      {"hidden_layers", ckpt.subnet.hidden_layers},
      {"activation", activation_name(ckpt.subnet.activation)},
      {"leaky_slope", ckpt.subnet.leaky_slope},
      {"scale_clamp", ckpt.scale_clamp},
  };
  ordered_json params = ordered_json::array();
  for (double v : ckpt.parameters) params.push_back(double_to_hex(v));
  j["parameters"] = std::move(params);
  j["shape_transform"] = {
      {"translation", {ckpt.shape_transform.translation.x, ckpt.shape_transform.translation.z}},
      {"scale", ckpt.shape_transform.scale},
  };
  j["training_meta"] = {
      {"seed", ckpt.meta.seed},
      {"epochs", ckpt.meta.epochs},
      {"best_epoch", ckpt.meta.best_epoch},
      {"final_loss",
       {{"total", ckpt.meta.final_loss.total},
        {"hausdorff", ckpt.meta.final_loss.hausdorff},
        {"regularizer", ckpt.meta.final_loss.regularizer}}},
  };

  write_text_file(j.dump(2) + '\n', path);
}

ModelCheckpoint load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_model: cannot open " + path);

  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFileError("load_model: " + path + " is not valid JSON: " + e.what());
  }

  try {
    if (!j.is_object() || j.value("format", "") != "cyclemorph-model") {
      throw MalformedFileError("load_model: " + path + " is not a model file");
    }
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw VersionMismatchError("load_model: " + path + " has format_version " +
                                 std::to_string(version) + ", this build reads " +
                                 std::to_string(kModelFormatVersion));
    }

    ModelCheckpoint ckpt;
    const auto& base = j.at("base");
    ckpt.base = BaseParams(base.at("mu").get<double>(), base.at("alpha_y").get<double>(),
                           base.at("radius").get<double>());

    const auto& arch = j.at("architecture");
    ckpt.block_count = arch.at("block_count").get<int>();
    ckpt.subnet.hidden_layers = arch.at("hidden_layers").get<std::vector<int>>();
    ckpt.subnet.activation = activation_from_name(arch.at("activation").get<std::string>());
    ckpt.subnet.leaky_slope = require_finite(arch.at("leaky_slope").get<double>(), "leaky_slope");
    ckpt.scale_clamp = require_finite(arch.at("scale_clamp").get<double>(), "scale_clamp");

    for (const auto& entry : j.at("parameters")) {
      ckpt.parameters.push_back(hex_to_double(entry.get<std::string>()));
    }

    const auto& st = j.at("shape_transform");
    const auto& tr = st.at("translation");
    if (!tr.is_array() || tr.size() != 2) {
      throw MalformedFileError("load_model: shape_transform.translation must be [x, z]");
    }
    ckpt.shape_transform.translation = {require_finite(tr[0].get<double>(), "translation"),
                                        require_finite(tr[1].get<double>(), "translation")};
    ckpt.shape_transform.scale = require_finite(st.at("scale").get<double>(), "scale");
    if (ckpt.shape_transform.scale <= 0.0) {
      throw MalformedFileError("load_model: shape_transform.scale must be > 0");
    }

    const auto& meta = j.at("training_meta");
    ckpt.meta.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.meta.epochs = meta.at("epochs").get<int>();
    ckpt.meta.best_epoch = meta.at("best_epoch").get<int>();
    const auto& loss = meta.at("final_loss");
    ckpt.meta.final_loss.total = loss.at("total").get<double>();
    ckpt.meta.final_loss.hausdorff = loss.at("hausdorff").get<double>();
    ckpt.meta.final_loss.regularizer = loss.at("regularizer").get<double>();

    // Construction validates the architecture and raises CountMismatchError
    // on a parameter count that does not fit it.
    (void)ckpt.to_diffeo();
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFileError("load_model: " + path + ": " + e.what());
  } catch (const DomainError& e) {
    throw MalformedFileError("load_model: " + path + ": " + e.what());
  }
}

}  // namespace cyclemorph
