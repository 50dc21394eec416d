#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cyclemorph/base_system.hpp"
#include "cyclemorph/coupling_map.hpp"
#include "cyclemorph/geometry.hpp"
#include "cyclemorph/trainer.hpp"

namespace cyclemorph {

inline constexpr int kModelFormatVersion = 1;

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  int best_epoch = -1;
  EpochLoss final_loss;  // loss of the epoch the stored parameters come from
};

// Everything needed to reconstruct a trained model: the base system, the map
// architecture and weights, and the similarity transform back to the sketch
// plane's original coordinates.
struct ModelCheckpoint {
  BaseParams base;
  int block_count = kDefaultBlockCount;
  SubnetSpec subnet;
  double scale_clamp = kDefaultScaleClamp;
  std::vector<double> parameters;
  ShapeTransform shape_transform;
  TrainingMeta meta;

  // Rebuilds the parameter object; CountMismatchError if the flat vector does
  // not fit the declared architecture.
  DiffeoParams to_diffeo() const;

  static ModelCheckpoint from_training(const DiffeoParams& params, const BaseParams& base,
                                       const ShapeTransform& transform, const TrainingMeta& meta);
};

// JSON serialization with parameters as C99 hex-float strings, so every bit
// of every weight survives the round trip and save -> load -> save emits
// identical bytes. Writes to a temporary file in the same directory and
// renames over the destination, so a crash mid-write never leaves a torn
// model behind.
void save_model(const ModelCheckpoint& ckpt, const std::string& path);

// Throws VersionMismatchError for unknown format versions,
// CountMismatchError when parameters disagree with the architecture, and
// MalformedFileError for everything else that isn't a valid model file.
ModelCheckpoint load_model(const std::string& path);

// Exact-round-trip float encoding used for the parameter array.
std::string double_to_hex(double value);
double hex_to_double(const std::string& text);

}  // namespace cyclemorph
