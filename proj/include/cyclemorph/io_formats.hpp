#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cyclemorph/geometry.hpp"
#include "cyclemorph/projection.hpp"
#include "cyclemorph/rollout.hpp"
#include "cyclemorph/trainer.hpp"

namespace cyclemorph {

// Input file readers and output writers shared by the CLI and the service.
// JSON schemas carry a top-level "v": 1 where they are project-defined;
// reader errors are IoError (unreadable) or MalformedFileError (bad content).

// JSON-level parsers, shared verbatim between file loaders and the HTTP
// service so both interfaces accept exactly the same shapes. `context`
// prefixes error messages (a file path or "request body").
std::vector<SketchPoint> sketch_from_json(const nlohmann::json& j, const std::string& context);
CameraModel camera_from_json(const nlohmann::json& j, const std::string& context);
PlaneSpec plane_from_json(const nlohmann::json& j, const std::string& context);

// Sketch: either a JSON array of {"u": .., "v": .., "depth"?: ..} objects or
// CSV rows "u,v[,depth]" (optional header line). Format picked by file
// extension, with content sniffing as fallback.
std::vector<SketchPoint> load_sketch(const std::string& path);

// Camera: {"fx","fy","cx","cy","position":[x,y,z],"orientation":[w,x,y,z]}.
CameraModel load_camera(const std::string& path);

// Plane: {"point":[x,y,z],"normal":[x,y,z],"hint_x":[x,y,z]}.
PlaneSpec load_plane(const std::string& path);

// Target shape produced by `project` and consumed by `train`:
// {"v":1,"points":[[x,z],...],"transform":{"translation":[x,z],"scale":s}}.
struct TargetFile {
  PointSet2 points;
  ShapeTransform transform;
};
TargetFile load_target(const std::string& path);
void save_target(const TargetFile& target, const std::string& path);

// Training config file: JSON mirroring TrainConfig; omitted fields keep their
// defaults, unknown keys are rejected. The same mirror parses the service's
// config-override payloads.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::string& path);

// CSV exports: header "t,x,y,z" / "x,z,vx,vz", %.17g values (round-trip
// exact).
void write_trajectory_csv(const Trajectory& traj, const std::string& path);
void write_field_csv(const std::vector<FieldSample>& samples, const std::string& path);

// Writes text to a temporary file beside `path`, then renames it into place,
// so a crash mid-write never leaves a torn file where a reader expects a
// complete one.
void write_text_file(const std::string& text, const std::string& path);

}  // namespace cyclemorph
