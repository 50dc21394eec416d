#include "cyclemorph/io_formats.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cyclemorph/errors.hpp"

namespace cyclemorph {
namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("read failed for " + path);
  return buf.str();
}

json parse_json(const std::string& text, const std::string& path) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw MalformedFileError(path + " is not valid JSON: " + e.what());
  }
}

double finite_number(const json& j, const char* what, const std::string& path) {
  if (!j.is_number()) throw MalformedFileError(path + ": " + what + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw MalformedFileError(path + ": " + what + " must be finite");
  return v;
}

State3 vec3_of(const json& j, const char* what, const std::string& path) {
  if (!j.is_array() || j.size() != 3) {
    throw MalformedFileError(path + ": " + what + " must be an array of 3 numbers");
  }
  return {finite_number(j[0], what, path), finite_number(j[1], what, path),
          finite_number(j[2], what, path)};
}

// Strict scalar parse of one CSV cell.
double parse_cell(const std::string& cell, const std::string& path, std::size_t line_no) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  while (end != cell.c_str() + cell.size() && std::isspace(static_cast<unsigned char>(*end))) ++end;
  if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
    throw MalformedFileError(path + ": line " + std::to_string(line_no) + ": bad number \"" +
                             cell + "\"");
  }
  return v;
}

std::vector<SketchPoint> sketch_from_csv(const std::string& text, const std::string& path) {
  std::vector<SketchPoint> points;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream cs(line);
    std::string cell;
    while (std::getline(cs, cell, ',')) cells.push_back(cell);
    if (line_no == 1 && !cells.empty() &&
        cells[0].find_first_not_of("+-.0123456789eE \t") != std::string::npos) {
      continue;  // header row
    }
    if (cells.size() != 2 && cells.size() != 3) {
      throw MalformedFileError(path + ": line " + std::to_string(line_no) +
                               ": expected u,v[,depth]");
    }
    SketchPoint p;
    p.u = parse_cell(cells[0], path, line_no);
    p.v = parse_cell(cells[1], path, line_no);
    if (cells.size() == 3) p.depth = parse_cell(cells[2], path, line_no);
    points.push_back(p);
  }
  return points;
}

}  // namespace

std::vector<SketchPoint> sketch_from_json(const nlohmann::json& j, const std::string& context) {
  if (!j.is_array()) {
    throw MalformedFileError(context + ": sketch JSON must be an array of {u, v[, depth]} objects");
  }
  std::vector<SketchPoint> points;
  points.reserve(j.size());
  for (const auto& entry : j) {
    if (!entry.is_object() || !entry.contains("u") || !entry.contains("v")) {
      throw MalformedFileError(context + ": sketch points need \"u\" and \"v\"");
    }
    SketchPoint p;
    p.u = finite_number(entry.at("u"), "u", context);
    p.v = finite_number(entry.at("v"), "v", context);
    if (entry.contains("depth") && !entry.at("depth").is_null()) {
      p.depth = finite_number(entry.at("depth"), "depth", context);
    }
    points.push_back(p);
  }
  return points;
}

CameraModel camera_from_json(const nlohmann::json& j, const std::string& context) {
  if (!j.is_object()) throw MalformedFileError(context + ": camera must be a JSON object");
  CameraModel cam;
  try {
    cam.fx = finite_number(j.at("fx"), "fx", context);
    cam.fy = finite_number(j.at("fy"), "fy", context);
    cam.cx = finite_number(j.at("cx"), "cx", context);
    cam.cy = finite_number(j.at("cy"), "cy", context);
    cam.position = vec3_of(j.at("position"), "position", context);
    const auto& q = j.at("orientation");
    if (!q.is_array() || q.size() != 4) {
      throw MalformedFileError(context + ": orientation must be [w, x, y, z]");
    }
    cam.orientation = {finite_number(q[0], "orientation", context),
                       finite_number(q[1], "orientation", context),
                       finite_number(q[2], "orientation", context),
                       finite_number(q[3], "orientation", context)};
  } catch (const json::exception& e) {
    throw MalformedFileError(context + ": " + e.what());
  }
  try {
    cam.validate();
  } catch (const DomainError& e) {
    throw MalformedFileError(context + ": " + e.what());
  }
  return cam;
}

PlaneSpec plane_from_json(const nlohmann::json& j, const std::string& context) {
  if (!j.is_object()) throw MalformedFileError(context + ": plane must be a JSON object");
  PlaneSpec spec;
  try {
    spec.plane.point = vec3_of(j.at("point"), "point", context);
    spec.plane.normal = vec3_of(j.at("normal"), "normal", context);
    spec.hint_x = vec3_of(j.at("hint_x"), "hint_x", context);
  } catch (const json::exception& e) {
    throw MalformedFileError(context + ": " + e.what());
  }
  try {
    spec.plane.validate();
  } catch (const Error& e) {
    throw MalformedFileError(context + ": " + e.what());
  }
  return spec;
}

std::vector<SketchPoint> load_sketch(const std::string& path) {
  const std::string text = read_file(path);
  const std::string ext = std::filesystem::path(path).extension().string();
  bool as_json;
  if (ext == ".json") {
    as_json = true;
  } else if (ext == ".csv") {
    as_json = false;
  } else {
    const auto first = text.find_first_not_of(" \t\r\n");
    as_json = first != std::string::npos && text[first] == '[';
  }
  return as_json ? sketch_from_json(parse_json(text, path), path) : sketch_from_csv(text, path);
}

CameraModel load_camera(const std::string& path) {
  return camera_from_json(parse_json(read_file(path), path), path);
}

PlaneSpec load_plane(const std::string& path) {
  return plane_from_json(parse_json(read_file(path), path), path);
}

TargetFile load_target(const std::string& path) {
  const json j = parse_json(read_file(path), path);
  try {
    if (!j.is_object() || j.value("v", 0) != 1) {
      throw MalformedFileError(path + ": target file must be an object with \"v\": 1");
    }
    TargetFile target;
    const auto& pts = j.at("points");
    if (!pts.is_array()) throw MalformedFileError(path + ": points must be an array");
    for (const auto& p : pts) {
      if (!p.is_array() || p.size() != 2) {
        throw MalformedFileError(path + ": each point must be [x, z]");
      }
      target.points.push_back({finite_number(p[0], "point", path),
                               finite_number(p[1], "point", path)});
    }
    if (target.points.size() < 3) {
      throw MalformedFileError(path + ": target needs at least 3 points");
    }
    const auto& tr = j.at("transform");
    const auto& t = tr.at("translation");
    if (!t.is_array() || t.size() != 2) {
      throw MalformedFileError(path + ": transform.translation must be [x, z]");
    }
    target.transform.translation = {finite_number(t[0], "translation", path),
                                    finite_number(t[1], "translation", path)};
    target.transform.scale = finite_number(tr.at("scale"), "scale", path);
    if (target.transform.scale <= 0.0) {
      throw MalformedFileError(path + ": transform.scale must be > 0");
    }
    return target;
  } catch (const json::exception& e) {
    throw MalformedFileError(path + ": " + e.what());
  }
}

void save_target(const TargetFile& target, const std::string& path) {
  nlohmann::ordered_json j;
  j["v"] = 1;
  auto pts = nlohmann::ordered_json::array();
  for (const Vec2& p : target.points) pts.push_back({p.x, p.z});
  j["points"] = std::move(pts);
  j["transform"] = {
      {"translation", {target.transform.translation.x, target.transform.translation.z}},
      {"scale", target.transform.scale},
  };
  write_text_file(j.dump(2) + '\n', path);
}

void write_text_file(const std::string& text, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename " + tmp + " over " + path);
  }
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw MalformedFileError("train config must be a JSON object");
  TrainConfig config;
  for (const auto& [key, value] : j.items()) {
    if (key == "cycle_samples") {
      config.cycle_samples = value.get<int>();
    } else if (key == "reg_samples") {
      config.reg_samples = value.get<int>();
    } else if (key == "reg_weight") {
      config.reg_weight = value.get<double>();
    } else if (key == "reg_region") {
      const auto& lo = value.at("lo");
      const auto& hi = value.at("hi");
      if (!lo.is_array() || lo.size() != 2 || !hi.is_array() || hi.size() != 2) {
        throw MalformedFileError("train config: reg_region.lo/hi must be [x, z]");
      }
      config.reg_region = Box2{{lo[0].get<double>(), lo[1].get<double>()},
                               {hi[0].get<double>(), hi[1].get<double>()}};
    } else if (key == "epochs") {
      config.epochs = value.get<int>();
    } else if (key == "adam") {
      for (const auto& [akey, avalue] : value.items()) {
        if (akey == "learning_rate") {
          config.adam.learning_rate = avalue.get<double>();
        } else if (akey == "beta1") {
          config.adam.beta1 = avalue.get<double>();
        } else if (akey == "beta2") {
          config.adam.beta2 = avalue.get<double>();
        } else if (akey == "epsilon") {
          config.adam.epsilon = avalue.get<double>();
        } else {
          throw MalformedFileError("train config: unknown adam key \"" + akey + "\"");
        }
      }
    } else if (key == "seed") {
      config.seed = value.get<std::uint64_t>();
    } else {
      throw MalformedFileError("train config: unknown key \"" + key + "\"");
    }
  }
  try {
    config.validate();
  } catch (const DomainError& e) {
    throw MalformedFileError(std::string("train config: ") + e.what());
  }
  return config;
}

TrainConfig load_train_config(const std::string& path) {
  try {
    return train_config_from_json(parse_json(read_file(path), path));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFileError(path + ": " + e.what());
  }
}

namespace {

void write_csv(const std::string& path, const char* header,
               const std::function<void(std::FILE*)>& body) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open " + path + " for writing");
  std::fputs(header, f);
  body(f);
  if (std::fflush(f) != 0 || std::ferror(f)) {
    std::fclose(f);
    throw IoError("write failed for " + path);
  }
  std::fclose(f);
}

}  // namespace

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  if (traj.times.size() != traj.states.size()) {
    throw DomainError("write_trajectory_csv: times/states length mismatch");
  }
  write_csv(path, "t,x,y,z\n", [&](std::FILE* f) {
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      const State3& s = traj.states[i];
      std::fprintf(f, "%.17g,%.17g,%.17g,%.17g\n", traj.times[i], s.x, s.y, s.z);
    }
  });
}

void write_field_csv(const std::vector<FieldSample>& samples, const std::string& path) {
  write_csv(path, "x,z,vx,vz\n", [&](std::FILE* f) {
    for (const FieldSample& s : samples) {
      std::fprintf(f, "%.17g,%.17g,%.17g,%.17g\n", s.x, s.z, s.vx, s.vz);
    }
  });
}

}  // namespace cyclemorph
