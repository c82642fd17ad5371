// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/camera.hpp"

#include "msplat/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace msplat {

using nlohmann::json;

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ValidationError("intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw ValidationError("intrinsics: image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw ValidationError("intrinsics: principal point outside the image");
  }
}

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Camera CameraTrajectory::camera(std::size_t frame) const {
  if (frame >= poses.size()) {
    throw InvalidArgument("trajectory: frame " + std::to_string(frame) + " out of range (" +
                          std::to_string(poses.size()) + " frames)");
  }
  return {intrinsics, poses[frame]};
}

void CameraTrajectory::validate() const {
  intrinsics.validate();
  if (poses.empty()) {
    throw ValidationError("trajectory: no frames");
  }
  if (!(frame_rate > 0.0)) {
    throw ValidationError("trajectory: frame_rate must be positive");
  }
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto& p = poses[i].pose;
    if (!p.rotation.allFinite() || !p.translation.allFinite()) {
      throw ValidationError("trajectory: frame " + std::to_string(i) + " is not finite");
    }
    if (orthonormality_error(p.rotation) > 1e-4) {
      throw ValidationError("trajectory: frame " + std::to_string(i) +
                            " rotation is not a proper rotation (|R^T R - I| or |det R - 1| > 1e-4)");
    }
  }
}

Projection project_point(const Vec3& x, const Intrinsics& K, const Extrinsics& E) {
  const Vec3 pc = E.pose.apply(x);
  if (!(pc.z() > kMinProjectionDepth)) {
    throw InvalidArgument("project_point: point behind camera (z = " + std::to_string(pc.z()) +
                          ")");
  }
  return {{K.fx * pc.x() / pc.z() + K.cx, K.fy * pc.y() / pc.z() + K.cy}, pc.z()};
}

Ray pixel_ray(double u, double v, const Intrinsics& K, const Extrinsics& E) {
  const Vec3 dir_cam((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
  const Mat3 Rt = E.pose.rotation.transpose();
  return {E.center(), (Rt * dir_cam).normalized()};
}

PlueckerMap plucker_embed(const Intrinsics& K, const Extrinsics& E) {
  PlueckerMap map;
  map.width = K.width;
  map.height = K.height;
  map.data.assign(static_cast<std::size_t>(6) * K.width * K.height, 0.0);
  const Vec3 o = E.center();
  const Mat3 Rt = E.pose.rotation.transpose();
  for (int row = 0; row < K.height; ++row) {
    for (int col = 0; col < K.width; ++col) {
      const Vec3 d = (Rt * Vec3((col - K.cx) / K.fx, (row - K.cy) / K.fy, 1.0)).normalized();
      const Vec3 m = o.cross(d);
      for (int c = 0; c < 3; ++c) {
        map.at(c, row, col) = m[c];
        map.at(3 + c, row, col) = d[c];
      }
    }
  }
  return map;
}

Extrinsics look_at(const Vec3& center, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - center).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-12) {
    x = z.cross(Vec3::UnitZ().cross(z).norm() > 1e-12 ? Vec3::UnitZ() : Vec3::UnitX());
  }
  x.normalize();
  const Vec3 y = z.cross(x);
  Extrinsics e;
  e.pose.rotation.row(0) = x;
  e.pose.rotation.row(1) = y;
  e.pose.rotation.row(2) = z;
  e.pose.translation = -(e.pose.rotation * center);
  return e;
}

TrajectoryKind parse_trajectory_kind(const std::string& name) {
  if (name == "orbit") return TrajectoryKind::Orbit;
  if (name == "dolly") return TrajectoryKind::Dolly;
  if (name == "arc") return TrajectoryKind::Arc;
  if (name == "static") return TrajectoryKind::Static;
  throw InvalidArgument("unknown trajectory kind '" + name + "' (orbit|dolly|arc|static)");
}

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Orbit: return "orbit";
    case TrajectoryKind::Dolly: return "dolly";
    case TrajectoryKind::Arc: return "arc";
    case TrajectoryKind::Static: return "static";
  }
  return "?";
}

CameraTrajectory make_trajectory(TrajectoryKind kind, const TrajectoryParams& p) {
  if (p.frames < 1) {
    throw InvalidArgument("make_trajectory: frames must be >= 1");
  }
  if (!(p.frame_rate > 0.0)) {
    throw InvalidArgument("make_trajectory: frame_rate must be positive");
  }
  try {
    p.intrinsics.validate();
  } catch (const ValidationError& e) {
    throw InvalidArgument(std::string("make_trajectory: ") + e.what());
  }

  CameraTrajectory traj;
  traj.intrinsics = p.intrinsics;
  traj.frame_rate = p.frame_rate;
  traj.poses.reserve(p.frames);

  const auto ring_center = [&](double angle) {
    return Vec3(p.target.x() + p.radius * std::sin(angle), p.target.y() - p.elevation,
                p.target.z() - p.radius * std::cos(angle));
  };

  switch (kind) {
    case TrajectoryKind::Orbit: {
      if (!(p.radius > 0.0)) throw InvalidArgument("orbit: radius must be positive");
      for (int k = 0; k < p.frames; ++k) {
        const double a = 2.0 * std::numbers::pi * k / p.frames;
        traj.poses.push_back(look_at(ring_center(a), p.target));
      }
      break;
    }
    case TrajectoryKind::Arc: {
      if (!(p.radius > 0.0)) throw InvalidArgument("arc: radius must be positive");
      if (!(p.arc_degrees >= 0.0 && p.arc_degrees < 360.0)) {
        throw InvalidArgument("arc: arc_degrees must lie in [0, 360)");
      }
      const double span = p.arc_degrees * std::numbers::pi / 180.0;
      for (int k = 0; k < p.frames; ++k) {
        const double s = p.frames == 1 ? 0.5 : static_cast<double>(k) / (p.frames - 1);
        traj.poses.push_back(look_at(ring_center(span * (s - 0.5)), p.target));
      }
      break;
    }
    case TrajectoryKind::Dolly: {
      if (!(p.distance > 0.0)) throw InvalidArgument("dolly: distance must be positive");
      if (p.direction.norm() < 1e-12) throw InvalidArgument("dolly: direction must be non-zero");
      if ((p.target - p.start).norm() < 1e-12) {
        throw InvalidArgument("dolly: start coincides with target");
      }
      const Vec3 dir = p.direction.normalized();
      const Extrinsics facing = look_at(p.start, p.target);
      for (int k = 0; k < p.frames; ++k) {
        const double s = p.frames == 1 ? 0.0 : static_cast<double>(k) / (p.frames - 1);
        Extrinsics e = facing;
        e.pose.translation = -(e.pose.rotation * (p.start + s * p.distance * dir));
        traj.poses.push_back(e);
      }
      break;
    }
    case TrajectoryKind::Static: {
      if (!(p.radius > 0.0)) throw InvalidArgument("static: radius must be positive");
      const Extrinsics e = look_at(ring_center(0.0), p.target);
      traj.poses.assign(p.frames, e);
      break;
    }
  }
  return traj;
}

namespace {

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

double number_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) {
    throw ParseError(where + ": missing field '" + key + "'");
  }
  const auto& v = obj.at(key);
  if (!v.is_number()) {
    throw ParseError(where + "." + key + ": expected a number");
  }
  return v.get<double>();
}

template <int N>
Eigen::Matrix<double, N, 1> vector_field(const json& obj, const char* key,
                                         const std::string& where) {
  if (!obj.contains(key)) {
    throw ParseError(where + ": missing field '" + key + "'");
  }
  const auto& v = obj.at(key);
  if (!v.is_array() || v.size() != N) {
    throw ParseError(where + "." + key + ": expected an array of " + std::to_string(N) +
                     " numbers");
  }
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) {
    if (!v[i].is_number()) {
      throw ParseError(where + "." + key + "[" + std::to_string(i) + "]: expected a number");
    }
    out[i] = v[i].get<double>();
  }
  return out;
}

}  // namespace

std::string serialize_trajectory(const CameraTrajectory& traj) {
  json j;
  j["convention"] = kTrajectoryConvention;
  j["frame_rate"] = traj.frame_rate;
  const auto& K = traj.intrinsics;
  j["intrinsics"] = {{"fx", K.fx},    {"fy", K.fy},         {"cx", K.cx},
                     {"cy", K.cy},    {"width", K.width},   {"height", K.height}};
  json frames = json::array();
  for (const auto& e : traj.poses) {
    const Quat4 q = matrix_to_quat(e.pose.rotation);
    const Vec3& t = e.pose.translation;
    frames.push_back({{"q", {q[0], q[1], q[2], q[3]}}, {"t", {t.x(), t.y(), t.z()}}});
  }
  j["frames"] = std::move(frames);
  return j.dump(2) + "\n";
}

CameraTrajectory parse_trajectory(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ":" + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
  if (!j.is_object()) {
    throw ParseError(origin + ": top level must be an object");
  }
  if (j.contains("convention")) {
    if (!j["convention"].is_string() || j["convention"].get<std::string>() != kTrajectoryConvention) {
      throw ParseError(origin + ": convention: unsupported value, expected '" +
                       std::string(kTrajectoryConvention) + "'");
    }
  }

  CameraTrajectory traj;
  traj.frame_rate = number_field(j, "frame_rate", origin);
  if (!j.contains("intrinsics") || !j["intrinsics"].is_object()) {
    throw ParseError(origin + ": missing object 'intrinsics'");
  }
  const auto& ji = j["intrinsics"];
  const std::string wi = origin + ": intrinsics";
  traj.intrinsics.fx = number_field(ji, "fx", wi);
  traj.intrinsics.fy = number_field(ji, "fy", wi);
  traj.intrinsics.cx = number_field(ji, "cx", wi);
  traj.intrinsics.cy = number_field(ji, "cy", wi);
  traj.intrinsics.width = static_cast<int>(number_field(ji, "width", wi));
  traj.intrinsics.height = static_cast<int>(number_field(ji, "height", wi));

  if (!j.contains("frames") || !j["frames"].is_array()) {
    throw ParseError(origin + ": missing array 'frames'");
  }
  const auto& jf = j["frames"];
  for (std::size_t i = 0; i < jf.size(); ++i) {
    const std::string where = origin + ": frames[" + std::to_string(i) + "]";
    const auto& f = jf[i];
    if (!f.is_object()) {
      throw ParseError(where + ": expected an object");
    }
    Extrinsics e;
    if (f.contains("q")) {
      const Quat4 q = vector_field<4>(f, "q", where);
      if (std::abs(q.norm() - 1.0) > 1e-4) {
        throw ValidationError(where + ".q: quaternion norm " + std::to_string(q.norm()) +
                              " differs from 1 by more than 1e-4");
      }
      e.pose.rotation = quat_to_matrix(q);
    } else if (f.contains("R")) {
      const auto r = vector_field<9>(f, "R", where);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) e.pose.rotation(a, b) = r[3 * a + b];
      if (orthonormality_error(e.pose.rotation) > 1e-4) {
        throw ValidationError(where + ".R: not a proper rotation (det = " +
                              std::to_string(e.pose.rotation.determinant()) + ")");
      }
    } else {
      throw ParseError(where + ": missing field 'q' (or 'R')");
    }
    e.pose.translation = vector_field<3>(f, "t", where);
    traj.poses.push_back(e);
  }
  try {
    traj.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  return traj;
}

void write_trajectory(const CameraTrajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << serialize_trajectory(traj);
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

CameraTrajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trajectory(ss.str(), path.string());
}

void export_plucker(const CameraTrajectory& traj, const std::filesystem::path& dir) {
  static_assert(std::endian::native == std::endian::little, "raw export assumes little-endian");
  std::filesystem::create_directories(dir);
  const auto& K = traj.intrinsics;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const PlueckerMap map = plucker_embed(K, traj.poses[i]);
    std::vector<float> buf(map.data.begin(), map.data.end());
    char name[32];
    std::snprintf(name, sizeof(name), "plucker_%05zu.f32", i);
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) {
      throw IoError("cannot write " + (dir / name).string());
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  json header = {{"shape", {traj.size(), 6, K.height, K.width}},
                 {"dtype", "float32"},
                 {"byte_order", "little"},
                 {"layout", "per-frame file, planar channel-major [6][h][w]"},
                 {"channels", {"moment_x", "moment_y", "moment_z", "dir_x", "dir_y", "dir_z"}},
                 {"file_pattern", "plucker_%05d.f32"},
                 {"convention", kTrajectoryConvention}};
  std::ofstream out(dir / "plucker.json");
  if (!out) {
    throw IoError("cannot write " + (dir / "plucker.json").string());
  }
  out << header.dump(2) << "\n";
}

}  // namespace msplat
