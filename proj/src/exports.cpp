// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/exports.hpp"

#include "msplat/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace msplat {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "exports assume a little-endian host");

namespace {

constexpr const char* kPlyFields[] = {"x",  "y",  "z",  "qw", "qx",      "qy", "qz",
                                      "s0", "s1", "s2", "opacity", "r", "g", "b"};
constexpr std::size_t kPlyFloats = 14;

void put_f32(std::string& buf, double v) {
  const float f = static_cast<float>(v);
  char b[4];
  std::memcpy(b, &f, 4);
  buf.append(b, 4);
}

float get_f32(const char* p) {
  float f;
  std::memcpy(&f, p, 4);
  return f;
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_cloud_ply(const GaussianCloud& cloud, const fs::path& path) {
  std::ostringstream hdr;
  hdr << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size() << "\n";
  for (const char* f : kPlyFields) hdr << "property float " << f << "\n";
  hdr << "property uchar dynamic\nend_header\n";
  std::string buf = hdr.str();
  buf.reserve(buf.size() + cloud.size() * (kPlyFloats * 4 + 1));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Gaussian& g = cloud.gaussians[i];
    for (int k = 0; k < 3; ++k) put_f32(buf, g.mean[k]);
    for (int k = 0; k < 4; ++k) put_f32(buf, g.rotation[k]);
    for (int k = 0; k < 3; ++k) put_f32(buf, g.log_scale[k]);
    put_f32(buf, g.opacity_logit);
    for (int k = 0; k < 3; ++k) put_f32(buf, g.color[k]);
    buf.push_back(static_cast<char>(cloud.is_dynamic(i) ? 1 : 0));
  }
  write_bytes(path, buf);
}

GaussianCloud read_cloud_ply(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  const std::string end = "end_header\n";
  const auto pos = bytes.find(end);
  if (bytes.rfind("ply\n", 0) != 0 || pos == std::string::npos) {
    throw ParseError(path.string() + ": not a PLY file");
  }
  std::istringstream hdr(bytes.substr(0, pos));
  std::string line;
  std::size_t count = 0;
  std::vector<std::string> props;
  bool binary = false;
  while (std::getline(hdr, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      binary = fmt == "binary_little_endian";
    } else if (word == "element") {
      std::string name;
      ls >> name >> count;
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(type + " " + name);
    }
  }
  std::vector<std::string> expected;
  for (const char* f : kPlyFields) expected.push_back(std::string("float ") + f);
  expected.push_back("uchar dynamic");
  if (!binary || props != expected) {
    throw ParseError(path.string() + ": unexpected PLY layout");
  }
  const std::size_t stride = kPlyFloats * 4 + 1;
  const char* p = bytes.data() + pos + end.size();
  if (bytes.size() - (pos + end.size()) != count * stride) {
    throw ParseError(path.string() + ": vertex data size does not match the header");
  }
  GaussianCloud cloud;
  for (std::size_t i = 0; i < count; ++i, p += stride) {
    float v[kPlyFloats];
    for (std::size_t k = 0; k < kPlyFloats; ++k) v[k] = get_f32(p + 4 * k);
    Gaussian g;
    g.mean = Vec3(v[0], v[1], v[2]);
    g.rotation = Quat4(v[3], v[4], v[5], v[6]).normalized();
    g.log_scale = Vec3(v[7], v[8], v[9]);
    g.opacity_logit = v[10];
    g.color = Vec3(v[11], v[12], v[13]);
    cloud.push_back(g, p[kPlyFloats * 4] != 0);
  }
  return cloud;
}

void write_motion(const MotionModel& model, const fs::path& path) {
  fs::path bin = path;
  bin.replace_extension(".bin");
  const std::size_t B = model.basis_count();
  json hdr = {{"basis_count", B},
              {"frames", model.frames()},
              {"dynamic_count", model.dynamic_count()},
              {"twist_order", "omega_x,omega_y,omega_z,v_x,v_y,v_z"},
              {"dtype", "float32_le"},
              {"data", bin.filename().string()},
              {"bases_offset", 0},
              {"coeffs_offset", B * 6 * 4},
              {"bases_shape", {B, 6}},
              {"coeffs_shape", {model.dynamic_count(), model.frames(), B}}};
  std::string buf;
  buf.reserve((B * 6 + model.coeffs().size()) * 4);
  for (std::size_t b = 0; b < B; ++b) {
    const Vec6 x = model.basis(b).vector();
    for (int k = 0; k < 6; ++k) put_f32(buf, x[k]);
  }
  for (double c : model.coeffs()) put_f32(buf, c);
  write_bytes(bin, buf);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << hdr.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

MotionModel read_motion(const fs::path& path) {
  json hdr;
  {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
      hdr = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  }
  std::size_t B = 0, F = 0, N = 0;
  std::string data;
  try {
    B = hdr.at("basis_count").get<std::size_t>();
    F = hdr.at("frames").get<std::size_t>();
    N = hdr.at("dynamic_count").get<std::size_t>();
    data = hdr.at("data").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  const std::string bytes = read_bytes(path.parent_path() / data);
  if (bytes.size() != (B * 6 + N * F * B) * 4) {
    throw ParseError(path.string() + ": " + data + " size does not match the header");
  }
  MotionModel model(N, F, B);
  const char* p = bytes.data();
  for (std::size_t b = 0; b < B; ++b, p += 24) {
    Vec6 x;
    for (int k = 0; k < 6; ++k) x[k] = get_f32(p + 4 * k);
    if (b >= MotionModel::kFixedCount) {
      model.trainable()[b - MotionModel::kFixedCount] = Twist::from_vector(x);
    }
  }
  for (double& c : model.coeffs()) {
    c = get_f32(p);
    p += 4;
  }
  return model;
}

void save_state(const GaussianCloud& cloud, const MotionModel& model, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_cloud_ply(cloud, dir / "cloud.ply");
  write_motion(model, dir / "motion.json");
}

SceneState load_state(const fs::path& dir) {
  SceneState s;
  s.cloud = read_cloud_ply(dir / "cloud.ply");
  s.model = read_motion(dir / "motion.json");
  if (s.cloud.dynamic_count() != s.model.dynamic_count()) {
    throw ValidationError(dir.string() + ": cloud has " + std::to_string(s.cloud.dynamic_count()) +
                          " dynamic Gaussians but motion has " +
                          std::to_string(s.model.dynamic_count()) + " rows");
  }
  return s;
}

void export_tracks_3d(const std::vector<Trajectory3D>& tracks, const fs::path& path) {
  std::ostringstream out;
  out << std::setprecision(17) << "query_id\tt\tx\ty\tz\n";
  for (const auto& tr : tracks) {
    for (std::size_t t = 0; t < tr.points.size(); ++t) {
      const Vec3& p = tr.points[t];
      out << tr.query_id << '\t' << t << '\t' << p.x() << '\t' << p.y() << '\t' << p.z() << '\n';
    }
  }
  write_bytes(path, out.str());
}

std::vector<Trajectory3D> read_tracks_3d(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Trajectory3D> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("query_id", 0) == 0) continue;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::size_t q = 0, t = 0;
    double x, y, z;
    if (!(ss >> q >> t >> x >> y >> z)) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 'query_id t x y z'");
    }
    if (out.empty() || out.back().query_id != q) out.push_back(Trajectory3D{q, {}});
    if (t != out.back().points.size()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": frames out of order");
    }
    out.back().points.emplace_back(x, y, z);
  }
  return out;
}

void export_renders(const std::vector<Image>& images, const fs::path& dir, const std::string& prefix) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.png", i);
    write_png8(images[i], dir / (prefix + name));
  }
}

}  // namespace msplat
