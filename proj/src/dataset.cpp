// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/dataset.hpp"

#include "msplat/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace msplat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string numbered(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05zu.%s", i, ext);
  return buf;
}

std::string dims(const Image& img) {
  return std::to_string(img.width) + "x" + std::to_string(img.height);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::size_t count_numbered(const fs::path& dir, const char* ext) {
  std::size_t n = 0;
  while (fs::exists(dir / numbered(n, ext))) ++n;
  return n;
}

}  // namespace

void SceneDataset::validate() const {
  const std::size_t F = frames.size();
  if (F == 0) throw ValidationError("dataset: no frames");
  if (trajectory.size() != F) {
    throw ValidationError("dataset: frame-count mismatch, " + std::to_string(F) +
                          " frames but trajectory has " + std::to_string(trajectory.size()) +
                          " poses");
  }
  if (depths.size() != F) {
    throw ValidationError("dataset: frame-count mismatch, " + std::to_string(F) +
                          " frames but " + std::to_string(depths.size()) + " depth maps");
  }
  if (!masks.empty() && masks.size() != F) {
    throw ValidationError("dataset: frame-count mismatch, " + std::to_string(F) +
                          " frames but " + std::to_string(masks.size()) + " masks");
  }
  const int W = trajectory.intrinsics.width;
  const int H = trajectory.intrinsics.height;
  auto check_dims = [&](const Image& img, const std::string& what, std::size_t t, int channels) {
    if (img.width != W || img.height != H) {
      throw ValidationError("dataset: dimension mismatch in " + what + " " + std::to_string(t) +
                            ": " + dims(img) + " vs intrinsics " + std::to_string(W) + "x" +
                            std::to_string(H));
    }
    if (img.channels != channels) {
      throw ValidationError("dataset: " + what + " " + std::to_string(t) + " has " +
                            std::to_string(img.channels) + " channels, expected " +
                            std::to_string(channels));
    }
  };
  for (std::size_t t = 0; t < F; ++t) {
    check_dims(frames[t], "frame", t, 3);
    check_dims(depths[t], "depth", t, 1);
    for (double d : depths[t].data) {
      if (!std::isfinite(d)) {
        throw ValidationError("dataset: non-finite depth in frame " + std::to_string(t));
      }
      if (d < 0.0) throw ValidationError("dataset: negative depth in frame " + std::to_string(t));
    }
    if (!masks.empty()) check_dims(masks[t], "mask", t, 1);
  }
  if (tracks.queries > 0 && tracks.frames != F) {
    throw ValidationError("dataset: frame-count mismatch, tracks cover " +
                          std::to_string(tracks.frames) + " frames, expected " + std::to_string(F));
  }
  for (std::size_t q = 0; q < tracks.queries; ++q) {
    for (std::size_t t = 0; t < tracks.frames; ++t) {
      if (!tracks.is_visible(q, t)) continue;
      const Vec2& p = tracks.position(q, t);
      if (!p.allFinite() || p.x() < 0.0 || p.y() < 0.0 || p.x() > W - 1 || p.y() > H - 1) {
        std::ostringstream msg;
        msg << "dataset: track out of bounds, query " << q << " frame " << t << " at ("
            << p.x() << ", " << p.y() << ")";
        throw ValidationError(msg.str());
      }
    }
  }
  for (const auto& v : holdout) {
    if (v.frame >= F) {
      throw ValidationError("dataset: held-out view refers to frame " + std::to_string(v.frame));
    }
    check_dims(v.image, "held-out view", v.frame, 3);
  }
}

void write_tracks(const TrackSet& tracks, const fs::path& path) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "query_id\tframe\tu\tv\tvisible\n";
  for (std::size_t q = 0; q < tracks.queries; ++q) {
    for (std::size_t t = 0; t < tracks.frames; ++t) {
      const Vec2& p = tracks.position(q, t);
      out << q << '\t' << t << '\t' << p.x() << '\t' << p.y() << '\t'
          << (tracks.is_visible(q, t) ? 1 : 0) << '\n';
    }
  }
  write_text(path, out.str());
}

TrackSet read_tracks(const fs::path& path, std::size_t frames) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  struct Row {
    std::size_t q, t;
    double u, v;
    int vis;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t max_q = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && line.rfind("query_id", 0) == 0) continue;
    std::istringstream ss(line);
    long long q = -1, t = -1;
    Row r{};
    if (!(ss >> q >> t >> r.u >> r.v >> r.vis) || q < 0 || t < 0) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected 'query_id frame u v visible'");
    }
    r.q = static_cast<std::size_t>(q);
    r.t = static_cast<std::size_t>(t);
    if (r.t >= frames) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": frame " +
                            std::to_string(r.t) + " outside 0.." + std::to_string(frames - 1));
    }
    max_q = std::max(max_q, r.q + 1);
    rows.push_back(r);
  }
  TrackSet tracks(max_q, frames);
  for (const auto& r : rows) {
    tracks.position(r.q, r.t) = Vec2(r.u, r.v);
    tracks.set_visible(r.q, r.t, r.vis != 0);
  }
  return tracks;
}

SceneDataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  const fs::path camera_path = dir / "camera.json";
  if (!fs::exists(camera_path)) throw IoError("missing camera file: " + camera_path.string());

  SceneDataset data;
  data.trajectory = read_trajectory(camera_path);
  const std::size_t F = data.trajectory.size();
  const int W = data.trajectory.intrinsics.width;
  const int H = data.trajectory.intrinsics.height;

  const std::size_t n_frames = count_numbered(dir / "frames", "png");
  if (n_frames == 0) throw IoError("no frames found in " + (dir / "frames").string());
  if (n_frames != F) {
    throw ValidationError("dataset: frame-count mismatch, " + std::to_string(n_frames) +
                          " frames but camera.json has " + std::to_string(F) + " poses");
  }
  for (std::size_t t = 0; t < F; ++t) {
    Image img = read_png(dir / "frames" / numbered(t, "png"));
    if (img.channels == 1) {
      Image rgb(img.width, img.height, 3);
      for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        for (int c = 0; c < 3; ++c) rgb.data[p * 3 + c] = img.data[p];
      }
      img = std::move(rgb);
    }
    data.frames.push_back(std::move(img));
  }

  const fs::path depth_dir = dir / "depths";
  const bool raw = fs::exists(depth_dir / numbered(0, "raw"));
  double scale = 1.0;
  if (!raw) {
    const fs::path scale_path = dir / "depth_scale.json";
    if (!fs::exists(scale_path)) throw IoError("missing depth scale file: " + scale_path.string());
    const json j = read_json(scale_path);
    if (!j.contains("scale") || !j["scale"].is_number()) {
      throw ParseError(scale_path.string() + ": field 'scale' missing or not a number");
    }
    scale = j["scale"].get<double>();
    if (!(scale > 0.0)) throw ValidationError(scale_path.string() + ": scale must be positive");
  }
  const std::size_t n_depths = count_numbered(depth_dir, raw ? "raw" : "png");
  if (n_depths != F) {
    throw ValidationError("dataset: frame-count mismatch, " + std::to_string(F) + " frames but " +
                          std::to_string(n_depths) + " depth maps");
  }
  for (std::size_t t = 0; t < F; ++t) {
    if (raw) {
      data.depths.push_back(read_raw_f32(depth_dir / numbered(t, "raw"), W, H, 1));
    } else {
      data.depths.push_back(read_png16(depth_dir / numbered(t, "png"), scale));
    }
  }

  const fs::path tracks_path = dir / "tracks.tsv";
  if (!fs::exists(tracks_path)) throw IoError("missing tracks file: " + tracks_path.string());
  data.tracks = read_tracks(tracks_path, F);

  const fs::path mask_dir = dir / "masks";
  if (fs::is_directory(mask_dir)) {
    const std::size_t n_masks = count_numbered(mask_dir, "png");
    if (n_masks != F) {
      throw ValidationError("dataset: frame-count mismatch, " + std::to_string(F) +
                            " frames but " + std::to_string(n_masks) + " masks");
    }
    for (std::size_t t = 0; t < F; ++t) {
      Image m = read_png(mask_dir / numbered(t, "png"));
      Image bin(m.width, m.height, 1);
      for (std::size_t p = 0; p < m.pixel_count(); ++p) {
        bin.data[p] = m.data[p * m.channels] > 0.5 ? 1.0 : 0.0;
      }
      data.masks.push_back(std::move(bin));
    }
  }

  const fs::path views_path = dir / "holdout" / "views.json";
  if (fs::exists(views_path)) {
    const json j = read_json(views_path);
    if (!j.contains("views") || !j["views"].is_array()) {
      throw ParseError(views_path.string() + ": field 'views' missing or not an array");
    }
    std::size_t k = 0;
    for (const auto& v : j["views"]) {
      const std::string where = views_path.string() + ": views[" + std::to_string(k) + "]";
      if (!v.contains("frame") || !v.contains("q") || !v.contains("t") || v["q"].size() != 4 ||
          v["t"].size() != 3) {
        throw ParseError(where + ": expected {frame, q[4], t[3]}");
      }
      HeldOutView view;
      view.frame = v["frame"].get<std::size_t>();
      const Quat4 q(v["q"][0].get<double>(), v["q"][1].get<double>(), v["q"][2].get<double>(),
                    v["q"][3].get<double>());
      if (std::abs(q.norm() - 1.0) > 1e-4) throw ValidationError(where + ": quaternion not unit");
      view.pose.pose.rotation = quat_to_matrix(q);
      view.pose.pose.translation =
          Vec3(v["t"][0].get<double>(), v["t"][1].get<double>(), v["t"][2].get<double>());
      view.image = read_png(dir / "holdout" / numbered(k, "png"));
      data.holdout.push_back(std::move(view));
      ++k;
    }
  }

  data.validate();
  return data;
}

void save_dataset(const SceneDataset& data, const fs::path& dir, const DatasetWriteOptions& opts) {
  data.validate();
  std::error_code ec;
  for (const char* sub : {"frames", "depths"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
  }
  write_trajectory(data.trajectory, dir / "camera.json");
  for (std::size_t t = 0; t < data.frames.size(); ++t) {
    write_png8(data.frames[t], dir / "frames" / numbered(t, "png"));
    if (opts.depth_format == DepthFormat::Raw) {
      write_raw_f32(data.depths[t], dir / "depths" / numbered(t, "raw"));
    } else {
      write_png16(data.depths[t], opts.depth_scale, dir / "depths" / numbered(t, "png"));
    }
  }
  if (opts.depth_format == DepthFormat::Png16) {
    std::ostringstream s;
    s << std::setprecision(17) << "{\"scale\": " << opts.depth_scale << "}\n";
    write_text(dir / "depth_scale.json", s.str());
  }
  write_tracks(data.tracks, dir / "tracks.tsv");
  if (!data.masks.empty()) {
    fs::create_directories(dir / "masks", ec);
    for (std::size_t t = 0; t < data.masks.size(); ++t) {
      write_png8(data.masks[t], dir / "masks" / numbered(t, "png"));
    }
  }
  if (!data.holdout.empty()) {
    fs::create_directories(dir / "holdout", ec);
    json views = json::array();
    for (std::size_t k = 0; k < data.holdout.size(); ++k) {
      const auto& v = data.holdout[k];
      const Quat4 q = matrix_to_quat(v.pose.pose.rotation);
      const Vec3& tr = v.pose.pose.translation;
      views.push_back({{"frame", v.frame},
                       {"q", {q[0], q[1], q[2], q[3]}},
                       {"t", {tr.x(), tr.y(), tr.z()}}});
      write_png8(v.image, dir / "holdout" / numbered(k, "png"));
    }
    write_text(dir / "holdout" / "views.json", json{{"views", views}}.dump(2) + "\n");
  }
}

}  // namespace msplat
