// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
// msplat: author trajectories, generate synthetic scenes, fit, render, track, evaluate.
//
// Exit codes: 0 success, 2 usage, 3 validation / parse / I/O, 4 divergence.
//
#include "msplat/camera.hpp"
#include "msplat/dataset.hpp"
#include "msplat/errors.hpp"
#include "msplat/exports.hpp"
#include "msplat/metrics.hpp"
#include "msplat/optimizer.hpp"
#include "msplat/rasterizer.hpp"
#include "msplat/synth.hpp"
#include "msplat/tracking.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/sha.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace msplat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitDivergence = 4;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed: " + p.string());
}

/// Hash of "blob <size>\0<content>", as git computes it.
std::string git_blob_sha1(const fs::path& p) {
  const std::string content = read_file(p);
  const std::string head = "blob " + std::to_string(content.size()) + '\0';
  SHA_CTX ctx;
  SHA1_Init(&ctx);
  SHA1_Update(&ctx, head.data(), head.size());
  SHA1_Update(&ctx, content.data(), content.size());
  unsigned char md[SHA_DIGEST_LENGTH];
  SHA1_Final(md, &ctx);
  std::ostringstream hex;
  for (unsigned char c : md) hex << std::hex << std::setw(2) << std::setfill('0') << int(c);
  return hex.str();
}

json hash_inputs(const std::vector<fs::path>& paths) {
  json out = json::array();
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) out.push_back({{"path", f.string()}, {"sha1", git_blob_sha1(f)}});
    } else if (fs::is_regular_file(p)) {
      out.push_back({{"path", p.string()}, {"sha1", git_blob_sha1(p)}});
    }
  }
  return out;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

/// Reproduction record, written before any other output and finalized with timings.
class RunManifest {
 public:
  RunManifest(std::string command, const std::vector<std::string>& argv, fs::path dir)
      : dir_(std::move(dir)), start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["argv"] = argv;
    doc_["started_utc"] = utc_now();
  }
  json& operator[](const char* key) { return doc_[key]; }

  void write() {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
    write_file(dir_ / "manifest.json", doc_.dump(2) + "\n");
  }
  void finish() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    doc_["timings"] = {{"total_seconds", secs}};
    write();
  }

 private:
  json doc_;
  fs::path dir_;
  std::chrono::steady_clock::time_point start_;
};

Vec3 parse_vec3(const std::vector<double>& v, const char* flag) {
  if (v.size() != 3) throw InvalidArgument(std::string(flag) + " expects 3 numbers");
  return Vec3(v[0], v[1], v[2]);
}

std::string numbered(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05zu.png", i);
  return buf;
}

// ---------------------------------------------------------------- trajectory

struct TrajectoryArgs {
  std::string kind;
  int frames = 80;
  double frame_rate = 24.0;
  double fx = 0.0, fy = 0.0, cx = -1.0, cy = -1.0;
  int width = 960, height = 720;
  double radius = 2.0, arc_degrees = 30.0, elevation = 0.0, distance = 1.0;
  std::vector<double> target{0.0, 0.0, 0.0}, start{0.0, 0.0, -2.0}, direction{0.0, 0.0, 1.0};
  std::string out;
  std::string plucker;
  bool export_plucker = false;
};

int cmd_trajectory(const TrajectoryArgs& a, const std::vector<std::string>& argv) {
  const TrajectoryKind kind = parse_trajectory_kind(a.kind);
  const fs::path out(a.out);
  RunManifest man("trajectory", argv, out);
  man["params"] = {{"kind", a.kind},     {"frames", a.frames}, {"width", a.width},
                   {"height", a.height}, {"radius", a.radius}, {"arc_degrees", a.arc_degrees}};
  man.write();

  TrajectoryParams p;
  p.frames = a.frames;
  p.frame_rate = a.frame_rate;
  const double f = a.fx > 0.0 ? a.fx : 0.8 * a.width;
  p.intrinsics = Intrinsics{f, a.fy > 0.0 ? a.fy : f, a.cx >= 0.0 ? a.cx : a.width / 2.0,
                            a.cy >= 0.0 ? a.cy : a.height / 2.0, a.width, a.height};
  p.intrinsics.validate();
  p.target = parse_vec3(a.target, "--target");
  p.radius = a.radius;
  p.arc_degrees = a.arc_degrees;
  p.elevation = a.elevation;
  p.start = parse_vec3(a.start, "--start");
  p.direction = parse_vec3(a.direction, "--direction");
  p.distance = a.distance;
  const CameraTrajectory traj = make_trajectory(kind, p);
  write_trajectory(traj, out / "camera.json");
  if (a.export_plucker || !a.plucker.empty()) {
    export_plucker(traj, a.plucker.empty() ? out / "plucker" : fs::path(a.plucker));
  }
  man.finish();
  std::cout << "wrote " << (out / "camera.json").string() << " (" << traj.size() << " poses)\n";
  return kExitOk;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  SynthSpec spec;
  std::string motion = "two-cluster";
  std::string camera = "arc";
  std::string depth_format = "png16";
  double background = 0.0;
  std::string out;
};

int cmd_synth(SynthArgs a, const std::vector<std::string>& argv) {
  a.spec.motion = parse_motion_kind(a.motion);
  a.spec.camera = parse_trajectory_kind(a.camera);
  if (!(a.background >= 0.0 && a.background <= 1.0)) {
    throw InvalidArgument("--background must lie in [0, 1]");
  }
  a.spec.background = Vec3::Constant(a.background);
  if (a.depth_format != "png16" && a.depth_format != "raw") {
    throw InvalidArgument("--depth-format must be png16 or raw");
  }
  const fs::path out(a.out);
  RunManifest man("synth", argv, out);
  man["seed"] = a.spec.seed;
  man.write();

  const SyntheticScene scene = synth_scene(a.spec);
  DatasetWriteOptions wo;
  wo.depth_format = a.depth_format == "raw" ? DepthFormat::Raw : DepthFormat::Png16;
  save_dataset(scene.dataset, out, wo);
  save_state(scene.cloud, scene.model, out / "gt");
  export_tracks_3d(scene.trajectories, out / "gt" / "tracks_3d.tsv");
  std::ostringstream q;
  q << std::setprecision(17) << "query_id\tu\tv\n";
  const std::size_t t0 = canonical_frame(a.spec.frames);
  for (std::size_t i = 0; i < scene.dataset.tracks.queries; ++i) {
    const Vec2& uv = scene.dataset.tracks.position(i, t0);
    q << i << '\t' << uv.x() << '\t' << uv.y() << '\n';
  }
  write_file(out / "gt" / "queries.tsv", q.str());
  man.finish();
  std::cout << "wrote synthetic scene to " << out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string dataset;
  std::string out;
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 1;
  long init_iters = -1, epochs = -1, gaussians = -1, basis = -1;
  double lr = -1.0, downsample = -1.0, w_coeff = -1.0, lambda_fixed = -1.0, background = -1.0;
  bool quiet = false;
};

int cmd_fit(const FitArgs& a, const std::vector<std::string>& argv) {
  FitConfig cfg;
  if (!a.config.empty()) cfg = read_config(a.config);
  auto& s = cfg.schedule;
  if (a.seed_set) s.seed = a.seed;
  s.workers = a.workers;
  if (a.init_iters >= 0) s.init_iters = static_cast<std::size_t>(a.init_iters);
  if (a.epochs >= 0) s.joint_epochs = static_cast<std::size_t>(a.epochs);
  if (a.gaussians >= 0) s.init_gaussians = static_cast<std::size_t>(a.gaussians);
  if (a.basis >= 0) s.basis_count = static_cast<std::size_t>(a.basis);
  if (a.lr >= 0.0) s.lr = a.lr;
  if (a.downsample >= 0.0) s.downsample_factor = a.downsample;
  if (a.w_coeff >= 0.0) cfg.loss.w_coeff = a.w_coeff;
  if (a.lambda_fixed >= 0.0) cfg.loss.lambda_fixed = a.lambda_fixed;
  if (a.background >= 0.0) s.background = Vec3::Constant(a.background);
  cfg.validate();

  const fs::path dataset(a.dataset);
  const fs::path out(a.out);
  RunManifest man("fit", argv, out);
  man["seed"] = s.seed;
  man["workers"] = s.workers;
  man["config"] = json::parse(serialize_config(cfg));
  std::vector<fs::path> inputs{dataset};
  if (!a.config.empty()) inputs.emplace_back(a.config);
  man["inputs"] = hash_inputs(inputs);
  man.write();
  write_config(cfg, out / "config.json");

  const SceneDataset data = load_dataset(dataset);
  std::ofstream csv(out / "metrics.csv");
  if (!csv) throw IoError("cannot write " + (out / "metrics.csv").string());
  csv << metrics_csv_header() << "\n";
  FitHooks hooks;
  hooks.dump_dir = out / "divergence_dump";
  hooks.on_epoch = [&](const EpochLog& row) {
    csv << metrics_csv_row(row) << "\n" << std::flush;
    if (!a.quiet) {
      std::cerr << "epoch " << row.epoch << " loss " << row.terms.total << " psnr " << row.psnr
                << " gaussians " << row.gaussians << "\n";
    }
  };
  const FitResult res = fit(data, cfg, hooks);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  save_state(res.cloud, res.model, out);
  write_trajectory(data.trajectory, out / "camera.json");
  man.finish();
  if (!res.log.empty()) {
    std::cout << "final psnr " << res.log.back().psnr << " ssim " << res.log.back().ssim << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- render

struct RenderArgs {
  std::string state;
  std::string trajectory;
  std::string out;
  long frame = -1;
  long time = -1;
  double offsets = 0.0;
  int workers = 1;
};

Vec3 state_background(const fs::path& state) {
  const fs::path cfg = state / "config.json";
  if (!fs::exists(cfg)) return Vec3::Zero();
  return read_config(cfg).schedule.background;
}

int cmd_render(const RenderArgs& a, const std::vector<std::string>& argv) {
  const fs::path state(a.state);
  const fs::path traj_path = a.trajectory.empty() ? state / "camera.json" : fs::path(a.trajectory);
  const fs::path out(a.out);
  RunManifest man("render", argv, out);
  man["inputs"] = hash_inputs({state / "cloud.ply", state / "motion.json", state / "motion.bin", traj_path});
  man.write();

  const SceneState st = load_state(state);
  const CameraTrajectory traj = read_trajectory(traj_path);
  const Vec3 bg = state_background(state);
  const std::size_t F = st.model.frames();
  if (a.time >= 0 && static_cast<std::size_t>(a.time) >= F) {
    throw InvalidArgument("--time " + std::to_string(a.time) + " outside 0.." + std::to_string(F - 1));
  }
  if (a.frame >= 0 && static_cast<std::size_t>(a.frame) >= traj.size()) {
    throw InvalidArgument("unknown frame id " + std::to_string(a.frame) + " (trajectory has " +
                          std::to_string(traj.size()) + " poses)");
  }
  std::vector<std::size_t> frames;
  if (a.frame >= 0) {
    frames.push_back(static_cast<std::size_t>(a.frame));
  } else {
    for (std::size_t i = 0; i < traj.size(); ++i) frames.push_back(i);
  }
  RenderOptions opts;
  opts.workers = a.workers;

  struct View {
    const char* name;
    Vec3 shift;  // camera-frame offset of the center
  };
  std::vector<View> views{{"rgb", Vec3::Zero()}};
  if (a.offsets > 0.0) {
    views.push_back({"left", Vec3(-a.offsets, 0, 0)});
    views.push_back({"top", Vec3(0, -a.offsets, 0)});
    views.push_back({"right", Vec3(a.offsets, 0, 0)});
    views.push_back({"bottom", Vec3(0, a.offsets, 0)});
  }
  for (const auto& v : views) {
    std::error_code ec;
    fs::create_directories(out / v.name, ec);
    for (std::size_t i : frames) {
      const std::size_t t = a.time >= 0 ? static_cast<std::size_t>(a.time) : i;
      if (t >= F) {
        throw InvalidArgument("pose " + std::to_string(i) + " has no matching time (model has " +
                              std::to_string(F) + " frames); pass --time");
      }
      Camera cam = traj.camera(i);
      // Moving the center by s in camera coordinates shifts t by -s.
      cam.extrinsics.pose.translation -= v.shift;
      const RenderTarget r = render(pose_at_time(st.cloud, st.model, t), cam, bg, opts);
      write_png8(r.rgb, out / v.name / numbered(i));
    }
  }
  man.finish();
  std::cout << "rendered " << frames.size() << " frame(s) x " << views.size() << " view(s) to "
            << out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- track

struct TrackArgs {
  std::string state;
  std::string queries;
  std::vector<std::string> query;
  std::string out;
  long canonical = -1;
  std::size_t neighbors = 8;
};

std::vector<TrackQuery> read_queries(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::vector<TrackQuery> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || (lineno == 1 && line.rfind("query_id", 0) == 0)) continue;
    std::istringstream ss(line);
    TrackQuery q;
    double u, v;
    if (!(ss >> q.id >> u >> v)) {
      throw ParseError(p.string() + ":" + std::to_string(lineno) + ": expected 'query_id u v'");
    }
    q.pixel = Vec2(u, v);
    out.push_back(q);
  }
  return out;
}

int cmd_track(const TrackArgs& a, const std::vector<std::string>& argv) {
  const fs::path state(a.state);
  const fs::path out(a.out);
  RunManifest man("track", argv, out.parent_path().empty() ? fs::path(".") : out.parent_path());
  std::vector<fs::path> inputs{state / "cloud.ply", state / "motion.json", state / "motion.bin"};
  if (!a.queries.empty()) inputs.emplace_back(a.queries);
  man["inputs"] = hash_inputs(inputs);
  man.write();

  std::vector<TrackQuery> queries;
  if (!a.queries.empty()) queries = read_queries(a.queries);
  for (const auto& s : a.query) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw InvalidArgument("--query expects u,v");
    queries.push_back({queries.size(), Vec2(std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1)))});
  }
  if (queries.empty()) throw InvalidArgument("no queries given (use --queries or --query)");

  const SceneState st = load_state(state);
  const CameraTrajectory traj = read_trajectory(state / "camera.json");
  const std::size_t t0 =
      a.canonical >= 0 ? static_cast<std::size_t>(a.canonical) : canonical_frame(st.model.frames());
  const auto tracks = track_points(st.cloud, st.model, traj, queries, t0, a.neighbors,
                                   state_background(state));
  export_tracks_3d(tracks, out);
  man.finish();
  std::cout << "wrote " << tracks.size() << " trajectories to " << out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string renders;
  std::string reference;
  std::string out;
};

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  const fs::path out = a.out.empty() ? fs::path() : fs::path(a.out);
  const fs::path man_dir = out.empty() ? fs::path(a.renders) : (out.parent_path().empty() ? fs::path(".") : out.parent_path());
  RunManifest man("eval", argv, man_dir);
  man["inputs"] = hash_inputs({a.renders, a.reference});
  man.write();

  const auto ra = list_pngs(a.renders);
  const auto rb = list_pngs(a.reference);
  if (ra.size() != rb.size()) {
    throw ValidationError("eval: " + std::to_string(ra.size()) + " renders but " +
                          std::to_string(rb.size()) + " reference images");
  }
  if (ra.empty()) throw ValidationError("eval: no PNG images in " + a.renders);
  std::ostringstream csv;
  csv << std::setprecision(10);
  csv << "# LPIPS omitted: it requires a pretrained perceptual network\n";
  csv << "image,psnr,ssim\n";
  double sp = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const Image x = read_png(ra[i]);
    const Image y = read_png(rb[i]);
    const double p = psnr(x, y), s = ssim(x, y);
    sp += p;
    ss += s;
    csv << ra[i].filename().string() << ',' << p << ',' << s << "\n";
  }
  csv << "mean," << sp / ra.size() << ',' << ss / ra.size() << "\n";
  if (!out.empty()) write_file(out, csv.str());
  std::cout << csv.str();
  man.finish();
  return kExitOk;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return kExitUsage;
    case ErrorKind::Divergence: return kExitDivergence;
    default: return kExitValidation;
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Dynamic Gaussian scene reconstruction with hybrid SE(3) motion bases"};
  app.require_subcommand(1);

  TrajectoryArgs ta;
  auto* traj = app.add_subcommand("trajectory", "Author a camera trajectory file (camera.json)");
  traj->add_option("kind", ta.kind, "orbit | dolly | arc | static")->required();
  traj->add_option("--out", ta.out, "Output directory")->required();
  traj->add_option("--frames", ta.frames, "Number of frames")->capture_default_str();
  traj->add_option("--frame-rate", ta.frame_rate, "Frames per second")->capture_default_str();
  traj->add_option("--width", ta.width, "Image width")->capture_default_str();
  traj->add_option("--height", ta.height, "Image height")->capture_default_str();
  traj->add_option("--fx", ta.fx, "Focal length x (default 0.8 * width)");
  traj->add_option("--fy", ta.fy, "Focal length y (default fx)");
  traj->add_option("--cx", ta.cx, "Principal point x (default width / 2)");
  traj->add_option("--cy", ta.cy, "Principal point y (default height / 2)");
  traj->add_option("--radius", ta.radius, "Orbit/arc/static distance to the target")->capture_default_str();
  traj->add_option("--arc-degrees", ta.arc_degrees, "Arc span")->capture_default_str();
  traj->add_option("--elevation", ta.elevation, "Camera height above the target (-Y)")->capture_default_str();
  traj->add_option("--target", ta.target, "Look-at target x y z")->expected(3);
  traj->add_option("--start", ta.start, "Dolly start center x y z")->expected(3);
  traj->add_option("--direction", ta.direction, "Dolly direction x y z")->expected(3);
  traj->add_option("--distance", ta.distance, "Dolly travel distance")->capture_default_str();
  traj->add_flag("--export-plucker", ta.export_plucker, "Also write per-frame Pluecker tensors to <out>/plucker");
  traj->add_option("--plucker-dir", ta.plucker, "Directory for the Pluecker export");

  SynthArgs sa;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic ground-truth dataset");
  syn->add_option("--out", sa.out, "Output dataset directory")->required();
  syn->add_option("--gaussians", sa.spec.n_gaussians, "Ground-truth Gaussian count")->capture_default_str();
  syn->add_option("--frames", sa.spec.frames, "Frame count")->capture_default_str();
  syn->add_option("--width", sa.spec.width, "Image width")->capture_default_str();
  syn->add_option("--height", sa.spec.height, "Image height")->capture_default_str();
  syn->add_option("--focal", sa.spec.focal, "Focal length in pixels")->capture_default_str();
  syn->add_option("--motion", sa.motion, "rigid-translate | rotate | two-cluster")->capture_default_str();
  syn->add_option("--camera", sa.camera, "orbit | dolly | arc | static")->capture_default_str();
  syn->add_option("--pixel-noise", sa.spec.pixel_noise, "RGB noise std-dev")->capture_default_str();
  syn->add_option("--depth-noise", sa.spec.depth_noise, "Depth noise std-dev (scene units)")->capture_default_str();
  syn->add_option("--queries", sa.spec.queries, "Number of track queries")->capture_default_str();
  syn->add_option("--holdout", sa.spec.holdout_views, "Number of held-out views")->capture_default_str();
  syn->add_option("--depth-format", sa.depth_format, "png16 | raw")->capture_default_str();
  syn->add_option("--background", sa.background, "Gray background level")->capture_default_str();
  syn->add_option("--seed", sa.spec.seed, "Random seed")->capture_default_str();

  FitArgs fa;
  auto* fitc = app.add_subcommand("fit", "Fit a dynamic Gaussian scene to a dataset");
  fitc->add_option("dataset", fa.dataset, "Dataset directory")->required();
  fitc->add_option("--out", fa.out, "Output state directory")->required();
  fitc->add_option("--config", fa.config, "JSON config (loss weights and schedule)");
  fitc->add_option("--seed", fa.seed, "Random seed")->each([&](const std::string&) { fa.seed_set = true; });
  fitc->add_option("--workers", fa.workers, "Rasterizer workers (1 = bitwise deterministic)")->capture_default_str();
  fitc->add_option("--init-iters", fa.init_iters, "Phase-1 iterations");
  fitc->add_option("--epochs", fa.epochs, "Phase-2 epochs");
  fitc->add_option("--gaussians", fa.gaussians, "Initial Gaussian count");
  fitc->add_option("--basis-count", fa.basis, "Motion bases B (>= 6)");
  fitc->add_option("--lr", fa.lr, "Base learning rate");
  fitc->add_option("--downsample", fa.downsample, "Dynamic downsampling factor before phase 2");
  fitc->add_option("--w-coeff", fa.w_coeff, "Motion-coefficient loss weight");
  fitc->add_option("--lambda", fa.lambda_fixed, "Fixed vs trainable coefficient balance");
  fitc->add_option("--background", fa.background, "Gray background level of the renders");
  fitc->add_flag("--quiet", fa.quiet, "No per-epoch progress on stderr");

  RenderArgs ra;
  auto* ren = app.add_subcommand("render", "Render a fitted scene along a trajectory");
  ren->add_option("state", ra.state, "Fitted state directory")->required();
  ren->add_option("--trajectory", ra.trajectory, "camera.json to render (default: the training one)");
  ren->add_option("--out", ra.out, "Output directory")->required();
  ren->add_option("--frame", ra.frame, "Render only this pose index");
  ren->add_option("--time", ra.time, "Scene time for every pose (default: pose index)");
  ren->add_option("--offsets", ra.offsets, "Also render left/top/right/bottom views shifted by this distance");
  ren->add_option("--workers", ra.workers, "Rasterizer workers")->capture_default_str();

  TrackArgs tka;
  auto* trk = app.add_subcommand("track", "Export 3D trajectories of query pixels");
  trk->add_option("state", tka.state, "Fitted state directory")->required();
  trk->add_option("--queries", tka.queries, "TSV file: query_id u v (canonical-frame pixels)");
  trk->add_option("--query", tka.query, "Single query u,v (repeatable)");
  trk->add_option("--out", tka.out, "Output tracks_3d.tsv")->required();
  trk->add_option("--canonical", tka.canonical, "Canonical frame (default F/2)");
  trk->add_option("--neighbors", tka.neighbors, "Gaussians per query")->capture_default_str();

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "PSNR/SSIM between two directories of PNG images");
  ev->add_option("renders", ea.renders, "Rendered images")->required();
  ev->add_option("reference", ea.reference, "Reference images")->required();
  ev->add_option("--out", ea.out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*traj) return cmd_trajectory(ta, args);
    if (*syn) return cmd_synth(sa, args);
    if (*fitc) return cmd_fit(fa, args);
    if (*ren) return cmd_render(ra, args);
    if (*trk) return cmd_track(tka, args);
    if (*ev) return cmd_eval(ea, args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
