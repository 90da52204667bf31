#include "mf/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "mf/image_io.hpp"

namespace mf {

namespace fs = std::filesystem;
using nlohmann::json;

const std::array<Stick, kNumSticks>& stick_table() {
  static const std::array<Stick, kNumSticks> table = {{
      {kNeck, kRShoulder},   {kRShoulder, kRElbow}, {kRElbow, kRWrist},
      {kNeck, kLShoulder},   {kLShoulder, kLElbow}, {kLElbow, kLWrist},
      {kMidHip, kRHip},      {kRHip, kRKnee},       {kRKnee, kRAnkle},
      {kMidHip, kLHip},      {kLHip, kLKnee},       {kLKnee, kLAnkle},
      {kNeck, kNose},        {kNose, kREye},        {kREye, kREar},
      {kNose, kLEye},        {kLEye, kLEar},        {kLAnkle, kLBigToe},
      {kLBigToe, kLSmallToe},{kLAnkle, kLHeel},     {kRAnkle, kRBigToe},
      {kRBigToe, kRSmallToe},{kRAnkle, kRHeel},     {kRHip, kLHip},
      {kNeck, kMidHip},      {kNose, -1},
  }};
  return table;
}

double default_stick_width(size_t out_h) {
  return std::max(1.0, 3.0 * static_cast<double>(out_h) / 256.0);
}

namespace {

struct P2 {
  double x = 0, y = 0;
};

// head-top synthesized from the face joints: nose pushed past the eye line
P2 head_top_point(const Skeleton& s, double& conf) {
  const Joint& nose = s.joints[kNose];
  const Joint& re = s.joints[kREye];
  const Joint& le = s.joints[kLEye];
  conf = std::min({nose.conf, re.conf, le.conf});
  const double mx = 0.5 * (re.x + le.x);
  const double my = 0.5 * (re.y + le.y);
  return {nose.x + 3.0 * (mx - nose.x), nose.y + 3.0 * (my - nose.y)};
}

// distance from p to the butt-capped segment a-b; t outside [0,1] -> miss
bool segment_perp_dist(P2 p, P2 a, P2 b, double& dist) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  if (len2 == 0.0) {
    dist = std::hypot(p.x - a.x, p.y - a.y);
    return true;
  }
  const double t = ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2;
  if (t < 0.0 || t > 1.0) return false;
  const double px = a.x + t * vx, py = a.y + t * vy;
  dist = std::hypot(p.x - px, p.y - py);
  return true;
}

}  // namespace

Tensor<float> rasterize_pose(const Skeleton& s, size_t out_h, size_t out_w,
                             double stick_width, double conf_threshold) {
  if (out_h == 0 || out_w == 0)
    throw ValueError("rasterize_pose: output size must be positive");
  if (stick_width <= 0) throw ValueError("rasterize_pose: width must be positive");
  Tensor<float> img = Tensor<float>::zeros({kNumSticks, out_h, out_w});
  const double sx =
      s.frame_w ? static_cast<double>(out_w) / static_cast<double>(s.frame_w)
                : 1.0;
  const double sy =
      s.frame_h ? static_cast<double>(out_h) / static_cast<double>(s.frame_h)
                : 1.0;
  const double hw = 0.5 * stick_width;

  const auto& table = stick_table();
  for (size_t c = 0; c < kNumSticks; ++c) {
    const Stick& st = table[c];
    P2 a{s.joints[st.a].x * sx, s.joints[st.a].y * sy};
    double conf = s.joints[st.a].conf;
    P2 b;
    if (st.b >= 0) {
      b = {s.joints[st.b].x * sx, s.joints[st.b].y * sy};
      conf = std::min(conf, s.joints[st.b].conf);
    } else {
      double top_conf = 0;
      P2 top = head_top_point(s, top_conf);
      b = {top.x * sx, top.y * sy};
      conf = std::min(conf, top_conf);
    }
    if (conf < conf_threshold) continue;

    const double reach = hw + 1.0;
    const long y0 = std::max(0L, long(std::floor(std::min(a.y, b.y) - reach)));
    const long y1 = std::min(long(out_h) - 1,
                             long(std::ceil(std::max(a.y, b.y) + reach)));
    const long x0 = std::max(0L, long(std::floor(std::min(a.x, b.x) - reach)));
    const long x1 = std::min(long(out_w) - 1,
                             long(std::ceil(std::max(a.x, b.x) + reach)));
    float* plane = img.values().data() + c * out_h * out_w;
    for (long y = y0; y <= y1; ++y) {
      for (long x = x0; x <= x1; ++x) {
        double dist = 0;
        if (!segment_perp_dist({double(x), double(y)}, a, b, dist)) continue;
        const double alpha = std::clamp(hw + 0.5 - dist, 0.0, 1.0);
        if (alpha > 0)
          plane[y * long(out_w) + x] =
              std::max(plane[y * long(out_w) + x], float(alpha));
      }
    }
  }
  return img;
}

PoseStats skeleton_stats(const Skeleton& s, double conf_threshold) {
  double min_y = 1e30, max_y = -1e30;
  double ankle = -1e30;
  bool any = false, any_ankle = false;
  for (size_t j = 0; j < kNumJoints; ++j) {
    if (s.joints[j].conf < conf_threshold) continue;
    min_y = std::min(min_y, s.joints[j].y);
    max_y = std::max(max_y, s.joints[j].y);
    any = true;
  }
  for (int j : {int(kRAnkle), int(kLAnkle)}) {
    if (s.joints[j].conf >= conf_threshold) {
      ankle = std::max(ankle, s.joints[j].y);
      any_ankle = true;
    }
  }
  if (!any) throw ValueError("skeleton_stats: no confident joints");
  PoseStats st;
  st.height_px = max_y - min_y;
  st.ankle_y = any_ankle ? ankle : max_y;
  return st;
}

Skeleton normalize_pose(const Skeleton& target, const PoseStats& source,
                        const PoseStats& target_stats) {
  if (source.height_px <= 0 || target_stats.height_px <= 0)
    throw ValueError(str_cat("normalize_pose: degenerate heights ",
                             source.height_px, " / ", target_stats.height_px));
  const double a = source.height_px / target_stats.height_px;
  const double b = source.ankle_y - a * target_stats.ankle_y;

  double cx = 0;
  size_t n = 0;
  for (const Joint& j : target.joints) {
    if (j.conf > 0) {
      cx += j.x;
      ++n;
    }
  }
  cx = n ? cx / static_cast<double>(n) : 0.0;

  Skeleton out = target;
  for (Joint& j : out.joints) {
    j.y = a * j.y + b;
    j.x = cx + a * (j.x - cx);
  }
  return out;
}

// ---- figure ----

FigureSpec FigureSpec::random(uint64_t seed, size_t canvas_h) {
  Rng rng(seed * 2654435761u + 13);
  const double H = static_cast<double>(canvas_h);
  auto jitter = [&](double v) { return v * rng.uniform(0.9, 1.1); };
  FigureSpec f;
  f.seed = seed;
  f.torso_len = jitter(0.18 * H);
  f.torso_w = jitter(0.10 * H);
  f.neck_len = jitter(0.025 * H);
  f.head_r = jitter(0.05 * H);
  f.shoulder_w = jitter(0.055 * H);
  f.hip_w = jitter(0.035 * H);
  f.upper_arm = jitter(0.09 * H);
  f.forearm = jitter(0.085 * H);
  f.thigh = jitter(0.11 * H);
  f.shin = jitter(0.11 * H);
  f.foot_len = jitter(0.04 * H);
  f.limb_w = std::max(1.5, jitter(0.03 * H));
  auto color = [&]() {
    return Rgb{float(rng.uniform(-0.8, 0.9)), float(rng.uniform(-0.8, 0.9)),
               float(rng.uniform(-0.8, 0.9))};
  };
  f.torso_color = color();
  f.head_color = color();
  f.arm_color_l = color();
  f.arm_color_r = color();
  f.leg_color_l = color();
  f.leg_color_r = color();
  return f;
}

PoseParams PoseParams::random(Rng& rng, size_t canvas_h, size_t canvas_w) {
  PoseParams p;
  p.root_x = rng.uniform(0.42, 0.58) * static_cast<double>(canvas_w);
  p.root_y = rng.uniform(0.56, 0.64) * static_cast<double>(canvas_h);
  p.torso_tilt = rng.uniform(-0.2, 0.2);
  p.head_tilt = rng.uniform(-0.3, 0.3);
  p.l_shoulder = rng.uniform(-2.4, 2.4);
  p.r_shoulder = rng.uniform(-2.4, 2.4);
  p.l_elbow = rng.uniform(-1.8, 1.8);
  p.r_elbow = rng.uniform(-1.8, 1.8);
  p.l_hip = rng.uniform(-0.8, 0.8);
  p.r_hip = rng.uniform(-0.8, 0.8);
  p.l_knee = rng.uniform(0.0, 1.4);
  p.r_knee = rng.uniform(0.0, 1.4);
  return p;
}

namespace {

P2 dir_of(double a) { return {std::sin(a), -std::cos(a)}; }
P2 right_of(double a) { return {std::cos(a), std::sin(a)}; }
P2 padd(P2 a, P2 b, double s) { return {a.x + s * b.x, a.y + s * b.y}; }
P2 rot90(P2 v, bool ccw) {
  // screen coordinates (y down): ccw here means rotating x-hat onto -y-hat
  return ccw ? P2{v.y, -v.x} : P2{-v.y, v.x};
}

void set_joint(Skeleton& s, int j, P2 p) {
  s.joints[j] = Joint{p.x, p.y, 1.0};
}

}  // namespace

Skeleton figure_skeleton(const FigureSpec& f, const PoseParams& p, size_t h,
                         size_t w) {
  Skeleton s;
  s.frame_h = h;
  s.frame_w = w;

  const P2 midhip{p.root_x, p.root_y};
  const P2 neck = padd(midhip, dir_of(p.torso_tilt), f.torso_len);
  const double head_a = p.torso_tilt + p.head_tilt;
  const P2 hc = padd(neck, dir_of(head_a), f.neck_len + f.head_r);
  set_joint(s, kMidHip, midhip);
  set_joint(s, kNeck, neck);
  set_joint(s, kNose, hc);
  const P2 hr = right_of(head_a), hu = dir_of(head_a);
  set_joint(s, kREye, padd(padd(hc, hr, -0.35 * f.head_r), hu, 0.3 * f.head_r));
  set_joint(s, kLEye, padd(padd(hc, hr, 0.35 * f.head_r), hu, 0.3 * f.head_r));
  set_joint(s, kREar, padd(hc, hr, -0.9 * f.head_r));
  set_joint(s, kLEar, padd(hc, hr, 0.9 * f.head_r));

  const P2 tr = right_of(p.torso_tilt);
  const double down = p.torso_tilt + 3.14159265358979323846;
  auto arm = [&](int sh, int el, int wr, double side, double a_sh, double a_el) {
    const P2 shoulder = padd(neck, tr, side * f.shoulder_w);
    const P2 elbow = padd(shoulder, dir_of(down + a_sh), f.upper_arm);
    const P2 wrist = padd(elbow, dir_of(down + a_sh + a_el), f.forearm);
    set_joint(s, sh, shoulder);
    set_joint(s, el, elbow);
    set_joint(s, wr, wrist);
  };
  arm(kRShoulder, kRElbow, kRWrist, -1.0, p.r_shoulder, p.r_elbow);
  arm(kLShoulder, kLElbow, kLWrist, 1.0, p.l_shoulder, p.l_elbow);

  auto leg = [&](int hip, int knee, int ankle, int toe, int stoe, int heel,
                 double side, double a_hip, double a_knee) {
    const P2 hp = padd(midhip, tr, side * f.hip_w);
    const P2 kn = padd(hp, dir_of(down + a_hip), f.thigh);
    const double leg_a = down + a_hip + a_knee;
    const P2 an = padd(kn, dir_of(leg_a), f.shin);
    const P2 ld = dir_of(leg_a);
    const P2 fd = rot90(ld, side > 0);
    set_joint(s, hip, hp);
    set_joint(s, knee, kn);
    set_joint(s, ankle, an);
    set_joint(s, toe, padd(an, fd, f.foot_len));
    set_joint(s, stoe, padd(padd(an, fd, 0.7 * f.foot_len), ld, 0.2 * f.foot_len));
    set_joint(s, heel, padd(an, fd, -0.3 * f.foot_len));
  };
  leg(kRHip, kRKnee, kRAnkle, kRBigToe, kRSmallToe, kRHeel, -1.0, p.r_hip,
      p.r_knee);
  leg(kLHip, kLKnee, kLAnkle, kLBigToe, kLSmallToe, kLHeel, 1.0, p.l_hip,
      p.l_knee);
  return s;
}

namespace {

// hard-edged paint of the region within `radius` of segment a-b (round caps
// when `caps`, cut off at the endpoints otherwise)
void paint_capsule(Tensor<float>& img, Tensor<float>& mask, P2 a, P2 b,
                   double radius, Rgb color, bool caps) {
  const size_t H = img.size(1), W = img.size(2);
  const double reach = radius + 1.0;
  const long y0 = std::max(0L, long(std::floor(std::min(a.y, b.y) - reach)));
  const long y1 = std::min(long(H) - 1, long(std::ceil(std::max(a.y, b.y) + reach)));
  const long x0 = std::max(0L, long(std::floor(std::min(a.x, b.x) - reach)));
  const long x1 = std::min(long(W) - 1, long(std::ceil(std::max(a.x, b.x) + reach)));
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  float* iv = img.values().data();
  float* mv = mask.values().data();
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      double t = len2 > 0 ? ((x - a.x) * vx + (y - a.y) * vy) / len2 : 0.0;
      if (caps)
        t = std::clamp(t, 0.0, 1.0);
      else if (t < 0.0 || t > 1.0)
        continue;
      const double px = a.x + t * vx, py = a.y + t * vy;
      if (std::hypot(x - px, y - py) > radius) continue;
      const size_t at = size_t(y) * W + size_t(x);
      iv[0 * H * W + at] = color.r;
      iv[1 * H * W + at] = color.g;
      iv[2 * H * W + at] = color.b;
      mv[at] = 1.0f;
    }
  }
}

}  // namespace

RenderOut synth_render(const FigureSpec& f, const PoseParams& p, size_t h,
                       size_t w, const Tensor<float>& background) {
  if (background.rank() != 3 || background.size(0) != 3 ||
      background.size(1) != h || background.size(2) != w)
    throw ShapeError(str_cat("synth_render: background ",
                             shape_str(background.shape()), " vs canvas (3,",
                             h, ",", w, ")"));
  RenderOut out;
  out.image = background.detach();
  out.mask = Tensor<float>::zeros({1, h, w});
  out.skeleton = figure_skeleton(f, p, h, w);
  const auto& J = out.skeleton.joints;
  auto at = [&](int j) { return P2{J[j].x, J[j].y}; };
  const double lw = 0.5 * f.limb_w;

  // torso (rectangle), then head, legs, arms
  paint_capsule(out.image, out.mask, at(kNeck), at(kMidHip), 0.5 * f.torso_w,
                f.torso_color, /*caps=*/false);
  paint_capsule(out.image, out.mask, at(kNose), at(kNose), f.head_r,
                f.head_color, true);
  paint_capsule(out.image, out.mask, at(kRHip), at(kRKnee), lw, f.leg_color_r, true);
  paint_capsule(out.image, out.mask, at(kRKnee), at(kRAnkle), lw, f.leg_color_r, true);
  paint_capsule(out.image, out.mask, at(kRAnkle), at(kRBigToe), 0.7 * lw,
                f.leg_color_r, true);
  paint_capsule(out.image, out.mask, at(kLHip), at(kLKnee), lw, f.leg_color_l, true);
  paint_capsule(out.image, out.mask, at(kLKnee), at(kLAnkle), lw, f.leg_color_l, true);
  paint_capsule(out.image, out.mask, at(kLAnkle), at(kLBigToe), 0.7 * lw,
                f.leg_color_l, true);
  paint_capsule(out.image, out.mask, at(kRShoulder), at(kRElbow), lw,
                f.arm_color_r, true);
  paint_capsule(out.image, out.mask, at(kRElbow), at(kRWrist), lw,
                f.arm_color_r, true);
  paint_capsule(out.image, out.mask, at(kLShoulder), at(kLElbow), lw,
                f.arm_color_l, true);
  paint_capsule(out.image, out.mask, at(kLElbow), at(kLWrist), lw,
                f.arm_color_l, true);
  return out;
}

// ---- dataset ----

namespace {

Tensor<float> make_background(Rng& rng, size_t h, size_t w) {
  Tensor<float> bg = Tensor<float>::zeros({3, h, w});
  for (size_t c = 0; c < 3; ++c) {
    const double base = rng.uniform(-0.4, 0.4);
    const double gx = rng.uniform(-0.5, 0.5);
    const double gy = rng.uniform(-0.5, 0.5);
    for (size_t y = 0; y < h; ++y)
      for (size_t x = 0; x < w; ++x)
        bg.values()[(c * h + y) * w + x] = float(std::clamp(
            base + gx * double(x) / double(w) + gy * double(y) / double(h),
            -0.95, 0.95));
  }
  return bg;
}

}  // namespace

void save_skeleton_json(const std::string& path, const Skeleton& s) {
  json arr = json::array();
  for (const Joint& j : s.joints) arr.push_back({j.x, j.y, j.conf});
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError(str_cat("cannot open '", path, "' for writing"));
  os << arr.dump(0) << "\n";
}

Skeleton load_skeleton_json(const std::string& path, size_t frame_h,
                            size_t frame_w) {
  std::ifstream is(path);
  if (!is) throw IoError(str_cat("cannot open '", path, "'"));
  json arr;
  try {
    is >> arr;
  } catch (const json::exception& e) {
    throw ParseError(str_cat("'", path, "': ", e.what()));
  }
  if (!arr.is_array() || arr.size() != kNumJoints)
    throw ParseError(str_cat("'", path, "': expected an array of ", kNumJoints,
                             " [x,y,conf] triples"));
  Skeleton s;
  s.frame_h = frame_h;
  s.frame_w = frame_w;
  for (size_t j = 0; j < kNumJoints; ++j) {
    if (!arr[j].is_array() || arr[j].size() != 3)
      throw ParseError(str_cat("'", path, "': joint ", j,
                               " is not an [x,y,conf] triple"));
    s.joints[j] = Joint{arr[j][0].get<double>(), arr[j][1].get<double>(),
                        arr[j][2].get<double>()};
  }
  return s;
}

void dataset_generate(const std::string& out_dir, size_t n_identities,
                      size_t frames_per_identity, size_t canvas_h,
                      size_t canvas_w, uint64_t seed) {
  if (n_identities == 0 || frames_per_identity == 0)
    throw ValueError("dataset_generate: need at least one identity and frame");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(str_cat("cannot create '", out_dir, "': ", ec.message()));

  json manifest;
  manifest["format_version"] = 1;
  manifest["canvas"] = {canvas_h, canvas_w};
  manifest["identities"] = json::array();

  for (size_t i = 0; i < n_identities; ++i) {
    const std::string id = str_cat("id_", i < 10 ? "00" : (i < 100 ? "0" : ""), i);
    const fs::path dir = fs::path(out_dir) / id;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(str_cat("cannot create '", dir.string(), "'"));

    Rng rng(seed ^ (0x9e3779b9ull * (i + 1)));
    FigureSpec spec = FigureSpec::random(rng.next_u64(), canvas_h);
    Tensor<float> bg = make_background(rng, canvas_h, canvas_w);
    save_png((dir / "background.png").string(), tensor_to_image(bg));

    json jid;
    jid["id"] = id;
    jid["background"] = id + "/background.png";
    jid["frames"] = json::array();
    for (size_t fidx = 0; fidx < frames_per_identity; ++fidx) {
      char num[16];
      std::snprintf(num, sizeof num, "%04zu", fidx);
      PoseParams pose = PoseParams::random(rng, canvas_h, canvas_w);
      RenderOut r = synth_render(spec, pose, canvas_h, canvas_w, bg);
      const std::string fimg = str_cat(id, "/frame_", num, ".png");
      const std::string fmask = str_cat(id, "/mask_", num, ".png");
      const std::string fskel = str_cat(id, "/skel_", num, ".json");
      save_png((fs::path(out_dir) / fimg).string(), tensor_to_image(r.image));
      save_png((fs::path(out_dir) / fmask).string(), tensor_to_mask(r.mask));
      save_skeleton_json((fs::path(out_dir) / fskel).string(), r.skeleton);
      jid["frames"].push_back({{"image", fimg}, {"mask", fmask},
                               {"skeleton", fskel}});
    }
    manifest["identities"].push_back(jid);
  }
  std::ofstream os(fs::path(out_dir) / "manifest.json", std::ios::trunc);
  if (!os) throw IoError(str_cat("cannot write manifest in '", out_dir, "'"));
  os << manifest.dump(1) << "\n";
}

DatasetManifest load_manifest(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError(str_cat("cannot open '", manifest_path, "'"));
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ParseError(str_cat("'", manifest_path, "': ", e.what()));
  }
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.canvas_h = j.at("canvas")[0].get<size_t>();
    m.canvas_w = j.at("canvas")[1].get<size_t>();
    for (const auto& jid : j.at("identities")) {
      IdentityRecord id;
      id.id = jid.at("id").get<std::string>();
      id.background = jid.at("background").get<std::string>();
      for (const auto& jf : jid.at("frames"))
        id.frames.push_back(FrameRecord{jf.at("image").get<std::string>(),
                                        jf.at("mask").get<std::string>(),
                                        jf.at("skeleton").get<std::string>()});
      m.identities.push_back(std::move(id));
    }
  } catch (const json::exception& e) {
    throw ParseError(str_cat("'", manifest_path, "': ", e.what()));
  }
  if (m.format_version != 1)
    throw LoadError(str_cat("manifest format version ", m.format_version,
                            " unsupported"));
  m.root = fs::path(manifest_path).parent_path().string();
  return m;
}

}  // namespace mf
