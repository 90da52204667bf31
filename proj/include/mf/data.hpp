#pragma once

#include <array>
#include <string>
#include <vector>

#include "mf/tensor.hpp"

namespace mf {

// BODY-25 joint order.
enum BodyJoint : int {
  kNose = 0, kNeck = 1, kRShoulder = 2, kRElbow = 3, kRWrist = 4,
  kLShoulder = 5, kLElbow = 6, kLWrist = 7, kMidHip = 8, kRHip = 9,
  kRKnee = 10, kRAnkle = 11, kLHip = 12, kLKnee = 13, kLAnkle = 14,
  kREye = 15, kLEye = 16, kREar = 17, kLEar = 18, kLBigToe = 19,
  kLSmallToe = 20, kLHeel = 21, kRBigToe = 22, kRSmallToe = 23, kRHeel = 24,
};

constexpr size_t kNumJoints = 25;
constexpr size_t kNumSticks = 26;

struct Joint {
  double x = 0, y = 0;  // pixels, origin top-left
  double conf = 0;      // [0,1]
};

struct Skeleton {
  std::array<Joint, kNumJoints> joints;
  size_t frame_h = 0, frame_w = 0;
};

// 26-stick connectivity: 24 limb pairs over the BODY-25 joints, the
// neck->mid-hip trunk line, and a synthesized head-top->nose stick
// (entry with b < 0). The table is a declared convention of this repo.
struct Stick {
  int a;
  int b;  // -1: head-top point derived from nose/eyes/neck
};
const std::array<Stick, kNumSticks>& stick_table();

// One anti-aliased butt-capped segment per channel; channels whose stick has
// an endpoint below conf_threshold stay all-zero. Joint coordinates are
// scaled from the skeleton's frame size to out_h x out_w when they differ;
// out-of-canvas coordinates simply clip.
Tensor<float> rasterize_pose(const Skeleton& s, size_t out_h, size_t out_w,
                             double stick_width, double conf_threshold = 0.1);

// 3 px at 256 pixels, scaled proportionally.
double default_stick_width(size_t out_h);

struct PoseStats {
  double ankle_y = 0;
  double height_px = 0;
};

PoseStats skeleton_stats(const Skeleton& s, double conf_threshold = 0.1);

// Maps target-skeleton coordinates into the source person's scale:
// y' = a*y + b with a = source_height/target_height and b pinning the ankle
// line; x is scaled by a about the target's confident-joint centroid.
Skeleton normalize_pose(const Skeleton& target, const PoseStats& source,
                        const PoseStats& target_stats);

// ---- procedural articulated figure ----

struct Rgb {
  float r = 0, g = 0, b = 0;  // [-1,1]
};

struct FigureSpec {
  // lengths in pixels
  double torso_len = 24, torso_w = 12, neck_len = 4, head_r = 6;
  double shoulder_w = 8, hip_w = 5;
  double upper_arm = 10, forearm = 10, thigh = 12, shin = 12, foot_len = 6;
  double limb_w = 4;
  Rgb torso_color, head_color, arm_color_l, arm_color_r, leg_color_l,
      leg_color_r;
  uint64_t seed = 0;

  // Proportions for a canvas of the given height, colors from the seed.
  static FigureSpec random(uint64_t seed, size_t canvas_h);
};

// Joint angles in radians. The kinematic chain (re-derived independently by
// the test oracle):
//   dir(a)   = (sin a, -cos a)       a = 0 points up
//   right(a) = (cos a, sin a)
//   midhip    = root
//   neck      = midhip + torso_len * dir(torso_tilt)
//   head c.   = neck + (neck_len + head_r) * dir(torso_tilt + head_tilt)
//   nose      = head center
//   eyes      = hc + head_r * (±0.35 right + 0.3 dir), ears = hc ± 0.9 head_r right
//   shoulders = neck ± shoulder_w * right(torso_tilt)
//   elbow     = shoulder + upper_arm * dir(torso_tilt + pi + shoulder_angle)
//   wrist     = elbow + forearm * dir(torso_tilt + pi + shoulder_angle + elbow_angle)
//   hips      = midhip ± hip_w * right(torso_tilt)
//   knee      = hip + thigh * dir(torso_tilt + pi + hip_angle)
//   ankle     = knee + shin * dir(torso_tilt + pi + hip_angle + knee_angle)
//   foot_dir  = leg direction rotated ±pi/2 (left +, right -)
//   bigtoe    = ankle + foot_len * foot_dir
//   smalltoe  = ankle + 0.7 foot_len * foot_dir + 0.2 foot_len * leg_dir
//   heel      = ankle - 0.3 foot_len * foot_dir
// "+" of ± is the left side. All confidences are 1.
struct PoseParams {
  double root_x = 0, root_y = 0;
  double torso_tilt = 0, head_tilt = 0;
  double l_shoulder = 0, l_elbow = 0, r_shoulder = 0, r_elbow = 0;
  double l_hip = 0, l_knee = 0, r_hip = 0, r_knee = 0;

  static PoseParams random(Rng& rng, size_t canvas_h, size_t canvas_w);
};

Skeleton figure_skeleton(const FigureSpec& spec, const PoseParams& pose,
                         size_t h, size_t w);

struct RenderOut {
  Tensor<float> image;  // (3,H,W) in [-1,1]
  Tensor<float> mask;   // (1,H,W) in {0,1}, exactly the painted pixels
  Skeleton skeleton;
};

// Hard-edged capsule limbs, disc head and rectangular torso painted over a
// copy of the background.
RenderOut synth_render(const FigureSpec& spec, const PoseParams& pose,
                       size_t h, size_t w, const Tensor<float>& background);

// ---- on-disk dataset ----

struct FrameRecord {
  std::string image, mask, skeleton;  // paths relative to the manifest
};
struct IdentityRecord {
  std::string id;
  std::string background;
  std::vector<FrameRecord> frames;
};
struct DatasetManifest {
  int format_version = 1;
  size_t canvas_h = 0, canvas_w = 0;
  std::vector<IdentityRecord> identities;
  std::string root;  // directory of the manifest file

  size_t total_frames() const {
    size_t n = 0;
    for (const auto& id : identities) n += id.frames.size();
    return n;
  }
};

// Writes frame_XXXX.png / mask_XXXX.png / skel_XXXX.json per frame, one
// background.png per identity, and manifest.json. Fully determined by seed.
void dataset_generate(const std::string& out_dir, size_t n_identities,
                      size_t frames_per_identity, size_t canvas_h,
                      size_t canvas_w, uint64_t seed);

DatasetManifest load_manifest(const std::string& manifest_path);

// skel_XXXX.json: array of 25 [x, y, conf] triples.
Skeleton load_skeleton_json(const std::string& path, size_t frame_h = 0,
                            size_t frame_w = 0);
void save_skeleton_json(const std::string& path, const Skeleton& s);

}  // namespace mf
