#pragma once

#include <fstream>

#include "mf/config.hpp"
#include "mf/data.hpp"
#include "mf/losses.hpp"
#include "mf/metrics.hpp"
#include "mf/model.hpp"

namespace mf {

struct TrainConfig {
  std::string dataset_manifest;
  std::string out_dir = "run";
  uint64_t seed = 1;
  size_t epochs = 10;
  size_t batch_size = 4;
  double lr_g = 1e-4;
  double lr_d_mult = 4.0;  // TTUR: lr_d = lr_d_mult * lr_g
  size_t decay_start_epoch = 5;
  size_t max_steps = 0;  // 0 = run the full schedule
  size_t checkpoint_every = 1;
  ModelConfig model;
  DiscriminatorConfig disc;
  uint64_t feat_seed = 2024;
  std::array<size_t, 5> feat_channels{8, 12, 16, 20, 24};
  LossWeights weights;
  double softargmax_temperature = 200.0;

  static TrainConfig from_file(const std::string& path);
  static TrainConfig from_config(const KeyValueConfig& cfg);
  void validate() const;
};

// Constant for epochs [1, decay_start], then linear to 0 at `epochs`:
// base * (epochs - epoch) / (epochs - decay_start).
double lr_at_epoch(double base, size_t epoch, size_t epochs,
                   size_t decay_start);

struct SampleIndex {
  size_t identity, frame_src, frame_tgt;
};

// Single-threaded trainer implementing the adversarial loop: per step the
// generator runs once; the discriminator is updated on the detached output
// first, then the generator against the refreshed discriminator. The batch
// drawn at step k depends only on (seed, k), so a resumed run replays the
// exact sample sequence.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  LossBundle<float> step();
  void run();

  void save_checkpoint_file(const std::string& path) const;
  void resume(const std::string& checkpoint_path);

  int64_t global_step() const { return global_step_; }
  size_t steps_per_epoch() const { return steps_per_epoch_; }
  size_t epoch_of_step(int64_t step) const;  // 1-based
  double lr_g_at(int64_t step) const;
  double lr_d_at(int64_t step) const;
  std::vector<SampleIndex> batch_for_step(int64_t step) const;

  const MotionFormer<float>& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  std::vector<std::string> generator_param_names() const;
  std::vector<std::string> discriminator_param_names() const;

  // preloaded training frames (tests reach into these)
  struct Frame {
    Tensor<float> image;  // (3,H,W) full frame
    Tensor<float> fg;     // person on black: mask*image + (1-mask)*(-1)
    Tensor<float> mask;   // (1,H,W)
    Tensor<float> pose;   // (26,H,W) stick image
    Skeleton skeleton;
  };
  struct IdentityData {
    Tensor<float> background;
    std::vector<Frame> frames;
  };
  const std::vector<IdentityData>& dataset() const { return data_; }

 private:
  void open_log();
  void log_row(const LossBundle<float>& bundle, size_t epoch, double lr_g,
               double lr_d);

  TrainConfig cfg_;
  Rng init_rng_;
  MotionFormer<float> model_;
  Discriminator<float> disc_;
  FeatureExtractor<float> fx_;
  ParamList<float> g_params_, d_params_, all_params_;
  std::vector<IdentityData> data_;
  size_t steps_per_epoch_ = 0;
  size_t canvas_h_ = 0, canvas_w_ = 0;
  int64_t global_step_ = 0;
  std::ofstream log_;
};

// Pose-driven inference: for each skeleton, optionally normalize it to the
// source person's stats, rasterize, run the model and composite over the
// background with the predicted person mask. Returns the written frame
// paths.
std::vector<std::string> infer_command(
    const TrainConfig& cfg, const std::string& checkpoint_path,
    const std::string& source_image_path, const std::string& background_path,
    const std::string& skeletons_json_path, const std::string& out_dir,
    bool normalize, const std::string& source_skeleton_json_path = "");

// Matches *.png by file name across the two directories.
MetricReport evaluate_dirs(const std::string& pred_dir,
                           const std::string& gt_dir);

}  // namespace mf
