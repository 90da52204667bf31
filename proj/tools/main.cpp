#include <iostream>

#include "CLI11.hpp"
#include "mf/data.hpp"
#include "mf/gradcheck.hpp"
#include "mf/train.hpp"

int main(int argc, char** argv) {
  CLI::App app{"MotionFormer: pose-driven human motion transfer"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data",
                                 "Render a synthetic articulated-figure dataset");
  std::string gen_out = "dataset";
  size_t gen_ids = 1, gen_frames = 8, gen_size = 64;
  uint64_t gen_seed = 7;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--identities", gen_ids, "number of figures");
  gen->add_option("--frames", gen_frames, "frames per figure");
  gen->add_option("--size", gen_size, "canvas size (square, divisible by 16)");
  gen->add_option("--seed", gen_seed, "generator seed");

  // train
  auto* train = app.add_subcommand("train", "Run the training loop");
  std::string train_config, train_resume;
  train->add_option("--config", train_config, "key=value config file")
      ->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");

  // infer
  auto* infer = app.add_subcommand("infer", "Drive a source image with target skeletons");
  std::string inf_config, inf_ckpt, inf_source, inf_bg, inf_skels, inf_out = "frames";
  std::string inf_src_skel;
  bool inf_normalize = false;
  infer->add_option("--config", inf_config, "config used for training")->required();
  infer->add_option("--ckpt", inf_ckpt, "checkpoint file")->required();
  infer->add_option("--source", inf_source, "source person image (png)")->required();
  infer->add_option("--bg", inf_bg, "background plate (png)")->required();
  infer->add_option("--skeletons", inf_skels, "target skeleton sequence (json)")
      ->required();
  infer->add_option("--out", inf_out, "output frame directory");
  infer->add_flag("--normalize", inf_normalize, "normalize target poses to the source scale");
  infer->add_option("--source-skeleton", inf_src_skel,
                    "source skeleton json (scale reference for --normalize)");

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM between two frame directories");
  std::string eval_pred, eval_gt, eval_csv;
  eval->add_option("--pred-dir", eval_pred, "predicted frames")->required();
  eval->add_option("--gt-dir", eval_gt, "ground-truth frames")->required();
  eval->add_option("--csv", eval_csv, "also write the CSV here");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  int gc_seeds = 5;
  gc->add_option("--seeds", gc_seeds, "random seeds per check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      mf::dataset_generate(gen_out, gen_ids, gen_frames, gen_size, gen_size,
                           gen_seed);
      std::cout << "wrote " << gen_ids * gen_frames << " frames to " << gen_out
                << "\n";
    } else if (train->parsed()) {
      mf::TrainConfig cfg = mf::TrainConfig::from_file(train_config);
      mf::Trainer trainer(cfg);
      if (!train_resume.empty()) trainer.resume(train_resume);
      trainer.run();
      std::cout << "trained to step " << trainer.global_step() << "\n";
    } else if (infer->parsed()) {
      mf::TrainConfig cfg = mf::TrainConfig::from_file(inf_config);
      auto frames = mf::infer_command(cfg, inf_ckpt, inf_source, inf_bg,
                                      inf_skels, inf_out, inf_normalize,
                                      inf_src_skel);
      std::cout << "wrote " << frames.size() << " frames to " << inf_out << "\n";
    } else if (eval->parsed()) {
      mf::MetricReport report = mf::evaluate_dirs(eval_pred, eval_gt);
      report.write_csv(std::cout);
      std::cout << "# psnr mean " << report.psnr_mean << " std "
                << report.psnr_std << "\n# ssim mean " << report.ssim_mean
                << " std " << report.ssim_std << "\n";
      if (!eval_csv.empty()) {
        std::ofstream os(eval_csv, std::ios::trunc);
        report.write_csv(os);
      }
    } else if (gc->parsed()) {
      return mf::gradcheck::run_gradient_suite(std::cout, gc_seeds) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
