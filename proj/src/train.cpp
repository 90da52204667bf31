#include "mf/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "json.hpp"
#include "mf/image_io.hpp"

namespace mf {

namespace fs = std::filesystem;
using nlohmann::json;

TrainConfig TrainConfig::from_file(const std::string& path) {
  return from_config(KeyValueConfig::load(path));
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& c) {
  TrainConfig t;
  t.dataset_manifest = c.get_str("dataset", "");
  t.out_dir = c.get_str("out_dir", t.out_dir);
  t.seed = static_cast<uint64_t>(c.get_int("seed", 1));
  t.epochs = static_cast<size_t>(c.get_int("epochs", 10));
  t.batch_size = static_cast<size_t>(c.get_int("batch_size", 4));
  t.lr_g = c.get_double("lr_g", 1e-4);
  t.lr_d_mult = c.get_double("lr_d_mult", 4.0);
  t.decay_start_epoch =
      static_cast<size_t>(c.get_int("decay_start_epoch", 5));
  t.max_steps = static_cast<size_t>(c.get_int("max_steps", 0));
  t.checkpoint_every = static_cast<size_t>(c.get_int("checkpoint_every", 1));

  auto arr3 = [&](const char* key, std::array<size_t, 3> fallback) {
    auto v = c.get_size_list(key, {fallback.begin(), fallback.end()});
    if (v.size() != 3)
      throw ConfigError(str_cat("key '", key, "' needs 3 values"));
    return std::array<size_t, 3>{v[0], v[1], v[2]};
  };
  t.model.widths = arr3("widths", t.model.widths);
  t.model.enc_depths = arr3("enc_depths", t.model.enc_depths);
  t.model.dec_depths = arr3("dec_depths", t.model.dec_depths);
  t.model.heads = arr3("heads", t.model.heads);
  t.model.stripe_widths = arr3("stripe_widths", t.model.stripe_widths);
  t.model.mlp_ratio = static_cast<size_t>(c.get_int("mlp_ratio", 4));
  t.model.dense_attention = c.get_bool("dense_attention", false);
  t.model.lepe = c.get_bool("lepe", true);

  {
    auto v = c.get_size_list("disc_channels", {t.disc.channels.begin(),
                                               t.disc.channels.end()});
    if (v.size() != 4)
      throw ConfigError("key 'disc_channels' needs 4 values");
    std::copy(v.begin(), v.end(), t.disc.channels.begin());
  }
  t.disc.leaky_slope = c.get_double("disc_leaky_slope", 0.2);
  t.feat_seed = static_cast<uint64_t>(c.get_int("feat_seed", 2024));
  {
    auto v = c.get_size_list("feat_channels", {t.feat_channels.begin(),
                                               t.feat_channels.end()});
    if (v.size() != 5)
      throw ConfigError("key 'feat_channels' needs 5 values");
    std::copy(v.begin(), v.end(), t.feat_channels.begin());
  }

  t.weights.rec = c.get_double("w_rec", t.weights.rec);
  t.weights.fm = c.get_double("w_fm", t.weights.fm);
  t.weights.adv = c.get_double("w_adv", t.weights.adv);
  t.weights.mu = c.get_double("w_mu", t.weights.mu);
  t.weights.tv = c.get_double("w_tv", t.weights.tv);
  t.weights.mask = c.get_double("w_mask", t.weights.mask);
  t.weights.style = c.get_double("w_style", t.weights.style);
  t.softargmax_temperature = c.get_double("softargmax_temperature", 200.0);

  c.check_all_consumed();
  t.validate();
  return t;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (lr_g <= 0 || lr_d_mult <= 0) throw ConfigError("learning rates must be positive");
  if (decay_start_epoch > epochs)
    throw ConfigError("decay_start_epoch must be <= epochs");
  if (softargmax_temperature <= 0)
    throw ConfigError("softargmax_temperature must be positive");
}

double lr_at_epoch(double base, size_t epoch, size_t epochs,
                   size_t decay_start) {
  if (epoch <= decay_start) return base;
  if (epochs == decay_start) return base;
  return base * static_cast<double>(epochs - epoch) /
         static_cast<double>(epochs - decay_start);
}

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      init_rng_(cfg.seed),
      model_(cfg.model, init_rng_),
      disc_("disc", 3, cfg.model.pose_channels, cfg.disc, init_rng_),
      fx_(cfg.feat_seed, cfg.feat_channels) {
  g_params_ = model_.parameters();
  disc_.collect(d_params_);
  all_params_ = g_params_;
  all_params_.insert(all_params_.end(), d_params_.begin(), d_params_.end());

  if (cfg.dataset_manifest.empty())
    throw ConfigError("trainer: no dataset manifest configured");
  DatasetManifest m = load_manifest(cfg.dataset_manifest);
  if (m.identities.empty() || m.total_frames() == 0)
    throw ConfigError("trainer: dataset is empty");
  canvas_h_ = m.canvas_h;
  canvas_w_ = m.canvas_w;
  if (canvas_h_ % 16 || canvas_w_ % 16)
    throw ConfigError(str_cat("trainer: canvas ", canvas_h_, "x", canvas_w_,
                              " must be divisible by 16"));

  const double stick_w = default_stick_width(canvas_h_);
  for (const auto& id : m.identities) {
    IdentityData d;
    d.background = image_to_tensor<float>(
        load_image((fs::path(m.root) / id.background).string()));
    for (const auto& fr : id.frames) {
      Frame f;
      f.image = image_to_tensor<float>(
          load_image((fs::path(m.root) / fr.image).string()));
      f.mask = mask_to_tensor<float>(
          load_image((fs::path(m.root) / fr.mask).string()));
      f.skeleton = load_skeleton_json((fs::path(m.root) / fr.skeleton).string(),
                                      canvas_h_, canvas_w_);
      f.pose = rasterize_pose(f.skeleton, canvas_h_, canvas_w_, stick_w);
      // person on black
      f.fg = Tensor<float>::zeros(f.image.shape());
      for (size_t c = 0; c < 3; ++c)
        for (size_t i = 0; i < canvas_h_ * canvas_w_; ++i) {
          const float mv = f.mask.values()[i];
          f.fg.values()[c * canvas_h_ * canvas_w_ + i] =
              mv * f.image.values()[c * canvas_h_ * canvas_w_ + i] +
              (1.0f - mv) * -1.0f;
        }
      d.frames.push_back(std::move(f));
    }
    data_.push_back(std::move(d));
  }
  steps_per_epoch_ = std::max<size_t>(1, m.total_frames() / cfg.batch_size);
}

size_t Trainer::epoch_of_step(int64_t step) const {
  return static_cast<size_t>((step - 1) / int64_t(steps_per_epoch_)) + 1;
}

double Trainer::lr_g_at(int64_t step) const {
  return lr_at_epoch(cfg_.lr_g, epoch_of_step(step), cfg_.epochs,
                     cfg_.decay_start_epoch);
}

double Trainer::lr_d_at(int64_t step) const {
  return cfg_.lr_d_mult * lr_g_at(step);
}

std::vector<SampleIndex> Trainer::batch_for_step(int64_t step) const {
  Rng rng(cfg_.seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(step)));
  std::vector<SampleIndex> batch;
  for (size_t b = 0; b < cfg_.batch_size; ++b) {
    SampleIndex s;
    s.identity = static_cast<size_t>(
        rng.uniform_int(0, int64_t(data_.size()) - 1));
    const size_t nf = data_[s.identity].frames.size();
    s.frame_src = static_cast<size_t>(rng.uniform_int(0, int64_t(nf) - 1));
    if (nf > 1) {
      s.frame_tgt = static_cast<size_t>(rng.uniform_int(0, int64_t(nf) - 2));
      if (s.frame_tgt >= s.frame_src) ++s.frame_tgt;
    } else {
      s.frame_tgt = s.frame_src;
    }
    batch.push_back(s);
  }
  return batch;
}

namespace {

// stack (C,H,W) frames into (B,C,H,W)
Tensor<float> stack(const std::vector<const Tensor<float>*>& parts) {
  const Shape& s = parts[0]->shape();
  Tensor<float> out =
      Tensor<float>::zeros({parts.size(), s[0], s[1], s[2]});
  const size_t n = numel_of(s);
  for (size_t b = 0; b < parts.size(); ++b)
    std::copy(parts[b]->values().begin(), parts[b]->values().end(),
              out.values().begin() + b * n);
  return out;
}

}  // namespace

LossBundle<float> Trainer::step() {
  const int64_t step = global_step_ + 1;
  const auto batch = batch_for_step(step);
  const double lr_g = lr_g_at(step);
  const double lr_d = lr_d_at(step);

  std::vector<const Tensor<float>*> src, gt, mask, pose;
  for (const auto& s : batch) {
    src.push_back(&data_[s.identity].frames[s.frame_src].image);
    gt.push_back(&data_[s.identity].frames[s.frame_tgt].fg);
    mask.push_back(&data_[s.identity].frames[s.frame_tgt].mask);
    pose.push_back(&data_[s.identity].frames[s.frame_tgt].pose);
  }
  Tensor<float> i_s = stack(src);
  Tensor<float> i_gt = stack(gt);
  Tensor<float> m_gt = stack(mask);
  Tensor<float> p_t = stack(pose);

  LossBundle<float> bundle;
  Tape<float> tape;
  {
    TapeScope<float> scope(tape);
    ModelOutput<float> out = model_.forward(i_s, p_t);
    const size_t g_mark = tape.mark();

    // discriminator update on the detached fake
    {
      Tensor<float> fake = out.fusion.i_out.detach();
      auto d_real = disc_.forward(i_gt, p_t);
      auto d_fake = disc_.forward(fake, p_t);
      HingeLoss<float> hinge = hinge_adversarial(d_real.logits, d_fake.logits);
      bundle.adv_d = hinge.loss_d.item();
      zero_grads(d_params_);
      tape.backward(hinge.loss_d);
      adam_step(d_params_, static_cast<float>(lr_d));
      zero_grads(d_params_);
      tape.truncate(g_mark);
    }

    // generator update against the refreshed discriminator
    set_requires_grad(d_params_, false);
    LossTerms<float> terms;
    terms.rec = reconstruction_loss(out.fusion.i_out, i_gt, fx_);
    {
      auto fake = disc_.forward(out.fusion.i_out, p_t);
      std::vector<Tensor<float>> real_taps;
      {
        NoGradScope<float> ng;
        real_taps = disc_.forward(i_gt, p_t).taps;
      }
      Tensor<float> fm_total;
      for (size_t i = 0; i < fake.taps.size(); ++i) {
        Tensor<float> term = reduce_mean(abs_op(sub(fake.taps[i], real_taps[i])));
        fm_total = fm_total.defined() ? add(fm_total, term) : term;
      }
      terms.fm = fm_total;
      terms.adv_g = scale(reduce_mean(fake.logits), -1.0f);
    }
    terms.style = style_loss(out.fusion.i_out, i_gt, fx_);
    terms.mutual = mutual_learning_loss(
        out.decode.pairs, static_cast<float>(cfg_.softargmax_temperature));
    terms.tv = tv_loss(out.fusion.f_f);
    terms.mask = mask_loss(out.fusion.m_out, m_gt);

    TotalLoss<float> total = total_loss(terms, cfg_.weights);
    const float adv_d_keep = bundle.adv_d;
    bundle = total.bundle;
    bundle.adv_d = adv_d_keep;

    if (!std::isfinite(bundle.total)) {
      set_requires_grad(d_params_, true);
      std::string samples;
      for (const auto& s : batch)
        samples += str_cat(" (id ", s.identity, ", src ", s.frame_src,
                           ", tgt ", s.frame_tgt, ")");
      throw StateError(str_cat("non-finite loss ", bundle.total, " at step ",
                               step, "; batch:", samples));
    }

    zero_grads(g_params_);
    tape.backward(total.total);
    adam_step(g_params_, static_cast<float>(lr_g));
    zero_grads(g_params_);
    set_requires_grad(d_params_, true);
  }

  global_step_ = step;
  log_row(bundle, epoch_of_step(step), lr_g, lr_d);
  return bundle;
}

void Trainer::open_log() {
  if (log_.is_open()) return;
  std::error_code ec;
  fs::create_directories(cfg_.out_dir, ec);
  const std::string path =
      (fs::path(cfg_.out_dir) / "train_log.jsonl").string();
  log_.open(path, global_step_ > 0 ? std::ios::app : std::ios::trunc);
  if (!log_) throw IoError(str_cat("cannot open log '", path, "'"));
}

void Trainer::log_row(const LossBundle<float>& b, size_t epoch, double lr_g,
                      double lr_d) {
  if (!log_.is_open()) return;
  json row;
  row["step"] = global_step_;
  row["epoch"] = epoch;
  row["lr_g"] = lr_g;
  row["lr_d"] = lr_d;
  row["rec"] = b.rec;
  row["fm"] = b.fm;
  row["style"] = b.style;
  row["adv_g"] = b.adv_g;
  row["adv_d"] = b.adv_d;
  row["mutual"] = b.mutual;
  row["tv"] = b.tv;
  row["mask"] = b.mask;
  row["total"] = b.total;
  log_ << row.dump() << "\n";
  log_.flush();
}

void Trainer::save_checkpoint_file(const std::string& path) const {
  save_checkpoint(path, all_params_, global_step_);
}

void Trainer::resume(const std::string& checkpoint_path) {
  global_step_ = load_checkpoint(checkpoint_path, all_params_);
}

void Trainer::run() {
  open_log();
  std::error_code ec;
  fs::create_directories(cfg_.out_dir, ec);
  const size_t total_steps = cfg_.epochs * steps_per_epoch_;
  bool stopped = false;
  while (static_cast<size_t>(global_step_) < total_steps) {
    if (cfg_.max_steps && static_cast<size_t>(global_step_) >= cfg_.max_steps) {
      stopped = true;
      break;
    }
    step();
    const bool epoch_done =
        static_cast<size_t>(global_step_) % steps_per_epoch_ == 0;
    if (epoch_done) {
      const size_t epoch = epoch_of_step(global_step_);
      if (epoch % cfg_.checkpoint_every == 0 || epoch == cfg_.epochs) {
        char name[64];
        std::snprintf(name, sizeof name, "checkpoint_epoch_%04zu.ckpt", epoch);
        save_checkpoint_file((fs::path(cfg_.out_dir) / name).string());
        save_checkpoint_file(
            (fs::path(cfg_.out_dir) / "checkpoint_latest.ckpt").string());
      }
    }
  }
  if (stopped || cfg_.max_steps)
    save_checkpoint_file(
        (fs::path(cfg_.out_dir) / "checkpoint_latest.ckpt").string());
}

std::vector<std::string> Trainer::generator_param_names() const {
  std::vector<std::string> names;
  for (const auto& p : g_params_) names.push_back(p->name);
  return names;
}

std::vector<std::string> Trainer::discriminator_param_names() const {
  std::vector<std::string> names;
  for (const auto& p : d_params_) names.push_back(p->name);
  return names;
}

// ---- inference ----

namespace {

std::vector<Skeleton> load_skeleton_sequence(const std::string& path,
                                             size_t frame_h, size_t frame_w) {
  std::ifstream is(path);
  if (!is) throw IoError(str_cat("cannot open '", path, "'"));
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ParseError(str_cat("'", path, "': ", e.what()));
  }
  if (!j.is_array() || j.empty())
    throw ParseError(str_cat("'", path, "': expected a non-empty array"));

  auto parse_one = [&](const json& a) {
    if (!a.is_array() || a.size() != kNumJoints)
      throw ParseError(str_cat("'", path, "': skeleton needs ", kNumJoints,
                               " joints"));
    Skeleton s;
    s.frame_h = frame_h;
    s.frame_w = frame_w;
    for (size_t i = 0; i < kNumJoints; ++i)
      s.joints[i] = Joint{a[i][0].get<double>(), a[i][1].get<double>(),
                          a[i][2].get<double>()};
    return s;
  };

  std::vector<Skeleton> out;
  const bool single = j[0].is_array() && j[0].size() == 3 && j[0][0].is_number();
  if (single) {
    out.push_back(parse_one(j));
  } else {
    for (const auto& a : j) out.push_back(parse_one(a));
  }
  return out;
}

}  // namespace

std::vector<std::string> infer_command(const TrainConfig& cfg,
                                       const std::string& checkpoint_path,
                                       const std::string& source_image_path,
                                       const std::string& background_path,
                                       const std::string& skeletons_json_path,
                                       const std::string& out_dir,
                                       bool normalize,
                                       const std::string& source_skeleton_path) {
  Rng rng(cfg.seed);
  MotionFormer<float> model(cfg.model, rng);
  Discriminator<float> disc("disc", 3, cfg.model.pose_channels, cfg.disc, rng);
  ParamList<float> params = model.parameters();
  disc.collect(params);
  load_checkpoint(checkpoint_path, params);

  ImageU8 src_img = load_image(source_image_path);
  ImageU8 bg_img = load_image(background_path);
  if (src_img.width % 16 || src_img.height % 16)
    throw ValueError(str_cat("infer: source image ", src_img.width, "x",
                             src_img.height, " must be divisible by 16"));
  const size_t H = src_img.height, W = src_img.width;
  Tensor<float> i_s = reshape(image_to_tensor<float>(src_img), {1, 3, H, W});
  Tensor<float> bg = reshape(image_to_tensor<float>(bg_img), {1, 3, H, W});

  std::vector<Skeleton> skels = load_skeleton_sequence(skeletons_json_path, H, W);
  PoseStats src_stats;
  if (normalize) {
    if (source_skeleton_path.empty())
      throw ConfigError("infer: --normalize needs a source skeleton for the "
                        "scale reference");
    src_stats = skeleton_stats(
        load_skeleton_json(source_skeleton_path, H, W));
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(str_cat("cannot create '", out_dir, "'"));

  const double stick_w = default_stick_width(H);
  std::vector<std::string> written;
  NoGradScope<float> ng;
  for (size_t i = 0; i < skels.size(); ++i) {
    Skeleton sk = skels[i];
    if (normalize) sk = normalize_pose(sk, src_stats, skeleton_stats(sk));
    Tensor<float> pose =
        reshape(rasterize_pose(sk, H, W, stick_w), {1, 26, H, W});
    ModelOutput<float> out = model.forward(i_s, pose);
    Tensor<float> comp =
        composite_background(out.fusion.i_out, out.fusion.m_out, bg);
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.png", i);
    const std::string path = (fs::path(out_dir) / name).string();
    save_png(path, tensor_to_image(reshape(comp, {3, H, W})));
    written.push_back(path);
  }
  return written;
}

MetricReport evaluate_dirs(const std::string& pred_dir,
                           const std::string& gt_dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(pred_dir))
    if (e.path().extension() == ".png") names.push_back(e.path().filename());
  std::sort(names.begin(), names.end());
  if (names.empty())
    throw IoError(str_cat("no .png frames found in '", pred_dir, "'"));

  MetricReport report;
  for (const auto& n : names) {
    const fs::path gt_path = fs::path(gt_dir) / n;
    if (!fs::exists(gt_path))
      throw IoError(str_cat("missing ground-truth frame '", gt_path.string(),
                            "'"));
    Tensor<float> a =
        image_to_tensor<float>(load_image((fs::path(pred_dir) / n).string()));
    Tensor<float> b = image_to_tensor<float>(load_image(gt_path.string()));
    FrameMetric fm;
    fm.frame = n;
    fm.psnr_db = psnr(a, b);
    fm.ssim = ssim(a, b);
    report.frames.push_back(fm);
  }
  report.finalize();
  return report;
}

}  // namespace mf
