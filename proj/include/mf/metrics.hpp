#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "mf/tensor.hpp"

namespace mf {

// 10*log10(peak^2 / MSE); identical inputs report +infinity.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 2.0);

// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5), valid windows
// only, averaged over channels. Inputs are (C,H,W) or (H,W) with the same
// shape; `peak` is the luminance range (2 for [-1,1] data).
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, size_t window = 11,
            double k1 = 0.01, double k2 = 0.03, double peak = 2.0);

struct FrameMetric {
  std::string frame;
  double psnr_db = 0;
  double ssim = 0;
};

struct MetricReport {
  std::vector<FrameMetric> frames;
  double psnr_mean = 0, psnr_std = 0;
  double ssim_mean = 0, ssim_std = 0;

  void finalize();
  // CSV with header `frame,psnr_db,ssim`.
  void write_csv(std::ostream& os) const;
};

}  // namespace mf
