#include "mf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mf {

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak) {
  if (a.shape() != b.shape())
    throw ShapeError(str_cat("psnr: shapes ", shape_str(a.shape()), " vs ",
                             shape_str(b.shape())));
  double mse = 0;
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) {
    const double d = double(a.values()[i]) - double(b.values()[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

std::vector<double> gaussian_window(size_t n, double sigma) {
  std::vector<double> w(n);
  const double c = (double(n) - 1.0) / 2.0;
  double sum = 0;
  for (size_t i = 0; i < n; ++i) {
    w[i] = std::exp(-0.5 * (double(i) - c) * (double(i) - c) / (sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// separable valid-mode filter: rows then columns
void filter_valid(const std::vector<double>& in, size_t h, size_t w,
                  const std::vector<double>& k, std::vector<double>& out) {
  const size_t n = k.size();
  const size_t ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (size_t i = 0; i < n; ++i) acc += in[y * w + x + i] * k[i];
      tmp[y * ow + x] = acc;
    }
  out.assign(oh * ow, 0.0);
  for (size_t y = 0; y < oh; ++y)
    for (size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (size_t i = 0; i < n; ++i) acc += tmp[(y + i) * ow + x] * k[i];
      out[y * ow + x] = acc;
    }
}

}  // namespace

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, size_t window, double k1,
            double k2, double peak) {
  if (a.shape() != b.shape())
    throw ShapeError(str_cat("ssim: shapes ", shape_str(a.shape()), " vs ",
                             shape_str(b.shape())));
  size_t C = 1, H = 0, W = 0;
  if (a.rank() == 2) {
    H = a.size(0);
    W = a.size(1);
  } else if (a.rank() == 3) {
    C = a.size(0);
    H = a.size(1);
    W = a.size(2);
  } else {
    throw ShapeError("ssim: inputs must be (H,W) or (C,H,W)");
  }
  if (H < window || W < window)
    throw ValueError(str_cat("ssim: image ", H, "x", W,
                             " smaller than window ", window));

  const std::vector<double> k = gaussian_window(window, 1.5);
  const double c1 = (k1 * peak) * (k1 * peak);
  const double c2 = (k2 * peak) * (k2 * peak);

  double total = 0;
  size_t count = 0;
  std::vector<double> x(H * W), y(H * W), xx(H * W), yy(H * W), xy(H * W);
  std::vector<double> mx, my, mxx, myy, mxy;
  for (size_t c = 0; c < C; ++c) {
    const T* av = a.values().data() + c * H * W;
    const T* bv = b.values().data() + c * H * W;
    for (size_t i = 0; i < H * W; ++i) {
      x[i] = double(av[i]);
      y[i] = double(bv[i]);
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    filter_valid(x, H, W, k, mx);
    filter_valid(y, H, W, k, my);
    filter_valid(xx, H, W, k, mxx);
    filter_valid(yy, H, W, k, myy);
    filter_valid(xy, H, W, k, mxy);
    for (size_t i = 0; i < mx.size(); ++i) {
      const double mu_x = mx[i], mu_y = my[i];
      const double var_x = mxx[i] - mu_x * mu_x;
      const double var_y = myy[i] - mu_y * mu_y;
      const double cov = mxy[i] - mu_x * mu_y;
      const double v = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) /
                       ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
      total += v;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

void MetricReport::finalize() {
  const size_t n = frames.size();
  if (n == 0) return;
  double ps = 0, ss = 0;
  for (const auto& f : frames) {
    ps += f.psnr_db;
    ss += f.ssim;
  }
  psnr_mean = ps / double(n);
  ssim_mean = ss / double(n);
  double vp = 0, vs = 0;
  for (const auto& f : frames) {
    vp += (f.psnr_db - psnr_mean) * (f.psnr_db - psnr_mean);
    vs += (f.ssim - ssim_mean) * (f.ssim - ssim_mean);
  }
  psnr_std = std::sqrt(vp / double(n));
  ssim_std = std::sqrt(vs / double(n));
}

void MetricReport::write_csv(std::ostream& os) const {
  os << "frame,psnr_db,ssim\n";
  for (const auto& f : frames)
    os << f.frame << ',' << f.psnr_db << ',' << f.ssim << '\n';
}

template double psnr<float>(const Tensor<float>&, const Tensor<float>&, double);
template double psnr<double>(const Tensor<double>&, const Tensor<double>&,
                             double);
template double ssim<float>(const Tensor<float>&, const Tensor<float>&, size_t,
                            double, double, double);
template double ssim<double>(const Tensor<double>&, const Tensor<double>&,
                             size_t, double, double, double);

}  // namespace mf
