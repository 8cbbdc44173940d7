#include "mer/kernels.hpp"

#include <cstdint>

#include "mer/error.hpp"

namespace mer::kernels {
namespace {

void check_projection(const Matrix& x, const Matrix& w) {
  if (x.cols() != w.cols()) {
    throw Error(ErrorKind::ShapeMismatch,
                "projection input width " + std::to_string(x.cols()) +
                    " != weight width " + std::to_string(w.cols()));
  }
}

void check_conv(const Matrix& x, const Matrix& w, std::span<const double> bias,
                std::size_t kernel) {
  if (kernel == 0 || kernel % 2 == 0) {
    throw Error(ErrorKind::ShapeMismatch, "conv kernel size must be odd");
  }
  if (w.cols() != x.cols() * kernel || bias.size() != w.rows()) {
    throw Error(ErrorKind::ShapeMismatch,
                "conv weights " + std::to_string(w.rows()) + "x" +
                    std::to_string(w.cols()) + " do not fit input width " +
                    std::to_string(x.cols()) + " with kernel " +
                    std::to_string(kernel));
  }
}

void check_pool(std::span<const float> image, std::size_t height, std::size_t width,
                std::size_t channels, std::size_t out_h, std::size_t out_w,
                std::span<double> out) {
  if (image.size() != height * width * channels || out_h == 0 || out_w == 0 ||
      height % out_h != 0 || width % out_w != 0 ||
      out.size() != out_h * out_w * channels) {
    throw Error(ErrorKind::ShapeMismatch, "avg_pool geometry mismatch");
  }
}

inline double project_one(const Matrix& x, const Matrix& w, std::size_t n,
                          std::size_t o) {
  const auto xr = x.row(n);
  const auto wr = w.row(o);
  double acc = 0.0;
  for (std::size_t i = 0; i < xr.size(); ++i) acc += wr[i] * xr[i];
  return acc;
}

// Output row t of the convolution; summation runs over taps, then input dims.
inline void conv_row(const Matrix& x, const Matrix& w, std::span<const double> bias,
                     std::size_t kernel, std::size_t t, std::span<double> out) {
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  const auto steps = static_cast<std::ptrdiff_t>(x.rows());
  const std::size_t dims = x.cols();
  for (std::size_t c = 0; c < w.rows(); ++c) {
    const auto wr = w.row(c);
    double acc = bias[c];
    for (std::size_t j = 0; j < kernel; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) +
                                 static_cast<std::ptrdiff_t>(j) - half;
      if (src < 0 || src >= steps) continue;
      const auto xr = x.row(static_cast<std::size_t>(src));
      for (std::size_t d = 0; d < dims; ++d) acc += wr[d * kernel + j] * xr[d];
    }
    out[c] = acc;
  }
}

inline void pool_cell(std::span<const float> image, std::size_t width,
                      std::size_t channels, std::size_t bh, std::size_t bw,
                      std::size_t py, std::size_t px, std::span<double> out,
                      std::size_t out_w) {
  const double scale = 1.0 / static_cast<double>(bh * bw);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    double acc = 0.0;
    for (std::size_t y = py * bh; y < (py + 1) * bh; ++y) {
      for (std::size_t x = px * bw; x < (px + 1) * bw; ++x) {
        acc += image[(y * width + x) * channels + ch];
      }
    }
    out[(py * out_w + px) * channels + ch] = acc * scale;
  }
}

}  // namespace

namespace ref {

Matrix project_rows(const Matrix& x, const Matrix& w) {
  check_projection(x, w);
  Matrix y(x.rows(), w.rows());
  for (std::size_t n = 0; n < x.rows(); ++n)
    for (std::size_t o = 0; o < w.rows(); ++o) y(n, o) = project_one(x, w, n, o);
  return y;
}

Matrix conv1d_same(const Matrix& x, const Matrix& w, std::span<const double> bias,
                   std::size_t kernel) {
  check_conv(x, w, bias, kernel);
  Matrix y(x.rows(), w.rows());
  for (std::size_t t = 0; t < x.rows(); ++t) conv_row(x, w, bias, kernel, t, y.row(t));
  return y;
}

void avg_pool(std::span<const float> image, std::size_t height, std::size_t width,
              std::size_t channels, std::size_t out_h, std::size_t out_w,
              std::span<double> out) {
  check_pool(image, height, width, channels, out_h, out_w, out);
  const std::size_t bh = height / out_h;
  const std::size_t bw = width / out_w;
  for (std::size_t py = 0; py < out_h; ++py)
    for (std::size_t px = 0; px < out_w; ++px)
      pool_cell(image, width, channels, bh, bw, py, px, out, out_w);
}

}  // namespace ref

namespace omp {

Matrix project_rows(const Matrix& x, const Matrix& w) {
  check_projection(x, w);
  Matrix y(x.rows(), w.rows());
  const auto rows = static_cast<std::int64_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < rows; ++n) {
    const auto r = static_cast<std::size_t>(n);
    for (std::size_t o = 0; o < w.rows(); ++o) y(r, o) = project_one(x, w, r, o);
  }
  return y;
}

Matrix conv1d_same(const Matrix& x, const Matrix& w, std::span<const double> bias,
                   std::size_t kernel) {
  check_conv(x, w, bias, kernel);
  Matrix y(x.rows(), w.rows());
  const auto steps = static_cast<std::int64_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < steps; ++t) {
    const auto r = static_cast<std::size_t>(t);
    conv_row(x, w, bias, kernel, r, y.row(r));
  }
  return y;
}

void avg_pool(std::span<const float> image, std::size_t height, std::size_t width,
              std::size_t channels, std::size_t out_h, std::size_t out_w,
              std::span<double> out) {
  check_pool(image, height, width, channels, out_h, out_w, out);
  const std::size_t bh = height / out_h;
  const std::size_t bw = width / out_w;
  const auto cells = static_cast<std::int64_t>(out_h * out_w);
#pragma omp parallel for schedule(static)
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    const auto i = static_cast<std::size_t>(cell);
    pool_cell(image, width, channels, bh, bw, i / out_w, i % out_w, out, out_w);
  }
}

}  // namespace omp
}  // namespace mer::kernels
