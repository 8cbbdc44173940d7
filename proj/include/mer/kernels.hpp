#pragma once

#include <cstddef>
#include <span>

#include "mer/tensor.hpp"

// Numeric kernels shared by the encoders and the fusion head.
//
// Every kernel exists twice: `ref` is the plain serial loop kept as the test
// reference, `omp` splits the outer output loop across OpenMP threads. Both
// variants accumulate each output element in the same order and agree
// bit for bit at any thread count.
namespace mer::kernels {

// Convolution weights are stored as a C x (D*k) matrix, element (c, d*k + j).
struct ConvShape {
  std::size_t in_dim = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
};

namespace ref {
// y[n, o] = sum_i w[o, i] * x[n, i]
Matrix project_rows(const Matrix& x, const Matrix& w);
// Zero-padded "same" 1D convolution along rows, stride 1.
Matrix conv1d_same(const Matrix& x, const Matrix& w, std::span<const double> bias,
                   std::size_t kernel);
// Block average of an interleaved HxWxC image down to out_h x out_w x C.
void avg_pool(std::span<const float> image, std::size_t height, std::size_t width,
              std::size_t channels, std::size_t out_h, std::size_t out_w,
              std::span<double> out);
}  // namespace ref

namespace omp {
Matrix project_rows(const Matrix& x, const Matrix& w);
Matrix conv1d_same(const Matrix& x, const Matrix& w, std::span<const double> bias,
                   std::size_t kernel);
void avg_pool(std::span<const float> image, std::size_t height, std::size_t width,
              std::size_t channels, std::size_t out_h, std::size_t out_w,
              std::span<double> out);
}  // namespace omp

// Default dispatch used by the pipeline.
using omp::avg_pool;
using omp::conv1d_same;
using omp::project_rows;

}  // namespace mer::kernels
