#include <doctest.h>

#include <vector>

#include "mer/error.hpp"
#include "mer/kernels.hpp"
#include "mer/rng.hpp"

using namespace mer;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace

TEST_CASE("project_rows matches a direct dot product") {
  Rng rng(1);
  const Matrix x = random_matrix(7, 5, rng);
  const Matrix w = random_matrix(3, 5, rng);
  const Matrix y = kernels::ref::project_rows(x, w);
  REQUIRE(y.rows() == 7);
  REQUIRE(y.cols() == 3);
  for (std::size_t n = 0; n < 7; ++n) {
    for (std::size_t o = 0; o < 3; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 5; ++i) acc += x(n, i) * w(o, i);
      CHECK(y(n, o) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(kernels::ref::project_rows(x, random_matrix(3, 4, rng)), Error);
}

TEST_CASE("omp kernels are bit-identical to the serial reference") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 1 + rng.below(40);
    const std::size_t D = 1 + rng.below(12);
    const std::size_t C = 1 + rng.below(9);
    const std::size_t k = 1 + 2 * rng.below(3);
    const Matrix x = random_matrix(T, D, rng);
    const Matrix w = random_matrix(C, D * k, rng);
    std::vector<double> b(C);
    for (double& v : b) v = rng.uniform(-1.0, 1.0);
    CHECK(kernels::ref::conv1d_same(x, w, b, k) == kernels::omp::conv1d_same(x, w, b, k));
    CHECK(kernels::ref::project_rows(x, random_matrix(C, D, rng)).rows() == T);
    const Matrix p = random_matrix(C, D, rng);
    CHECK(kernels::ref::project_rows(x, p) == kernels::omp::project_rows(x, p));
  }

  std::vector<float> image(32 * 24 * 3);
  for (float& v : image) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  std::vector<double> a(8 * 8 * 3), b(8 * 8 * 3);
  kernels::ref::avg_pool(image, 32, 24, 3, 8, 8, a);
  kernels::omp::avg_pool(image, 32, 24, 3, 8, 8, b);
  CHECK(a == b);
}

TEST_CASE("conv1d_same treats out-of-range rows as zero") {
  // k = 3, D = C = 1, all taps 1: out[t] = x[t-1] + x[t] + x[t+1].
  Matrix x(4, 1);
  x(0, 0) = 1;
  x(1, 0) = 2;
  x(2, 0) = 3;
  x(3, 0) = 4;
  const Matrix w(1, 3, 1.0);
  const std::vector<double> b = {0.5};
  const Matrix y = kernels::conv1d_same(x, w, b, 3);
  CHECK(y(0, 0) == 3.5);
  CHECK(y(1, 0) == 6.5);
  CHECK(y(2, 0) == 9.5);
  CHECK(y(3, 0) == 7.5);
  CHECK_THROWS_AS(kernels::conv1d_same(x, Matrix(1, 2, 1.0), b, 2), Error);
}

TEST_CASE("avg_pool averages equal blocks") {
  // 4x4 single-channel image pooled to 2x2.
  const std::vector<float> image = {1, 1, 2, 2,  //
                                    1, 1, 2, 2,  //
                                    3, 3, 4, 8,  //
                                    3, 3, 4, 8};
  std::vector<double> out(4);
  kernels::avg_pool(image, 4, 4, 1, 2, 2, out);
  CHECK(out == std::vector<double>{1, 2, 3, 6});
}
