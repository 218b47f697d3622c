#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "neptune/errors.hpp"
#include "neptune/kernels.hpp"

using namespace neptune;

namespace {

constexpr double kUnit = 0x1p-53;

// Worst-case rounding gap between two summation orders of n products:
// each side is within gamma_n * sum|a_i b_i| of the exact value.
double order_bound(std::size_t n, double abs_sum) {
  return 2.0 * static_cast<double>(n + 2) * kUnit * abs_sum + 1e-300;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!kernels::supported(kernels::Isa::avx2)) GTEST_SKIP() << "AVX2/FMA not available";
    simd_ = &kernels::table(kernels::Isa::avx2);
  }
  const kernels::KernelTable& ref_ = kernels::scalar_table();
  const kernels::KernelTable* simd_ = nullptr;
  std::mt19937_64 rng_{1234};
};

}  // namespace

TEST_F(KernelEquivalence, DotMatchesScalarAcrossLengthsAndOffsets) {
  for (std::size_t n = 0; n <= 70; ++n) {
    for (std::size_t off = 0; off < 3; ++off) {
      auto a = random_vec(n + off, rng_), b = random_vec(n + off, rng_);
      double abs_sum = 0;
      for (std::size_t i = off; i < n + off; ++i) abs_sum += std::abs(a[i] * b[i]);
      const double r = ref_.dot(a.data() + off, b.data() + off, n);
      const double s = simd_->dot(a.data() + off, b.data() + off, n);
      EXPECT_LE(std::abs(r - s), order_bound(n, abs_sum)) << "n=" << n << " off=" << off;
    }
  }
}

TEST_F(KernelEquivalence, AxpyMatchesScalar) {
  for (std::size_t n = 0; n <= 37; ++n) {
    auto x = random_vec(n + 1, rng_), y = random_vec(n + 1, rng_);
    auto y_ref = y, y_simd = y;
    ref_.axpy(0.75, x.data() + 1, y_ref.data() + 1, n);
    simd_->axpy(0.75, x.data() + 1, y_simd.data() + 1, n);
    for (std::size_t i = 0; i <= n; ++i) {
      // FMA rounds once instead of twice.
      EXPECT_NEAR(y_ref[i], y_simd[i], 4 * kUnit * (std::abs(y[i]) + std::abs(0.75 * x[i])));
    }
    EXPECT_EQ(y_simd[0], y[0]);  // untouched prefix
  }
}

TEST_F(KernelEquivalence, GemvFamilyMatchesScalar) {
  for (std::size_t rows : {1u, 3u, 8u, 13u}) {
    for (std::size_t cols : {1u, 4u, 7u, 32u, 33u}) {
      const auto m = random_vec(rows * cols, rng_);
      const auto x = random_vec(cols, rng_);
      const auto xt = random_vec(rows, rng_);
      std::vector<double> y_ref(rows), y_simd(rows), t_ref(cols), t_simd(cols);
      ref_.gemv(m.data(), rows, cols, x.data(), y_ref.data());
      simd_->gemv(m.data(), rows, cols, x.data(), y_simd.data());
      for (std::size_t r = 0; r < rows; ++r) {
        double abs_sum = 0;
        for (std::size_t c = 0; c < cols; ++c) abs_sum += std::abs(m[r * cols + c] * x[c]);
        EXPECT_LE(std::abs(y_ref[r] - y_simd[r]), order_bound(cols, abs_sum));
      }
      ref_.gemv_t(m.data(), rows, cols, xt.data(), t_ref.data());
      simd_->gemv_t(m.data(), rows, cols, xt.data(), t_simd.data());
      for (std::size_t c = 0; c < cols; ++c) {
        double abs_sum = 0;
        for (std::size_t r = 0; r < rows; ++r) abs_sum += std::abs(m[r * cols + c] * xt[r]);
        EXPECT_LE(std::abs(t_ref[c] - t_simd[c]), order_bound(rows, abs_sum));
      }
      auto g_ref = m, g_simd = m;
      ref_.ger(-0.5, xt.data(), rows, x.data(), cols, g_ref.data());
      simd_->ger(-0.5, xt.data(), rows, x.data(), cols, g_simd.data());
      for (std::size_t i = 0; i < m.size(); ++i) {
        EXPECT_NEAR(g_ref[i], g_simd[i], 8 * kUnit * (std::abs(m[i]) + 4.0));
      }
    }
  }
}

TEST(Kernels, IdenticalRowsGiveIdenticalGemvOutputs) {
  std::mt19937_64 rng(5);
  for (auto isa : {kernels::Isa::scalar, kernels::Isa::avx2}) {
    if (!kernels::supported(isa)) continue;
    const auto& k = kernels::table(isa);
    const std::size_t cols = 37;
    auto row = random_vec(cols, rng);
    auto x = random_vec(cols, rng);
    std::vector<double> m;
    for (int r = 0; r < 9; ++r) m.insert(m.end(), row.begin(), row.end());
    std::vector<double> y(9);
    k.gemv(m.data(), 9, cols, x.data(), y.data());
    for (int r = 1; r < 9; ++r) EXPECT_EQ(y[0], y[r]) << k.name;
  }
}

TEST(Kernels, SelectAndParse) {
  const auto before = kernels::active().isa;
  kernels::select(kernels::Isa::scalar);
  EXPECT_EQ(kernels::active().isa, kernels::Isa::scalar);
  kernels::select(before);
  EXPECT_EQ(kernels::parse_isa("scalar"), kernels::Isa::scalar);
  EXPECT_EQ(kernels::parse_isa("auto"), kernels::best_supported());
  EXPECT_THROW(kernels::parse_isa("sse9"), ContractViolation);
  EXPECT_EQ(kernels::active().isa, kernels::best_supported());
}
