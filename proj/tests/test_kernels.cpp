#include <doctest.h>

#include <cmath>
#include <vector>

#include "xgen/kernels.hpp"
#include "xgen/util.hpp"

using namespace xgen;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// sizes that exercise SIMD main loops and scalar remainders
const std::vector<size_t> kSizes = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 65, 127, 256};

}  // namespace

TEST_CASE("scalar and avx2 kernels agree") {
  const kernels::Table& scalar = kernels::scalar_table();
  const kernels::Table* simd = kernels::avx2_table();
  if (!simd) {
    MESSAGE("AVX2 unavailable; skipping equivalence");
    return;
  }
  Rng rng(42);
  for (size_t n : kSizes) {
    auto x = random_vec(n, rng), y = random_vec(n, rng);
    CAPTURE(n);
    CHECK(scalar.dot(x.data(), y.data(), n) ==
          doctest::Approx(simd->dot(x.data(), y.data(), n)).epsilon(1e-13));
    CHECK(scalar.sum(x.data(), n) == doctest::Approx(simd->sum(x.data(), n)).epsilon(1e-13));
    CHECK(scalar.sum_abs(x.data(), n) ==
          doctest::Approx(simd->sum_abs(x.data(), n)).epsilon(1e-13));
    CHECK(scalar.sum_sq(x.data(), n) ==
          doctest::Approx(simd->sum_sq(x.data(), n)).epsilon(1e-13));

    auto y1 = y, y2 = y;
    scalar.axpy(1.7, x.data(), y1.data(), n);
    simd->axpy(1.7, x.data(), y2.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));

    auto a1 = x, a2 = x;
    scalar.lrelu(y.data(), a1.data(), n, 0.01);
    simd->lrelu(y.data(), a2.data(), n, 0.01);
    for (size_t i = 0; i < n; ++i) CHECK(a1[i] == a2[i]);

    auto g1 = random_vec(n, rng);
    auto g2 = g1;
    scalar.lrelu_bwd(y.data(), x.data(), g1.data(), n, 0.01);
    simd->lrelu_bwd(y.data(), x.data(), g2.data(), n, 0.01);
    for (size_t i = 0; i < n; ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-14));
  }
}

TEST_CASE("matvec variants agree with naive loops") {
  const kernels::Table& scalar = kernels::scalar_table();
  const kernels::Table* simd = kernels::avx2_table();
  Rng rng(7);
  for (size_t m : {1, 3, 8, 17}) {
    for (size_t n : {1, 4, 13, 64}) {
      auto a = random_vec(m * n, rng);
      auto x = random_vec(n, rng);
      auto xm = random_vec(m, rng);
      std::vector<double> want(m, 0.5);
      for (size_t r = 0; r < m; ++r)
        for (size_t c = 0; c < n; ++c) want[r] += a[r * n + c] * x[c];

      for (const kernels::Table* t : {&scalar, simd}) {
        if (!t) continue;
        std::vector<double> got(m, 0.5);
        t->matvec(a.data(), x.data(), got.data(), m, n);
        for (size_t r = 0; r < m; ++r) CHECK(got[r] == doctest::Approx(want[r]).epsilon(1e-13));

        std::vector<double> want_t(n, 0.0), got_t(n, 0.0);
        for (size_t r = 0; r < m; ++r)
          for (size_t c = 0; c < n; ++c) want_t[c] += a[r * n + c] * xm[r];
        t->matvec_t(a.data(), xm.data(), got_t.data(), m, n);
        for (size_t c = 0; c < n; ++c)
          CHECK(got_t[c] == doctest::Approx(want_t[c]).epsilon(1e-13));

        std::vector<double> acc1 = a, acc2 = a;
        for (size_t r = 0; r < m; ++r)
          for (size_t c = 0; c < n; ++c) acc1[r * n + c] += xm[r] * x[c];
        t->outer_acc(xm.data(), x.data(), acc2.data(), m, n);
        for (size_t i = 0; i < m * n; ++i)
          CHECK(acc1[i] == doctest::Approx(acc2[i]).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("adam kernel matches reference update") {
  const kernels::Table* simd = kernels::avx2_table();
  if (!simd) return;
  Rng rng(99);
  const size_t n = 37;
  auto p1 = random_vec(n, rng);
  auto g = random_vec(n, rng);
  auto m1 = random_vec(n, rng, 0.0, 0.1), v1 = random_vec(n, rng, 0.0, 0.1);
  auto p2 = p1, m2 = m1, v2 = v1;
  double c1 = 1 - std::pow(0.9, 3), c2 = 1 - std::pow(0.999, 3);
  kernels::scalar_table().adam(p1.data(), g.data(), m1.data(), v1.data(), n, 1e-3, 0.9, 0.999,
                               1e-8, c1, c2);
  simd->adam(p2.data(), g.data(), m2.data(), v2.data(), n, 1e-3, 0.9, 0.999, 1e-8, c1, c2);
  for (size_t i = 0; i < n; ++i) {
    CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-14));
    CHECK(m1[i] == doctest::Approx(m2[i]).epsilon(1e-14));
    CHECK(v1[i] == doctest::Approx(v2[i]).epsilon(1e-14));
  }
}

TEST_CASE("backend selection respects overrides") {
  kernels::set_backend(kernels::Backend::scalar);
  CHECK(kernels::active_backend() == kernels::Backend::scalar);
  CHECK(std::string(kernels::active().name) == "scalar");
  if (kernels::avx2_supported()) {
    kernels::set_backend(kernels::Backend::avx2);
    CHECK(std::string(kernels::active().name) == "avx2");
  } else {
    CHECK_THROWS_AS(kernels::set_backend(kernels::Backend::avx2), Error);
  }
}
