#include <doctest.h>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <functional>
#include <vector>

#include "xgen/autodiff.hpp"
#include "xgen/util.hpp"

using namespace xgen;
using ad::Tape;

namespace {

// Central-difference check: builds the graph twice per probe with perturbed
// leaf data and compares the directional derivative against the backward pass.
// `build` maps leaf values to a scalar loss on a fresh tape.
void check_gradient(const std::function<double(Tape&, const std::vector<double>&)>& build,
                    size_t n_inputs, Rng& rng, int directions = 20, double step = 1e-4,
                    double rel_tol = 1e-3) {
  std::vector<double> x(n_inputs);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);

  Tape tape;
  double base = build(tape, x);
  (void)base;
  // the loss is the last node
  Tape::Index loss = Tape::Index(tape.size()) - 1;
  tape.backward(loss);
  // leaf 0 holds the inputs by convention
  const std::vector<double>& grad = tape.gradient(0);
  REQUIRE(grad.size() == n_inputs);

  for (int d = 0; d < directions; ++d) {
    std::vector<double> dir(n_inputs);
    double norm = 0;
    for (auto& v : dir) {
      v = rng.uniform(-1.0, 1.0);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : dir) v /= norm;

    std::vector<double> xp = x, xm = x;
    for (size_t i = 0; i < n_inputs; ++i) {
      xp[i] += step * dir[i];
      xm[i] -= step * dir[i];
    }
    Tape tp, tm;
    double fp = build(tp, xp), fm = build(tm, xm);
    double numeric = (fp - fm) / (2 * step);
    double analytic = 0;
    for (size_t i = 0; i < n_inputs; ++i) analytic += grad[i] * dir[i];
    double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-8});
    CHECK(std::fabs(numeric - analytic) / denom < rel_tol);
  }
}

std::vector<double> random_vec(size_t n, Rng& rng, double lo = -1, double hi = 1) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("forward values: elementwise and linear") {
  Tape t;
  Tape::Index a = t.leaf(1, 3, std::vector<double>{1, 2, 3}, true);
  Tape::Index b = t.leaf(1, 3, std::vector<double>{4, 5, 6}, false);
  CHECK(t.value(t.add(a, b)) == std::vector<double>{5, 7, 9});
  CHECK(t.value(t.sub(a, b)) == std::vector<double>{-3, -3, -3});
  CHECK(t.value(t.mul(a, b)) == std::vector<double>{4, 10, 18});
  CHECK(t.value(t.scale(a, 2)) == std::vector<double>{2, 4, 6});

  Tape::Index w = t.leaf(2, 3, std::vector<double>{1, 0, 0, 0, 1, 0}, false);
  Tape::Index bias = t.leaf(1, 2, std::vector<double>{10, 20}, false);
  CHECK(t.value(t.linear(a, w, bias)) == std::vector<double>{11, 22});
}

TEST_CASE("gradients: elementwise ops") {
  Rng rng(1);
  check_gradient(
      [](Tape& t, const std::vector<double>& x) {
        Tape::Index a = t.leaf(2, 3, x, true);
        Tape::Index b = t.leaf(2, 3, std::vector<double>{.1, .2, .3, .4, .5, .6}, false);
        return t.scalar(t.mean_all(t.mul(t.add(a, b), t.sub(a, b))));
      },
      6, rng);
  check_gradient(
      [](Tape& t, const std::vector<double>& x) {
        Tape::Index a = t.leaf(1, 4, x, true);
        return t.scalar(t.mean_all(t.leaky_relu(a, 0.01)));
      },
      4, rng);
  check_gradient(
      [](Tape& t, const std::vector<double>& x) {
        Tape::Index a = t.leaf(1, 4, x, true);
        return t.scalar(t.mean_all(t.clamp(t.scale(a, 3.0), -1.0, 1.0)));
      },
      4, rng);
}

TEST_CASE("gradients: linear layer (inputs, weights, bias)") {
  Rng rng(2);
  auto weights = random_vec(12, rng);
  auto bias = random_vec(4, rng);
  // d/d inputs
  check_gradient(
      [&](Tape& t, const std::vector<double>& x) {
        Tape::Index a = t.leaf(5, 3, x, true);
        Tape::Index w = t.leaf(4, 3, weights, false);
        Tape::Index b = t.leaf(1, 4, bias, false);
        return t.scalar(t.mean_all(t.leaky_relu(t.linear(a, w, b), 0.01)));
      },
      15, rng);
  // d/d weights+bias
  auto inputs = random_vec(15, rng);
  check_gradient(
      [&](Tape& t, const std::vector<double>& x) {
        Tape::Index w = t.leaf(4, 3, x, true);
        Tape::Index a = t.leaf(5, 3, inputs, false);
        return t.scalar(t.mean_all(t.linear(a, w, -1)));
      },
      12, rng);
}

TEST_CASE("gradients: gather, concat, trilinear") {
  Rng rng(3);
  check_gradient(
      [](Tape& t, const std::vector<double>& x) {
        Tape::Index a = t.leaf(4, 2, x, true);
        Tape::Index g = t.gather_rows(a, {3, 0, 0, 2});
        return t.scalar(t.mean_all(t.mul(g, g)));
      },
      8, rng);
  check_gradient(
      [](Tape& t, const std::vector<double>& x) {
        Tape::Index a = t.leaf(3, 2, x, true);
        Tape::Index b = t.leaf(3, 1, std::vector<double>{1, 2, 3}, false);
        Tape::Index c = t.concat_cols(a, b);
        return t.scalar(t.mean_all(t.mul(c, c)));
      },
      6, rng);
  check_gradient(
      [](Tape& t, const std::vector<double>& x) {
        Tape::Index a = t.leaf(4, 3, x, true);
        std::vector<int64_t> idx = {0, 1, 2, 3, -1, -1, -1, -1, 1, 1, 2, 2, 3, 3, 0, 0};
        std::vector<double> w = {.1, .2, .3, .4, 0, 0, 0, 0, .5, .1, .1, .1, .05, .05, .05, .05};
        Tape::Index g = t.trilinear_gather(a, idx, w);
        return t.scalar(t.mean_all(t.mul(g, g)));
      },
      12, rng);
}

TEST_CASE("gradients: sparse_conv (inputs and weights)") {
  Rng rng(4);
  const int c_in = 2, c_out = 3, sites = 4;
  // neighbor table: site i sees itself (tap 13) and site (i+1)%4 (tap 14)
  std::vector<int32_t> nb(sites * 27, -1);
  for (int s = 0; s < sites; ++s) {
    nb[s * 27 + 13] = s;
    nb[s * 27 + 14] = (s + 1) % sites;
  }
  auto weights = random_vec(27 * c_out * c_in, rng);
  auto bias = random_vec(c_out, rng);
  check_gradient(
      [&](Tape& t, const std::vector<double>& x) {
        Tape::Index a = t.leaf(sites, c_in, x, true);
        Tape::Index w = t.leaf(27 * c_out, c_in, weights, false);
        Tape::Index b = t.leaf(1, c_out, bias, false);
        Tape::Index y = t.sparse_conv(a, w, b, nb, c_out);
        return t.scalar(t.mean_all(t.mul(y, y)));
      },
      sites * c_in, rng);
  auto inputs = random_vec(sites * c_in, rng);
  check_gradient(
      [&](Tape& t, const std::vector<double>& x) {
        Tape::Index w = t.leaf(27 * c_out, c_in, x, true);
        Tape::Index a = t.leaf(sites, c_in, inputs, false);
        Tape::Index y = t.sparse_conv(a, w, -1, nb, c_out);
        return t.scalar(t.mean_all(t.mul(y, y)));
      },
      27 * c_out * c_in, rng);
}

TEST_CASE("sparse_conv: identity kernel reproduces occupied sites") {
  const int c = 3, sites = 5;
  std::vector<int32_t> nb(sites * 27, -1);
  for (int s = 0; s < sites; ++s) nb[s * 27 + 13] = s;  // center tap only
  std::vector<double> w(27 * c * c, 0.0);
  for (int i = 0; i < c; ++i) w[(13 * c + i) * c + i] = 1.0;  // center tap = identity
  Rng rng(5);
  auto x = random_vec(sites * c, rng);
  Tape t;
  Tape::Index a = t.leaf(sites, c, x, false);
  Tape::Index wi = t.leaf(27 * c, c, w, false);
  Tape::Index y = t.sparse_conv(a, wi, -1, nb, c);
  CHECK(t.value(y) == x);
}

TEST_CASE("gradients: losses") {
  Rng rng(6);
  // crossfield loss over tangent frames
  check_gradient(
      [](Tape& t, const std::vector<double>& x) {
        const int n = 5;
        std::vector<double> normals(3 * n), mu(3 * n), nu(3 * n);
        Rng inner(7);
        for (int i = 0; i < n; ++i) {
          Eigen::Vector3d nn(inner.uniform(-1, 1), inner.uniform(-1, 1), inner.uniform(-1, 1));
          nn.normalize();
          Eigen::Vector3d e1 = nn.unitOrthogonal();
          Eigen::Vector3d e2 = nn.cross(e1);
          double ang = inner.uniform(0, 2 * M_PI);
          Eigen::Vector3d m = std::cos(ang) * e1 + std::sin(ang) * e2;
          Eigen::Vector3d v = nn.cross(m);
          for (int c = 0; c < 3; ++c) {
            normals[i * 3 + c] = nn[c];
            mu[i * 3 + c] = m[c];
            nu[i * 3 + c] = v[c];
          }
        }
        Tape::Index raw = t.leaf(n, 3, x, true);
        Tape::Index alpha = t.project_normalize(raw, normals);
        return t.scalar(t.crossfield_loss(alpha, mu, nu));
      },
      15, rng, 20, 1e-5);
  // sdf L1
  check_gradient(
      [](Tape& t, const std::vector<double>& x) {
        Tape::Index p = t.leaf(6, 1, x, true);
        return t.scalar(t.l1_loss(p, {.3, -.2, .9, -1.1, 0.4, 2.0}));
      },
      6, rng);
  // bce with logits
  check_gradient(
      [](Tape& t, const std::vector<double>& x) {
        Tape::Index z = t.leaf(6, 1, x, true);
        return t.scalar(t.bce_logits_loss(z, {1, 0, 1, 1, 0, 0}));
      },
      6, rng);
  // kl: probe mean and logvar leaves separately
  std::vector<double> lv_fixed = random_vec(6, rng);
  check_gradient(
      [&](Tape& t, const std::vector<double>& x) {
        Tape::Index mean = t.leaf(2, 3, x, true);
        Tape::Index logvar = t.leaf(2, 3, lv_fixed, false);
        return t.scalar(t.kl_loss(mean, logvar));
      },
      6, rng);
  std::vector<double> mean_fixed = random_vec(6, rng);
  check_gradient(
      [&](Tape& t, const std::vector<double>& x) {
        Tape::Index logvar = t.leaf(2, 3, x, true);
        Tape::Index mean = t.leaf(2, 3, mean_fixed, false);
        return t.scalar(t.kl_loss(mean, logvar));
      },
      6, rng);
}

TEST_CASE("gradients: reparameterize, rotation frame, project_normalize") {
  Rng rng(8);
  std::vector<double> eta = random_vec(6, rng);
  check_gradient(
      [&](Tape& t, const std::vector<double>& x) {
        Tape::Index mean = t.leaf(2, 3, std::vector<double>(x.begin(), x.begin() + 6), true);
        Tape::Index lv = t.leaf(2, 3, std::vector<double>(x.begin() + 6, x.end()), false);
        Tape::Index s = t.reparameterize(mean, lv, eta);
        return t.scalar(t.mean_all(t.mul(s, s)));
      },
      12, rng);
  std::vector<double> t1 = {1, 0, 0, 0, 1, 0}, t2 = {0, 1, 0, 0, 0, 1};
  check_gradient(
      [&](Tape& t, const std::vector<double>& x) {
        Tape::Index theta = t.leaf(2, 1, std::vector<double>(x.begin(), x.begin() + 2), true);
        Tape::Index a = t.rotation_frame(theta, t1, t2);
        Tape::Index target = t.leaf(2, 3, std::vector<double>{0, 1, 0, 1, 0, 0}, false);
        Tape::Index d = t.sub(a, target);
        return t.scalar(t.mean_all(t.mul(d, d)));
      },
      2, rng);
}

TEST_CASE("loss anchors") {
  Tape t;
  SUBCASE("bce at logit 0 is ln 2") {
    Tape::Index z = t.leaf(4, 1, std::vector<double>{0, 0, 0, 0}, true);
    CHECK(t.scalar(t.bce_logits_loss(z, {1, 0, 1, 0})) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("kl closed form") {
    Tape::Index mean0 = t.leaf(1, 2, std::vector<double>{0, 0}, false);
    Tape::Index lv0 = t.leaf(1, 2, std::vector<double>{0, 0}, false);
    CHECK(t.scalar(t.kl_loss(mean0, lv0)) == doctest::Approx(0.0).epsilon(1e-15));
    Tape::Index mean1 = t.leaf(1, 2, std::vector<double>{1, 1}, false);
    CHECK(t.scalar(t.kl_loss(mean1, lv0)) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("crossfield loss is zero for aligned frames") {
    std::vector<double> mu = {1, 0, 0}, nu = {0, 1, 0};
    Tape::Index a = t.leaf(1, 3, mu, true);
    CHECK(t.scalar(t.crossfield_loss(a, mu, nu)) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("weighted_sum combines scalars") {
  Tape t;
  Tape::Index a = t.leaf(1, 1, std::vector<double>{2.0}, true);
  Tape::Index b = t.leaf(1, 1, std::vector<double>{3.0}, true);
  Tape::Index s = t.weighted_sum({{a, 1.5}, {b, -1.0}});
  CHECK(t.scalar(s) == doctest::Approx(0.0));
  t.backward(s);
  CHECK(t.gradient(a)[0] == doctest::Approx(1.5));
  CHECK(t.gradient(b)[0] == doctest::Approx(-1.0));
}
