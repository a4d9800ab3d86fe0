#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <complex>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "spl/kernels.hpp"
#include "spl/rng.hpp"

using namespace spl;

namespace {

// O(N^4) transform straight from the DFT definition; the independent oracle
// for the fast path.
std::vector<double> dft2_magnitude_direct(const std::vector<double>& in, int h,
                                          int w) {
  constexpr double kPi = 3.14159265358979323846;
  std::vector<double> out(static_cast<size_t>(h) * w);
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      std::complex<double> acc(0.0, 0.0);
      for (int x = 0; x < h; ++x)
        for (int y = 0; y < w; ++y) {
          const double ang =
              -2.0 * kPi * (static_cast<double>(u) * x / h +
                            static_cast<double>(v) * y / w);
          acc += in[static_cast<size_t>(x) * w + y] *
                 std::complex<double>(std::cos(ang), std::sin(ang));
        }
      // Shift zero frequency to (h/2, w/2).
      const int su = (u + h / 2) % h;
      const int sv = (v + w / 2) % w;
      out[static_cast<size_t>(su) * w + sv] = std::abs(acc);
    }
  }
  return out;
}

std::vector<double> random_grid(int h, int w, Rng& rng) {
  std::vector<double> g(static_cast<size_t>(h) * w);
  for (double& x : g) x = rng.uniform01();
  return g;
}

}  // namespace

TEST_CASE("parallel matmul is bit-identical to the serial reference") {
  Rng rng(7);
  for (auto [m, k, n] : {std::tuple{3, 4, 5}, {17, 33, 9}, {64, 64, 64}}) {
    std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n);
    for (double& x : a) x = rng.gaussian();
    for (double& x : b) x = rng.gaussian();
    std::vector<double> c_par(static_cast<size_t>(m) * n), c_ser(c_par.size());
    kernels::matmul(a.data(), b.data(), c_par.data(), m, k, n);
    kernels::serial::matmul(a.data(), b.data(), c_ser.data(), m, k, n);
    CHECK(std::memcmp(c_par.data(), c_ser.data(), c_par.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("matmul of all-ones 2x3 by 3x2 gives 3.0 everywhere") {
  std::vector<double> a(6, 1.0), b(6, 1.0), c(4);
  kernels::matmul(a.data(), b.data(), c.data(), 2, 3, 2);
  for (double v : c) CHECK(v == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("parallel dft2 magnitude is bit-identical to the serial reference") {
  Rng rng(11);
  for (auto [h, w] : {std::pair{8, 8}, {16, 16}, {12, 20}, {7, 5}}) {
    auto g = random_grid(h, w, rng);
    std::vector<double> par(g.size()), ser(g.size());
    kernels::dft2_magnitude_centered(g.data(), h, w, par.data());
    kernels::serial::dft2_magnitude_centered(g.data(), h, w, ser.data());
    CHECK(std::memcmp(par.data(), ser.data(), par.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("dft2 magnitude matches the direct-definition oracle") {
  Rng rng(13);
  for (auto [h, w] : {std::pair{4, 4}, {8, 8}, {6, 8}, {5, 7}}) {
    auto g = random_grid(h, w, rng);
    std::vector<double> fast(g.size());
    kernels::dft2_magnitude_centered(g.data(), h, w, fast.data());
    auto oracle = dft2_magnitude_direct(g, h, w);
    for (size_t i = 0; i < g.size(); ++i)
      CHECK(fast[i] == doctest::Approx(oracle[i]).epsilon(1e-9));
  }
}

TEST_CASE("constant patch concentrates all magnitude at the center") {
  const int n = 8;
  std::vector<double> g(n * n, 1.0), m(n * n);
  kernels::dft2_magnitude_centered(g.data(), n, n, m.data());
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      const double expect = (u == n / 2 && v == n / 2) ? 64.0 : 0.0;
      CHECK(m[static_cast<size_t>(u) * n + v] == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("horizontal cosine lights exactly the two +-1-cycle cells") {
  const int n = 16;
  std::vector<double> g(n * n);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      g[static_cast<size_t>(x) * n + y] = std::cos(2.0 * 3.14159265358979323846 * y / n);
  std::vector<double> m(n * n);
  kernels::dft2_magnitude_centered(g.data(), n, n, m.data());
  const int c = n / 2;
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      const bool tone = (u == c) && (v == c - 1 || v == c + 1);
      const double expect = tone ? n * n / 2.0 : 0.0;
      CHECK(m[static_cast<size_t>(u) * n + v] ==
            doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("parallel blur is bit-identical to the serial reference") {
  Rng rng(17);
  auto g = random_grid(33, 47, rng);
  std::vector<double> par(g.size()), ser(g.size());
  for (double sigma : {0.0, 0.7, 2.5}) {
    kernels::gaussian_blur(g.data(), par.data(), 33, 47, sigma);
    kernels::serial::gaussian_blur(g.data(), ser.data(), 33, 47, sigma);
    CHECK(std::memcmp(par.data(), ser.data(), par.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("blur with sigma 0 is the identity, constant images are fixed points") {
  Rng rng(19);
  auto g = random_grid(9, 9, rng);
  std::vector<double> out(g.size());
  kernels::gaussian_blur(g.data(), out.data(), 9, 9, 0.0);
  CHECK(std::memcmp(out.data(), g.data(), g.size() * sizeof(double)) == 0);

  std::vector<double> flat(15 * 15, 0.42), blurred(15 * 15);
  kernels::gaussian_blur(flat.data(), blurred.data(), 15, 15, 2.0);
  for (double v : blurred) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("impulse response reproduces the analytic Gaussian taps") {
  const int n = 31;
  std::vector<double> img(n, 0.0);
  img[n / 2] = 1.0;
  std::vector<double> out(n);
  kernels::gaussian_blur(img.data(), out.data(), 1, n, 1.0);
  const auto taps = kernels::gaussian_taps(1.0);
  const int radius = static_cast<int>(taps.size()) / 2;
  for (int i = 0; i < n; ++i) {
    const int off = i - n / 2;
    const double expect =
        std::abs(off) <= radius ? taps[static_cast<size_t>(off + radius)] : 0.0;
    CHECK(out[static_cast<size_t>(i)] == doctest::Approx(expect).epsilon(1e-6));
  }
}
