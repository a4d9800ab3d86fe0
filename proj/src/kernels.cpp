#include "spl/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace spl::kernels {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
void fft_pow2(std::complex<double>* a, int n) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / len;
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Direct O(n^2) transform for lengths that are not a power of two.
void dft_direct(const std::complex<double>* in, std::complex<double>* out,
                int n) {
  for (int p = 0; p < n; ++p) {
    std::complex<double> acc(0.0, 0.0);
    for (int x = 0; x < n; ++x) {
      const double ang = -2.0 * kPi * p * x / n;
      acc += in[x] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[p] = acc;
  }
}

void transform_line(std::complex<double>* line, int n,
                    std::complex<double>* scratch) {
  if (is_pow2(n)) {
    fft_pow2(line, n);
  } else {
    dft_direct(line, scratch, n);
    std::copy(scratch, scratch + n, line);
  }
}

void matmul_row(const double* a, const double* b, double* c, int64_t i,
                int64_t k, int64_t n) {
  double* crow = c + i * n;
  std::fill(crow, crow + n, 0.0);
  const double* arow = a + i * k;
  for (int64_t kk = 0; kk < k; ++kk) {
    const double av = arow[kk];
    const double* brow = b + kk * n;
    for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

void dft2_impl(const double* in, int h, int w, std::complex<double>* out,
               bool parallel) {
  if (h <= 0 || w <= 0) throw std::invalid_argument("dft2: empty grid");
  for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i)
    out[i] = std::complex<double>(in[i], 0.0);

  const int nt = parallel ? max_threads() : 1;
#pragma omp parallel num_threads(nt) if (parallel)
  {
    std::vector<std::complex<double>> scratch(std::max(h, w));
#pragma omp for schedule(static)
    for (int r = 0; r < h; ++r) transform_line(out + static_cast<int64_t>(r) * w, w, scratch.data());
#pragma omp barrier
#pragma omp for schedule(static)
    for (int cidx = 0; cidx < w; ++cidx) {
      std::vector<std::complex<double>> col(h);
      for (int r = 0; r < h; ++r) col[r] = out[static_cast<int64_t>(r) * w + cidx];
      transform_line(col.data(), h, scratch.data());
      for (int r = 0; r < h; ++r) out[static_cast<int64_t>(r) * w + cidx] = col[r];
    }
  }
}

void magnitude_centered_from(const std::complex<double>* spec, int h, int w,
                             double* out) {
  // out[u][v] = |spec[(u + ceil(h/2)) % h][(v + ceil(w/2)) % w]| puts the
  // zero-frequency cell at (h/2, w/2).
  const int sh = (h + 1) / 2;
  const int sw = (w + 1) / 2;
  for (int u = 0; u < h; ++u) {
    const int su = (u + sh) % h;
    for (int v = 0; v < w; ++v) {
      const int sv = (v + sw) % w;
      out[static_cast<int64_t>(u) * w + v] =
          std::abs(spec[static_cast<int64_t>(su) * w + sv]);
    }
  }
}

inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

void blur_impl(const double* in, double* out, int h, int w, double sigma,
               bool parallel) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_blur: negative sigma");
  const int64_t total = static_cast<int64_t>(h) * w;
  if (sigma == 0.0) {
    std::memcpy(out, in, static_cast<size_t>(total) * sizeof(double));
    return;
  }
  const std::vector<double> taps = gaussian_taps(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  std::vector<double> tmp(total);

  const int nt = parallel ? max_threads() : 1;
#pragma omp parallel num_threads(nt) if (parallel)
  {
#pragma omp for schedule(static)
    for (int r = 0; r < h; ++r) {
      const double* src = in + static_cast<int64_t>(r) * w;
      double* dst = tmp.data() + static_cast<int64_t>(r) * w;
      for (int c = 0; c < w; ++c) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t)
          acc += taps[t + radius] * src[reflect101(c + t, w)];
        dst[c] = acc;
      }
    }
#pragma omp barrier
#pragma omp for schedule(static)
    for (int c = 0; c < w; ++c) {
      for (int r = 0; r < h; ++r) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t)
          acc += taps[t + radius] * tmp[static_cast<int64_t>(reflect101(r + t, h)) * w + c];
        out[static_cast<int64_t>(r) * w + c] = acc;
      }
    }
  }
}

}  // namespace

int max_threads() {
  static const int cached = [] {
    int n = omp_get_max_threads();
    if (const char* env = std::getenv("SPL_THREADS")) {
      const int cap = std::atoi(env);
      if (cap >= 1) n = std::min(n, cap);
    }
    return std::max(1, n);
  }();
  return cached;
}

std::vector<double> gaussian_taps(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    taps[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
    sum += taps[t + radius];
  }
  for (double& x : taps) x /= sum;
  return taps;
}

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k,
            int64_t n) {
  const bool big = m * k * n > 16384;
#pragma omp parallel for schedule(static) num_threads(max_threads()) if (big)
  for (int64_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n);
}

void dft2(const double* in, int h, int w, std::complex<double>* out) {
  dft2_impl(in, h, w, out, true);
}

void dft2_magnitude_centered(const double* in, int h, int w, double* out) {
  std::vector<std::complex<double>> spec(static_cast<int64_t>(h) * w);
  dft2_impl(in, h, w, spec.data(), true);
  magnitude_centered_from(spec.data(), h, w, out);
}

void gaussian_blur(const double* in, double* out, int h, int w, double sigma) {
  blur_impl(in, out, h, w, sigma, true);
}

namespace serial {

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k,
            int64_t n) {
  for (int64_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n);
}

void dft2(const double* in, int h, int w, std::complex<double>* out) {
  dft2_impl(in, h, w, out, false);
}

void dft2_magnitude_centered(const double* in, int h, int w, double* out) {
  std::vector<std::complex<double>> spec(static_cast<int64_t>(h) * w);
  dft2_impl(in, h, w, spec.data(), false);
  magnitude_centered_from(spec.data(), h, w, out);
}

void gaussian_blur(const double* in, double* out, int h, int w, double sigma) {
  blur_impl(in, out, h, w, sigma, false);
}

}  // namespace serial

}  // namespace spl::kernels
