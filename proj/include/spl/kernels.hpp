#pragma once

#include <complex>
#include <cstdint>
#include <vector>

// Dense numeric kernels. Each kernel exists in two flavors: the default
// OpenMP-parallel one and a plain serial reference under kernels::serial.
// The two flavors share the per-element code path, so their outputs are
// bit-identical for any thread count; tests assert exactly that and
// tools/bench_kernels compares their throughput.

namespace spl::kernels {

// Worker cap. Reads the SPL_THREADS environment variable once; values < 1
// or an unset variable fall back to the OpenMP default.
int max_threads();

// C[m x n] = A[m x k] * B[k x n], row-major, C overwritten.
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k,
            int64_t n);

// Full 2-D forward DFT of a real h x w grid (no normalization), row-major.
void dft2(const double* in, int h, int w, std::complex<double>* out);

// |DFT2| with the zero-frequency cell shifted to (h/2, w/2).
void dft2_magnitude_centered(const double* in, int h, int w, double* out);

// Separable Gaussian convolution, kernel radius ceil(3*sigma), reflect-101
// padding. sigma == 0 copies the input through unchanged.
void gaussian_blur(const double* in, double* out, int h, int w, double sigma);

namespace serial {
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k,
            int64_t n);
void dft2(const double* in, int h, int w, std::complex<double>* out);
void dft2_magnitude_centered(const double* in, int h, int w, double* out);
void gaussian_blur(const double* in, double* out, int h, int w, double sigma);
}  // namespace serial

// Normalized 1-D Gaussian taps for radius ceil(3*sigma); exposed for tests.
std::vector<double> gaussian_taps(double sigma);

}  // namespace spl::kernels
