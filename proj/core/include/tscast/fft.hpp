#pragma once

#include <complex>
#include <cstddef>

namespace tscast::fft {

// One-dimensional real FFT pair, NumPy conventions:
//   rfft:  X_f = sum_n x_n e^{-2*pi*i*f*n/N},  f = 0 .. N/2   (unnormalized)
//   irfft: x_n = (1/N) * conjugate-symmetric expansion of X
// plus the adjoints of both maps w.r.t. the real inner product on the
// interleaved (re, im) components, which the gradient engine needs:
//   rfft_adjoint(d)[n]  = sum_f (dRe_f cos t - dIm_f sin t),      t = 2*pi*f*n/N
//   irfft_adjoint(d)[f] = (w_f/N) * sum_n d_n e^{-2*pi*i*f*n/N},  w_f = 1 at DC
//                          and Nyquist, 2 for interior bins.
// All four run on cached FFTW_ESTIMATE plans (deterministic plan choice).

inline size_t rfft_bins(size_t n) { return n / 2 + 1; }

void rfft(const double* x, size_t n, std::complex<double>* out);
void irfft(const std::complex<double>* z, size_t n, double* out);
void rfft_adjoint(const std::complex<double>* dz, size_t n, double* out);
void irfft_adjoint(const double* dx, size_t n, std::complex<double>* out);

}  // namespace tscast::fft
