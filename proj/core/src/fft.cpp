#include "tscast/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <memory>
#include <mutex>

namespace tscast::fft {
namespace {

// Plans and their working buffers, one set per transform length. FFTW's
// planner is not thread-safe, so the cache is guarded; execution copies
// through plan-owned buffers which keeps alignment requirements trivial.
struct PlanSet {
  size_t n = 0;
  double* real = nullptr;
  fftw_complex* cplx = nullptr;
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;

  explicit PlanSet(size_t len) : n(len) {
    real = fftw_alloc_real(n);
    cplx = fftw_alloc_complex(rfft_bins(n));
    r2c = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, cplx, FFTW_ESTIMATE);
    c2r = fftw_plan_dft_c2r_1d(static_cast<int>(n), cplx, real, FFTW_ESTIMATE);
  }
  ~PlanSet() {
    fftw_destroy_plan(r2c);
    fftw_destroy_plan(c2r);
    fftw_free(real);
    fftw_free(cplx);
  }
  PlanSet(const PlanSet&) = delete;
  PlanSet& operator=(const PlanSet&) = delete;
};

std::mutex g_mutex;
std::map<size_t, std::unique_ptr<PlanSet>>& cache() {
  static std::map<size_t, std::unique_ptr<PlanSet>> c;
  return c;
}

PlanSet& plans_for(size_t n) {
  auto& c = cache();
  auto it = c.find(n);
  if (it == c.end()) it = c.emplace(n, std::make_unique<PlanSet>(n)).first;
  return *it->second;
}

// A real signal has no imaginary part at DC or (even n) Nyquist; zero them
// before c2r so the inverse is the NumPy-style Hermitian projection rather
// than whatever the codelet happens to read.
void clamp_hermitian_edges(fftw_complex* z, size_t n) {
  z[0][1] = 0.0;
  if (n % 2 == 0) z[n / 2][1] = 0.0;
}

}  // namespace

void rfft(const double* x, size_t n, std::complex<double>* out) {
  std::lock_guard<std::mutex> lock(g_mutex);
  PlanSet& p = plans_for(n);
  std::memcpy(p.real, x, n * sizeof(double));
  fftw_execute(p.r2c);
  std::memcpy(out, p.cplx, rfft_bins(n) * sizeof(std::complex<double>));
}

void irfft(const std::complex<double>* z, size_t n, double* out) {
  std::lock_guard<std::mutex> lock(g_mutex);
  PlanSet& p = plans_for(n);
  std::memcpy(p.cplx, z, rfft_bins(n) * sizeof(std::complex<double>));
  clamp_hermitian_edges(p.cplx, n);
  fftw_execute(p.c2r);
  const double inv = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) out[i] = p.real[i] * inv;
}

void rfft_adjoint(const std::complex<double>* dz, size_t n, double* out) {
  // c2r counts interior bins twice (conjugate symmetry); the adjoint of the
  // half-spectrum map counts every bin once, so halve the interior first.
  std::lock_guard<std::mutex> lock(g_mutex);
  PlanSet& p = plans_for(n);
  const size_t f = rfft_bins(n);
  std::memcpy(p.cplx, dz, f * sizeof(std::complex<double>));
  const size_t interior_end = (n % 2 == 0) ? f - 1 : f;
  for (size_t i = 1; i < interior_end; ++i) {
    p.cplx[i][0] *= 0.5;
    p.cplx[i][1] *= 0.5;
  }
  clamp_hermitian_edges(p.cplx, n);
  fftw_execute(p.c2r);
  std::memcpy(out, p.real, n * sizeof(double));
}

void irfft_adjoint(const double* dx, size_t n, std::complex<double>* out) {
  std::lock_guard<std::mutex> lock(g_mutex);
  PlanSet& p = plans_for(n);
  std::memcpy(p.real, dx, n * sizeof(double));
  fftw_execute(p.r2c);
  const size_t f = rfft_bins(n);
  const double inv = 1.0 / static_cast<double>(n);
  const size_t interior_end = (n % 2 == 0) ? f - 1 : f;
  for (size_t i = 0; i < f; ++i) {
    double w = (i == 0 || i >= interior_end) ? 1.0 : 2.0;
    out[i] = std::complex<double>(p.cplx[i][0], p.cplx[i][1]) * (w * inv);
  }
}

}  // namespace tscast::fft
