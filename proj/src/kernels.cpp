#include "lazyrec/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <vector>

namespace lazyrec::kernels {

namespace {

std::atomic<std::uint64_t> g_macs{0};

// Row-parallel loops only pay off above this many scalar operations.
constexpr std::size_t kParallelThreshold = 1 << 14;

}  // namespace

void reset_mac_counter() { g_macs.store(0); }
std::uint64_t mac_counter() { return g_macs.load(); }

void gemm(bool trans_a, bool trans_b, std::size_t batch, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t stride_a, const double* b,
          std::size_t stride_b, double* c, std::size_t stride_c, bool accumulate) {
  g_macs.fetch_add(static_cast<std::uint64_t>(batch) * m * n * k,
                   std::memory_order_relaxed);
  const auto rows = static_cast<std::ptrdiff_t>(batch * m);
  const bool parallel = batch * m * n * k >= kParallelThreshold;

#pragma omp parallel if (parallel)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
      const std::size_t bt = static_cast<std::size_t>(r) / m;
      const std::size_t i = static_cast<std::size_t>(r) % m;
      const double* ab = a + bt * stride_a;
      const double* bb = b + bt * stride_b;
      double* crow = c + bt * stride_c + i * n;

      if (trans_b) {
        for (std::size_t j = 0; j < n; ++j) {
          const double* brow = bb + j * k;
          double s = 0.0;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = trans_a ? ab[p * m + i] : ab[i * k + p];
            s += av * brow[p];
          }
          acc[j] = s;
        }
      } else {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t p = 0; p < k; ++p) {
          const double av = trans_a ? ab[p * m + i] : ab[i * k + p];
          const double* brow = bb + p * n;
          for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
        }
      }

      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += acc[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] = acc[j];
      }
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols,
                  const std::uint8_t* mask, std::size_t mask_rows) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
  for (std::ptrdiff_t r = 0; r < nrows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    const std::uint8_t* mr =
        mask ? mask + (static_cast<std::size_t>(r) % mask_rows) * cols : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      if (!mr || mr[j]) mx = std::max(mx, xr[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = (!mr || mr[j]) ? std::exp(xr[j] - mx) : 0.0;
      yr[j] = e;
      sum += e;
    }
    if (sum > 0.0) {
      for (std::size_t j = 0; j < cols; ++j) yr[j] /= sum;
    }
  }
}

void log_softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
  for (std::ptrdiff_t r = 0; r < nrows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(xr[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < cols; ++j) yr[j] = xr[j] - lse;
  }
}

void rmsnorm_forward(const double* x, const double* gain, double* y, double* inv_rms,
                     std::size_t rows, std::size_t cols, double eps) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
  for (std::ptrdiff_t r = 0; r < nrows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double ss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) ss += xr[j] * xr[j];
    const double denom = std::sqrt(ss / static_cast<double>(cols) + eps);
    // eps == 0 on an all-zero row: the row normalizes to zero.
    const double inv = denom > 0.0 ? 1.0 / denom : 0.0;
    inv_rms[r] = inv;
    for (std::size_t j = 0; j < cols; ++j) yr[j] = xr[j] * inv * gain[j];
  }
}

void rmsnorm_backward(const double* x, const double* gain, const double* inv_rms,
                      const double* dy, double* dx, double* dgain, std::size_t rows,
                      std::size_t cols) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
  const auto ncols = static_cast<std::ptrdiff_t>(cols);
  const bool parallel = rows * cols >= kParallelThreshold;
  const double n = static_cast<double>(cols);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t r = 0; r < nrows; ++r) {
    const double* xr = x + r * cols;
    const double* dyr = dy + r * cols;
    double* dxr = dx + r * cols;
    const double inv = inv_rms[r];
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += dyr[j] * gain[j] * xr[j];
    const double coef = inv * inv * inv * dot / n;
    for (std::size_t j = 0; j < cols; ++j) dxr[j] += inv * gain[j] * dyr[j] - coef * xr[j];
  }
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t j = 0; j < ncols; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += dy[r * cols + j] * x[r * cols + j] * inv_rms[r];
    dgain[j] += s;
  }
}

}  // namespace lazyrec::kernels
