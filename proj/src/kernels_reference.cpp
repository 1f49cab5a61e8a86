#include <algorithm>
#include <cmath>
#include <limits>

#include "lazyrec/kernels.hpp"

namespace lazyrec::kernels::reference {

void gemm(bool trans_a, bool trans_b, std::size_t batch, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t stride_a, const double* b,
          std::size_t stride_b, double* c, std::size_t stride_c, bool accumulate) {
  for (std::size_t bt = 0; bt < batch; ++bt) {
    const double* ab = a + bt * stride_a;
    const double* bb = b + bt * stride_b;
    double* cb = c + bt * stride_c;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = trans_a ? ab[p * m + i] : ab[i * k + p];
          const double bv = trans_b ? bb[j * k + p] : bb[p * n + j];
          s += av * bv;
        }
        cb[i * n + j] = accumulate ? cb[i * n + j] + s : s;
      }
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols,
                  const std::uint8_t* mask, std::size_t mask_rows) {
  for (std::size_t r = 0; r < rows; ++r) {
    const std::uint8_t* mr = mask ? mask + (r % mask_rows) * cols : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      if (!mr || mr[j]) mx = std::max(mx, x[r * cols + j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = (!mr || mr[j]) ? std::exp(x[r * cols + j] - mx) : 0.0;
      y[r * cols + j] = e;
      sum += e;
    }
    if (sum > 0.0) {
      for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] /= sum;
    }
  }
}

void log_softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double mx = *std::max_element(xr, xr + cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(xr[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = xr[j] - lse;
  }
}

void rmsnorm_forward(const double* x, const double* gain, double* y, double* inv_rms,
                     std::size_t rows, std::size_t cols, double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) ss += x[r * cols + j] * x[r * cols + j];
    const double denom = std::sqrt(ss / static_cast<double>(cols) + eps);
    inv_rms[r] = denom > 0.0 ? 1.0 / denom : 0.0;
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = x[r * cols + j] * inv_rms[r] * gain[j];
  }
}

void rmsnorm_backward(const double* x, const double* gain, const double* inv_rms,
                      const double* dy, double* dx, double* dgain, std::size_t rows,
                      std::size_t cols) {
  const double n = static_cast<double>(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double inv = inv_rms[r];
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += dy[r * cols + j] * gain[j] * x[r * cols + j];
    const double coef = inv * inv * inv * dot / n;
    for (std::size_t j = 0; j < cols; ++j) {
      dx[r * cols + j] += inv * gain[j] * dy[r * cols + j] - coef * x[r * cols + j];
    }
  }
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += dy[r * cols + j] * x[r * cols + j] * inv_rms[r];
    dgain[j] += s;
  }
}

}  // namespace lazyrec::kernels::reference
