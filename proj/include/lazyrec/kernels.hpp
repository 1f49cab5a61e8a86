#pragma once

#include <cstddef>
#include <cstdint>

// Dense numerical kernels behind the autodiff ops.
//
// The functions in `kernels` are OpenMP-parallel over independent output rows
// (or columns, for reductions across rows). Each output element is produced by
// exactly one thread, summing in a fixed order, so results are bitwise
// identical to the serial versions in `kernels::reference` for any thread
// count. The reference versions exist for tests and benchmarks.
namespace lazyrec::kernels {

// C[b] (+)= op(A[b]) * op(B[b]) for b in [0, batch).
// op(A) is m x k (stored k x m when trans_a), op(B) is k x n (stored n x k
// when trans_b). A stride of 0 broadcasts that operand across the batch.
void gemm(bool trans_a, bool trans_b, std::size_t batch, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t stride_a, const double* b,
          std::size_t stride_b, double* c, std::size_t stride_c, bool accumulate);

// Row-wise softmax over `cols`. `mask` (optional) has mask_rows x cols
// entries, row r uses mask row r % mask_rows; 0 entries get probability 0.
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols,
                  const std::uint8_t* mask = nullptr, std::size_t mask_rows = 1);

void log_softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);

// y = x / sqrt(mean(x^2) + eps) * gain, per row. Writes 1/rms per row.
void rmsnorm_forward(const double* x, const double* gain, double* y, double* inv_rms,
                     std::size_t rows, std::size_t cols, double eps);

// Accumulates into dx and dgain.
void rmsnorm_backward(const double* x, const double* gain, const double* inv_rms,
                      const double* dy, double* dx, double* dgain, std::size_t rows,
                      std::size_t cols);

// Multiply-accumulate counter for gemm calls made through `kernels::gemm`.
// Used to cross-check the analytical cost model against executed work.
void reset_mac_counter();
std::uint64_t mac_counter();

namespace reference {

void gemm(bool trans_a, bool trans_b, std::size_t batch, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t stride_a, const double* b,
          std::size_t stride_b, double* c, std::size_t stride_c, bool accumulate);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols,
                  const std::uint8_t* mask = nullptr, std::size_t mask_rows = 1);
void log_softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void rmsnorm_forward(const double* x, const double* gain, double* y, double* inv_rms,
                     std::size_t rows, std::size_t cols, double eps);
void rmsnorm_backward(const double* x, const double* gain, const double* inv_rms,
                      const double* dy, double* dx, double* dgain, std::size_t rows,
                      std::size_t cols);

}  // namespace reference

}  // namespace lazyrec::kernels
