#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "farcon/tensor.hpp"

// Dense kernels used by the forward/backward passes and by pair matching.
// Each kernel has a serial reference and an OpenMP variant. Both variants
// call the same per-row routine, so their outputs are bit-identical; the
// parallel one only distributes rows across threads.
namespace farcon::kernels {

namespace serial {
// C[n x m] = A[n x k] * B[k x m]
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
// C[n x m] = A[n x k] * B[m x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
// C[k x m] = A[n x k]^T * B[n x m]
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
// For each query row, index of the closest candidate row (squared Euclidean),
// ties to the lowest candidate index. Candidates must be sorted ascending.
void nearest_rows(const double* data, std::size_t dim, std::span<const std::size_t> queries,
                  std::span<const std::size_t> candidates, std::span<std::size_t> out);
}  // namespace serial

namespace parallel {
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
void nearest_rows(const double* data, std::size_t dim, std::span<const std::size_t> queries,
                  std::span<const std::size_t> candidates, std::span<std::size_t> out);
}  // namespace parallel

enum class Backend { serial, parallel };

/// True when built with OpenMP; otherwise the parallel variants run serially.
bool openmp_enabled();
int max_threads();

Backend default_backend();
void set_default_backend(Backend backend);

Tensor matmul(const Tensor& a, const Tensor& b, Backend backend = default_backend());
/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b, Backend backend = default_backend());
/// a^T * b
Tensor matmul_tn(const Tensor& a, const Tensor& b, Backend backend = default_backend());

std::vector<std::size_t> nearest_rows(const Tensor& data, std::span<const std::size_t> queries,
                                      std::span<const std::size_t> candidates,
                                      Backend backend = default_backend());

}  // namespace farcon::kernels
