#include "farcon/kernels.hpp"

#include <atomic>
#include <limits>

#include "farcon/errors.hpp"

#ifdef FARCON_HAVE_OPENMP
#include <omp.h>
#endif

namespace farcon::kernels {

namespace {

inline void row_nn(const double* a_row, const double* b, double* c_row, std::size_t k, std::size_t m) {
  for (std::size_t j = 0; j < m; ++j) c_row[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a_row[p];
    const double* b_row = b + p * m;
    for (std::size_t j = 0; j < m; ++j) c_row[j] += av * b_row[j];
  }
}

inline void row_nt(const double* a_row, const double* b, double* c_row, std::size_t k, std::size_t m) {
  for (std::size_t j = 0; j < m; ++j) {
    const double* b_row = b + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
    c_row[j] = acc;
  }
}

// Output row p of A^T B: sum over input rows r of A[r][p] * B[r][:].
inline void row_tn(const double* a, const double* b, double* c_row, std::size_t p, std::size_t n,
                   std::size_t k, std::size_t m) {
  for (std::size_t j = 0; j < m; ++j) c_row[j] = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double av = a[r * k + p];
    if (av == 0.0) continue;
    const double* b_row = b + r * m;
    for (std::size_t j = 0; j < m; ++j) c_row[j] += av * b_row[j];
  }
}

inline std::size_t nearest_one(const double* data, std::size_t dim, std::size_t query,
                               std::span<const std::size_t> candidates) {
  const double* q = data + query * dim;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_index = candidates.front();
  for (std::size_t c : candidates) {
    const double* x = data + c * dim;
    double d = 0.0;
    std::size_t p = 0;
    // Partial sums only grow, so a candidate can be abandoned once it passes the best.
    for (; p < dim; ++p) {
      const double diff = q[p] - x[p];
      d += diff * diff;
      if (d >= best) break;
    }
    if (p == dim && d < best) {
      best = d;
      best_index = c;
    }
  }
  return best_index;
}

std::atomic<Backend> g_backend{Backend::parallel};

}  // namespace

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) row_nn(a + i * k, b, c + i * m, k, m);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) row_nt(a + i * k, b, c + i * m, k, m);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t p = 0; p < k; ++p) row_tn(a, b, c + p * m, p, n, k, m);
}

void nearest_rows(const double* data, std::size_t dim, std::span<const std::size_t> queries,
                  std::span<const std::size_t> candidates, std::span<std::size_t> out) {
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = nearest_one(data, dim, queries[i], candidates);
}

}  // namespace serial

namespace parallel {

void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m > 32768)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    row_nn(a + r * k, b, c + r * m, k, m);
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m > 32768)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    row_nt(a + r * k, b, c + r * m, k, m);
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  const auto outs = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (n * k * m > 32768)
  for (std::ptrdiff_t i = 0; i < outs; ++i) {
    const auto p = static_cast<std::size_t>(i);
    row_tn(a, b, c + p * m, p, n, k, m);
  }
}

void nearest_rows(const double* data, std::size_t dim, std::span<const std::size_t> queries,
                  std::span<const std::size_t> candidates, std::span<std::size_t> out) {
  const auto count = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto q = static_cast<std::size_t>(i);
    out[q] = nearest_one(data, dim, queries[q], candidates);
  }
}

}  // namespace parallel

bool openmp_enabled() {
#ifdef FARCON_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef FARCON_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

Backend default_backend() { return g_backend.load(); }
void set_default_backend(Backend backend) { g_backend.store(backend); }

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + ": expected a matrix, got " + t.shape_string());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, Backend backend) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + a.shape_string() + " x " + b.shape_string());
  }
  Tensor c = Tensor::zeros(a.rows(), b.cols());
  if (backend == Backend::serial) {
    serial::gemm_nn(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
  } else {
    parallel::gemm_nn(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b, Backend backend) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + a.shape_string() + " x " + b.shape_string() + "^T");
  }
  Tensor c = Tensor::zeros(a.rows(), b.rows());
  if (backend == Backend::serial) {
    serial::gemm_nt(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.rows());
  } else {
    parallel::gemm_nt(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.rows());
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b, Backend backend) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: " + a.shape_string() + "^T x " + b.shape_string());
  }
  Tensor c = Tensor::zeros(a.cols(), b.cols());
  if (backend == Backend::serial) {
    serial::gemm_tn(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
  } else {
    parallel::gemm_tn(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
  }
  return c;
}

std::vector<std::size_t> nearest_rows(const Tensor& data, std::span<const std::size_t> queries,
                                      std::span<const std::size_t> candidates, Backend backend) {
  if (candidates.empty()) throw DimensionError("nearest_rows: no candidates");
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i] <= candidates[i - 1]) throw DimensionError("nearest_rows: candidates must be sorted");
  }
  std::vector<std::size_t> out(queries.size());
  const std::size_t dim = data.cols();
  if (backend == Backend::serial) {
    serial::nearest_rows(data.data().data(), dim, queries, candidates, out);
  } else {
    parallel::nearest_rows(data.data().data(), dim, queries, candidates, out);
  }
  return out;
}

}  // namespace farcon::kernels
