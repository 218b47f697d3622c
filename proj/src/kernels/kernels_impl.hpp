#pragma once

#include "neptune/kernels.hpp"

namespace neptune::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void gemv_scalar(const double* m, std::size_t rows, std::size_t cols, const double* x,
                 double* y);
void gemv_t_scalar(const double* m, std::size_t rows, std::size_t cols, const double* x,
                   double* y);
void ger_scalar(double alpha, const double* x, std::size_t rows, const double* y,
                std::size_t cols, double* m);

#ifdef NEPTUNE_HAVE_AVX2
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void gemv_avx2(const double* m, std::size_t rows, std::size_t cols, const double* x,
               double* y);
void gemv_t_avx2(const double* m, std::size_t rows, std::size_t cols, const double* x,
                 double* y);
void ger_avx2(double alpha, const double* x, std::size_t rows, const double* y,
              std::size_t cols, double* m);
#endif

}  // namespace neptune::kernels::detail
