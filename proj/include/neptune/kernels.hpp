#pragma once

// Dense double-precision inner loops used by every contraction in the library.
//
// Each kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2+FMA variant. The variant is chosen once at startup from CPUID and
// can be overridden with kernels::select(). All matrices are row-major.

#include <cstddef>
#include <string_view>

namespace neptune::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  const char* name;

  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = M x, M is rows x cols. Each y[r] is computed by dot() on row r alone,
  // so identical rows always yield bitwise-identical outputs.
  void (*gemv)(const double* m, std::size_t rows, std::size_t cols, const double* x,
               double* y);
  // y = M^T x, M is rows x cols, y has cols entries.
  void (*gemv_t)(const double* m, std::size_t rows, std::size_t cols, const double* x,
                 double* y);
  // M += alpha * x y^T, M is rows x cols.
  void (*ger)(double alpha, const double* x, std::size_t rows, const double* y,
              std::size_t cols, double* m);
};

const KernelTable& scalar_table();

/// True when the variant was compiled in and the running CPU supports it.
bool supported(Isa isa);

/// Throws ContractViolation if the variant is unsupported.
const KernelTable& table(Isa isa);

/// The table used by the library. Defaults to the best supported variant.
const KernelTable& active();

/// Switch the library-wide variant. Not meant to be called while other
/// threads are inside library calls.
void select(Isa isa);

Isa best_supported();
std::string_view to_string(Isa isa);
Isa parse_isa(std::string_view name);

}  // namespace neptune::kernels
