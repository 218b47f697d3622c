#include <atomic>
#include <string>

#include "kernels_impl.hpp"
#include "neptune/errors.hpp"

namespace neptune::kernels {

namespace {

constexpr KernelTable kScalar{Isa::scalar,          "scalar",
                              detail::dot_scalar,   detail::axpy_scalar,
                              detail::gemv_scalar,  detail::gemv_t_scalar,
                              detail::ger_scalar};

#ifdef NEPTUNE_HAVE_AVX2
constexpr KernelTable kAvx2{Isa::avx2,        "avx2",           detail::dot_avx2,
                            detail::axpy_avx2, detail::gemv_avx2, detail::gemv_t_avx2,
                            detail::ger_avx2};
#endif

bool cpu_has_avx2() {
#if defined(NEPTUNE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> ptr{&table(best_supported())};
  return ptr;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

bool supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2: {
      static const bool ok = cpu_has_avx2();
      return ok;
    }
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!supported(isa)) {
    throw ContractViolation("kernel variant '" + std::string(to_string(isa)) +
                            "' is not available on this CPU/build");
  }
#ifdef NEPTUNE_HAVE_AVX2
  if (isa == Isa::avx2) return kAvx2;
#endif
  return kScalar;
}

Isa best_supported() { return supported(Isa::avx2) ? Isa::avx2 : Isa::scalar; }

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) { current().store(&table(isa), std::memory_order_release); }

std::string_view to_string(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "auto") return best_supported();
  throw ContractViolation("unknown kernel variant '" + std::string(name) + "'");
}

}  // namespace neptune::kernels
