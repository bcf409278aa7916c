// Built with -ffast-math -fopenmp-simd (see CMakeLists.txt) so the loop maps
// onto glibc's vector math routines; elsewhere it is a plain scalar loop.
// Inputs are checked finite before they get here.
#include <algorithm>
#include <cmath>

#include "fkdiff/kinematics.hpp"

namespace fkdiff::detail {

namespace {

constexpr std::size_t kBlock = 8;

// Fixed trip count: always the vector routine, never a scalar remainder, so a
// value's result does not depend on where it sits in the batch. The AVX2 clone
// reaches the 4-wide routines; which one runs is fixed per machine.
#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__) && defined(__linux__)
__attribute__((target_clones("avx2", "default")))
#endif
[[gnu::noinline]] void block_sincos(const double* x, double* s, double* c) {
#pragma omp simd
    for (std::size_t i = 0; i < kBlock; ++i) {
        s[i] = std::sin(x[i]);
        c[i] = std::cos(x[i]);
    }
}

}  // namespace

void batch_sincos(const double* x, std::size_t n, double* s, double* c) {
    std::size_t i = 0;
    for (; i + kBlock <= n; i += kBlock) block_sincos(x + i, s + i, c + i);
    if (i == n) return;
    double xb[kBlock] = {}, sb[kBlock], cb[kBlock];
    std::copy(x + i, x + n, xb);
    block_sincos(xb, sb, cb);
    std::copy(sb, sb + (n - i), s + i);
    std::copy(cb, cb + (n - i), c + i);
}

}  // namespace fkdiff::detail
