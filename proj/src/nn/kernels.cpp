#include "deepfeat/nn/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <memory>
#include <new>

namespace deepfeat::nn::kernels {

namespace {

#if defined(__AVX512F__)
constexpr std::size_t kVecBytes = 64;
constexpr std::size_t kMr = 12;
#elif defined(__AVX__)
constexpr std::size_t kVecBytes = 32;
constexpr std::size_t kMr = 6;
#else
constexpr std::size_t kVecBytes = 16;
constexpr std::size_t kMr = 4;
#endif

constexpr std::size_t kKc = 256;
constexpr std::size_t kNc = 2048;

template <typename T>
struct VecOf;
template <>
struct VecOf<float> {
  typedef float type __attribute__((vector_size(kVecBytes)));
};
template <>
struct VecOf<double> {
  typedef double type __attribute__((vector_size(kVecBytes)));
};

template <typename T>
struct Geometry {
  using Vec = typename VecOf<T>::type;
  static constexpr std::size_t lanes = kVecBytes / sizeof(T);
  static constexpr std::size_t nr = 2 * lanes;
  static constexpr std::size_t mr = kMr;
};

/// Reusable 64-byte aligned scratch, one per calling thread.
template <typename T>
class Scratch {
 public:
  T* get(std::size_t n) {
    if (n > cap_) {
      buf_.reset(static_cast<T*>(::operator new[](n * sizeof(T), std::align_val_t(64))));
      cap_ = n;
    }
    return buf_.get();
  }

 private:
  struct Free {
    void operator()(T* p) const noexcept { ::operator delete[](p, std::align_val_t(64)); }
  };
  std::unique_ptr<T, Free> buf_;
  std::size_t cap_ = 0;
};

template <typename T>
inline T load_op(const T* x, std::size_t ld, Trans t, std::size_t row, std::size_t col) {
  return t == Trans::No ? x[row * ld + col] : x[col * ld + row];
}

// Packs op(B)[pc:pc+kc, jc:jc+nc] into nr-wide slivers, zero padded.
template <typename T>
void pack_b(Trans tb, const T* b, std::size_t ldb, std::size_t pc, std::size_t kc, std::size_t jc, std::size_t nc,
            T* out) {
  constexpr std::size_t nr = Geometry<T>::nr;
  const std::size_t blocks = (nc + nr - 1) / nr;
#pragma omp parallel for schedule(static)
  for (std::size_t jb = 0; jb < blocks; ++jb) {
    T* dst = out + jb * kc * nr;
    const std::size_t j0 = jc + jb * nr;
    const std::size_t w = std::min(nr, jc + nc - j0);
    if (tb == Trans::No) {
      for (std::size_t p = 0; p < kc; ++p) {
        const T* src = b + (pc + p) * ldb + j0;
        T* d = dst + p * nr;
        std::size_t jj = 0;
        for (; jj < w; ++jj) d[jj] = src[jj];
        for (; jj < nr; ++jj) d[jj] = T{0};
      }
    } else {
      for (std::size_t jj = 0; jj < nr; ++jj) {
        if (jj < w) {
          const T* src = b + (j0 + jj) * ldb + pc;
          for (std::size_t p = 0; p < kc; ++p) dst[p * nr + jj] = src[p];
        } else {
          for (std::size_t p = 0; p < kc; ++p) dst[p * nr + jj] = T{0};
        }
      }
    }
  }
}

// Packs op(A)[0:m, pc:pc+kc] into mr-tall slivers, zero padded.
template <typename T>
void pack_a(Trans ta, const T* a, std::size_t lda, std::size_t m, std::size_t pc, std::size_t kc, T* out) {
  constexpr std::size_t mr = Geometry<T>::mr;
  const std::size_t blocks = (m + mr - 1) / mr;
#pragma omp parallel for schedule(static)
  for (std::size_t ib = 0; ib < blocks; ++ib) {
    T* dst = out + ib * kc * mr;
    const std::size_t i0 = ib * mr;
    const std::size_t h = std::min(mr, m - i0);
    if (ta == Trans::No) {
      for (std::size_t ii = 0; ii < mr; ++ii) {
        if (ii < h) {
          const T* src = a + (i0 + ii) * lda + pc;
          for (std::size_t p = 0; p < kc; ++p) dst[p * mr + ii] = src[p];
        } else {
          for (std::size_t p = 0; p < kc; ++p) dst[p * mr + ii] = T{0};
        }
      }
    } else {
      for (std::size_t p = 0; p < kc; ++p) {
        const T* src = a + (pc + p) * lda + i0;
        T* d = dst + p * mr;
        std::size_t ii = 0;
        for (; ii < h; ++ii) d[ii] = src[ii];
        for (; ii < mr; ++ii) d[ii] = T{0};
      }
    }
  }
}

template <typename T>
inline void micro_kernel(std::size_t kc, const T* __restrict ap, const T* __restrict bp, T* __restrict tile) {
  using G = Geometry<T>;
  using Vec = typename G::Vec;
  constexpr std::size_t mr = G::mr;
  constexpr std::size_t lanes = G::lanes;

  Vec acc0[mr];
  Vec acc1[mr];
#pragma GCC unroll 16
  for (std::size_t i = 0; i < mr; ++i) {
    acc0[i] = Vec{};
    acc1[i] = Vec{};
  }
  for (std::size_t p = 0; p < kc; ++p) {
    Vec b0;
    Vec b1;
    std::memcpy(&b0, bp, sizeof(Vec));
    std::memcpy(&b1, bp + lanes, sizeof(Vec));
#pragma GCC unroll 16
    for (std::size_t i = 0; i < mr; ++i) {
      const T av = ap[i];
      acc0[i] += b0 * av;
      acc1[i] += b1 * av;
    }
    ap += mr;
    bp += 2 * lanes;
  }
#pragma GCC unroll 16
  for (std::size_t i = 0; i < mr; ++i) {
    std::memcpy(tile + i * G::nr, &acc0[i], sizeof(Vec));
    std::memcpy(tile + i * G::nr + lanes, &acc1[i], sizeof(Vec));
  }
}

template <typename T>
void scale_c(std::size_t m, std::size_t n, T beta, T* c, std::size_t ldc) {
  if (beta == T{1}) return;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (beta == T{0}) {
      std::fill(row, row + n, T{0});
    } else {
      for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
    }
  }
}

}  // namespace

template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  using G = Geometry<T>;
  constexpr std::size_t mr = G::mr;
  constexpr std::size_t nr = G::nr;
  if (m == 0 || n == 0) return;
  scale_c(m, n, beta, c, ldc);
  if (k == 0 || alpha == T{0}) return;

  thread_local Scratch<T> a_scratch;
  thread_local Scratch<T> b_scratch;
  const std::size_t m_blocks = (m + mr - 1) / mr;
  T* ap = a_scratch.get(m_blocks * mr * kKc);
  T* bp = b_scratch.get(((kNc + nr - 1) / nr) * nr * kKc);

  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = std::min(kNc, n - jc);
    const std::size_t n_blocks = (nc + nr - 1) / nr;
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      pack_b(trans_b, b, ldb, pc, kc, jc, nc, bp);
      pack_a(trans_a, a, lda, m, pc, kc, ap);

#pragma omp parallel for collapse(2) schedule(static)
      for (std::size_t jb = 0; jb < n_blocks; ++jb) {
        for (std::size_t ib = 0; ib < m_blocks; ++ib) {
          alignas(64) T tile[mr * nr];
          micro_kernel<T>(kc, ap + ib * kc * mr, bp + jb * kc * nr, tile);
          const std::size_t i0 = ib * mr;
          const std::size_t j0 = jc + jb * nr;
          const std::size_t h = std::min(mr, m - i0);
          const std::size_t w = std::min(nr, jc + nc - j0);
          for (std::size_t ii = 0; ii < h; ++ii) {
            T* crow = c + (i0 + ii) * ldc + j0;
            const T* trow = tile + ii * nr;
            for (std::size_t jj = 0; jj < w; ++jj) crow[jj] += alpha * trow[jj];
          }
        }
      }
    }
  }
}

namespace reference {

template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += load_op(a, lda, trans_a, i, p) * load_op(b, ldb, trans_b, p, j);
      T& out = c[i * ldc + j];
      out = beta == T{0} ? alpha * acc : alpha * acc + beta * out;
    }
  }
}

template void gemm<float>(Trans, Trans, std::size_t, std::size_t, std::size_t, float, const float*, std::size_t,
                          const float*, std::size_t, float, float*, std::size_t);
template void gemm<double>(Trans, Trans, std::size_t, std::size_t, std::size_t, double, const double*, std::size_t,
                           const double*, std::size_t, double, double*, std::size_t);

}  // namespace reference

template void gemm<float>(Trans, Trans, std::size_t, std::size_t, std::size_t, float, const float*, std::size_t,
                          const float*, std::size_t, float, float*, std::size_t);
template void gemm<double>(Trans, Trans, std::size_t, std::size_t, std::size_t, double, const double*, std::size_t,
                           const double*, std::size_t, double, double*, std::size_t);

}  // namespace deepfeat::nn::kernels
