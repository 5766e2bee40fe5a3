#include "sad/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#ifdef __GLIBC__
#include <malloc.h>
#endif
#ifdef _OPENMP
#include <omp.h>
#endif

namespace {
// Keep freed tensor arenas in-process: per-batch tapes allocate hundreds of
// megabytes, and returning them to the OS each time costs more in page
// faults than the buffers themselves.
[[maybe_unused]] const bool allocator_tuned = [] {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    return true;
}();
}  // namespace

namespace sad {

size_t shape_product(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const std::vector<size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(std::vector<size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
    for (size_t d : shape_) {
        if (d == 0) throw std::invalid_argument("Tensor: zero dimension in shape " + shape_to_string(shape_));
    }
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw std::invalid_argument("Tensor: shape " + shape_to_string(shape_) + " does not match data length " +
                                    std::to_string(data_.size()));
    }
    for (double v : data_) {
        if (!std::isfinite(v)) throw std::invalid_argument("Tensor: non-finite entry in input data");
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(std::vector<size_t> shape, double v) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t.data_[i] = v;
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("Tensor::item: tensor of shape " + shape_str() + " is not a scalar");
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

void check_finite(const char* op, const Tensor& t) {
    if (!t.all_finite()) throw std::invalid_argument(std::string(op) + ": non-finite input");
}

namespace kernels {

namespace {
constexpr size_t kParallelCutoff = 1u << 16;  // flops below this run serial
}

void matmul_serial(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + i * k;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt_serial(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
}

void matmul_tn_serial(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    for (size_t p = 0; p < k; ++p) {
        double* crow = c + p * n;
        for (size_t j = 0; j < n; ++j) crow[j] = 0.0;
        for (size_t i = 0; i < m; ++i) {
            const double av = a[i * k + p];
            const double* brow = b + i * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    if (m * k * n < kParallelCutoff) {
        matmul_serial(a, b, c, m, k, n);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
        const size_t i = static_cast<size_t>(ii);
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + i * k;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_acc(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelCutoff)
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
        const size_t i = static_cast<size_t>(ii);
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt_acc(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelCutoff)
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
        const size_t i = static_cast<size_t>(ii);
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

void matmul_tn_acc(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    if (m * k * n < kParallelCutoff) {
        for (size_t i = 0; i < m; ++i) {
            const double* arow = a + i * k;
            const double* brow = b + i * n;
            for (size_t p = 0; p < k; ++p) {
                double* crow = c + p * n;
                const double av = arow[p];
                for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
        return;
    }
#pragma omp parallel
    {
#ifdef _OPENMP
        const size_t nt = static_cast<size_t>(omp_get_num_threads());
        const size_t tid = static_cast<size_t>(omp_get_thread_num());
#else
        const size_t nt = 1, tid = 0;
#endif
        const size_t p_lo = k * tid / nt;
        const size_t p_hi = k * (tid + 1) / nt;
        for (size_t i = 0; i < m; ++i) {
            const double* arow = a + i * k;
            const double* brow = b + i * n;
            for (size_t p = p_lo; p < p_hi; ++p) {
                double* crow = c + p * n;
                const double av = arow[p];
                for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    if (m * k * n < kParallelCutoff) {
        matmul_nt_serial(a, b, c, m, k, n);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
        const size_t i = static_cast<size_t>(ii);
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    // i-outer accumulation keeps both input rows contiguous and the k*n
    // output resident in cache; each thread owns a contiguous p slice, so
    // per-element accumulation order stays i-ascending for any thread count.
    if (m * k * n < kParallelCutoff) {
        for (size_t i = 0; i < k * n; ++i) c[i] = 0.0;
        for (size_t i = 0; i < m; ++i) {
            const double* arow = a + i * k;
            const double* brow = b + i * n;
            for (size_t p = 0; p < k; ++p) {
                double* crow = c + p * n;
                const double av = arow[p];
                for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
        return;
    }
#pragma omp parallel
    {
#ifdef _OPENMP
        const size_t nt = static_cast<size_t>(omp_get_num_threads());
        const size_t tid = static_cast<size_t>(omp_get_thread_num());
#else
        const size_t nt = 1, tid = 0;
#endif
        const size_t p_lo = k * tid / nt;
        const size_t p_hi = k * (tid + 1) / nt;
        for (size_t i = p_lo * n; i < p_hi * n; ++i) c[i] = 0.0;
        for (size_t i = 0; i < m; ++i) {
            const double* arow = a + i * k;
            const double* brow = b + i * n;
            for (size_t p = p_lo; p < p_hi; ++p) {
                double* crow = c + p * n;
                const double av = arow[p];
                for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

}  // namespace kernels

}  // namespace sad
