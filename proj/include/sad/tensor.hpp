#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sad {

// Dense row-major tensor of 64-bit floats. Flat storage, no views: reshapes
// and slices copy. Immutable by convention once an op has produced it.
class Tensor {
public:
    Tensor() = default;

    // Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<size_t> shape);

    // Takes ownership of data; rejects size mismatch and non-finite entries.
    Tensor(std::vector<size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor full(std::vector<size_t> shape, double v);

    const std::vector<size_t>& shape() const { return shape_; }
    size_t size() const { return data_.size(); }
    size_t rank() const { return shape_.size(); }

    // 2-D accessors; a vector counts as a single row.
    size_t rows() const { return shape_.size() >= 2 ? shape_[0] : 1; }
    size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double item() const;  // scalar value; rejects size != 1

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_str() const;  // e.g. "[2,3]"

private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
};

size_t shape_product(const std::vector<size_t>& shape);
std::string shape_to_string(const std::vector<size_t>& shape);

// Throws std::invalid_argument naming the offending op and both shapes.
void check_same_shape(const char* op, const Tensor& a, const Tensor& b);
void check_finite(const char* op, const Tensor& t);

namespace kernels {

// Reference kernels: straight triple loops, single-threaded. Kept as the
// ground truth the production kernels are tested against.
void matmul_serial(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);
void matmul_nt_serial(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);
void matmul_tn_serial(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);

// Production kernels. OpenMP-parallel over output rows above a size cutoff;
// each output element is accumulated in the same order as the serial
// reference, so results are bitwise identical for any thread count.
void matmul(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);
// c[m  x n] = a[m x k] . b[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);
// c[k x n] = a[m x k]^T . b[m x n]
void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);

// Accumulating variants (c += product) used by gradient accumulation.
void matmul_acc(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);
void matmul_nt_acc(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);
void matmul_tn_acc(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);

}  // namespace kernels

}  // namespace sad
