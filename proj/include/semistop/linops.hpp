#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace semistop {

using Vector = std::vector<double>;

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double norm2_squared(std::span<const double> a);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
Vector subtract(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> a);

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Compressed sparse row operator. The adjoint is applied by a transposed
/// traversal of the same storage.
///
/// Immutable after construction; apply/apply_adjoint are safe to call
/// concurrently. Application counters are kept for cost accounting.
class SparseOperator {
public:
    SparseOperator() = default;
    SparseOperator(std::size_t rows, std::size_t cols,
                   std::vector<std::size_t> row_offsets,
                   std::vector<std::uint32_t> col_indices,
                   std::vector<double> values);

    SparseOperator(const SparseOperator& other);
    SparseOperator(SparseOperator&& other) noexcept;
    SparseOperator& operator=(const SparseOperator& other);
    SparseOperator& operator=(SparseOperator&& other) noexcept;

    /// Duplicate (row, col) entries are summed.
    static SparseOperator from_triplets(std::size_t rows, std::size_t cols,
                                        std::vector<Triplet> triplets);
    static SparseOperator identity(std::size_t n);
    static SparseOperator diagonal(std::span<const double> diag);
    /// Row-major dense input, zeros dropped.
    static SparseOperator from_dense(std::size_t rows, std::size_t cols,
                                     std::span<const double> dense);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return values_.size(); }
    const std::vector<std::size_t>& row_offsets() const { return row_offsets_; }
    const std::vector<std::uint32_t>& col_indices() const { return col_indices_; }
    const std::vector<double>& values() const { return values_; }

    void apply(std::span<const double> x, std::span<double> y) const;
    Vector apply(std::span<const double> x) const;
    void apply_adjoint(std::span<const double> y, std::span<double> x) const;
    Vector apply_adjoint(std::span<const double> y) const;

    Vector row_sums() const;
    Vector column_sums() const;
    /// Row-major dense copy; only meant for small oracle problems.
    Vector to_dense() const;
    SparseOperator scaled(double factor) const;

    std::uint64_t apply_count() const { return apply_count_.load(); }
    std::uint64_t adjoint_count() const { return adjoint_count_.load(); }
    void reset_counters() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_offsets_{0};
    std::vector<std::uint32_t> col_indices_;
    std::vector<double> values_;
    mutable std::atomic<std::uint64_t> apply_count_{0};
    mutable std::atomic<std::uint64_t> adjoint_count_{0};
};

struct RowFilterResult {
    SparseOperator op;
    Vector rhs;
    /// Indices (into the original rows) of the surviving rows, ascending.
    std::vector<std::size_t> kept_rows;
    /// Set when every row was zero.
    bool empty = false;
};

RowFilterResult remove_zero_rows(const SparseOperator& a, std::span<const double> b);

struct SpectralNormEstimate {
    double sigma = 0.0;
    bool zero_operator = false;
    /// Rayleigh quotients v^T A^T A v of the power iterates, one per iteration.
    Vector rayleigh_history;
};

inline constexpr std::uint64_t kDefaultPowerSeed = 0x5eed5eedULL;

/// Power iteration on A^T A from a seeded Gaussian start vector.
SpectralNormEstimate estimate_spectral_norm(const SparseOperator& a,
                                            std::size_t iters = 100,
                                            std::uint64_t seed = kDefaultPowerSeed);

inline constexpr std::size_t kDefaultOracleCap = 2000;

class OracleTooLarge : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Spectrum {
    /// Descending, nonnegative.
    Vector singular_values;
};

/// Singular values of A from the eigenvalues of the smaller Gram matrix
/// (A A^T or A^T A). Throws OracleTooLarge when min(m, n) > cap.
Spectrum svd_spectrum(const SparseOperator& a, std::size_t cap = kDefaultOracleCap);

// Matrix dump format: header line "m n nnz" then "i j value" triplets
// (0-based). The binary variant stores u64 m, n, nnz followed by nnz records
// of (u64 i, u64 j, f64 value), all little-endian.
void write_matrix_text(const SparseOperator& a, const std::filesystem::path& path);
SparseOperator read_matrix_text(const std::filesystem::path& path);
void write_matrix_binary(const SparseOperator& a, const std::filesystem::path& path);
SparseOperator read_matrix_binary(const std::filesystem::path& path);

}  // namespace semistop
