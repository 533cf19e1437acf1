#include "semistop/linops.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Dense>

namespace semistop {

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot: length mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm2_squared(std::span<const double> a) { return dot(a, a); }

double norm2(std::span<const double> a) { return std::sqrt(norm2_squared(a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) {
        throw DimensionError("axpy: length mismatch");
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] += alpha * x[i];
    }
}

Vector subtract(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("subtract: length mismatch");
    }
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return out;
}

bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------

SparseOperator::SparseOperator(std::size_t rows, std::size_t cols,
                               std::vector<std::size_t> row_offsets,
                               std::vector<std::uint32_t> col_indices,
                               std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
    if (row_offsets_.size() != rows_ + 1 || row_offsets_.front() != 0) {
        throw DimensionError("SparseOperator: row_offsets must have m+1 entries starting at 0");
    }
    if (row_offsets_.back() != values_.size() || col_indices_.size() != values_.size()) {
        throw DimensionError("SparseOperator: row_offsets[m] must equal nnz");
    }
    if (!std::is_sorted(row_offsets_.begin(), row_offsets_.end())) {
        throw DimensionError("SparseOperator: row_offsets not monotone");
    }
    if (cols_ > std::numeric_limits<std::uint32_t>::max()) {
        throw DimensionError("SparseOperator: too many columns");
    }
    for (auto c : col_indices_) {
        if (c >= cols_) {
            throw DimensionError("SparseOperator: column index out of range");
        }
    }
    if (!all_finite(values_)) {
        throw std::invalid_argument("SparseOperator: non-finite entry");
    }
}

SparseOperator::SparseOperator(const SparseOperator& other)
    : rows_(other.rows_),
      cols_(other.cols_),
      row_offsets_(other.row_offsets_),
      col_indices_(other.col_indices_),
      values_(other.values_) {}

SparseOperator::SparseOperator(SparseOperator&& other) noexcept
    : rows_(other.rows_),
      cols_(other.cols_),
      row_offsets_(std::move(other.row_offsets_)),
      col_indices_(std::move(other.col_indices_)),
      values_(std::move(other.values_)) {
    other.rows_ = 0;
    other.cols_ = 0;
    other.row_offsets_ = {0};
}

SparseOperator& SparseOperator::operator=(const SparseOperator& other) {
    if (this != &other) {
        rows_ = other.rows_;
        cols_ = other.cols_;
        row_offsets_ = other.row_offsets_;
        col_indices_ = other.col_indices_;
        values_ = other.values_;
        reset_counters();
    }
    return *this;
}

SparseOperator& SparseOperator::operator=(SparseOperator&& other) noexcept {
    if (this != &other) {
        rows_ = other.rows_;
        cols_ = other.cols_;
        row_offsets_ = std::move(other.row_offsets_);
        col_indices_ = std::move(other.col_indices_);
        values_ = std::move(other.values_);
        other.rows_ = 0;
        other.cols_ = 0;
        other.row_offsets_ = {0};
        reset_counters();
    }
    return *this;
}

void SparseOperator::reset_counters() const {
    apply_count_.store(0);
    adjoint_count_.store(0);
}

SparseOperator SparseOperator::from_triplets(std::size_t rows, std::size_t cols,
                                             std::vector<Triplet> triplets) {
    for (const auto& t : triplets) {
        if (t.row >= rows || t.col >= cols) {
            throw DimensionError("from_triplets: index out of range");
        }
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::size_t> offsets(rows + 1, 0);
    std::vector<std::uint32_t> cols_out;
    std::vector<double> vals;
    cols_out.reserve(triplets.size());
    vals.reserve(triplets.size());
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        const auto& t = triplets[i];
        if (i > 0 && triplets[i - 1].row == t.row && triplets[i - 1].col == t.col) {
            vals.back() += t.value;
            continue;
        }
        cols_out.push_back(static_cast<std::uint32_t>(t.col));
        vals.push_back(t.value);
        ++offsets[t.row + 1];
    }
    for (std::size_t r = 0; r < rows; ++r) {
        offsets[r + 1] += offsets[r];
    }
    return SparseOperator(rows, cols, std::move(offsets), std::move(cols_out), std::move(vals));
}

SparseOperator SparseOperator::identity(std::size_t n) {
    Vector ones(n, 1.0);
    return diagonal(ones);
}

SparseOperator SparseOperator::diagonal(std::span<const double> diag) {
    const std::size_t n = diag.size();
    std::vector<std::size_t> offsets(n + 1);
    std::vector<std::uint32_t> cols(n);
    for (std::size_t i = 0; i < n; ++i) {
        offsets[i + 1] = i + 1;
        cols[i] = static_cast<std::uint32_t>(i);
    }
    return SparseOperator(n, n, std::move(offsets), std::move(cols),
                          Vector(diag.begin(), diag.end()));
}

SparseOperator SparseOperator::from_dense(std::size_t rows, std::size_t cols,
                                          std::span<const double> dense) {
    if (dense.size() != rows * cols) {
        throw DimensionError("from_dense: size mismatch");
    }
    std::vector<std::size_t> offsets(rows + 1, 0);
    std::vector<std::uint32_t> idx;
    std::vector<double> vals;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = dense[r * cols + c];
            if (v != 0.0) {
                idx.push_back(static_cast<std::uint32_t>(c));
                vals.push_back(v);
            }
        }
        offsets[r + 1] = vals.size();
    }
    return SparseOperator(rows, cols, std::move(offsets), std::move(idx), std::move(vals));
}

void SparseOperator::apply(std::span<const double> x, std::span<double> y) const {
    if (x.size() != cols_ || y.size() != rows_) {
        throw DimensionError("apply: expected x of length " + std::to_string(cols_) +
                             " and y of length " + std::to_string(rows_));
    }
    apply_count_.fetch_add(1, std::memory_order_relaxed);
    const double* vals = values_.data();
    const std::uint32_t* idx = col_indices_.data();
    for (std::size_t r = 0; r < rows_; ++r) {
        double s = 0.0;
        for (std::size_t p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) {
            s += vals[p] * x[idx[p]];
        }
        y[r] = s;
    }
}

Vector SparseOperator::apply(std::span<const double> x) const {
    Vector y(rows_);
    apply(x, y);
    return y;
}

void SparseOperator::apply_adjoint(std::span<const double> y, std::span<double> x) const {
    if (y.size() != rows_ || x.size() != cols_) {
        throw DimensionError("apply_adjoint: expected y of length " + std::to_string(rows_) +
                             " and x of length " + std::to_string(cols_));
    }
    adjoint_count_.fetch_add(1, std::memory_order_relaxed);
    std::fill(x.begin(), x.end(), 0.0);
    const double* vals = values_.data();
    const std::uint32_t* idx = col_indices_.data();
    for (std::size_t r = 0; r < rows_; ++r) {
        const double yr = y[r];
        if (yr == 0.0) {
            continue;
        }
        for (std::size_t p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) {
            x[idx[p]] += vals[p] * yr;
        }
    }
}

Vector SparseOperator::apply_adjoint(std::span<const double> y) const {
    Vector x(cols_);
    apply_adjoint(y, x);
    return x;
}

Vector SparseOperator::row_sums() const {
    Vector s(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) {
            s[r] += values_[p];
        }
    }
    return s;
}

Vector SparseOperator::column_sums() const {
    Vector s(cols_, 0.0);
    for (std::size_t p = 0; p < values_.size(); ++p) {
        s[col_indices_[p]] += values_[p];
    }
    return s;
}

Vector SparseOperator::to_dense() const {
    Vector d(rows_ * cols_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) {
            d[r * cols_ + col_indices_[p]] += values_[p];
        }
    }
    return d;
}

SparseOperator SparseOperator::scaled(double factor) const {
    Vector v = values_;
    for (auto& x : v) {
        x *= factor;
    }
    return SparseOperator(rows_, cols_, row_offsets_, col_indices_, std::move(v));
}

// ---------------------------------------------------------------------------

RowFilterResult remove_zero_rows(const SparseOperator& a, std::span<const double> b) {
    if (b.size() != a.rows()) {
        throw DimensionError("remove_zero_rows: rhs length must equal rows");
    }
    const auto& off = a.row_offsets();
    const auto& idx = a.col_indices();
    const auto& val = a.values();

    RowFilterResult out;
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        bool nonzero = false;
        for (std::size_t p = off[r]; p < off[r + 1]; ++p) {
            if (val[p] != 0.0) {
                nonzero = true;
                break;
            }
        }
        if (!nonzero) {
            continue;
        }
        for (std::size_t p = off[r]; p < off[r + 1]; ++p) {
            cols.push_back(idx[p]);
            vals.push_back(val[p]);
        }
        offsets.push_back(vals.size());
        out.kept_rows.push_back(r);
        out.rhs.push_back(b[r]);
    }
    out.empty = out.kept_rows.empty();
    out.op = SparseOperator(out.kept_rows.size(), a.cols(), std::move(offsets), std::move(cols),
                            std::move(vals));
    return out;
}

SpectralNormEstimate estimate_spectral_norm(const SparseOperator& a, std::size_t iters,
                                            std::uint64_t seed) {
    if (iters < 1) {
        throw std::invalid_argument("estimate_spectral_norm: iters must be >= 1");
    }
    SpectralNormEstimate est;
    if (a.cols() == 0 || a.rows() == 0) {
        est.zero_operator = true;
        return est;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(a.cols());
    for (auto& x : v) {
        x = normal(rng);
    }
    double nv = norm2(v);
    for (auto& x : v) {
        x /= nv;
    }
    Vector av(a.rows());
    Vector w(a.cols());
    double rq = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        a.apply(v, av);
        a.apply_adjoint(av, w);
        rq = norm2_squared(av);
        est.rayleigh_history.push_back(rq);
        const double nw = norm2(w);
        if (nw == 0.0) {
            break;
        }
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = w[j] / nw;
        }
    }
    if (rq == 0.0) {
        est.zero_operator = true;
        return est;
    }
    est.sigma = std::sqrt(rq);
    return est;
}

Spectrum svd_spectrum(const SparseOperator& a, std::size_t cap) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    const std::size_t k = std::min(m, n);
    if (k > cap) {
        throw OracleTooLarge("svd_spectrum: min(m, n) = " + std::to_string(k) +
                             " exceeds oracle cap " + std::to_string(cap));
    }
    Spectrum s;
    if (k == 0) {
        return s;
    }
    const auto& off = a.row_offsets();
    const auto& idx = a.col_indices();
    const auto& val = a.values();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                                 static_cast<Eigen::Index>(k));
    if (m <= n) {
        // A A^T via dense rows
        Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m),
                                                      static_cast<Eigen::Index>(n));
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t p = off[r]; p < off[r + 1]; ++p) {
                dense(static_cast<Eigen::Index>(r), idx[p]) += val[p];
            }
        }
        gram.selfadjointView<Eigen::Lower>().rankUpdate(dense);
    } else {
        // A^T A as a sum of row outer products
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t p = off[r]; p < off[r + 1]; ++p) {
                for (std::size_t q = off[r]; q < off[r + 1]; ++q) {
                    if (idx[q] <= idx[p]) {
                        gram(idx[p], idx[q]) += val[p] * val[q];
                    }
                }
            }
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) {
        throw std::runtime_error("svd_spectrum: eigenvalue solver failed");
    }
    const auto& ev = eig.eigenvalues();
    s.singular_values.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        s.singular_values[i] = std::sqrt(std::max(0.0, ev(static_cast<Eigen::Index>(i))));
    }
    std::sort(s.singular_values.begin(), s.singular_values.end(), std::greater<>());
    return s;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
T to_little_endian(T v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
}

template <typename T>
void write_le(std::ostream& os, T v) {
    v = to_little_endian(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) {
        throw std::runtime_error("read_matrix_binary: truncated file");
    }
    return to_little_endian(v);
}

std::vector<Triplet> to_triplets(const SparseOperator& a) {
    std::vector<Triplet> t;
    t.reserve(a.nnz());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t p = a.row_offsets()[r]; p < a.row_offsets()[r + 1]; ++p) {
            t.push_back({r, a.col_indices()[p], a.values()[p]});
        }
    }
    return t;
}

}  // namespace

void write_matrix_text(const SparseOperator& a, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    os << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
    os.precision(17);
    for (const auto& t : to_triplets(a)) {
        os << t.row << ' ' << t.col << ' ' << t.value << '\n';
    }
}

SparseOperator read_matrix_text(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::size_t m = 0, n = 0, nnz = 0;
    if (!(is >> m >> n >> nnz)) {
        throw std::runtime_error("read_matrix_text: bad header in " + path.string());
    }
    std::vector<Triplet> t(nnz);
    for (auto& e : t) {
        if (!(is >> e.row >> e.col >> e.value)) {
            throw std::runtime_error("read_matrix_text: truncated triplet list");
        }
    }
    return SparseOperator::from_triplets(m, n, std::move(t));
}

void write_matrix_binary(const SparseOperator& a, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    write_le<std::uint64_t>(os, a.rows());
    write_le<std::uint64_t>(os, a.cols());
    write_le<std::uint64_t>(os, a.nnz());
    for (const auto& t : to_triplets(a)) {
        write_le<std::uint64_t>(os, t.row);
        write_le<std::uint64_t>(os, t.col);
        write_le<double>(os, t.value);
    }
}

SparseOperator read_matrix_binary(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open " + path.string());
    }
    const auto m = read_le<std::uint64_t>(is);
    const auto n = read_le<std::uint64_t>(is);
    const auto nnz = read_le<std::uint64_t>(is);
    std::vector<Triplet> t(nnz);
    for (auto& e : t) {
        e.row = read_le<std::uint64_t>(is);
        e.col = read_le<std::uint64_t>(is);
        e.value = read_le<double>(is);
    }
    return SparseOperator::from_triplets(m, n, std::move(t));
}

}  // namespace semistop
