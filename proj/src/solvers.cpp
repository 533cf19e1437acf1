#include "semistop/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace semistop {

std::string to_string(SchemeKind kind) {
    return kind == SchemeKind::Landweber ? "landweber" : "sirt";
}

SchemeKind parse_scheme_kind(const std::string& name) {
    if (name == "landweber") return SchemeKind::Landweber;
    if (name == "sirt") return SchemeKind::Sirt;
    throw std::invalid_argument("unknown scheme '" + name + "'");
}

bool IterationScheme::scalar_d() const {
    return !d.empty() && std::all_of(d.begin(), d.end(), [&](double v) { return v == d.front(); });
}

IterationScheme make_landweber(const SparseOperator& a, std::optional<double> omega) {
    double w = 0.0;
    if (omega) {
        if (!(*omega > 0.0)) {
            throw std::invalid_argument("make_landweber: omega must be positive");
        }
        w = *omega;
    } else {
        const auto est = estimate_spectral_norm(a);
        if (est.zero_operator) {
            throw std::invalid_argument("make_landweber: zero operator");
        }
        w = 1.0 / (est.sigma * est.sigma);
    }
    IterationScheme s;
    s.kind = SchemeKind::Landweber;
    s.omega = w;
    s.d.assign(a.cols(), w);
    s.m.assign(a.rows(), 1.0);
    return s;
}

IterationScheme make_sirt(const SparseOperator& a, double omega) {
    if (!(omega > 0.0)) {
        throw std::invalid_argument("make_sirt: omega must be positive");
    }
    IterationScheme s;
    s.kind = SchemeKind::Sirt;
    s.omega = omega;
    const Vector rows = a.row_sums();
    const Vector cols = a.column_sums();
    s.m.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!(rows[i] > 0.0)) {
            throw std::invalid_argument("make_sirt: row " + std::to_string(i) +
                                        " has zero sum; remove zero rows first");
        }
        s.m[i] = 1.0 / rows[i];
    }
    std::size_t zero_cols = 0;
    s.d.resize(cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j] > 0.0) {
            s.d[j] = omega / cols[j];
        } else {
            s.d[j] = 0.0;
            ++zero_cols;
        }
    }
    if (zero_cols > 0) {
        std::cerr << "warning: make_sirt: " << zero_cols
                  << " pixel(s) are not seen by any ray; their D entries are 0\n";
    }
    return s;
}

DivergenceError::DivergenceError(std::size_t k)
    : std::runtime_error("iteration diverged: non-finite values at k = " + std::to_string(k)),
      k_(k) {}

SolverState initial_state(const SparseOperator& a, std::span<const double> b,
                          std::span<const double> x0) {
    if (b.size() != a.rows()) {
        throw DimensionError("initial_state: rhs length must equal rows");
    }
    SolverState s;
    if (x0.empty()) {
        s.x.assign(a.cols(), 0.0);
        s.residual.assign(b.begin(), b.end());
    } else {
        if (x0.size() != a.cols()) {
            throw DimensionError("initial_state: x0 length must equal cols");
        }
        s.x.assign(x0.begin(), x0.end());
        s.residual = a.apply(s.x);
        for (std::size_t i = 0; i < b.size(); ++i) {
            s.residual[i] = b[i] - s.residual[i];
        }
    }
    s.residual_norm = norm2(s.residual);
    return s;
}

void step(const IterationScheme& scheme, const SparseOperator& a, std::span<const double> b,
          SolverState& state) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (b.size() != m || state.x.size() != n || state.residual.size() != m ||
        scheme.d.size() != n || scheme.m.size() != m) {
        throw DimensionError("step: inconsistent dimensions");
    }
    Vector weighted(m);
    for (std::size_t i = 0; i < m; ++i) {
        weighted[i] = scheme.m[i] * state.residual[i];
    }
    Vector back(n);
    a.apply_adjoint(weighted, back);
    for (std::size_t j = 0; j < n; ++j) {
        state.x[j] += scheme.d[j] * back[j];
    }
    a.apply(state.x, state.residual);
    for (std::size_t i = 0; i < m; ++i) {
        state.residual[i] = b[i] - state.residual[i];
    }
    state.residual_norm = norm2(state.residual);
    ++state.k;
    if (!std::isfinite(state.residual_norm)) {
        throw DivergenceError(state.k);
    }
}

RunRecord run(const SparseOperator& a, std::span<const double> b, const IterationScheme& scheme,
              const RunOptions& options, std::span<Observer* const> observers,
              std::span<const double> ground_truth) {
    if (options.max_iters < 1) {
        throw std::invalid_argument("run: max_iters must be >= 1");
    }
    if (!ground_truth.empty() && ground_truth.size() != a.cols()) {
        throw DimensionError("run: ground truth length must equal cols");
    }
    const RunContext ctx{a, b, scheme};
    SolverState state = initial_state(a, b, options.x0);
    for (auto* obs : observers) {
        obs->start(ctx, state);
    }
    RunRecord record;
    record.residual_norms.reserve(options.max_iters);
    Vector diff(a.cols());
    for (std::size_t it = 0; it < options.max_iters; ++it) {
        step(scheme, a, b, state);
        record.residual_norms.push_back(state.residual_norm);
        if (!ground_truth.empty()) {
            for (std::size_t j = 0; j < diff.size(); ++j) {
                diff[j] = state.x[j] - ground_truth[j];
            }
            record.error_norms.push_back(norm2(diff));
        }
        for (auto* obs : observers) {
            obs->observe(ctx, state);
        }
        if (options.early_stop != nullptr && options.early_stop->wants_stop()) {
            break;
        }
    }
    for (auto* obs : observers) {
        obs->finish(record);
    }
    return record;
}

std::vector<Vector> iterates_at(const SparseOperator& a, std::span<const double> b,
                                const IterationScheme& scheme, std::span<const std::size_t> ks,
                                std::span<const double> x0) {
    std::vector<Vector> out(ks.size());
    if (ks.empty()) {
        return out;
    }
    const std::size_t last = *std::max_element(ks.begin(), ks.end());
    SolverState state = initial_state(a, b, x0);
    auto capture = [&] {
        for (std::size_t i = 0; i < ks.size(); ++i) {
            if (ks[i] == state.k) {
                out[i] = state.x;
            }
        }
    };
    capture();
    while (state.k < last) {
        step(scheme, a, b, state);
        capture();
    }
    return out;
}

}  // namespace semistop
