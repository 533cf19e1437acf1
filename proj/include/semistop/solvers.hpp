#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semistop/linops.hpp"
#include "semistop/record.hpp"

namespace semistop {

enum class SchemeKind { Landweber, Sirt };

std::string to_string(SchemeKind kind);
SchemeKind parse_scheme_kind(const std::string& name);

/// x <- x + D A^T M (b - A x), with D and M stored as diagonals. The
/// relaxation omega is folded into D.
struct IterationScheme {
    SchemeKind kind = SchemeKind::Landweber;
    double omega = 1.0;
    Vector d;
    Vector m;

    /// True when D is a constant multiple of the identity.
    bool scalar_d() const;
};

/// omega = nullopt selects 1 / sigma_1^2 from power iteration.
IterationScheme make_landweber(const SparseOperator& a, std::optional<double> omega = std::nullopt);

/// D_jj = omega / colsum_j, M_ii = 1 / rowsum_i. Zero columns get D_jj = 0;
/// zero rows are rejected (remove them first).
IterationScheme make_sirt(const SparseOperator& a, double omega = 1.0);

struct SolverState {
    Vector x;
    std::size_t k = 0;
    /// b - A x, kept current by step().
    Vector residual;
    double residual_norm = 0.0;
};

class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(std::size_t k);
    std::size_t iteration() const { return k_; }

private:
    std::size_t k_;
};

/// x0 empty means the zero vector (no operator application needed).
SolverState initial_state(const SparseOperator& a, std::span<const double> b,
                          std::span<const double> x0 = {});

/// One sweep: one apply_adjoint for the update and one apply to refresh the
/// residual.
void step(const IterationScheme& scheme, const SparseOperator& a, std::span<const double> b,
          SolverState& state);

struct RunContext {
    const SparseOperator& a;
    std::span<const double> b;
    const IterationScheme& scheme;
};

/// Called synchronously after every step, in registration order.
class Observer {
public:
    virtual ~Observer() = default;
    virtual void start(const RunContext& /*ctx*/, const SolverState& /*initial*/) {}
    virtual void observe(const RunContext& ctx, const SolverState& state) = 0;
    /// Copies series and decisions into the record after the last step.
    virtual void finish(RunRecord& /*record*/) const {}
    /// Online decision for early stopping.
    virtual bool wants_stop() const { return false; }
};

struct RunOptions {
    std::size_t max_iters = 100;
    Vector x0;
    /// When set, the run ends as soon as this observer reports wants_stop().
    const Observer* early_stop = nullptr;
};

RunRecord run(const SparseOperator& a, std::span<const double> b, const IterationScheme& scheme,
              const RunOptions& options, std::span<Observer* const> observers = {},
              std::span<const double> ground_truth = {});

/// Re-runs the (deterministic) iteration and returns x^(k) for each
/// requested k, in the order given.
std::vector<Vector> iterates_at(const SparseOperator& a, std::span<const double> b,
                                const IterationScheme& scheme, std::span<const std::size_t> ks,
                                std::span<const double> x0 = {});

}  // namespace semistop
