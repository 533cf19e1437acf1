#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "semistop/linops.hpp"
#include "semistop/record.hpp"
#include "semistop/solvers.hpp"

namespace semistop {

/// Closed form for Landweber: t_k = sum_i 1 - (1 - omega sigma_i^2)^k.
/// Requires 0 < omega < 2 / sigma_1^2.
double exact_trace_landweber(const Spectrum& spectrum, double omega, std::size_t k);

/// Supplies t_k for the iteration just observed.
class TraceSource {
public:
    virtual ~TraceSource() = default;
    virtual double current_trace() const = 0;
    virtual const TraceTrack& track() const = 0;
};

class UnsupportedScheme : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// One probe's shadow iteration.
///
/// Girard: probe w (length m), xi solves A xi = w from xi = 0, z = A^T w.
/// Santos-De Pierro: probe w (length n), xi starts at w on A xi = 0.
struct ShadowState {
    TraceMethod method = TraceMethod::Girard;
    Vector probe;
    Vector rhs;
    SolverState xi;
    Vector z;
};

/// Standard normal probe for probe index `index` under `seed`.
Vector make_probe(std::size_t length, std::uint64_t seed, std::size_t index);

ShadowState make_girard_shadow(const SparseOperator& a, Vector probe);
ShadowState make_santos_depierro_shadow(const IterationScheme& scheme, const SparseOperator& a,
                                        Vector probe);

/// Advances the shadow one step with the main scheme and returns
/// z^T xi^(k+1).
double girard_observe(ShadowState& shadow, const IterationScheme& scheme, const SparseOperator& a);

/// Advances the shadow one step on the zero right-hand side and returns
/// n - w^T xi^(k+1). Only valid for schemes with scalar D.
double santos_depierro_observe(ShadowState& shadow, const IterationScheme& scheme,
                               const SparseOperator& a);

/// Elementwise mean or median over probes, one value per iteration.
Vector aggregate(const TraceTrack& track);
double aggregate_samples(std::span<const double> samples, Aggregate how);

class ExactTraceObserver final : public Observer, public TraceSource {
public:
    ExactTraceObserver(Spectrum spectrum, double omega);

    void start(const RunContext& ctx, const SolverState& initial) override;
    void observe(const RunContext& ctx, const SolverState& state) override;
    void finish(RunRecord& record) const override;
    double current_trace() const override;
    const TraceTrack& track() const override { return track_; }

private:
    Spectrum spectrum_;
    double omega_;
    TraceTrack track_;
};

/// Monte Carlo trace estimate via shadow iterations, `samples` probes.
class ShadowTraceEstimator final : public Observer, public TraceSource {
public:
    ShadowTraceEstimator(TraceMethod method, std::size_t samples, std::uint64_t seed,
                         Aggregate how = Aggregate::Mean);

    void start(const RunContext& ctx, const SolverState& initial) override;
    void observe(const RunContext& ctx, const SolverState& state) override;
    void finish(RunRecord& record) const override;
    double current_trace() const override;
    const TraceTrack& track() const override { return track_; }
    const std::vector<ShadowState>& shadows() const { return shadows_; }

private:
    std::uint64_t seed_;
    std::vector<ShadowState> shadows_;
    TraceTrack track_;
};

}  // namespace semistop
