#include "semistop/trace.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace semistop {

double exact_trace_landweber(const Spectrum& spectrum, double omega, std::size_t k) {
    const auto& sv = spectrum.singular_values;
    const double s1 = sv.empty() ? 0.0 : sv.front();
    if (!(omega > 0.0) || (s1 > 0.0 && !(omega < 2.0 / (s1 * s1)))) {
        throw std::invalid_argument("exact_trace_landweber: omega outside (0, 2/sigma_1^2)");
    }
    double t = 0.0;
    const auto kk = static_cast<double>(k);
    for (double s : sv) {
        const double factor = 1.0 - omega * s * s;
        t += 1.0 - std::pow(factor, kk);
    }
    return t;
}

Vector make_probe(std::size_t length, std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector w(length);
    for (auto& v : w) {
        v = normal(rng);
    }
    return w;
}

ShadowState make_girard_shadow(const SparseOperator& a, Vector probe) {
    if (probe.size() != a.rows()) {
        throw DimensionError("girard shadow: probe must have length m");
    }
    ShadowState s;
    s.method = TraceMethod::Girard;
    s.z = a.apply_adjoint(probe);
    s.rhs = probe;
    s.xi = initial_state(a, s.rhs);
    s.probe = std::move(probe);
    return s;
}

ShadowState make_santos_depierro_shadow(const IterationScheme& scheme, const SparseOperator& a,
                                        Vector probe) {
    if (!scheme.scalar_d()) {
        throw UnsupportedScheme(
            "santos-depierro trace estimator needs a scheme with D = omega I (not " +
            to_string(scheme.kind) + ")");
    }
    if (probe.size() != a.cols()) {
        throw DimensionError("santos-depierro shadow: probe must have length n");
    }
    ShadowState s;
    s.method = TraceMethod::SantosDePierro;
    s.rhs.assign(a.rows(), 0.0);
    s.xi = initial_state(a, s.rhs, probe);
    s.probe = std::move(probe);
    return s;
}

double girard_observe(ShadowState& shadow, const IterationScheme& scheme, const SparseOperator& a) {
    if (shadow.method != TraceMethod::Girard) {
        throw std::invalid_argument("girard_observe: shadow was built for another estimator");
    }
    step(scheme, a, shadow.rhs, shadow.xi);
    return dot(shadow.z, shadow.xi.x);
}

double santos_depierro_observe(ShadowState& shadow, const IterationScheme& scheme,
                               const SparseOperator& a) {
    if (shadow.method != TraceMethod::SantosDePierro) {
        throw std::invalid_argument("santos_depierro_observe: shadow was built for another estimator");
    }
    if (!scheme.scalar_d()) {
        throw UnsupportedScheme("santos-depierro trace estimator needs a scheme with D = omega I");
    }
    step(scheme, a, shadow.rhs, shadow.xi);
    return static_cast<double>(a.cols()) - dot(shadow.probe, shadow.xi.x);
}

double aggregate_samples(std::span<const double> samples, Aggregate how) {
    if (samples.empty()) {
        throw std::invalid_argument("aggregate: no samples");
    }
    if (how == Aggregate::Mean) {
        double s = 0.0;
        for (double v : samples) {
            s += v;
        }
        return s / static_cast<double>(samples.size());
    }
    Vector v(samples.begin(), samples.end());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Vector aggregate(const TraceTrack& track) {
    if (track.per_sample.empty()) {
        return track.values;
    }
    Vector out;
    out.reserve(track.per_sample.size());
    for (const auto& row : track.per_sample) {
        out.push_back(aggregate_samples(row, track.aggregate));
    }
    return out;
}

// ---------------------------------------------------------------------------

ExactTraceObserver::ExactTraceObserver(Spectrum spectrum, double omega)
    : spectrum_(std::move(spectrum)), omega_(omega) {
    track_.method = TraceMethod::Exact;
    // validates omega against the spectrum
    exact_trace_landweber(spectrum_, omega_, 0);
}

void ExactTraceObserver::start(const RunContext& ctx, const SolverState&) {
    if (ctx.scheme.kind != SchemeKind::Landweber) {
        throw UnsupportedScheme("exact trace oracle is only available for Landweber");
    }
    if (std::abs(ctx.scheme.omega - omega_) > 1e-15 * omega_) {
        throw std::invalid_argument("exact trace oracle: omega differs from the scheme's");
    }
    track_.values.clear();
}

void ExactTraceObserver::observe(const RunContext&, const SolverState& state) {
    track_.values.push_back(exact_trace_landweber(spectrum_, omega_, state.k));
}

void ExactTraceObserver::finish(RunRecord& record) const { record.trace_tracks.push_back(track_); }

double ExactTraceObserver::current_trace() const {
    return track_.values.empty() ? 0.0 : track_.values.back();
}

ShadowTraceEstimator::ShadowTraceEstimator(TraceMethod method, std::size_t samples,
                                           std::uint64_t seed, Aggregate how)
    : seed_(seed) {
    if (method == TraceMethod::Exact) {
        throw std::invalid_argument("ShadowTraceEstimator: use ExactTraceObserver for the oracle");
    }
    if (samples < 1) {
        throw std::invalid_argument("ShadowTraceEstimator: samples must be >= 1");
    }
    track_.method = method;
    track_.samples = samples;
    track_.aggregate = how;
}

void ShadowTraceEstimator::start(const RunContext& ctx, const SolverState&) {
    shadows_.clear();
    track_.values.clear();
    track_.per_sample.clear();
    for (std::size_t p = 0; p < track_.samples; ++p) {
        if (track_.method == TraceMethod::Girard) {
            shadows_.push_back(make_girard_shadow(ctx.a, make_probe(ctx.a.rows(), seed_, p)));
        } else {
            shadows_.push_back(
                make_santos_depierro_shadow(ctx.scheme, ctx.a, make_probe(ctx.a.cols(), seed_, p)));
        }
    }
}

void ShadowTraceEstimator::observe(const RunContext& ctx, const SolverState&) {
    Vector row(shadows_.size());
    for (std::size_t p = 0; p < shadows_.size(); ++p) {
        row[p] = track_.method == TraceMethod::Girard
                     ? girard_observe(shadows_[p], ctx.scheme, ctx.a)
                     : santos_depierro_observe(shadows_[p], ctx.scheme, ctx.a);
    }
    track_.values.push_back(aggregate_samples(row, track_.aggregate));
    track_.per_sample.push_back(std::move(row));
}

void ShadowTraceEstimator::finish(RunRecord& record) const { record.trace_tracks.push_back(track_); }

double ShadowTraceEstimator::current_trace() const {
    return track_.values.empty() ? 0.0 : track_.values.back();
}

}  // namespace semistop
