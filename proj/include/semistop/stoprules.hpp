#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semistop/ctmodel.hpp"
#include "semistop/linops.hpp"
#include "semistop/record.hpp"
#include "semistop/solvers.hpp"
#include "semistop/trace.hpp"

namespace semistop {

/// |DFT(v)_i|^2 for i = 0..floor(m/2) (index 0 is the DC term), using the
/// unnormalized transform of the full length m. No zero padding.
Vector periodogram(std::span<const double> v);

struct NcpVector {
    /// c_j, j = 1..q with q = floor(len / 2).
    Vector c;
    std::size_t source_len = 0;
    /// No power outside DC; c is then the white-noise ramp.
    bool zero_power = false;
};

/// Normalized cumulative periodogram of v, DC excluded. Requires len >= 4.
NcpVector ncp_vector(std::span<const double> v);

/// (1/q, 2/q, ..., 1).
Vector white_ncp(std::size_t q);

/// ||c(v) - c_white||_2.
double ncp_distance(std::span<const double> v);

/// Mean over projection angles of the per-angle NCP distance of the
/// residual. Every angle segment needs at least 4 entries.
double ncp_number(const Sinogram& residual);
double ncp_number(std::span<const double> residual, std::span<const std::size_t> angle_offsets);

enum class Rule { DP, FTNL, UPRE, GCV, NCP };

std::string to_string(Rule rule);
Rule parse_rule(const std::string& name);

struct RuleConfig {
    double tau = 1.02;
    std::optional<double> eta;
    std::size_t patience = 3;
    std::size_t smooth_window = 1;

    void validate() const;
    static RuleConfig defaults_for(Rule rule);
};

/// ||rho|| <= tau * eta * sqrt(m).
bool dp_check(double res_norm, double eta, std::size_t m, double tau);

enum class ThresholdOutcome { NotMet, Met, Exhausted };

/// ||rho|| <= tau * eta * sqrt(m - t_k); Exhausted when t_k >= m.
ThresholdOutcome ftnl_check(double res_norm, double eta, std::size_t m, double t_k, double tau);

double upre_value(double res_norm_sq, double eta, std::size_t m, double t_k);

/// ||rho||^2 / (m - t_k)^2; throws when t_k >= m.
double gcv_value(double res_norm_sq, std::size_t m, double t_k);

/// Centered moving average; the window shrinks symmetrically at the ends.
Vector moving_average(std::span<const double> series, std::size_t window);

/// Smooths the series, then picks the first index k* after which the
/// smoothed values rise for `patience` consecutive steps. k_stop is 1-based.
StopDecision detect_stop(std::span<const double> series, const RuleConfig& cfg,
                         const std::string& rule = "");

/// DP (no trace source) or FTNL (with trace source). Fires at the first k
/// whose residual norm meets the threshold.
class ThresholdRuleObserver final : public Observer {
public:
    ThresholdRuleObserver(double eta, double tau, const TraceSource* trace = nullptr);

    void start(const RunContext& ctx, const SolverState& initial) override;
    void observe(const RunContext& ctx, const SolverState& state) override;
    void finish(RunRecord& record) const override;
    bool wants_stop() const override { return decision_.fired; }
    const StopDecision& decision() const { return decision_; }

private:
    double eta_;
    double tau_;
    const TraceSource* trace_;
    std::size_t m_ = 0;
    Vector thresholds_;
    StopDecision decision_;
    bool exhausted_ = false;
};

/// Records a per-iteration risk curve (U, G or N) and applies detect_stop.
class CurveRuleObserver final : public Observer {
public:
    static CurveRuleObserver upre(double eta, const TraceSource& trace, RuleConfig cfg);
    static CurveRuleObserver gcv(const TraceSource& trace, RuleConfig cfg);
    static CurveRuleObserver ncp(std::vector<std::size_t> angle_offsets, RuleConfig cfg);

    void start(const RunContext& ctx, const SolverState& initial) override;
    void observe(const RunContext& ctx, const SolverState& state) override;
    void finish(RunRecord& record) const override;
    bool wants_stop() const override;

    Rule rule() const { return rule_; }
    const Vector& series() const { return series_; }
    StopDecision decision() const;

private:
    CurveRuleObserver(Rule rule, RuleConfig cfg);

    Rule rule_;
    RuleConfig cfg_;
    const TraceSource* trace_ = nullptr;
    std::vector<std::size_t> angle_offsets_;
    std::size_t m_ = 0;
    Vector series_;
};

}  // namespace semistop
