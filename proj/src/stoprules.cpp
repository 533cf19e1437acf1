#include "semistop/stoprules.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace semistop {

NcpVector ncp_vector(std::span<const double> v) {
    if (v.size() < 4) {
        throw std::invalid_argument("ncp_vector: need at least 4 samples");
    }
    const Vector p = periodogram(v);
    const std::size_t q = v.size() / 2;
    NcpVector out;
    out.source_len = v.size();
    out.c.resize(q);
    double total = 0.0;
    for (std::size_t i = 1; i <= q; ++i) {
        total += p[i];
    }
    if (!(total > 0.0)) {
        out.c = white_ncp(q);
        out.zero_power = true;
        return out;
    }
    double running = 0.0;
    for (std::size_t j = 1; j <= q; ++j) {
        running += p[j];
        out.c[j - 1] = running / total;
    }
    out.c[q - 1] = 1.0;
    return out;
}

Vector white_ncp(std::size_t q) {
    if (q < 1) {
        throw std::invalid_argument("white_ncp: q must be >= 1");
    }
    Vector c(q);
    for (std::size_t j = 1; j <= q; ++j) {
        c[j - 1] = static_cast<double>(j) / static_cast<double>(q);
    }
    return c;
}

double ncp_distance(std::span<const double> v) {
    const NcpVector c = ncp_vector(v);
    if (c.zero_power) {
        return 0.0;
    }
    const Vector w = white_ncp(c.c.size());
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        const double d = c.c[j] - w[j];
        s += d * d;
    }
    return std::sqrt(s);
}

double ncp_number(std::span<const double> residual, std::span<const std::size_t> angle_offsets) {
    if (angle_offsets.size() < 2 || angle_offsets.back() != residual.size()) {
        throw DimensionError("ncp_number: angle partition does not cover the residual");
    }
    const std::size_t n_angles = angle_offsets.size() - 1;
    double sum = 0.0;
    for (std::size_t l = 0; l < n_angles; ++l) {
        const std::size_t len = angle_offsets[l + 1] - angle_offsets[l];
        if (len < 4) {
            throw std::invalid_argument("ncp_number: projection " + std::to_string(l) +
                                        " has fewer than 4 detector values");
        }
        sum += ncp_distance(residual.subspan(angle_offsets[l], len));
    }
    return sum / static_cast<double>(n_angles);
}

double ncp_number(const Sinogram& residual) {
    return ncp_number(residual.values(), residual.angle_offsets());
}

// ---------------------------------------------------------------------------

std::string to_string(Rule rule) {
    switch (rule) {
        case Rule::DP: return "DP";
        case Rule::FTNL: return "FTNL";
        case Rule::UPRE: return "UPRE";
        case Rule::GCV: return "GCV";
        case Rule::NCP: return "NCP";
    }
    return "unknown";
}

Rule parse_rule(const std::string& name) {
    std::string up(name);
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
    if (up == "DP") return Rule::DP;
    if (up == "FTNL") return Rule::FTNL;
    if (up == "UPRE") return Rule::UPRE;
    if (up == "GCV") return Rule::GCV;
    if (up == "NCP") return Rule::NCP;
    throw std::invalid_argument("unknown stopping rule '" + name + "'");
}

void RuleConfig::validate() const {
    if (!(tau >= 1.0)) {
        throw std::invalid_argument("rule config: tau must be >= 1");
    }
    if (patience < 1) {
        throw std::invalid_argument("rule config: patience must be >= 1");
    }
    if (smooth_window % 2 == 0) {
        throw std::invalid_argument("rule config: smooth_window must be odd");
    }
    if (eta && !(*eta > 0.0)) {
        throw std::invalid_argument("rule config: eta must be positive");
    }
}

RuleConfig RuleConfig::defaults_for(Rule rule) {
    RuleConfig cfg;
    cfg.smooth_window = rule == Rule::NCP ? 5 : 1;
    return cfg;
}

bool dp_check(double res_norm, double eta, std::size_t m, double tau) {
    if (!(eta > 0.0)) {
        throw std::invalid_argument("dp_check: eta must be positive");
    }
    return res_norm <= tau * eta * std::sqrt(static_cast<double>(m));
}

ThresholdOutcome ftnl_check(double res_norm, double eta, std::size_t m, double t_k, double tau) {
    if (!(eta > 0.0)) {
        throw std::invalid_argument("ftnl_check: eta must be positive");
    }
    const double dof = static_cast<double>(m) - t_k;
    if (!(dof > 0.0)) {
        return ThresholdOutcome::Exhausted;
    }
    return res_norm <= tau * eta * std::sqrt(dof) ? ThresholdOutcome::Met : ThresholdOutcome::NotMet;
}

double upre_value(double res_norm_sq, double eta, std::size_t m, double t_k) {
    if (!(eta > 0.0)) {
        throw std::invalid_argument("upre_value: eta must be positive");
    }
    const double e2 = eta * eta;
    return res_norm_sq + 2.0 * e2 * t_k - e2 * static_cast<double>(m);
}

double gcv_value(double res_norm_sq, std::size_t m, double t_k) {
    const double dof = static_cast<double>(m) - t_k;
    if (!(dof > 0.0)) {
        throw std::domain_error("gcv_value: t_k >= m");
    }
    return res_norm_sq / (dof * dof);
}

Vector moving_average(std::span<const double> series, std::size_t window) {
    if (window % 2 == 0) {
        throw std::invalid_argument("moving_average: window must be odd");
    }
    const std::size_t n = series.size();
    const std::size_t half = window / 2;
    Vector out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t h = std::min({half, i, n - 1 - i});
        double s = 0.0;
        for (std::size_t j = i - h; j <= i + h; ++j) {
            s += series[j];
        }
        out[i] = s / static_cast<double>(2 * h + 1);
    }
    return out;
}

StopDecision detect_stop(std::span<const double> series, const RuleConfig& cfg,
                         const std::string& rule) {
    if (series.empty()) {
        throw std::invalid_argument("detect_stop: empty series");
    }
    cfg.validate();
    StopDecision d;
    d.rule = rule;
    const Vector s = moving_average(series, cfg.smooth_window);
    const std::size_t n = s.size();
    for (std::size_t i = 0; i + cfg.patience < n; ++i) {
        bool rising = true;
        for (std::size_t j = 1; j <= cfg.patience; ++j) {
            if (!(s[i + j] > s[i + j - 1])) {
                rising = false;
                break;
            }
        }
        if (rising) {
            d.fired = true;
            d.k_stop = i + 1;
            d.value_at_stop = series[i];
            return d;
        }
    }
    return d;
}

// ---------------------------------------------------------------------------

ThresholdRuleObserver::ThresholdRuleObserver(double eta, double tau, const TraceSource* trace)
    : eta_(eta), tau_(tau), trace_(trace) {
    if (!(eta > 0.0)) {
        throw std::invalid_argument("threshold rule: eta must be positive");
    }
    if (!(tau >= 1.0)) {
        throw std::invalid_argument("threshold rule: tau must be >= 1");
    }
    decision_.rule = trace_ ? "FTNL" : "DP";
}

void ThresholdRuleObserver::start(const RunContext& ctx, const SolverState&) {
    m_ = ctx.a.rows();
    thresholds_.clear();
    decision_ = StopDecision{};
    decision_.rule = trace_ ? "FTNL" : "DP";
    exhausted_ = false;
}

void ThresholdRuleObserver::observe(const RunContext&, const SolverState& state) {
    const double t = trace_ ? trace_->current_trace() : 0.0;
    const double dof = static_cast<double>(m_) - t;
    thresholds_.push_back(dof > 0.0 ? tau_ * eta_ * std::sqrt(dof) : 0.0);
    if (decision_.fired || exhausted_) {
        return;
    }
    bool met = false;
    if (trace_) {
        const auto outcome = ftnl_check(state.residual_norm, eta_, m_, t, tau_);
        exhausted_ = outcome == ThresholdOutcome::Exhausted;
        met = outcome == ThresholdOutcome::Met;
    } else {
        met = dp_check(state.residual_norm, eta_, m_, tau_);
    }
    if (met) {
        decision_.fired = true;
        decision_.k_stop = state.k;
        decision_.value_at_stop = state.residual_norm;
    }
}

void ThresholdRuleObserver::finish(RunRecord& record) const {
    record.rule_series[decision_.rule + "_threshold"] = thresholds_;
    record.decisions.push_back(decision_);
}

CurveRuleObserver::CurveRuleObserver(Rule rule, RuleConfig cfg) : rule_(rule), cfg_(cfg) {
    cfg_.validate();
}

CurveRuleObserver CurveRuleObserver::upre(double eta, const TraceSource& trace, RuleConfig cfg) {
    cfg.eta = eta;
    CurveRuleObserver obs(Rule::UPRE, cfg);
    obs.trace_ = &trace;
    return obs;
}

CurveRuleObserver CurveRuleObserver::gcv(const TraceSource& trace, RuleConfig cfg) {
    CurveRuleObserver obs(Rule::GCV, cfg);
    obs.trace_ = &trace;
    return obs;
}

CurveRuleObserver CurveRuleObserver::ncp(std::vector<std::size_t> angle_offsets, RuleConfig cfg) {
    CurveRuleObserver obs(Rule::NCP, cfg);
    obs.angle_offsets_ = std::move(angle_offsets);
    return obs;
}

void CurveRuleObserver::start(const RunContext& ctx, const SolverState&) {
    m_ = ctx.a.rows();
    series_.clear();
    if (rule_ == Rule::NCP && (angle_offsets_.empty() || angle_offsets_.back() != m_)) {
        throw DimensionError("NCP rule: angle partition does not match the operator rows");
    }
}

void CurveRuleObserver::observe(const RunContext&, const SolverState& state) {
    const double r2 = state.residual_norm * state.residual_norm;
    switch (rule_) {
        case Rule::UPRE:
            series_.push_back(upre_value(r2, *cfg_.eta, m_, trace_->current_trace()));
            break;
        case Rule::GCV: {
            const double t = trace_->current_trace();
            series_.push_back(t < static_cast<double>(m_)
                                  ? gcv_value(r2, m_, t)
                                  : std::numeric_limits<double>::infinity());
            break;
        }
        case Rule::NCP:
            series_.push_back(ncp_number(state.residual, angle_offsets_));
            break;
        default:
            throw std::logic_error("CurveRuleObserver: unsupported rule");
    }
}

StopDecision CurveRuleObserver::decision() const {
    if (series_.empty()) {
        StopDecision d;
        d.rule = to_string(rule_);
        return d;
    }
    return detect_stop(series_, cfg_, to_string(rule_));
}

bool CurveRuleObserver::wants_stop() const {
    if (series_.empty()) {
        return false;
    }
    const StopDecision d = decision();
    // only trust smoothed values whose full window has been observed
    const std::size_t half = cfg_.smooth_window / 2;
    return d.fired && *d.k_stop - 1 + cfg_.patience + half < series_.size();
}

void CurveRuleObserver::finish(RunRecord& record) const {
    const char* key = rule_ == Rule::UPRE ? "U" : rule_ == Rule::GCV ? "G" : "N";
    record.rule_series[key] = series_;
    record.decisions.push_back(decision());
}

}  // namespace semistop
