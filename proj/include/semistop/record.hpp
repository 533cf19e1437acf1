#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semistop/linops.hpp"

namespace semistop {

enum class TraceMethod { Exact, Girard, SantosDePierro };
enum class Aggregate { Mean, Median };

std::string to_string(TraceMethod method);
TraceMethod parse_trace_method(const std::string& name);

/// Per-iteration trace values t_k, k = 1..K.
struct TraceTrack {
    TraceMethod method = TraceMethod::Exact;
    std::size_t samples = 0;
    Aggregate aggregate = Aggregate::Mean;
    Vector values;
    /// per_sample[k-1][p]: estimate of probe p at iteration k. Empty for the
    /// exact method.
    std::vector<Vector> per_sample;
};

struct StopDecision {
    std::string rule;
    std::optional<std::size_t> k_stop;
    double value_at_stop = 0.0;
    bool fired = false;
};

/// Series indexed by k = 1..K (entry k-1 belongs to iterate x^(k)).
struct RunRecord {
    Vector residual_norms;
    Vector error_norms;
    /// Rule curves keyed by name: "DP_threshold", "FTNL_threshold", "U", "G", "N".
    std::map<std::string, Vector> rule_series;
    std::vector<StopDecision> decisions;
    std::vector<TraceTrack> trace_tracks;

    std::size_t iterations() const { return residual_norms.size(); }
    /// 1-based iteration with the smallest error, if ground truth was given.
    std::optional<std::size_t> min_error_k() const;
    const StopDecision* decision(const std::string& rule) const;
    const TraceTrack* trace(TraceMethod method) const;
};

inline constexpr const char* kRunCsvHeader = "k,res_norm,err_norm,t_exact,t_girard,t_sdp,U,G,N";

/// One row per iteration; missing series leave their cells empty.
void write_run_csv(const RunRecord& record, const std::filesystem::path& path);
std::string run_csv_string(const RunRecord& record);

}  // namespace semistop
