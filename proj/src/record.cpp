#include "semistop/record.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace semistop {

std::string to_string(TraceMethod method) {
    switch (method) {
        case TraceMethod::Exact: return "exact";
        case TraceMethod::Girard: return "girard";
        case TraceMethod::SantosDePierro: return "santos-depierro";
    }
    return "unknown";
}

TraceMethod parse_trace_method(const std::string& name) {
    if (name == "exact") return TraceMethod::Exact;
    if (name == "girard") return TraceMethod::Girard;
    if (name == "santos-depierro" || name == "sdp") return TraceMethod::SantosDePierro;
    throw std::invalid_argument("unknown trace method '" + name + "'");
}

std::optional<std::size_t> RunRecord::min_error_k() const {
    if (error_norms.empty()) {
        return std::nullopt;
    }
    const auto it = std::min_element(error_norms.begin(), error_norms.end());
    return static_cast<std::size_t>(it - error_norms.begin()) + 1;
}

const StopDecision* RunRecord::decision(const std::string& rule) const {
    for (const auto& d : decisions) {
        if (d.rule == rule) {
            return &d;
        }
    }
    return nullptr;
}

const TraceTrack* RunRecord::trace(TraceMethod method) const {
    for (const auto& t : trace_tracks) {
        if (t.method == method) {
            return &t;
        }
    }
    return nullptr;
}

namespace {

void put(std::ostream& os, const Vector* series, std::size_t i) {
    os << ',';
    if (series != nullptr && i < series->size()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", (*series)[i]);
        os << buf;
    }
}

}  // namespace

std::string run_csv_string(const RunRecord& record) {
    std::ostringstream os;
    os << kRunCsvHeader << '\n';
    auto track = [&](TraceMethod m) -> const Vector* {
        const auto* t = record.trace(m);
        return t ? &t->values : nullptr;
    };
    auto series = [&](const char* key) -> const Vector* {
        const auto it = record.rule_series.find(key);
        return it == record.rule_series.end() ? nullptr : &it->second;
    };
    const Vector* err = record.error_norms.empty() ? nullptr : &record.error_norms;
    const Vector* cols[] = {&record.residual_norms,
                            err,
                            track(TraceMethod::Exact),
                            track(TraceMethod::Girard),
                            track(TraceMethod::SantosDePierro),
                            series("U"),
                            series("G"),
                            series("N")};
    for (std::size_t i = 0; i < record.iterations(); ++i) {
        os << (i + 1);
        for (const Vector* c : cols) {
            put(os, c, i);
        }
        os << '\n';
    }
    return os.str();
}

void write_run_csv(const RunRecord& record, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    os << run_csv_string(record);
}

}  // namespace semistop
