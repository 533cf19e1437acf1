#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

#include "semistop/stoprules.hpp"

namespace semistop {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan plan_for(std::size_t n) {
        std::lock_guard lock(mutex_);
        auto it = plans_.find(n);
        if (it != plans_.end()) {
            return it->second;
        }
        auto* in = fftw_alloc_real(n);
        auto* out = fftw_alloc_complex(n / 2 + 1);
        fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out,
                                           FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(in);
        fftw_free(out);
        if (p == nullptr) {
            throw std::runtime_error("fftw: could not create plan for length " + std::to_string(n));
        }
        plans_.emplace(n, p);
        return p;
    }

    ~PlanCache() {
        for (auto& [n, p] : plans_) {
            fftw_destroy_plan(p);
        }
    }

private:
    std::mutex mutex_;
    std::map<std::size_t, fftw_plan> plans_;
};

}  // namespace

Vector periodogram(std::span<const double> v) {
    const std::size_t m = v.size();
    if (m < 2) {
        throw std::invalid_argument("periodogram: need at least 2 samples");
    }
    const std::size_t q = m / 2;
    fftw_plan plan = PlanCache::instance().plan_for(m);
    Vector in(v.begin(), v.end());
    std::vector<std::complex<double>> out(q + 1);
    fftw_execute_dft_r2c(plan, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    Vector p(q + 1);
    for (std::size_t i = 0; i <= q; ++i) {
        p[i] = std::norm(out[i]);
    }
    return p;
}

}  // namespace semistop
