#include <doctest.h>

#include <cmath>

#include "semistop/ctmodel.hpp"
#include "semistop/trace.hpp"
#include "test_util.hpp"

using namespace semistop;
using testutil::random_operator;
using testutil::random_vector;

namespace {

SparseOperator scalar(double v) { return SparseOperator::from_dense(1, 1, std::vector<double>{v}); }

// Small Landweber CT problem on a 16 x 16 image.
SparseOperator small_ct() {
    Geometry g;
    g.image_side = 16;
    g.n_det = default_detector_count(16);
    g.angles_deg = angle_range(6, 6, 180);
    const auto a = build_system_matrix(g);
    return remove_zero_rows(a, Vector(a.rows(), 0.0)).op;
}

// trace(A A_k^#) with A_k^# = sum_{j<k} (I - w A^T A)^j w A^T, formed densely.
double dense_trace(const Vector& ad, std::size_t m, std::size_t n, double w, std::size_t k) {
    const Vector at = testutil::transpose(ad, m, n);
    const Vector g = testutil::matmul(at, ad, n, m, n);
    Vector step_m = testutil::dense_identity(n);
    for (std::size_t i = 0; i < n * n; ++i) step_m[i] -= w * g[i];
    Vector power = testutil::dense_identity(n);
    Vector sum(n * n, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < n * n; ++i) sum[i] += power[i];
        power = testutil::matmul(step_m, power, n, n, n);
    }
    Vector ak = testutil::matmul(sum, at, n, n, m);
    for (auto& v : ak) v *= w;
    const Vector infl = testutil::matmul(ad, ak, m, n, m);
    double t = 0.0;
    for (std::size_t i = 0; i < m; ++i) t += infl[i * m + i];
    return t;
}

}  // namespace

TEST_CASE("exact trace closed form") {
    const Spectrum s{{2.0}};
    CHECK(exact_trace_landweber(s, 0.1, 0) == 0.0);
    CHECK(exact_trace_landweber(s, 0.1, 1) == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(exact_trace_landweber(s, 0.1, 2) == doctest::Approx(0.64).epsilon(1e-14));
    CHECK_THROWS(exact_trace_landweber(s, 0.5, 1));
    CHECK_THROWS(exact_trace_landweber(s, 0.0, 1));
}

TEST_CASE("exact trace matches dense influence matrix") {
    for (auto [m, n] : {std::pair{12ul, 10ul}, std::pair{8ul, 11ul}}) {
        const Vector ad = testutil::random_dense(m, n, 0.6, 31 + m);
        const auto a = SparseOperator::from_dense(m, n, ad);
        const auto spec = svd_spectrum(a);
        const double w = make_landweber(a).omega;
        for (std::size_t k : {1ul, 5ul, 20ul}) {
            CHECK(std::abs(exact_trace_landweber(spec, w, k) - dense_trace(ad, m, n, w, k)) <= 1e-10);
        }
    }
}

TEST_CASE("exact trace limits") {
    const auto a = random_operator(9, 14, 0.5, 33);
    const auto spec = svd_spectrum(a);
    const double w = make_landweber(a).omega;
    std::size_t rank = 0;
    for (double s : spec.singular_values) rank += s > 1e-10 * spec.singular_values.front();
    double prev = 0.0;
    for (std::size_t k = 1; k < 400; ++k) {
        const double t = exact_trace_landweber(spec, w, k);
        CHECK(t >= prev);
        CHECK(t <= 9.0 + 1e-12);
        prev = t;
    }
    CHECK(exact_trace_landweber(spec, w, 1000000) == doctest::Approx(static_cast<double>(rank)).epsilon(1e-6));
}

TEST_CASE("scalar girard and santos-de pierro estimates") {
    const auto a = scalar(2.0);
    const auto s = make_landweber(a, 0.1);
    const double w = 1.7;

    auto g = make_girard_shadow(a, Vector{w});
    CHECK(g.z == Vector{2 * w});
    CHECK(girard_observe(g, s, a) == doctest::Approx(0.4 * w * w).epsilon(1e-14));
    CHECK(g.xi.x[0] == doctest::Approx(0.2 * w).epsilon(1e-14));

    auto sd = make_santos_depierro_shadow(s, a, Vector{w});
    for (int k = 1; k <= 5; ++k) {
        const double est = santos_depierro_observe(sd, s, a);
        CHECK(est == doctest::Approx(1.0 - std::pow(0.6, k) * w * w).epsilon(1e-13));
    }

    auto zero = make_girard_shadow(a, Vector{0.0});
    for (int k = 0; k < 5; ++k) CHECK(girard_observe(zero, s, a) == 0.0);

    CHECK_THROWS_AS(make_girard_shadow(a, Vector{1, 2}), DimensionError);
    CHECK_THROWS_AS(girard_observe(sd, s, a), std::invalid_argument);
}

TEST_CASE("santos-de pierro needs a scalar D") {
    const auto a = SparseOperator::from_dense(2, 2, std::vector<double>{1, 1, 3, 1});
    CHECK_THROWS_AS(make_santos_depierro_shadow(make_sirt(a), a, Vector{1, 1}), UnsupportedScheme);
    ShadowTraceEstimator est(TraceMethod::SantosDePierro, 1, 0);
    Observer* obs[] = {&est};
    RunOptions opt;
    opt.max_iters = 2;
    CHECK_THROWS_AS(run(a, Vector{1, 1}, make_sirt(a), opt, obs), UnsupportedScheme);
}

TEST_CASE("girard shadow equals an independent solver run on the probe") {
    const auto a = small_ct();
    const auto s = make_landweber(a);
    const Vector w = make_probe(a.rows(), 42, 0);
    auto shadow = make_girard_shadow(a, w);
    for (int k = 0; k < 25; ++k) girard_observe(shadow, s, a);
    const std::vector<std::size_t> ks{25};
    CHECK(iterates_at(a, w, s, ks)[0] == shadow.xi.x);
}

TEST_CASE("probe means track the oracle on a 16x16 problem") {
    const auto a = small_ct();
    const auto s = make_landweber(a);
    const auto spec = svd_spectrum(a);
    const std::size_t k_eval = 50;
    const double exact = exact_trace_landweber(spec, s.omega, k_eval);
    for (auto method : {TraceMethod::Girard, TraceMethod::SantosDePierro}) {
        ShadowTraceEstimator est(method, 200, 77);
        Observer* obs[] = {&est};
        RunOptions opt;
        opt.max_iters = k_eval;
        run(a, Vector(a.rows(), 0.0), s, opt, obs);
        CHECK(std::abs(est.current_trace() - exact) <= 0.05 * exact);
        CHECK(est.track().per_sample.size() == k_eval);
        CHECK(est.track().per_sample.back().size() == 200);
    }
}

TEST_CASE("exact trace observer") {
    const auto a = random_operator(10, 8, 0.6, 35);
    const auto s = make_landweber(a);
    ExactTraceObserver ex(svd_spectrum(a), s.omega);
    Observer* obs[] = {&ex};
    RunOptions opt;
    opt.max_iters = 5;
    const auto rec = run(a, Vector(10, 1.0), s, opt, obs);
    REQUIRE(rec.trace(TraceMethod::Exact) != nullptr);
    CHECK(rec.trace(TraceMethod::Exact)->values.size() == 5);
    CHECK(ex.current_trace() == exact_trace_landweber(svd_spectrum(a), s.omega, 5));

    ExactTraceObserver wrong(svd_spectrum(a), s.omega * 0.5);
    Observer* bad[] = {&wrong};
    CHECK_THROWS(run(a, Vector(10, 1.0), s, opt, bad));
}

TEST_CASE("aggregation") {
    CHECK(aggregate_samples(Vector{1, 2, 9}, Aggregate::Mean) == 4.0);
    CHECK(aggregate_samples(Vector{1, 2, 9}, Aggregate::Median) == 2.0);
    CHECK(aggregate_samples(Vector{1, 2, 9, 10}, Aggregate::Median) == 5.5);
    CHECK(aggregate_samples(Vector{3.5}, Aggregate::Mean) == 3.5);
    CHECK_THROWS(aggregate_samples(Vector{}, Aggregate::Mean));

    TraceTrack t;
    t.per_sample = {{1, 2, 9}, {4, 4, 4}};
    t.aggregate = Aggregate::Median;
    CHECK(aggregate(t) == Vector{2, 4});
    TraceTrack one;
    one.per_sample = {{1.5}, {2.5}};
    CHECK(aggregate(one) == Vector{1.5, 2.5});
}

TEST_CASE("probes are seeded per index") {
    CHECK(make_probe(10, 1, 0) == make_probe(10, 1, 0));
    CHECK(make_probe(10, 1, 0) != make_probe(10, 1, 1));
    CHECK(make_probe(10, 1, 0) != make_probe(10, 2, 0));
}
