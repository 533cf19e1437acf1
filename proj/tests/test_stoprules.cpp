#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "semistop/stoprules.hpp"
#include "test_util.hpp"

using namespace semistop;
using testutil::random_vector;

namespace {

// Direct O(m^2) DFT power spectrum, bins 0..m-1.
Vector direct_power(const Vector& v) {
    const std::size_t m = v.size();
    Vector p(m);
    for (std::size_t k = 0; k < m; ++k) {
        std::complex<double> s = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(j * k) / m;
            s += v[j] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        p[k] = std::norm(s);
    }
    return p;
}

double median(Vector v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

std::vector<std::size_t> uniform_offsets(std::size_t n_det, std::size_t n_angles) {
    std::vector<std::size_t> off;
    for (std::size_t l = 0; l <= n_angles; ++l) off.push_back(l * n_det);
    return off;
}

Vector ramp_residual(std::size_t n_det, std::size_t n_angles, std::uint64_t seed) {
    const Vector jitter = random_vector(n_angles, seed);
    Vector r(n_det * n_angles);
    for (std::size_t l = 0; l < n_angles; ++l)
        for (std::size_t d = 0; d < n_det; ++d)
            r[l * n_det + d] = (1.0 + 0.1 * jitter[l]) * static_cast<double>(d) / n_det;
    return r;
}

}  // namespace

TEST_CASE("periodogram") {
    Vector impulse(8, 0.0);
    impulse[0] = 1.0;
    const Vector p = periodogram(impulse);
    CHECK(p.size() == 5);
    for (double v : p) CHECK(v == doctest::Approx(1.0));

    const Vector c = periodogram(Vector(8, 3.0));
    CHECK(c[0] == doctest::Approx(64.0 * 9.0));
    for (std::size_t i = 1; i < c.size(); ++i) CHECK(std::abs(c[i]) < 1e-20);

    for (std::size_t m = 2; m <= 16; ++m) {
        const Vector v = random_vector(m, 50 + m);
        const Vector ref = direct_power(v);
        const Vector got = periodogram(v);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(std::abs(got[i] - ref[i]) <= 1e-10 * std::max(1.0, ref[i]));
        }
        double total = 0.0;
        for (double x : ref) total += x;
        CHECK(total == doctest::Approx(m * norm2_squared(v)).epsilon(1e-12));
    }
    CHECK_THROWS(periodogram(Vector{1.0}));
}

TEST_CASE("ncp vector") {
    Vector impulse(8, 0.0);
    impulse[3] = 2.0;
    const auto c = ncp_vector(impulse);
    CHECK(c.c.size() == 4);
    CHECK_FALSE(c.zero_power);
    const Vector expect{0.25, 0.5, 0.75, 1.0};
    for (std::size_t i = 0; i < 4; ++i) CHECK(c.c[i] == doctest::Approx(expect[i]));
    CHECK(ncp_distance(impulse) == doctest::Approx(0.0).epsilon(1e-14));

    Vector cosine(8);
    for (std::size_t j = 0; j < 8; ++j) cosine[j] = std::cos(2.0 * std::numbers::pi * j / 8.0);
    for (double v : ncp_vector(cosine).c) CHECK(v == doctest::Approx(1.0));

    for (std::uint64_t s = 0; s < 20; ++s) {
        const Vector v = random_vector(5 + s, 60 + s);
        const auto nc = ncp_vector(v);
        CHECK(nc.c.size() == (5 + s) / 2);
        CHECK(nc.c.back() == 1.0);
        for (std::size_t i = 0; i < nc.c.size(); ++i) {
            CHECK(nc.c[i] >= 0.0);
            CHECK(nc.c[i] <= 1.0);
            if (i > 0) CHECK(nc.c[i] >= nc.c[i - 1]);
        }
    }

    const auto flat = ncp_vector(Vector(6, 1.0));
    CHECK(flat.zero_power);
    CHECK(flat.c == white_ncp(3));
    CHECK_THROWS(ncp_vector(Vector(3, 1.0)));
}

TEST_CASE("white noise ramp") {
    CHECK(white_ncp(4) == Vector{0.25, 0.5, 0.75, 1.0});
    CHECK(white_ncp(1) == Vector{1.0});
    const auto w = white_ncp(256 / 2);
    CHECK(w.size() == 128);
    CHECK(w.front() == doctest::Approx(1.0 / 128));
    CHECK(w.back() == 1.0);
    CHECK_THROWS(white_ncp(0));
}

TEST_CASE("ncp number separates white noise from smooth residuals") {
    const std::size_t n_det = 91, n_angles = 60;
    const auto off = uniform_offsets(n_det, n_angles);
    Vector null;
    for (std::uint64_t s = 0; s < 200; ++s) {
        null.push_back(ncp_number(random_vector(n_det * n_angles, 1000 + s), off));
    }
    Vector sorted = null;
    std::sort(sorted.begin(), sorted.end());
    const double p95 = sorted[static_cast<std::size_t>(0.95 * sorted.size())];
    const double smooth = ncp_number(ramp_residual(n_det, n_angles, 6), off);
    CHECK(smooth >= 5.0 * median(null));
    CHECK(smooth > sorted.back());
    CHECK(p95 < 0.5 * smooth);

    CHECK(ncp_number(Vector(n_det * n_angles, 0.0), off) == 0.0);

    const Sinogram sino(random_vector(n_det * n_angles, 7), n_det, n_angles);
    CHECK(ncp_number(sino) == ncp_number(sino.values(), sino.angle_offsets()));

    const std::vector<std::size_t> short_off{0, 3, 10};
    CHECK_THROWS(ncp_number(Vector(10, 1.0), short_off));
    const std::vector<std::size_t> bad_off{0, 5};
    CHECK_THROWS(ncp_number(Vector(10, 1.0), bad_off));
}

TEST_CASE("white vs low-frequency medians over 100 seeds") {
    const std::size_t n_det = 64, n_angles = 30;
    const auto off = uniform_offsets(n_det, n_angles);
    Vector white, low;
    for (std::uint64_t s = 0; s < 100; ++s) {
        white.push_back(ncp_number(random_vector(n_det * n_angles, 2000 + s), off));
        // low-pass: running sum of white noise
        Vector r = random_vector(n_det * n_angles, 3000 + s);
        for (std::size_t l = 0; l < n_angles; ++l)
            for (std::size_t d = 1; d < n_det; ++d) r[l * n_det + d] += r[l * n_det + d - 1];
        low.push_back(ncp_number(r, off));
    }
    CHECK(median(white) < median(low));
}

TEST_CASE("rule names") {
    for (Rule r : {Rule::DP, Rule::FTNL, Rule::UPRE, Rule::GCV, Rule::NCP}) {
        CHECK(parse_rule(to_string(r)) == r);
    }
    CHECK(parse_rule("ncp") == Rule::NCP);
    CHECK_THROWS(parse_rule("lcurve"));
}

TEST_CASE("rule config") {
    CHECK(RuleConfig{}.tau == 1.02);
    CHECK(RuleConfig::defaults_for(Rule::NCP).smooth_window == 5);
    CHECK(RuleConfig::defaults_for(Rule::GCV).smooth_window == 1);
    CHECK(RuleConfig::defaults_for(Rule::UPRE).patience == 3);
    RuleConfig bad;
    bad.tau = 0.9;
    CHECK_THROWS(bad.validate());
    bad = {};
    bad.smooth_window = 4;
    CHECK_THROWS(bad.validate());
    bad = {};
    bad.patience = 0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("threshold checks") {
    CHECK(dp_check(3.0, 1.0, 10, 1.0));
    CHECK_FALSE(dp_check(4.0, 1.0, 10, 1.0));
    CHECK(dp_check(3.2, 1.0, 10, 1.02));
    CHECK_FALSE(dp_check(3.2, 1.0, 10, 1.0));
    CHECK_THROWS(dp_check(1.0, 0.0, 10, 1.0));

    CHECK(ftnl_check(3.0, 1.0, 10, 1.0, 1.0) == ThresholdOutcome::Met);
    CHECK(ftnl_check(3.01, 1.0, 10, 1.0, 1.0) == ThresholdOutcome::NotMet);
    for (double r : {2.0, 3.1, 3.2, 4.0}) {
        CHECK((ftnl_check(r, 1.0, 10, 0.0, 1.02) == ThresholdOutcome::Met) == dp_check(r, 1.0, 10, 1.02));
    }
    CHECK(ftnl_check(0.0, 1.0, 10, 10.0, 1.0) == ThresholdOutcome::Exhausted);
}

TEST_CASE("risk values") {
    CHECK(upre_value(4.0, 1.0, 10, 2.0) == -2.0);
    CHECK(upre_value(2.0 * 2.0 * 10, 2.0, 10, 0.0) == 0.0);
    CHECK(gcv_value(4.0, 10, 2.0) == 0.0625);
    CHECK(gcv_value(5.0, 10, 0.0) == 5.0 / 100.0);
    CHECK_THROWS_AS(gcv_value(1.0, 10, 10.0), std::domain_error);
}

TEST_CASE("moving average") {
    const Vector s{5, 4, 4.1, 3.9, 4.5, 5, 6};
    CHECK(moving_average(s, 1) == s);
    const Vector m = moving_average(s, 3);
    CHECK(m[0] == 5.0);
    CHECK(m[1] == doctest::Approx((5 + 4 + 4.1) / 3));
    CHECK(m[3] == doctest::Approx((4.1 + 3.9 + 4.5) / 3));
    CHECK(m[6] == 6.0);
    CHECK_THROWS(moving_average(s, 2));
}

TEST_CASE("detect_stop") {
    RuleConfig cfg;
    cfg.patience = 3;
    cfg.smooth_window = 1;
    const auto d = detect_stop(Vector{5, 4, 3, 4, 5, 6}, cfg, "U");
    CHECK(d.fired);
    CHECK(*d.k_stop == 3);
    CHECK(d.value_at_stop == 3.0);
    CHECK(d.rule == "U");

    CHECK_FALSE(detect_stop(Vector{6, 5, 4, 3, 2, 1}, cfg).fired);
    CHECK_FALSE(detect_stop(Vector{5, 4, 3, 4, 5}, cfg).fired);
    CHECK_THROWS(detect_stop(Vector{}, cfg));

    const Vector zig{5, 4, 4.1, 3.9, 4.5, 5, 6};
    RuleConfig eager;
    eager.patience = 1;
    CHECK(*detect_stop(zig, eager).k_stop == 2);
    cfg.smooth_window = 3;
    const auto z = detect_stop(zig, cfg);
    REQUIRE(z.fired);
    CHECK(*z.k_stop >= 3);
    CHECK(*z.k_stop <= 4);
}

TEST_CASE("gcv argmin is invariant under scaling") {
    const Vector res{10, 6, 4, 3.5, 3.6, 3.9, 4.4};
    const Vector t{0, 1, 2, 3, 4, 5, 6};
    for (double s : {1.0, 1e-3, 7.5}) {
        Vector g;
        for (std::size_t i = 0; i < res.size(); ++i) g.push_back(gcv_value(s * s * res[i] * res[i], 20, t[i]));
        RuleConfig cfg;
        CHECK(*detect_stop(g, cfg).k_stop == 4);
    }
}

TEST_CASE("observers on a small problem") {
    const auto a = testutil::random_operator(40, 20, 0.4, 70);
    const Vector xbar = random_vector(20, 71);
    Vector b = a.apply(xbar);
    const Vector e = random_vector(40, 72);
    const double eta = 0.1;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += eta * e[i];
    const auto s = make_landweber(a);
    ExactTraceObserver exact(svd_spectrum(a), s.omega);
    ThresholdRuleObserver dp(eta, 1.02);
    ThresholdRuleObserver ftnl(eta, 1.02, &exact);
    RuleConfig rc;
    auto upre = CurveRuleObserver::upre(eta, exact, rc);
    auto gcv = CurveRuleObserver::gcv(exact, rc);
    Observer* obs[] = {&exact, &dp, &ftnl, &upre, &gcv};
    RunOptions opt;
    opt.max_iters = 2000;
    const auto rec = run(a, b, s, opt, obs, xbar);

    CHECK(rec.rule_series.at("DP_threshold").size() == rec.iterations());
    CHECK(rec.rule_series.at("FTNL_threshold").size() == rec.iterations());
    CHECK(rec.rule_series.at("U").size() == rec.iterations());
    CHECK(rec.rule_series.at("G").size() == rec.iterations());
    const auto* d_dp = rec.decision("DP");
    const auto* d_ftnl = rec.decision("FTNL");
    REQUIRE(d_dp);
    REQUIRE(d_ftnl);
    REQUIRE(d_dp->fired);
    REQUIRE(d_ftnl->fired);
    CHECK(*d_ftnl->k_stop >= *d_dp->k_stop);
    CHECK(rec.residual_norms[*d_dp->k_stop - 1] <= 1.02 * eta * std::sqrt(40.0));
    if (*d_dp->k_stop > 1) {
        CHECK(rec.residual_norms[*d_dp->k_stop - 2] > 1.02 * eta * std::sqrt(40.0));
    }

    // the FTNL threshold never exceeds the DP one once t_k > 0
    for (std::size_t k = 0; k < rec.iterations(); ++k) {
        CHECK(rec.rule_series.at("FTNL_threshold")[k] < rec.rule_series.at("DP_threshold")[k]);
    }

    // U + eta^2 m - 2 eta^2 t equals the squared residual
    const auto& u = rec.rule_series.at("U");
    const auto& t = rec.trace(TraceMethod::Exact)->values;
    for (std::size_t k = 0; k < rec.iterations(); ++k) {
        const double r2 = rec.residual_norms[k] * rec.residual_norms[k];
        CHECK(u[k] + eta * eta * 40 - 2 * eta * eta * t[k] == doctest::Approx(r2).epsilon(1e-12));
    }
}

TEST_CASE("curve observer only trusts fully observed windows") {
    RuleConfig rc;
    rc.patience = 2;
    rc.smooth_window = 3;
    const auto a = SparseOperator::identity(8);
    auto ncp = CurveRuleObserver::ncp({0, 4, 8}, rc);
    const Vector b(8, 0.0);
    const auto scheme = make_landweber(a, 0.5);
    RunContext ctx{a, b, scheme};
    SolverState st;
    st.x.assign(8, 0.0);
    ncp.start(ctx, st);
    CHECK_FALSE(ncp.wants_stop());
    auto wrong = CurveRuleObserver::ncp({0, 4}, rc);
    CHECK_THROWS(wrong.start(ctx, st));
}
