#include "semistop/ctmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace semistop {

void Geometry::validate() const {
    if (image_side < 2) {
        throw std::invalid_argument("geometry: image side N must be >= 2");
    }
    if (n_det < 1) {
        throw std::invalid_argument("geometry: n_det must be >= 1");
    }
    if (!(pixel_size > 0.0) || !(det_spacing > 0.0)) {
        throw std::invalid_argument("geometry: pixel_size and det_spacing must be positive");
    }
    if (angles_deg.empty()) {
        throw std::invalid_argument("geometry: no projection angles");
    }
    for (double a : angles_deg) {
        if (!(a >= 0.0 && a < 360.0)) {
            throw std::invalid_argument("geometry: angle " + std::to_string(a) +
                                        " outside [0, 360)");
        }
    }
}

std::size_t default_detector_count(std::size_t image_side) {
    return static_cast<std::size_t>(std::lround(std::numbers::sqrt2 * static_cast<double>(image_side)));
}

std::vector<double> angle_range(double start, double step, double stop) {
    if (!(step > 0.0)) {
        throw std::invalid_argument("angle range: step must be positive");
    }
    if (stop < start) {
        throw std::invalid_argument("angle range: stop < start");
    }
    std::vector<double> out;
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(start + static_cast<double>(i) * step);
    }
    return out;
}

namespace {

struct Segment {
    std::uint32_t col;
    double length;
};

// Siddon: parametric crossings with every grid line, pixel picked by the
// midpoint of each sub-segment (half-open pixel cells).
void trace_ray(const Geometry& g, double cos_t, double sin_t, double offset,
               std::vector<double>& crossings, std::vector<Segment>& out) {
    out.clear();
    crossings.clear();
    const std::size_t n = g.image_side;
    const double ps = g.pixel_size;
    const double half = 0.5 * static_cast<double>(n) * ps;
    const double px = -offset * sin_t;
    const double py = offset * cos_t;

    double t_lo = -std::numeric_limits<double>::infinity();
    double t_hi = std::numeric_limits<double>::infinity();
    auto clip = [&](double p, double dir) {
        if (dir == 0.0) {
            return p >= -half && p <= half;
        }
        double a = (-half - p) / dir;
        double b = (half - p) / dir;
        if (a > b) {
            std::swap(a, b);
        }
        t_lo = std::max(t_lo, a);
        t_hi = std::min(t_hi, b);
        return true;
    };
    if (!clip(px, cos_t) || !clip(py, sin_t) || !(t_hi > t_lo)) {
        return;
    }
    crossings.push_back(t_lo);
    crossings.push_back(t_hi);
    for (std::size_t i = 1; i < n; ++i) {
        const double line = -half + static_cast<double>(i) * ps;
        if (cos_t != 0.0) {
            const double t = (line - px) / cos_t;
            if (t > t_lo && t < t_hi) {
                crossings.push_back(t);
            }
        }
        if (sin_t != 0.0) {
            const double t = (line - py) / sin_t;
            if (t > t_lo && t < t_hi) {
                crossings.push_back(t);
            }
        }
    }
    std::sort(crossings.begin(), crossings.end());
    const double min_len = 1e-12 * ps;
    for (std::size_t k = 0; k + 1 < crossings.size(); ++k) {
        const double len = crossings[k + 1] - crossings[k];
        if (len <= min_len) {
            continue;
        }
        const double tm = 0.5 * (crossings[k] + crossings[k + 1]);
        const double x = px + tm * cos_t;
        const double y = py + tm * sin_t;
        const auto col = static_cast<long>(std::floor((x + half) / ps));
        const auto row = static_cast<long>(std::floor((half - y) / ps));
        const auto sn = static_cast<long>(n);
        if (col < 0 || col >= sn || row < 0 || row >= sn) {
            continue;
        }
        out.push_back({static_cast<std::uint32_t>(row * sn + col), len});
    }
    std::sort(out.begin(), out.end(), [](const Segment& a, const Segment& b) { return a.col < b.col; });
    std::size_t w = 0;
    for (std::size_t r = 0; r < out.size(); ++r) {
        if (w > 0 && out[w - 1].col == out[r].col) {
            out[w - 1].length += out[r].length;
        } else {
            out[w++] = out[r];
        }
    }
    out.resize(w);
}

double snap_trig(double v) { return std::abs(v) < 1e-12 ? 0.0 : v; }

}  // namespace

SparseOperator build_system_matrix(const Geometry& g) {
    g.validate();
    const std::size_t m = g.rays();
    std::vector<std::size_t> offsets;
    offsets.reserve(m + 1);
    offsets.push_back(0);
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
    cols.reserve(m * 2 * g.image_side);
    vals.reserve(m * 2 * g.image_side);

    std::vector<double> crossings;
    std::vector<Segment> segs;
    const double centre = 0.5 * static_cast<double>(g.n_det - 1);
    for (double deg : g.angles_deg) {
        const double th = deg * std::numbers::pi / 180.0;
        const double c = snap_trig(std::cos(th));
        const double s = snap_trig(std::sin(th));
        for (std::size_t d = 0; d < g.n_det; ++d) {
            const double offset = (static_cast<double>(d) - centre) * g.det_spacing;
            trace_ray(g, c, s, offset, crossings, segs);
            for (const auto& seg : segs) {
                cols.push_back(seg.col);
                vals.push_back(seg.length);
            }
            offsets.push_back(vals.size());
        }
    }
    return SparseOperator(m, g.pixels(), std::move(offsets), std::move(cols), std::move(vals));
}

// ---------------------------------------------------------------------------

Sinogram::Sinogram(Vector values, std::size_t n_det, std::size_t n_angles)
    : values_(std::move(values)), n_det_(n_det) {
    if (n_det == 0 || n_angles == 0 || values_.size() != n_det * n_angles) {
        throw DimensionError("Sinogram: size must equal n_det * n_angles");
    }
    angle_offsets_.resize(n_angles + 1);
    for (std::size_t l = 0; l <= n_angles; ++l) {
        angle_offsets_[l] = l * n_det;
    }
}

Sinogram::Sinogram(Vector values, std::vector<std::size_t> angle_offsets, std::size_t n_det)
    : values_(std::move(values)), angle_offsets_(std::move(angle_offsets)), n_det_(n_det) {
    if (angle_offsets_.size() < 2 || angle_offsets_.front() != 0 ||
        angle_offsets_.back() != values_.size() ||
        !std::is_sorted(angle_offsets_.begin(), angle_offsets_.end())) {
        throw DimensionError("Sinogram: invalid angle partition");
    }
}

std::span<const double> Sinogram::segment(std::size_t angle) const {
    if (angle >= n_angles()) {
        throw DimensionError("Sinogram: angle index out of range");
    }
    return std::span<const double>(values_).subspan(
        angle_offsets_[angle], angle_offsets_[angle + 1] - angle_offsets_[angle]);
}

Sinogram Sinogram::restricted(std::span<const std::size_t> kept_rows) const {
    Vector v;
    v.reserve(kept_rows.size());
    std::vector<std::size_t> offsets(n_angles() + 1, 0);
    std::size_t angle = 0;
    for (std::size_t r : kept_rows) {
        if (r >= values_.size()) {
            throw DimensionError("Sinogram::restricted: row out of range");
        }
        while (r >= angle_offsets_[angle + 1]) {
            ++angle;
        }
        v.push_back(values_[r]);
        ++offsets[angle + 1];
    }
    for (std::size_t l = 0; l < n_angles(); ++l) {
        offsets[l + 1] += offsets[l];
    }
    return Sinogram(std::move(v), std::move(offsets), n_det_);
}

Sinogram Sinogram::with_values(Vector values) const {
    if (values.size() != values_.size()) {
        throw DimensionError("Sinogram::with_values: size mismatch");
    }
    return Sinogram(std::move(values), angle_offsets_, n_det_);
}

// ---------------------------------------------------------------------------

PhantomKind parse_phantom_kind(std::string_view name) {
    if (name == "shepp-logan") return PhantomKind::SheppLogan;
    if (name == "grains") return PhantomKind::Grains;
    if (name == "disk") return PhantomKind::Disk;
    throw std::invalid_argument("unknown phantom kind '" + std::string(name) + "'");
}

std::string to_string(PhantomKind kind) {
    switch (kind) {
        case PhantomKind::SheppLogan: return "shepp-logan";
        case PhantomKind::Grains: return "grains";
        case PhantomKind::Disk: return "disk";
    }
    return "unknown";
}

namespace {

struct Ellipse {
    double value, a, b, x0, y0, phi_deg;
};

// Modified Shepp-Logan (Toft), coordinates in [-1, 1] with y up.
constexpr std::array<Ellipse, 10> kSheppLogan{{
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
}};

template <typename F>
Vector sample_unit_square(std::size_t side, F&& f) {
    Vector img(side * side);
    const double n = static_cast<double>(side);
    for (std::size_t r = 0; r < side; ++r) {
        const double y = 1.0 - (static_cast<double>(r) + 0.5) * 2.0 / n;
        for (std::size_t c = 0; c < side; ++c) {
            const double x = (static_cast<double>(c) + 0.5) * 2.0 / n - 1.0;
            img[r * side + c] = f(x, y);
        }
    }
    return img;
}

}  // namespace

Phantom make_phantom(std::size_t side, PhantomKind kind, std::uint64_t seed) {
    if (side < 2) {
        throw std::invalid_argument("make_phantom: N must be >= 2");
    }
    Phantom p;
    p.side = side;
    p.kind = kind;
    switch (kind) {
        case PhantomKind::SheppLogan:
            p.image = sample_unit_square(side, [](double x, double y) {
                double v = 0.0;
                for (const auto& e : kSheppLogan) {
                    const double phi = e.phi_deg * std::numbers::pi / 180.0;
                    const double dx = x - e.x0;
                    const double dy = y - e.y0;
                    const double u = dx * std::cos(phi) + dy * std::sin(phi);
                    const double w = -dx * std::sin(phi) + dy * std::cos(phi);
                    if ((u * u) / (e.a * e.a) + (w * w) / (e.b * e.b) <= 1.0) {
                        v += e.value;
                    }
                }
                return v;
            });
            break;
        case PhantomKind::Disk:
            p.image = sample_unit_square(side, [](double x, double y) {
                return x * x + y * y <= 0.6 * 0.6 ? 1.0 : 0.0;
            });
            break;
        case PhantomKind::Grains: {
            struct Blob {
                double x, y, sigma, amp;
            };
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            std::vector<Blob> blobs(24);
            for (auto& b : blobs) {
                const double r = 0.75 * std::sqrt(unit(rng));
                const double phi = 2.0 * std::numbers::pi * unit(rng);
                b.x = r * std::cos(phi);
                b.y = r * std::sin(phi);
                b.sigma = 0.04 + 0.10 * unit(rng);
                b.amp = 0.3 + 0.7 * unit(rng);
            }
            p.image = sample_unit_square(side, [&](double x, double y) {
                const double rr = x * x + y * y;
                if (rr > 0.9 * 0.9) {
                    return 0.0;
                }
                double v = 0.2;
                for (const auto& b : blobs) {
                    const double dx = x - b.x;
                    const double dy = y - b.y;
                    v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
                }
                return v;
            });
            break;
        }
    }
    double vmax = 0.0;
    for (auto& v : p.image) {
        v = std::max(v, 0.0);
        vmax = std::max(vmax, v);
    }
    if (vmax > 1.0) {
        for (auto& v : p.image) {
            v /= vmax;
        }
    }
    return p;
}

// ---------------------------------------------------------------------------

double relative_noise_level(std::span<const double> error, const Sinogram& clean) {
    const double nb = norm2(clean.values());
    if (nb == 0.0) {
        throw std::invalid_argument("relative_noise_level: zero clean sinogram");
    }
    return norm2(error) / nb;
}

NoiseRealization add_white_gaussian(const Sinogram& clean, double eta, std::uint64_t seed) {
    if (!(eta >= 0.0)) {
        throw std::invalid_argument("add_white_gaussian: eta must be >= 0");
    }
    NoiseRealization out;
    out.eta = eta;
    out.error.assign(clean.size(), 0.0);
    if (eta > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, eta);
        for (auto& e : out.error) {
            e = normal(rng);
        }
    }
    Vector noisy = clean.values();
    axpy(1.0, out.error, noisy);
    out.noisy = clean.with_values(std::move(noisy));
    out.rho = relative_noise_level(out.error, clean);
    return out;
}

double eta_for_relative_level(const Sinogram& clean, double rho) {
    if (!(rho >= 0.0)) {
        throw std::invalid_argument("relative noise level must be >= 0");
    }
    return rho * norm2(clean.values()) / std::sqrt(static_cast<double>(clean.size()));
}

NoiseRealization add_poisson_transmission(const Sinogram& clean, double i0, std::uint64_t seed) {
    if (!(i0 > 0.0)) {
        throw std::invalid_argument("add_poisson_transmission: I0 must be positive");
    }
    NoiseRealization out;
    std::mt19937_64 rng(seed);
    const auto& bbar = clean.values();
    Vector noisy(bbar.size());
    out.error.resize(bbar.size());
    for (std::size_t i = 0; i < bbar.size(); ++i) {
        if (bbar[i] < 0.0) {
            throw std::invalid_argument("add_poisson_transmission: negative clean value");
        }
        const double mean = i0 * std::exp(-bbar[i]);
        std::poisson_distribution<long long> poisson(mean);
        auto count = static_cast<double>(poisson(rng));
        if (count <= 0.0) {
            count = 1.0;
            ++out.clamped;
        }
        noisy[i] = -std::log(count / i0);
        out.error[i] = noisy[i] - bbar[i];
    }
    double mean_e = 0.0;
    for (double e : out.error) {
        mean_e += e;
    }
    mean_e /= static_cast<double>(out.error.size());
    double var = 0.0;
    for (double e : out.error) {
        var += (e - mean_e) * (e - mean_e);
    }
    out.eta = std::sqrt(var / static_cast<double>(std::max<std::size_t>(1, out.error.size() - 1)));
    out.noisy = clean.with_values(std::move(noisy));
    out.rho = relative_noise_level(out.error, clean);
    return out;
}

double calibrate_i0(const Sinogram& clean, double target_rho, std::uint64_t seed) {
    if (!(target_rho > 0.0 && target_rho < 1.0)) {
        throw std::invalid_argument("calibrate_i0: target rho must lie in (0, 1)");
    }
    auto rho_at = [&](double log_i0) {
        return add_poisson_transmission(clean, std::pow(10.0, log_i0), seed).rho;
    };
    // counts above 1e15 no longer fit the integer Poisson sampler reliably
    double lo = -3.0;
    double hi = 15.0;
    if (!(rho_at(lo) > target_rho && rho_at(hi) < target_rho)) {
        throw std::runtime_error("calibrate_i0: I0 in [1e-3, 1e15] does not bracket target rho");
    }
    double best = hi;
    double best_err = std::abs(rho_at(hi) - target_rho);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double r = rho_at(mid);
        const double err = std::abs(r - target_rho);
        if (err < best_err) {
            best = mid;
            best_err = err;
        }
        if (err <= 0.005 * target_rho || hi - lo < 1e-12) {
            break;
        }
        if (r > target_rho) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best_err > 0.05 * target_rho) {
        throw std::runtime_error("calibrate_i0: could not reach target rho within 5%");
    }
    return std::pow(10.0, best);
}

}  // namespace semistop
