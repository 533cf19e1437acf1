#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semistop/linops.hpp"

namespace semistop {

/// Parallel-beam scan of an N x N pixel image centred at the origin.
///
/// Ray d at angle theta runs along (cos theta, sin theta) at signed offset
/// s_d = (d - (n_det - 1) / 2) * det_spacing along (-sin theta, cos theta).
/// Pixels are stored row-major with row 0 at the top (largest y).
struct Geometry {
    std::size_t image_side = 0;
    double pixel_size = 1.0;
    std::size_t n_det = 0;
    double det_spacing = 1.0;
    std::vector<double> angles_deg;

    std::size_t pixels() const { return image_side * image_side; }
    std::size_t rays() const { return n_det * angles_deg.size(); }
    void validate() const;
};

/// round(sqrt(2) * N): 91 for N = 64, 362 for N = 256.
std::size_t default_detector_count(std::size_t image_side);

/// Inclusive arithmetic range "start:step:stop" in degrees.
std::vector<double> angle_range(double start, double step, double stop);

/// Siddon ray tracing: row (l * n_det + d) holds intersection lengths of
/// ray d at angle l with every pixel.
SparseOperator build_system_matrix(const Geometry& g);

/// Angle-major measurement vector. Segment l (rows angle_offsets[l] up to
/// angle_offsets[l+1]) is the projection at angle l. Segments have n_det
/// entries unless zero rows were removed.
class Sinogram {
public:
    Sinogram() = default;
    Sinogram(Vector values, std::size_t n_det, std::size_t n_angles);
    Sinogram(Vector values, std::vector<std::size_t> angle_offsets, std::size_t n_det);

    const Vector& values() const { return values_; }
    Vector& values() { return values_; }
    std::size_t size() const { return values_.size(); }
    std::size_t n_det() const { return n_det_; }
    std::size_t n_angles() const { return angle_offsets_.size() - 1; }
    const std::vector<std::size_t>& angle_offsets() const { return angle_offsets_; }
    std::span<const double> segment(std::size_t angle) const;

    /// Keeps only the listed rows (ascending) and rebuilds the partition.
    Sinogram restricted(std::span<const std::size_t> kept_rows) const;
    Sinogram with_values(Vector values) const;

private:
    Vector values_;
    std::vector<std::size_t> angle_offsets_{0};
    std::size_t n_det_ = 0;
};

enum class PhantomKind { SheppLogan, Grains, Disk };

PhantomKind parse_phantom_kind(std::string_view name);
std::string to_string(PhantomKind kind);

struct Phantom {
    Vector image;
    std::size_t side = 0;
    PhantomKind kind = PhantomKind::Disk;
};

/// Deterministic in (side, kind, seed); values lie in [0, 1].
Phantom make_phantom(std::size_t side, PhantomKind kind, std::uint64_t seed = 0);

struct NoiseRealization {
    Sinogram noisy;
    Vector error;
    double eta = 0.0;
    double rho = 0.0;
    /// Poisson rays whose count was zero and got clamped to one photon.
    std::size_t clamped = 0;
};

double relative_noise_level(std::span<const double> error, const Sinogram& clean);

NoiseRealization add_white_gaussian(const Sinogram& clean, double eta, std::uint64_t seed);

/// eta for which the expected relative noise level equals rho.
double eta_for_relative_level(const Sinogram& clean, double rho);

/// I_i ~ Poisson(I0 exp(-b_i)), b_i = -log(I_i / I0). eta is set to the
/// empirical standard deviation of the error.
NoiseRealization add_poisson_transmission(const Sinogram& clean, double i0, std::uint64_t seed);

/// Bisection on log10(I0) until the realized rho is within 5% (relative) of
/// the target.
double calibrate_i0(const Sinogram& clean, double target_rho, std::uint64_t seed);

}  // namespace semistop
