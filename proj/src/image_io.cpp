#include "semistop/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

namespace semistop {

namespace {

std::filesystem::path sidecar(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".scale");
}

}  // namespace

void write_pgm(const std::filesystem::path& path, std::span<const double> image,
               std::size_t width, std::size_t height, PgmFormat format) {
    if (image.size() != width * height || image.empty()) {
        throw DimensionError("write_pgm: image size must equal width * height");
    }
    const auto [lo_it, hi_it] = std::minmax_element(image.begin(), image.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    const double range = hi > lo ? hi - lo : 1.0;

    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    os << (format == PgmFormat::Ascii ? "P2" : "P5") << '\n'
       << width << ' ' << height << '\n'
       << 65535 << '\n';
    for (std::size_t i = 0; i < image.size(); ++i) {
        const auto q = static_cast<std::uint16_t>(
            std::lround(std::clamp((image[i] - lo) / range, 0.0, 1.0) * 65535.0));
        if (format == PgmFormat::Ascii) {
            os << q << (((i + 1) % width == 0) ? '\n' : ' ');
        } else {
            // 16-bit PGM samples are big-endian
            const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
            os.write(bytes, 2);
        }
    }

    std::ofstream sc(sidecar(path));
    sc.precision(17);
    sc << "min " << lo << "\nmax " << hi << '\n';
}

PgmImage read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::string magic;
    PgmImage img;
    unsigned maxval = 0;
    is >> magic >> img.width >> img.height >> maxval;
    if ((magic != "P2" && magic != "P5") || maxval == 0 || maxval > 65535) {
        throw std::runtime_error("read_pgm: unsupported header in " + path.string());
    }
    is.get();
    img.values.resize(img.width * img.height);
    for (auto& v : img.values) {
        unsigned q = 0;
        if (magic == "P2") {
            is >> q;
        } else if (maxval > 255) {
            unsigned char b[2];
            is.read(reinterpret_cast<char*>(b), 2);
            q = (static_cast<unsigned>(b[0]) << 8) | b[1];
        } else {
            unsigned char b = 0;
            is.read(reinterpret_cast<char*>(&b), 1);
            q = b;
        }
        if (!is) {
            throw std::runtime_error("read_pgm: truncated pixel data");
        }
        v = static_cast<double>(q) / static_cast<double>(maxval);
    }
    std::ifstream sc(sidecar(path));
    std::string key;
    double lo = 0.0;
    double hi = 1.0;
    if (sc >> key >> lo >> key >> hi) {
        const double range = hi > lo ? hi - lo : 1.0;
        for (auto& v : img.values) {
            v = lo + v * range;
        }
    }
    return img;
}

void write_sinogram_csv(const std::filesystem::path& path, const Sinogram& sino,
                        std::span<const std::size_t> kept_rows) {
    const std::size_t n_det = sino.n_det();
    const std::size_t n_angles = sino.n_angles();
    Vector full(n_det * n_angles, 0.0);
    if (kept_rows.empty()) {
        if (sino.size() != full.size()) {
            throw DimensionError("write_sinogram_csv: partial sinogram needs its kept row list");
        }
        full = sino.values();
    } else {
        if (kept_rows.size() != sino.size()) {
            throw DimensionError("write_sinogram_csv: kept row list does not match sinogram");
        }
        for (std::size_t i = 0; i < kept_rows.size(); ++i) {
            full.at(kept_rows[i]) = sino.values()[i];
        }
    }
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    os.precision(12);
    for (std::size_t l = 0; l < n_angles; ++l) {
        for (std::size_t d = 0; d < n_det; ++d) {
            os << full[l * n_det + d] << (d + 1 == n_det ? '\n' : ',');
        }
    }
}

}  // namespace semistop
