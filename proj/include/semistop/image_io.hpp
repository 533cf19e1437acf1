#pragma once

#include <filesystem>
#include <span>

#include "semistop/ctmodel.hpp"

namespace semistop {

enum class PgmFormat { Ascii, Binary };

struct PgmImage {
    std::size_t width = 0;
    std::size_t height = 0;
    Vector values;
};

/// 16-bit PGM (P2 or P5), row-major. Values are mapped linearly from
/// [min, max] onto [0, 65535]; the range is written to "<path>.scale".
void write_pgm(const std::filesystem::path& path, std::span<const double> image,
               std::size_t width, std::size_t height, PgmFormat format = PgmFormat::Binary);

/// Reads a PGM written by write_pgm and undoes the scaling when the sidecar
/// exists.
PgmImage read_pgm(const std::filesystem::path& path);

/// One CSV row per angle, n_det columns. Rows removed from the sinogram
/// partition are written as 0.
void write_sinogram_csv(const std::filesystem::path& path, const Sinogram& sino,
                        std::span<const std::size_t> kept_rows = {});

}  // namespace semistop
