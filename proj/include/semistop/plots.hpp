#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "semistop/record.hpp"

namespace semistop {

/// A curve over k = 1..len(values).
struct PlotSeries {
    std::string name;
    Vector values;
    std::string color = "#1f77b4";
    bool dashed = false;
};

struct PlotMarker {
    std::size_t k = 0;
    std::string label;
    std::string color = "#d62728";
};

struct PlotPanel {
    std::string title;
    std::vector<PlotSeries> series;
    std::vector<PlotMarker> markers;
    /// Falls back to a linear axis if any plotted value is <= 0.
    bool log_y = true;
};

/// Panels stacked vertically in one standalone SVG document.
std::string render_svg(const std::vector<PlotPanel>& panels, const std::string& heading = "");

/// error.svg plus one <rule>.svg per decision in the record. Returns the
/// written paths.
std::vector<std::filesystem::path> emit_plots(const RunRecord& record,
                                              const std::filesystem::path& dir);

}  // namespace semistop
