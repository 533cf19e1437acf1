#include "semistop/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace semistop {

namespace {

constexpr double kWidth = 760.0;
constexpr double kPanelHeight = 300.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 170.0;
constexpr double kTop = 36.0;
constexpr double kBottom = 44.0;
constexpr double kHeading = 28.0;
constexpr std::size_t kMaxPoints = 3000;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    bool log = false;

    double map(double v) const {
        const double t = log ? std::log10(v) : v;
        return (t - lo) / (hi - lo);
    }
};

Axis y_axis(const PlotPanel& panel) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    bool positive = true;
    for (const auto& s : panel.series) {
        for (double v : s.values) {
            if (!std::isfinite(v)) {
                continue;
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            positive = positive && v > 0.0;
        }
    }
    Axis ax;
    if (!std::isfinite(lo)) {
        return ax;
    }
    ax.log = panel.log_y && positive;
    if (ax.log) {
        lo = std::log10(lo);
        hi = std::log10(hi);
    }
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
        const double pad = ax.log ? 0.5 : std::max(1.0, std::abs(hi)) * 0.05;
        lo -= pad;
        hi += pad;
    } else {
        const double pad = 0.04 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
    ax.lo = lo;
    ax.hi = hi;
    return ax;
}

std::vector<double> y_ticks(const Axis& ax) {
    std::vector<double> ticks;
    if (ax.log) {
        const int a = static_cast<int>(std::ceil(ax.lo));
        const int b = static_cast<int>(std::floor(ax.hi));
        const int stride = std::max(1, (b - a + 1) / 6 + 1);
        for (int e = a; e <= b; e += stride) {
            ticks.push_back(std::pow(10.0, e));
        }
        if (ticks.empty()) {
            ticks.push_back(std::pow(10.0, 0.5 * (ax.lo + ax.hi)));
        }
        return ticks;
    }
    for (int i = 0; i <= 4; ++i) {
        ticks.push_back(ax.lo + (ax.hi - ax.lo) * i / 4.0);
    }
    return ticks;
}

void render_panel(std::ostringstream& os, const PlotPanel& panel, double top) {
    std::size_t kmax = 1;
    for (const auto& s : panel.series) {
        kmax = std::max(kmax, s.values.size());
    }
    const double w = kWidth - kLeft - kRight;
    const double h = kPanelHeight - kTop - kBottom;
    const double y0 = top + kTop;
    const Axis ax = y_axis(panel);
    auto xpos = [&](double k) {
        return kLeft + (kmax > 1 ? (k - 1.0) / static_cast<double>(kmax - 1) : 0.5) * w;
    };
    auto ypos = [&](double v) { return y0 + h - ax.map(v) * h; };

    os << "<g>\n";
    os << "<text x=\"" << px(kLeft) << "\" y=\"" << px(top + 22) << "\" font-size=\"14\">"
       << escape(panel.title) << "</text>\n";
    os << "<rect x=\"" << px(kLeft) << "\" y=\"" << px(y0) << "\" width=\"" << px(w)
       << "\" height=\"" << px(h) << "\" fill=\"none\" stroke=\"#444\"/>\n";

    for (double t : y_ticks(ax)) {
        const double y = ypos(t);
        os << "<line x1=\"" << px(kLeft - 4) << "\" y1=\"" << px(y) << "\" x2=\"" << px(kLeft + w)
           << "\" y2=\"" << px(y) << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << px(kLeft - 6) << "\" y=\"" << px(y + 4)
           << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(t) << "</text>\n";
    }
    for (int i = 0; i <= 4; ++i) {
        const double k = 1.0 + (static_cast<double>(kmax) - 1.0) * i / 4.0;
        const double x = xpos(k);
        os << "<text x=\"" << px(x) << "\" y=\"" << px(y0 + h + 16)
           << "\" font-size=\"11\" text-anchor=\"middle\">" << fmt(std::round(k)) << "</text>\n";
    }
    os << "<text x=\"" << px(kLeft + w / 2) << "\" y=\"" << px(y0 + h + 34)
       << "\" font-size=\"12\" text-anchor=\"middle\">iteration k</text>\n";

    const std::size_t stride = std::max<std::size_t>(1, kmax / kMaxPoints);
    for (const auto& s : panel.series) {
        std::string points;
        auto flush = [&] {
            if (!points.empty()) {
                os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
                   << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"" << points
                   << "\"/>\n";
                points.clear();
            }
        };
        for (std::size_t i = 0; i < s.values.size(); i += stride) {
            const double v = s.values[i];
            if (!std::isfinite(v) || (ax.log && v <= 0.0)) {
                flush();
                continue;
            }
            points += px(xpos(static_cast<double>(i + 1))) + "," + px(ypos(v)) + " ";
        }
        flush();
    }

    for (const auto& m : panel.markers) {
        if (m.k < 1 || m.k > kmax) {
            continue;
        }
        const double x = xpos(static_cast<double>(m.k));
        os << "<line x1=\"" << px(x) << "\" y1=\"" << px(y0) << "\" x2=\"" << px(x) << "\" y2=\""
           << px(y0 + h) << "\" stroke=\"" << m.color << "\" stroke-dasharray=\"3,3\"/>\n";
    }

    double ly = y0 + 10;
    for (const auto& s : panel.series) {
        if (s.name.empty()) {
            continue;
        }
        os << "<line x1=\"" << px(kLeft + w + 12) << "\" y1=\"" << px(ly) << "\" x2=\""
           << px(kLeft + w + 32) << "\" y2=\"" << px(ly) << "\" stroke=\"" << s.color
           << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
        os << "<text x=\"" << px(kLeft + w + 36) << "\" y=\"" << px(ly + 4) << "\" font-size=\"11\">"
           << escape(s.name) << "</text>\n";
        ly += 16;
    }
    for (const auto& m : panel.markers) {
        os << "<text x=\"" << px(kLeft + w + 12) << "\" y=\"" << px(ly + 4)
           << "\" font-size=\"11\" fill=\"" << m.color << "\">" << escape(m.label)
           << " k=" << m.k << "</text>\n";
        ly += 16;
    }
    os << "</g>\n";
}

PlotPanel error_panel(const RunRecord& record, std::vector<PlotMarker> markers) {
    PlotPanel p;
    p.title = "reconstruction error ||x_k - x_true||";
    p.series.push_back({"error", record.error_norms, "#2ca02c", false});
    if (const auto k = record.min_error_k()) {
        markers.push_back({*k, "min error", "#2ca02c"});
    }
    p.markers = std::move(markers);
    return p;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

}  // namespace

std::string render_svg(const std::vector<PlotPanel>& panels, const std::string& heading) {
    const double head = heading.empty() ? 0.0 : kHeading;
    const double height = head + kPanelHeight * static_cast<double>(std::max<std::size_t>(1, panels.size()));
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(kWidth) << "\" height=\""
       << px(height) << "\" viewBox=\"0 0 " << px(kWidth) << " " << px(height)
       << "\" font-family=\"sans-serif\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!heading.empty()) {
        os << "<text x=\"" << px(kWidth / 2) << "\" y=\"20\" font-size=\"16\" text-anchor=\"middle\">"
           << escape(heading) << "</text>\n";
    }
    for (std::size_t i = 0; i < panels.size(); ++i) {
        render_panel(os, panels[i], head + kPanelHeight * static_cast<double>(i));
    }
    os << "</svg>\n";
    return os.str();
}

std::vector<std::filesystem::path> emit_plots(const RunRecord& record,
                                              const std::filesystem::path& dir) {
    if (record.iterations() == 0) {
        throw std::invalid_argument("emit_plots: empty run record");
    }
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;

    if (!record.error_norms.empty()) {
        const auto path = dir / "error.svg";
        write_text(path, render_svg({error_panel(record, {})}, "error history"));
        paths.push_back(path);
    }

    for (const auto& d : record.decisions) {
        std::vector<PlotMarker> markers;
        if (d.k_stop) {
            markers.push_back({*d.k_stop, d.rule + " stop", "#d62728"});
        }
        PlotPanel top;
        if (d.rule == "DP" || d.rule == "FTNL") {
            top.title = "residual norm and " + d.rule + " threshold";
            top.series.push_back({"||b - A x_k||", record.residual_norms, "#1f77b4", false});
            const auto it = record.rule_series.find(d.rule + "_threshold");
            if (it != record.rule_series.end()) {
                top.series.push_back({d.rule + " threshold", it->second, "#ff7f0e", true});
            }
        } else {
            const char* key = d.rule == "UPRE" ? "U" : d.rule == "GCV" ? "G" : "N";
            const auto it = record.rule_series.find(key);
            top.title = d.rule + " curve";
            if (it != record.rule_series.end()) {
                top.series.push_back({key, it->second, "#1f77b4", false});
            }
        }
        top.markers = markers;
        std::vector<PlotPanel> panels{top};
        if (!record.error_norms.empty()) {
            panels.push_back(error_panel(record, markers));
        }
        std::string name = d.rule;
        std::transform(name.begin(), name.end(), name.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        const auto path = dir / (name + ".svg");
        write_text(path, render_svg(panels, d.rule + " stopping rule"));
        paths.push_back(path);
    }
    return paths;
}

}  // namespace semistop
