#include "semistop/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include "semistop/image_io.hpp"
#include "semistop/plots.hpp"
#include "semistop/trace.hpp"

namespace semistop {

ConfigError::ConfigError(const std::string& message, std::size_t line, std::string key)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
      line_(line),
      key_(std::move(key)) {}

std::string to_string(NoiseModel model) {
    switch (model) {
        case NoiseModel::None: return "none";
        case NoiseModel::Gaussian: return "gaussian";
        case NoiseModel::Poisson: return "poisson";
    }
    return "unknown";
}

namespace {

std::string trim(std::string_view s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

double to_double(const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
        throw std::invalid_argument("expected a number, got '" + v + "'");
    }
    return out;
}

std::uint64_t to_u64(const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw std::invalid_argument("expected a nonnegative integer, got '" + v + "'");
    }
    return out;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

bool to_bool(const std::string& v) {
    const std::string l = lower(v);
    if (l == "true" || l == "yes" || l == "on" || l == "1") return true;
    if (l == "false" || l == "no" || l == "off" || l == "0") return false;
    throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

NoiseModel parse_noise_model(const std::string& v) {
    const std::string l = lower(v);
    if (l == "none") return NoiseModel::None;
    if (l == "gaussian") return NoiseModel::Gaussian;
    if (l == "poisson") return NoiseModel::Poisson;
    throw std::invalid_argument("unknown noise model '" + v + "'");
}

std::vector<Rule> parse_rules(const std::string& v) {
    std::vector<Rule> rules;
    if (lower(v) == "none" || v.empty()) {
        return rules;
    }
    for (const auto& item : split(v, ',')) {
        const Rule r = parse_rule(item);
        if (std::find(rules.begin(), rules.end(), r) != rules.end()) {
            throw std::invalid_argument("rule '" + item + "' listed twice");
        }
        rules.push_back(r);
    }
    return rules;
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& v) {
    if (key == "name") cfg.name = v;
    else if (key == "N") {
        cfg.image_side = to_size(v);
    } else if (key == "n_det") cfg.n_det = to_size(v);
    else if (key == "pixel_size") cfg.pixel_size = to_double(v);
    else if (key == "det_spacing") cfg.det_spacing = to_double(v);
    else if (key == "angles") {
        parse_angle_spec(v);
        cfg.angles = v;
    } else if (key == "phantom") cfg.phantom = parse_phantom_kind(v);
    else if (key == "phantom_seed") cfg.phantom_seed = to_u64(v);
    else if (key == "attenuation_max") cfg.attenuation_max = to_double(v);
    else if (key == "noise") cfg.noise = parse_noise_model(v);
    else if (key == "noise_level") cfg.noise_level = to_double(v);
    else if (key == "noise_eta") cfg.noise_eta = to_double(v);
    else if (key == "noise_i0") cfg.noise_i0 = to_double(v);
    else if (key == "noise_seed") cfg.noise_seed = to_u64(v);
    else if (key == "scheme") cfg.scheme = parse_scheme_kind(lower(v));
    else if (key == "omega") {
        if (lower(v) == "auto") cfg.omega.reset();
        else cfg.omega = to_double(v);
    } else if (key == "max_iters") cfg.max_iters = to_size(v);
    else if (key == "rules") cfg.rules = parse_rules(v);
    else if (key == "tau") cfg.tau = to_double(v);
    else if (key == "patience") cfg.patience = to_size(v);
    else if (key == "smooth_window") cfg.smooth_window = to_size(v);
    else if (key == "ncp_window") cfg.ncp_window = to_size(v);
    else if (key == "eta") cfg.eta = to_double(v);
    else if (key == "trace") cfg.trace = parse_trace_method(lower(v));
    else if (key == "trace_samples") cfg.trace_samples = to_size(v);
    else if (key == "trace_seed") cfg.trace_seed = to_u64(v);
    else if (key == "trace_aggregate") {
        const std::string l = lower(v);
        if (l == "mean") cfg.trace_aggregate = Aggregate::Mean;
        else if (l == "median") cfg.trace_aggregate = Aggregate::Median;
        else throw std::invalid_argument("trace_aggregate must be mean or median");
    } else if (key == "oracle_cap") cfg.oracle_cap = to_size(v);
    else if (key == "output") cfg.output = v;
    else if (key == "early_stop") {
        if (lower(v) == "none") cfg.early_stop.reset();
        else cfg.early_stop = parse_rule(v);
    } else if (key == "deterministic") cfg.deterministic = to_bool(v);
    else if (key == "dump_matrix") cfg.dump_matrix = to_bool(v);
    else if (key == "images") cfg.write_images = to_bool(v);
    else if (key == "plots") cfg.write_plots = to_bool(v);
    else throw ConfigError("unknown key '" + key + "'", 0, key);
}

using KeyHandler = std::function<bool(const std::string& key, const std::string& value)>;

// Walks `key = value` lines; `extra` may claim keys before the common set.
ExperimentConfig parse_lines(const std::string& text, const KeyHandler& extra) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("missing key before '='", line_no);
        }
        if (!seen.insert(key).second) {
            throw ConfigError("key '" + key + "' given twice", line_no, key);
        }
        try {
            if (!extra || !extra(key, value)) {
                apply_key(cfg, key, value);
            }
        } catch (const ConfigError& e) {
            throw ConfigError(e.what(), line_no, key);
        } catch (const std::exception& e) {
            throw ConfigError("key '" + key + "': " + e.what(), line_no, key);
        }
    }
    if (!seen.count("N")) {
        throw ConfigError("missing required key 'N'", 0, "N");
    }
    return cfg;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string rule_file_name(const std::string& rule) { return lower(rule); }

}  // namespace

std::vector<double> parse_angle_spec(const std::string& spec) {
    const auto parts = split(spec, ':');
    if (parts.size() != 3) {
        throw std::invalid_argument("angle spec must be start:step:stop, got '" + spec + "'");
    }
    const double start = to_double(parts[0]);
    const double step = to_double(parts[1]);
    const double stop = to_double(parts[2]);
    if (!(step > 0.0)) {
        throw std::invalid_argument("angle step must be positive");
    }
    if (stop < start) {
        throw std::invalid_argument("angle stop must not be below start");
    }
    return angle_range(start, step, stop);
}

Geometry ExperimentConfig::geometry() const {
    Geometry g;
    g.image_side = image_side;
    g.pixel_size = pixel_size;
    g.n_det = n_det.value_or(image_side > 0 ? default_detector_count(image_side) : 0);
    g.det_spacing = det_spacing;
    g.angles_deg = parse_angle_spec(angles);
    return g;
}

bool ExperimentConfig::needs_trace() const {
    return std::any_of(rules.begin(), rules.end(), [](Rule r) {
        return r == Rule::FTNL || r == Rule::UPRE || r == Rule::GCV;
    });
}

void ExperimentConfig::validate() const {
    if (image_side == 0) {
        throw ConfigError("N must be positive", 0, "N");
    }
    try {
        geometry().validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid geometry: ") + e.what(), 0, "angles");
    }
    if (max_iters == 0) {
        throw ConfigError("max_iters must be at least 1", 0, "max_iters");
    }
    if (noise_level && !(*noise_level > 0.0 && *noise_level < 1.0)) {
        throw ConfigError("noise_level must lie in (0, 1)", 0, "noise_level");
    }
    if (noise_eta && !(*noise_eta > 0.0)) {
        throw ConfigError("noise_eta must be positive", 0, "noise_eta");
    }
    if (noise_i0 && !(*noise_i0 > 0.0)) {
        throw ConfigError("noise_i0 must be positive", 0, "noise_i0");
    }
    if (noise == NoiseModel::Gaussian && !noise_level && !noise_eta) {
        throw ConfigError("gaussian noise needs noise_level or noise_eta", 0, "noise_level");
    }
    if (noise == NoiseModel::Poisson && !noise_level && !noise_i0) {
        throw ConfigError("poisson noise needs noise_level or noise_i0", 0, "noise_level");
    }
    if (attenuation_max && !(*attenuation_max > 0.0)) {
        throw ConfigError("attenuation_max must be positive", 0, "attenuation_max");
    }
    if (omega && !(*omega > 0.0)) {
        throw ConfigError("omega must be positive", 0, "omega");
    }
    if (eta && !(*eta > 0.0)) {
        throw ConfigError("eta must be positive", 0, "eta");
    }
    const bool needs_eta = std::any_of(rules.begin(), rules.end(), [](Rule r) {
        return r == Rule::DP || r == Rule::FTNL || r == Rule::UPRE;
    });
    if (needs_eta && noise == NoiseModel::None && !eta) {
        throw ConfigError("DP, FTNL and UPRE need eta when noise = none", 0, "eta");
    }
    if (!(tau >= 1.0)) {
        throw ConfigError("tau must be >= 1", 0, "tau");
    }
    if (patience == 0) {
        throw ConfigError("patience must be at least 1", 0, "patience");
    }
    if (smooth_window % 2 == 0) {
        throw ConfigError("smooth_window must be odd", 0, "smooth_window");
    }
    if (ncp_window % 2 == 0) {
        throw ConfigError("ncp_window must be odd", 0, "ncp_window");
    }
    if (trace_samples == 0) {
        throw ConfigError("trace_samples must be at least 1", 0, "trace_samples");
    }
    if (needs_trace() && scheme == SchemeKind::Sirt && trace != TraceMethod::Girard) {
        throw ConfigError("only the girard trace estimator supports the sirt scheme", 0, "trace");
    }
    if (early_stop && std::find(rules.begin(), rules.end(), *early_stop) == rules.end()) {
        throw ConfigError("early_stop names a rule that is not enabled", 0, "early_stop");
    }
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg = parse_lines(text, {});
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_file(path));
}

// ---------------------------------------------------------------------------

std::shared_ptr<const SparseOperator> OperatorCache::get(const Geometry& g) {
    std::ostringstream key;
    key << g.image_side << '|' << num(g.pixel_size) << '|' << g.n_det << '|' << num(g.det_spacing);
    for (double a : g.angles_deg) {
        key << '|' << num(a);
    }
    {
        std::lock_guard lock(mutex_);
        const auto it = cache_.find(key.str());
        if (it != cache_.end()) {
            return it->second;
        }
    }
    auto op = std::make_shared<const SparseOperator>(build_system_matrix(g));
    std::lock_guard lock(mutex_);
    return cache_.emplace(key.str(), std::move(op)).first->second;
}

Problem build_problem(const ExperimentConfig& cfg, OperatorCache* cache) {
    cfg.validate();
    const Geometry g = cfg.geometry();
    Problem p;
    p.full = cache ? cache->get(g) : std::make_shared<const SparseOperator>(build_system_matrix(g));
    p.truth = make_phantom(cfg.image_side, cfg.phantom, cfg.phantom_seed).image;
    Vector b = p.full->apply(p.truth);
    if (cfg.attenuation_max) {
        const double peak = *std::max_element(b.begin(), b.end());
        if (!(peak > 0.0)) {
            throw ConfigError("attenuation_max needs a phantom with nonzero projections", 0,
                              "attenuation_max");
        }
        const double s = *cfg.attenuation_max / peak;
        for (auto& v : p.truth) v *= s;
        for (auto& v : b) v *= s;
    }
    const Sinogram clean_full(b, g.n_det, g.angles_deg.size());
    auto filtered = remove_zero_rows(*p.full, b);
    if (filtered.empty) {
        throw ConfigError("no ray intersects the image", 0, "angles");
    }
    p.a = std::move(filtered.op);
    p.kept_rows = std::move(filtered.kept_rows);
    p.clean = clean_full.restricted(p.kept_rows);

    switch (cfg.noise) {
        case NoiseModel::None:
            p.noise.noisy = p.clean;
            p.noise.error.assign(p.clean.size(), 0.0);
            break;
        case NoiseModel::Gaussian: {
            const double eta = cfg.noise_eta ? *cfg.noise_eta
                                             : eta_for_relative_level(p.clean, *cfg.noise_level);
            p.noise = add_white_gaussian(p.clean, eta, cfg.noise_seed);
            break;
        }
        case NoiseModel::Poisson: {
            const double i0 =
                cfg.noise_i0 ? *cfg.noise_i0 : calibrate_i0(p.clean, *cfg.noise_level, cfg.noise_seed);
            p.noise = add_poisson_transmission(p.clean, i0, cfg.noise_seed);
            p.i0 = i0;
            break;
        }
    }
    return p;
}

std::string summary_table(const RunRecord& record) {
    std::ostringstream os;
    os << kSummaryHeader << '\n';
    const auto kmin = record.min_error_k();
    const std::string min_err = kmin ? num(record.error_norms[*kmin - 1]) : "";
    const std::string min_k = kmin ? std::to_string(*kmin) : "";
    for (const auto& d : record.decisions) {
        os << d.rule << ',';
        if (d.fired && d.k_stop) {
            os << *d.k_stop << ',' << num(d.value_at_stop) << ',';
            if (!record.error_norms.empty()) {
                os << num(record.error_norms[*d.k_stop - 1]);
            }
        } else {
            os << ",,";
        }
        os << ',' << min_err << ',' << min_k << '\n';
    }
    return os.str();
}

namespace {

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

std::unique_ptr<Observer> make_rule_observer(Rule rule, const ExperimentConfig& cfg, double eta,
                                             const TraceSource* trace,
                                             const Sinogram& sino) {
    RuleConfig rc;
    rc.tau = cfg.tau;
    rc.patience = cfg.patience;
    rc.smooth_window = rule == Rule::NCP ? cfg.ncp_window : cfg.smooth_window;
    switch (rule) {
        case Rule::DP: return std::make_unique<ThresholdRuleObserver>(eta, cfg.tau);
        case Rule::FTNL: return std::make_unique<ThresholdRuleObserver>(eta, cfg.tau, trace);
        case Rule::UPRE:
            return std::make_unique<CurveRuleObserver>(CurveRuleObserver::upre(eta, *trace, rc));
        case Rule::GCV:
            return std::make_unique<CurveRuleObserver>(CurveRuleObserver::gcv(*trace, rc));
        case Rule::NCP:
            return std::make_unique<CurveRuleObserver>(
                CurveRuleObserver::ncp(sino.angle_offsets(), rc));
    }
    throw std::logic_error("unhandled rule");
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, OperatorCache* cache) {
    Problem p = build_problem(cfg, cache);

    const IterationScheme scheme = cfg.scheme == SchemeKind::Landweber
                                       ? make_landweber(p.a, cfg.omega)
                                       : make_sirt(p.a, cfg.omega.value_or(1.0));
    const double eta = cfg.eta.value_or(p.noise.eta);

    std::vector<std::unique_ptr<Observer>> owned;
    const TraceSource* trace = nullptr;
    if (cfg.needs_trace()) {
        if (cfg.trace == TraceMethod::Exact) {
            if (cfg.scheme != SchemeKind::Landweber) {
                throw ConfigError("the exact trace oracle needs the landweber scheme", 0, "trace");
            }
            Spectrum spectrum;
            try {
                spectrum = svd_spectrum(p.a, cfg.oracle_cap);
            } catch (const OracleTooLarge& e) {
                throw ConfigError(e.what(), 0, "oracle_cap");
            }
            auto obs = std::make_unique<ExactTraceObserver>(std::move(spectrum), scheme.omega);
            trace = obs.get();
            owned.push_back(std::move(obs));
        } else {
            auto obs = std::make_unique<ShadowTraceEstimator>(cfg.trace, cfg.trace_samples,
                                                              cfg.trace_seed, cfg.trace_aggregate);
            trace = obs.get();
            owned.push_back(std::move(obs));
        }
    }
    const Observer* early = nullptr;
    for (Rule r : cfg.rules) {
        owned.push_back(make_rule_observer(r, cfg, eta, trace, p.noise.noisy));
        if (cfg.early_stop && *cfg.early_stop == r) {
            early = owned.back().get();
        }
    }
    std::vector<Observer*> observers;
    for (auto& o : owned) {
        observers.push_back(o.get());
    }

    RunOptions options;
    options.max_iters = cfg.max_iters;
    options.early_stop = early;
    ExperimentResult result;
    result.record = run(p.a, p.noise.noisy.values(), scheme, options, observers, p.truth);

    auto& info = result.info;
    info.m = p.a.rows();
    info.n = p.a.cols();
    info.nnz = p.a.nnz();
    info.removed_rows = p.full->rows() - p.a.rows();
    info.eta = p.noise.eta;
    info.rho = p.noise.rho;
    info.i0 = p.i0;
    info.omega = scheme.omega;

    auto& art = result.artifacts;
    art.dir = cfg.output;
    std::filesystem::create_directories(art.dir);
    const RunRecord& rec = result.record;

    art.run_csv = art.dir / "run.csv";
    write_run_csv(rec, art.run_csv);
    art.summary = art.dir / "summary.csv";
    write_text(art.summary, summary_table(rec));

    std::ostringstream os;
    os << "name = " << cfg.name << '\n'
       << "N = " << cfg.image_side << '\n'
       << "n_det = " << cfg.geometry().n_det << '\n'
       << "angles = " << cfg.angles << '\n'
       << "phantom = " << to_string(cfg.phantom) << '\n'
       << "noise = " << to_string(cfg.noise) << '\n'
       << "scheme = " << to_string(cfg.scheme) << '\n'
       << "m = " << info.m << '\n'
       << "n = " << info.n << '\n'
       << "nnz = " << info.nnz << '\n'
       << "removed_rows = " << info.removed_rows << '\n'
       << "eta = " << num(info.eta) << '\n'
       << "rule_eta = " << num(eta) << '\n'
       << "rho = " << num(info.rho) << '\n';
    if (info.i0) {
        os << "i0 = " << num(*info.i0) << '\n' << "clamped = " << p.noise.clamped << '\n';
    }
    os << "omega = " << num(info.omega) << '\n' << "iterations = " << rec.iterations() << '\n';
    if (const auto k = rec.min_error_k()) {
        os << "min_err_k = " << *k << '\n' << "min_err = " << num(rec.error_norms[*k - 1]) << '\n';
    }
    art.info = art.dir / "info.txt";
    write_text(art.info, os.str());

    if (cfg.write_images) {
        const std::size_t side = cfg.image_side;
        std::vector<std::pair<std::string, std::size_t>> wanted;
        for (const auto& d : rec.decisions) {
            const bool fired = d.fired && d.k_stop;
            wanted.emplace_back("recon_" + rule_file_name(d.rule) + (fired ? "" : "_nofire"),
                                fired ? *d.k_stop : rec.iterations());
        }
        if (const auto k = rec.min_error_k()) {
            wanted.emplace_back("recon_minerr", *k);
        }
        std::vector<std::size_t> ks;
        for (const auto& w : wanted) {
            ks.push_back(w.second);
        }
        const auto iterates = iterates_at(p.a, p.noise.noisy.values(), scheme, ks);
        for (std::size_t i = 0; i < wanted.size(); ++i) {
            const auto path =
                art.dir / (wanted[i].first + "_k" + std::to_string(wanted[i].second) + ".pgm");
            write_pgm(path, iterates[i], side, side);
            art.images.push_back(path);
        }
        const auto truth_path = art.dir / "phantom.pgm";
        write_pgm(truth_path, p.truth, side, side);
        art.images.push_back(truth_path);
        write_sinogram_csv(art.dir / "sinogram.csv", p.noise.noisy, p.kept_rows);
    }
    if (cfg.write_plots) {
        art.plots = emit_plots(rec, art.dir);
    }
    if (cfg.dump_matrix) {
        art.matrix = art.dir / "system_matrix.bin";
        write_matrix_binary(*p.full, *art.matrix);
    }
    return result;
}

// ---------------------------------------------------------------------------

GridConfig parse_grid_config(const std::string& text) {
    GridConfig grid;
    grid.base = parse_lines(text, [&](const std::string& key, const std::string& value) {
        if (key == "grid_angles") {
            for (const auto& spec : split(value, ';')) {
                parse_angle_spec(spec);
                grid.angles.push_back(spec);
            }
            return true;
        }
        if (key == "grid_noise_levels") {
            for (const auto& item : split(value, ',')) {
                grid.noise_levels.push_back(to_double(item));
            }
            return true;
        }
        return false;
    });
    if (grid.angles.empty()) {
        grid.angles.push_back(grid.base.angles);
    }
    if (grid.noise_levels.empty()) {
        if (!grid.base.noise_level) {
            throw ConfigError("grid needs grid_noise_levels or noise_level", 0, "grid_noise_levels");
        }
        grid.noise_levels.push_back(*grid.base.noise_level);
    }
    for (double level : grid.noise_levels) {
        ExperimentConfig probe = grid.base;
        probe.noise_level = level;
        probe.noise_eta.reset();
        probe.noise_i0.reset();
        probe.validate();
    }
    return grid;
}

GridConfig load_grid_config(const std::filesystem::path& path) {
    return parse_grid_config(read_file(path));
}

std::size_t grid_workers() {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SEMISTOP_WORKERS")) {
        try {
            const std::size_t w = to_size(trim(env));
            if (w >= 1) {
                return w;
            }
        } catch (const std::exception&) {
        }
        std::fprintf(stderr, "warning: ignoring invalid SEMISTOP_WORKERS='%s'\n", env);
    }
    return hw;
}

GridResult run_grid(const GridConfig& grid, std::size_t workers) {
    if (workers == 0) {
        workers = grid_workers();
    }
    std::vector<ExperimentConfig> configs;
    GridResult result;
    for (const auto& angles : grid.angles) {
        for (double level : grid.noise_levels) {
            ExperimentConfig cfg = grid.base;
            cfg.angles = angles;
            cfg.noise_level = level;
            cfg.noise_eta.reset();
            cfg.noise_i0.reset();
            char dir[64];
            std::snprintf(dir, sizeof dir, "run_%02zu", configs.size() + 1);
            cfg.output = grid.base.output / dir;
            cfg.name = grid.base.name + "/" + dir;
            configs.push_back(cfg);
            result.runs.push_back({angles, level, {}});
        }
    }

    OperatorCache cache;
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(configs.size());
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                result.runs[i].result = run_experiment(configs[i], &cache);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::min(workers, configs.size());
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n_threads; ++t) {
        threads.emplace_back(worker);
    }
    worker();
    for (auto& t : threads) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }

    std::ostringstream os;
    os << "run,angles,noise_level,rho,iterations,min_err_k,min_err";
    for (Rule r : grid.base.rules) {
        const std::string name = rule_file_name(to_string(r));
        os << ',' << name << "_k," << name << "_err," << name << "_ratio";
    }
    os << '\n';
    for (std::size_t i = 0; i < result.runs.size(); ++i) {
        const auto& run = result.runs[i];
        const auto& rec = run.result.record;
        const auto kmin = rec.min_error_k();
        const double min_err = kmin ? rec.error_norms[*kmin - 1] : 0.0;
        os << i + 1 << ',' << run.angles << ',' << num(run.noise_level) << ','
           << num(run.result.info.rho) << ',' << rec.iterations() << ','
           << (kmin ? std::to_string(*kmin) : "") << ',' << (kmin ? num(min_err) : "");
        for (Rule r : grid.base.rules) {
            const auto* d = rec.decision(to_string(r));
            if (d && d->fired && d->k_stop && kmin) {
                const double err = rec.error_norms[*d->k_stop - 1];
                os << ',' << *d->k_stop << ',' << num(err) << ',' << num(err / min_err);
            } else {
                os << ",,,";
            }
        }
        os << '\n';
    }
    std::filesystem::create_directories(grid.base.output);
    result.summary = grid.base.output / "grid_summary.csv";
    write_text(result.summary, os.str());
    return result;
}

}  // namespace semistop
