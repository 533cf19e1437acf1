#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "semistop/ctmodel.hpp"
#include "semistop/record.hpp"
#include "semistop/solvers.hpp"
#include "semistop/stoprules.hpp"

namespace semistop {

/// Invalid configuration. line() is 0 when the problem is not tied to one
/// line of the source text.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& message, std::size_t line = 0, std::string key = "");
    std::size_t line() const { return line_; }
    const std::string& key() const { return key_; }

private:
    std::size_t line_;
    std::string key_;
};

enum class NoiseModel { None, Gaussian, Poisson };

std::string to_string(NoiseModel model);

struct ExperimentConfig {
    std::string name = "run";

    std::size_t image_side = 0;
    std::optional<std::size_t> n_det;
    double pixel_size = 1.0;
    double det_spacing = 1.0;
    std::string angles = "1:1:180";

    PhantomKind phantom = PhantomKind::SheppLogan;
    std::uint64_t phantom_seed = 0;
    /// Rescales the phantom so the largest clean line integral equals this.
    std::optional<double> attenuation_max;

    NoiseModel noise = NoiseModel::Gaussian;
    /// Relative level ||e|| / ||b_clean|| (Gaussian) or target for I0
    /// calibration (Poisson).
    std::optional<double> noise_level;
    /// Absolute Gaussian standard deviation; overrides noise_level.
    std::optional<double> noise_eta;
    /// Poisson incident count; skips calibration when set.
    std::optional<double> noise_i0;
    std::uint64_t noise_seed = 0;

    SchemeKind scheme = SchemeKind::Landweber;
    std::optional<double> omega;
    std::size_t max_iters = 100;

    std::vector<Rule> rules;
    double tau = 1.02;
    std::size_t patience = 3;
    std::size_t smooth_window = 1;
    std::size_t ncp_window = 5;
    /// Noise level used by DP, FTNL and UPRE; defaults to the simulation eta.
    std::optional<double> eta;

    TraceMethod trace = TraceMethod::Girard;
    std::size_t trace_samples = 1;
    std::uint64_t trace_seed = 0;
    Aggregate trace_aggregate = Aggregate::Mean;
    std::size_t oracle_cap = kDefaultOracleCap;

    std::filesystem::path output = "out";
    std::optional<Rule> early_stop;
    bool deterministic = false;
    bool dump_matrix = false;
    bool write_images = true;
    bool write_plots = true;

    Geometry geometry() const;
    bool needs_trace() const;
    /// Throws ConfigError on inconsistent settings.
    void validate() const;
};

/// `key = value` lines, `#` starts a comment. N is required.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Parses "start:step:stop" (degrees, inclusive).
std::vector<double> parse_angle_spec(const std::string& spec);

struct ExperimentArtifacts {
    std::filesystem::path dir;
    std::filesystem::path run_csv;
    std::filesystem::path summary;
    std::filesystem::path info;
    std::vector<std::filesystem::path> images;
    std::vector<std::filesystem::path> plots;
    std::optional<std::filesystem::path> matrix;
};

struct ProblemInfo {
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t nnz = 0;
    std::size_t removed_rows = 0;
    double eta = 0.0;
    double rho = 0.0;
    std::optional<double> i0;
    double omega = 0.0;
};

struct ExperimentResult {
    ExperimentArtifacts artifacts;
    RunRecord record;
    ProblemInfo info;
};

/// Immutable system matrices shared between runs with the same geometry.
class OperatorCache {
public:
    std::shared_ptr<const SparseOperator> get(const Geometry& g);

private:
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const SparseOperator>> cache_;
};

/// A simulated problem before any solver runs.
struct Problem {
    std::shared_ptr<const SparseOperator> full;
    SparseOperator a;
    Sinogram clean;
    NoiseRealization noise;
    Vector truth;
    std::vector<std::size_t> kept_rows;
    std::optional<double> i0;
};

Problem build_problem(const ExperimentConfig& cfg, OperatorCache* cache = nullptr);

ExperimentResult run_experiment(const ExperimentConfig& cfg, OperatorCache* cache = nullptr);

inline constexpr const char* kSummaryHeader = "rule,k_stop,value,err_at_stop,min_err,min_err_k";
std::string summary_table(const RunRecord& record);

/// A base config plus the (angles, noise_level) pairs to sweep.
struct GridConfig {
    ExperimentConfig base;
    std::vector<std::string> angles;
    std::vector<double> noise_levels;
};

/// Base keys plus `grid_angles` (specs separated by ';') and
/// `grid_noise_levels` (comma separated).
GridConfig parse_grid_config(const std::string& text);
GridConfig load_grid_config(const std::filesystem::path& path);

struct GridRun {
    std::string angles;
    double noise_level = 0.0;
    ExperimentResult result;
};

struct GridResult {
    std::vector<GridRun> runs;
    std::filesystem::path summary;
};

/// SEMISTOP_WORKERS caps the number of concurrent runs.
std::size_t grid_workers();

/// Runs the Cartesian product of angles and noise levels, one
/// subdirectory per run, and writes grid_summary.csv with one row per run.
GridResult run_grid(const GridConfig& grid, std::size_t workers = 0);

std::vector<std::string> reproduce_tags();

struct ReproduceOverrides {
    std::optional<std::filesystem::path> output;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_iters;
    bool dump_matrix = false;
    bool deterministic = false;
};

/// Canned configuration for a tag (single-run tags only).
ExperimentConfig reproduce_config(const std::string& tag);
GridConfig reproduce_grid_config();

/// Runs the canned setup for `tag` and writes note.txt next to the
/// artifacts. Returns the output directory.
std::filesystem::path reproduce(const std::string& tag, const ReproduceOverrides& overrides = {});

}  // namespace semistop
