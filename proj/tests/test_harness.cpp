#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "semistop/harness.hpp"
#include "semistop/plots.hpp"

using namespace semistop;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("semistop_harness_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

// Minimal XML well-formedness: balanced, properly nested element tags and
// quoted attributes.
bool well_formed_xml(const std::string& doc) {
    std::vector<std::string> stack;
    std::size_t i = 0;
    bool root_seen = false;
    while ((i = doc.find('<', i)) != std::string::npos) {
        const std::size_t end = doc.find('>', i);
        if (end == std::string::npos) return false;
        std::string tag = doc.substr(i + 1, end - i - 1);
        i = end + 1;
        if (tag.empty()) return false;
        if (tag[0] == '?' || tag[0] == '!') continue;
        std::size_t quotes = 0;
        for (char c : tag) quotes += c == '"';
        if (quotes % 2 != 0) return false;
        if (tag[0] == '/') {
            if (stack.empty() || stack.back() != tag.substr(1)) return false;
            stack.pop_back();
            continue;
        }
        const bool self_closing = tag.back() == '/';
        const std::string name = tag.substr(0, tag.find_first_of(" /\n"));
        if (stack.empty() && root_seen) return false;
        root_seen = true;
        if (!self_closing) stack.push_back(name);
    }
    return root_seen && stack.empty();
}

const char* kSmall = R"(# tiny problem
N = 24
angles = 6:6:180
noise = gaussian
noise_level = 0.03
noise_seed = 4
rules = dp, ftnl, upre, gcv, ncp
trace = girard
trace_samples = 2
max_iters = 120
)";

}  // namespace

TEST_CASE("config parsing") {
    auto cfg = parse_config("N = 64\nangles = 3:3:180\nnoise_level = 0.01\n");
    CHECK(cfg.geometry().angles_deg.size() == 60);
    CHECK(cfg.geometry().n_det == 91);
    cfg = parse_config("N = 64\nangles = 8:8:180 # under-determined\nnoise_level = 0.01\n");
    CHECK(cfg.geometry().angles_deg.size() == 22);
    CHECK(cfg.noise_seed == 0);
    CHECK(cfg.phantom_seed == 0);
    CHECK(cfg.trace_seed == 0);

    cfg = parse_config(kSmall);
    CHECK(cfg.rules.size() == 5);
    CHECK(cfg.trace_samples == 2);
    CHECK(cfg.tau == 1.02);
    CHECK(cfg.ncp_window == 5);

    try {
        parse_config("angles = 1:1:180\nnoise_level = 0.01\n");
        FAIL("missing N accepted");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "N");
        CHECK(std::string(e.what()).find("N") != std::string::npos);
    }
    try {
        parse_config("N = 16\nnoise_level = 0.01\nbogus = 3\n");
        FAIL("unknown key accepted");
    } catch (const ConfigError& e) {
        CHECK(e.line() == 3);
        CHECK(e.key() == "bogus");
    }
    try {
        parse_config("N = 16\nnoise_level = 0.01\nmax_iters = many\n");
        FAIL("bad value accepted");
    } catch (const ConfigError& e) {
        CHECK(e.line() == 3);
        CHECK(e.key() == "max_iters");
    }
    CHECK_THROWS_AS(parse_config("N = 16\nN = 17\nnoise_level = 0.01\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("N = 16\nnoise_level = 0.01\njust words\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("N = 16\nangles = 1:180\nnoise_level = 0.01\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("N = 16\nnoise = gaussian\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("N = 16\nnoise_level = 0.01\nscheme = sirt\nrules = gcv\ntrace = sdp\n"),
                    ConfigError);
    CHECK_THROWS_AS(parse_config("N = 16\nnoise_level = 0.01\nrules = dp\nearly_stop = ncp\n"),
                    ConfigError);
    CHECK_THROWS_AS(parse_config("N = 16\nnoise = none\nrules = dp\n"), ConfigError);
    CHECK_NOTHROW(parse_config("N = 16\nnoise = none\nrules = gcv, ncp\n"));
}

TEST_CASE("run_experiment writes complete artifacts") {
    auto cfg = parse_config(kSmall);
    cfg.output = scratch_dir("run");
    const auto result = run_experiment(cfg);
    const auto& art = result.artifacts;
    CHECK(std::filesystem::exists(art.run_csv));
    CHECK(std::filesystem::exists(art.summary));
    CHECK(std::filesystem::exists(art.info));
    for (const auto& p : art.images) CHECK(std::filesystem::exists(p));
    for (const auto& p : art.plots) CHECK(std::filesystem::exists(p));

    const std::string summary = slurp(art.summary);
    CHECK(summary.rfind(std::string(kSummaryHeader) + "\n", 0) == 0);
    for (const char* rule : {"DP", "FTNL", "UPRE", "GCV", "NCP"}) {
        CHECK(summary.find(std::string("\n") + rule + ",") != std::string::npos);
        const std::string stem = "recon_" + std::string(rule == std::string("DP") ? "dp"
                                                        : rule == std::string("FTNL") ? "ftnl"
                                                        : rule == std::string("UPRE") ? "upre"
                                                        : rule == std::string("GCV") ? "gcv"
                                                                                    : "ncp");
        bool found = false;
        for (const auto& p : art.images) found = found || p.filename().string().rfind(stem, 0) == 0;
        CHECK_MESSAGE(found, rule);
    }
    CHECK(art.plots.size() == 6);
    CHECK(result.record.iterations() == 120);
    CHECK(result.info.m > 0);
    std::filesystem::remove_all(cfg.output);
}

TEST_CASE("runs are byte-identical with the deterministic flag") {
    auto cfg = parse_config(kSmall);
    cfg.deterministic = true;
    cfg.write_images = false;
    cfg.output = scratch_dir("det_a");
    const auto a = run_experiment(cfg);
    cfg.output = scratch_dir("det_b");
    const auto b = run_experiment(cfg);
    CHECK(slurp(a.artifacts.run_csv) == slurp(b.artifacts.run_csv));
    CHECK(slurp(a.artifacts.summary) == slurp(b.artifacts.summary));
    std::filesystem::remove_all(a.artifacts.dir);
    std::filesystem::remove_all(b.artifacts.dir);
}

TEST_CASE("early stop cuts the run at the rule's firing") {
    auto cfg = parse_config(kSmall);
    cfg.rules = {Rule::DP};
    cfg.early_stop = Rule::DP;
    cfg.max_iters = 5000;
    cfg.write_images = false;
    cfg.write_plots = false;
    cfg.output = scratch_dir("early");
    const auto r = run_experiment(cfg);
    REQUIRE(r.record.decision("DP")->fired);
    CHECK(r.record.iterations() == *r.record.decision("DP")->k_stop);
    std::filesystem::remove_all(cfg.output);
}

TEST_CASE("matrix dump") {
    auto cfg = parse_config(kSmall);
    cfg.rules.clear();
    cfg.max_iters = 2;
    cfg.dump_matrix = true;
    cfg.write_images = false;
    cfg.output = scratch_dir("dump");
    const auto r = run_experiment(cfg);
    REQUIRE(r.artifacts.matrix);
    const auto a = read_matrix_binary(*r.artifacts.matrix);
    CHECK(a.rows() == cfg.geometry().rays());
    CHECK(a.cols() == 24 * 24);
    std::filesystem::remove_all(cfg.output);
}

TEST_CASE("plots") {
    RunRecord rec;
    rec.residual_norms = {5, 3, 2, 1.5};
    rec.error_norms = {4, 3, 3.5, 3.8};
    const auto dir = scratch_dir("plots");
    auto paths = emit_plots(rec, dir);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].filename() == "error.svg");
    CHECK(well_formed_xml(slurp(paths[0])));

    rec.rule_series["FTNL_threshold"] = {2.5, 2.4, 2.3, 2.2};
    rec.rule_series["U"] = {-1, -2, -1.5, 0.5};
    rec.decisions.push_back({"FTNL", 3, 2.0, true});
    rec.decisions.push_back({"UPRE", 2, -2.0, true});
    paths = emit_plots(rec, dir);
    CHECK(paths.size() == 3);
    const std::string ftnl = slurp(dir / "ftnl.svg");
    CHECK(ftnl.find("||b - A x_k||") != std::string::npos);
    CHECK(ftnl.find("FTNL threshold") != std::string::npos);
    for (const auto& p : paths) CHECK(well_formed_xml(slurp(p)));
    CHECK_THROWS(emit_plots(RunRecord{}, dir));
    std::filesystem::remove_all(dir);

    CHECK(well_formed_xml(render_svg({{"a & <b>", {{"x\"y", {1, 2, 3}}}, {}, true}})));
    CHECK_FALSE(well_formed_xml("<svg><g></svg>"));
}

TEST_CASE("grid runs the cartesian product") {
    const std::string text = std::string(kSmall) +
                             "grid_angles = 6:6:180; 12:12:180\n"
                             "grid_noise_levels = 0.01, 0.05\n"
                             "plots = false\nimages = false\n";
    auto grid = parse_grid_config(text);
    CHECK(grid.angles.size() == 2);
    CHECK(grid.noise_levels.size() == 2);
    grid.base.output = scratch_dir("grid");
    grid.base.max_iters = 40;
    const auto result = run_grid(grid, 2);
    CHECK(result.runs.size() == 4);
    std::istringstream in(slurp(result.summary));
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("run,angles,noise_level,", 0) == 0);
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].rfind("1,6:6:180,0.01,", 0) == 0);
    CHECK(rows[3].rfind("4,12:12:180,0.050000000000000003,", 0) == 0);
    for (const auto& r : result.runs) CHECK(std::filesystem::exists(r.result.artifacts.run_csv));
    std::filesystem::remove_all(grid.base.output);

    CHECK_THROWS_AS(parse_grid_config("N = 16\nnoise = gaussian\n"), ConfigError);
    CHECK_THROWS_AS(parse_grid_config("N = 16\ngrid_noise_levels = 0.01, 2\n"), ConfigError);
}

TEST_CASE("worker cap from the environment") {
    setenv("SEMISTOP_WORKERS", "3", 1);
    CHECK(grid_workers() == 3);
    setenv("SEMISTOP_WORKERS", "zero", 1);
    CHECK(grid_workers() >= 1);
    unsetenv("SEMISTOP_WORKERS");
    CHECK(grid_workers() >= 1);
}

TEST_CASE("reproduce tags") {
    const auto tags = reproduce_tags();
    CHECK(tags.size() == 7);
    CHECK(reproduce_config("ex1-over").geometry().angles_deg.size() == 60);
    CHECK(reproduce_config("ex1-under").geometry().angles_deg.size() == 22);
    CHECK(reproduce_config("ex4-ncp").geometry().n_det == 362);
    const auto grid = reproduce_grid_config();
    CHECK(grid.angles.size() * grid.noise_levels.size() == 9);
    CHECK_THROWS_AS(reproduce("ex9"), ConfigError);
    CHECK_THROWS_AS(reproduce_config("sec4-grid"), ConfigError);
}
