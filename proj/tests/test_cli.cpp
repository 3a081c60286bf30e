#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

// End-to-end tests of the command-line binary: exit codes, file contracts,
// determinism, and option precedence.  TRIAD_CLI_PATH is injected by CMake.

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string exe = TRIAD_CLI_PATH;

// Scratch directory shared by all cases; file names are unique per case.
const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("triad-cli-" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (scratch() / name).string(); }

// Runs the binary through /bin/sh with any inherited TRIAD_SEED scrubbed;
// `env_extra` may re-introduce variables ("TRIAD_SEED=7").  Returns the exit
// status; stdout/stderr land in the given files when named.
int run_cli(const std::string& args, const std::string& env_extra = "",
            const std::string& capture = "") {
  std::string cmd = "env -u TRIAD_SEED ";
  if (!env_extra.empty()) cmd += env_extra + " ";
  cmd += exe + " " + args;
  if (!capture.empty()) cmd += " > " + capture + " 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json load(const std::string& path) { return json::parse(slurp(path)); }

long line_count(const std::string& path) {
  const std::string text = slurp(path);
  return std::count(text.begin(), text.end(), '\n');
}

void dump(const std::string& path, const json& j) {
  std::ofstream out(path);
  out << j.dump() << '\n';
}

// Rank-2 3x3x3 array with known factors; values are laid out last-axis-fastest.
json rank2_cube() {
  const double A[3][2] = {{1.0, 0.5}, {0.2, 1.0}, {0.3, -0.4}};
  const double B[3][2] = {{0.7, 0.1}, {0.4, 0.9}, {-0.2, 0.6}};
  const double C[3][2] = {{1.0, 0.3}, {0.5, 1.2}, {0.8, -0.7}};
  const double w[2] = {2.0, 1.0};
  std::vector<double> vals(27, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int s = 0; s < 2; ++s) vals[(i * 3 + j) * 3 + k] += w[s] * A[i][s] * B[j][s] * C[k][s];
  return json{{"dims", {3, 3, 3}}, {"values", vals}};
}

}  // namespace

TEST_CASE("version and help exit 0 and list every subcommand") {
  CHECK(run_cli("--version", "", at("version.txt")) == 0);
  CHECK(slurp(at("version.txt")).rfind("triad ", 0) == 0);

  CHECK(run_cli("--help", "", at("help.txt")) == 0);
  const std::string help = slurp(at("help.txt"));
  for (const char* sub : {"gen", "decompose", "jadiag", "fit-mixture", "fit-hmm", "experiment"})
    CHECK(help.find(sub) != std::string::npos);

  CHECK(run_cli("gen --help", "", at("genhelp.txt")) == 0);
  const std::string genhelp = slurp(at("genhelp.txt"));
  for (const char* flag : {"--design", "--kind", "--pi1", "--n", "--seed", "--out", "--labels-out"})
    CHECK(genhelp.find(flag) != std::string::npos);
}

TEST_CASE("gen writes versioned CSV, is seed-deterministic, and honors TRIAD_SEED") {
  REQUIRE(run_cli("gen --kind gaussian-mixture --n 50 --seed 7 --out " + at("a.csv") +
                  " --labels-out " + at("alab.csv")) == 0);
  const std::string a = slurp(at("a.csv"));
  CHECK(a.rfind("# triad-csv v1 sample\n", 0) == 0);
  CHECK(line_count(at("a.csv")) == 51);  // header + 50 rows
  CHECK(slurp(at("alab.csv")).rfind("# triad-csv v1 labels\n", 0) == 0);
  CHECK(line_count(at("alab.csv")) == 51);

  // Same seed, byte-identical; different seed, different draws.
  REQUIRE(run_cli("gen --kind gaussian-mixture --n 50 --seed 7 --out " + at("b.csv")) == 0);
  CHECK(slurp(at("b.csv")) == a);
  REQUIRE(run_cli("gen --kind gaussian-mixture --n 50 --seed 8 --out " + at("c.csv")) == 0);
  CHECK(slurp(at("c.csv")) != a);

  // Environment fallback reproduces the flag; an explicit flag wins over it.
  REQUIRE(run_cli("gen --kind gaussian-mixture --n 50 --out " + at("d.csv"), "TRIAD_SEED=7") == 0);
  CHECK(slurp(at("d.csv")) == a);
  REQUIRE(run_cli("gen --kind gaussian-mixture --n 50 --seed 7 --out " + at("e.csv"),
                  "TRIAD_SEED=99") == 0);
  CHECK(slurp(at("e.csv")) == a);
  CHECK(run_cli("gen --kind gaussian-mixture --n 50 --out " + at("f.csv"), "TRIAD_SEED=oops",
                at("badseed.txt")) == 1);

  // Hidden-chain draws carry one label column per triple coordinate.
  REQUIRE(run_cli("gen --kind hmm-skew-normal --n 20 --seed 1 --out " + at("h.csv") +
                  " --labels-out " + at("hlab.csv")) == 0);
  std::istringstream lab(slurp(at("hlab.csv")));
  std::string line;
  std::getline(lab, line);  // header
  std::getline(lab, line);
  CHECK(std::count(line.begin(), line.end(), ',') == 2);
}

TEST_CASE("decompose recovers an exact low-rank array and reruns byte-identically") {
  dump(at("cube.json"), rank2_cube());
  REQUIRE(run_cli("decompose --in " + at("cube.json") + " --out " + at("rep.json") +
                  " --r 2 --seed 5") == 0);
  const json rep = load(at("rep.json"));
  CHECK(rep["residual"].get<double>() < 1e-10);
  CHECK(rep["jd_converged"].get<bool>());
  CHECK(rep["weights"].size() == 2);
  CHECK(rep["factors"].size() == 3);

  REQUIRE(run_cli("decompose --in " + at("cube.json") + " --out " + at("rep2.json") +
                  " --r 2 --seed 5") == 0);
  CHECK(slurp(at("rep2.json")) == slurp(at("rep.json")));
}

TEST_CASE("numerical failures exit 2 and leave no partial output") {
  dump(at("cube3.json"), rank2_cube());
  CHECK(run_cli("decompose --in " + at("cube3.json") + " --out " + at("over.json") +
                " --r 3 --seed 5", "", at("over.err")) == 2);
  CHECK(slurp(at("over.err")).find("deficient rank") != std::string::npos);
  CHECK_FALSE(fs::exists(at("over.json")));
}

TEST_CASE("usage and I/O errors exit 1 and leave no partial output") {
  CHECK(run_cli("fit-mixture --in " + at("nosuch.csv") + " --r 2 --out " + at("never.json"), "",
                at("io.err")) == 1);
  CHECK_FALSE(fs::exists(at("never.json")));
  CHECK(run_cli("gen --bogus-flag --out x.csv", "", at("flag.err")) == 1);
  CHECK(run_cli("decompose --r 2", "", at("reqd.err")) == 1);  // --in/--out required

  // Malformed grid specification is rejected before any work happens.
  REQUIRE(run_cli("gen --kind gaussian-mixture --n 40 --seed 2 --out " + at("g.csv")) == 0);
  CHECK(run_cli("fit-mixture --in " + at("g.csv") + " --r 2 --out " + at("gfit.json") +
                " --grid 5:1:10 --grid-out " + at("gg.csv"), "", at("grid.err")) == 1);
  CHECK_FALSE(fs::exists(at("gfit.json")));
}

TEST_CASE("fit-mixture on a sample emits an estimate and a density grid") {
  REQUIRE(run_cli("gen --kind gaussian-mixture --n 1200 --seed 42 --out " + at("mix.csv")) == 0);
  REQUIRE(run_cli("fit-mixture --in " + at("mix.csv") + " --r 2 --seed 3 --out " + at("mix.json") +
                  " --grid -4:8:21 --grid-out " + at("mixgrid.csv")) == 0);
  const json fit = load(at("mix.json"));
  CHECK(fit["model"] == "continuous-mixture");
  REQUIRE(fit["pi"].size() == 2);
  const double pi0 = fit["pi"][0].get<double>(), pi1 = fit["pi"][1].get<double>();
  CHECK(pi0 + pi1 == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(pi0 > 0.3);  // design mixes 50/50
  CHECK(pi0 < 0.7);

  const std::string grid = slurp(at("mixgrid.csv"));
  CHECK(grid.rfind("# triad-csv v1 density-grid\n", 0) == 0);
  CHECK(line_count(at("mixgrid.csv")) == 2 + 3 * 2 * 21);  // variables x components x points
}

TEST_CASE("fit-mixture on an exact product table recovers the proportions") {
  const double pi[2] = {0.6, 0.4};
  const double P1[2][3] = {{0.5, 0.3, 0.2}, {0.1, 0.2, 0.7}};
  const double P2[2][3] = {{0.6, 0.2, 0.2}, {0.2, 0.5, 0.3}};
  const double P3[2][3] = {{0.3, 0.4, 0.3}, {0.5, 0.1, 0.4}};
  std::vector<double> vals(27, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int s = 0; s < 2; ++s)
          vals[(i * 3 + j) * 3 + k] += 1e4 * pi[s] * P1[s][i] * P2[s][j] * P3[s][k];
  dump(at("table.json"), json{{"dims", {3, 3, 3}}, {"values", vals}});

  REQUIRE(run_cli("fit-mixture --table " + at("table.json") + " --r 2 --seed 1 --out " +
                  at("tab.json")) == 0);
  const json fit = load(at("tab.json"));
  CHECK(fit["model"] == "discrete-mixture");
  std::vector<double> pihat = fit["pi"].get<std::vector<double>>();
  std::sort(pihat.begin(), pihat.end());
  CHECK(pihat[0] == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(pihat[1] == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(fit["residual"].get<double>() < 1e-8);

  // A count table cannot be paired with a continuous evaluation grid.
  CHECK(run_cli("fit-mixture --table " + at("table.json") + " --r 2 --out " + at("tg.json") +
                " --grid 0:1:5 --grid-out " + at("tg.csv"), "", at("tg.err")) == 1);
}

TEST_CASE("fit-hmm estimates a near-truth transition matrix from a drawn chain") {
  REQUIRE(run_cli("gen --kind hmm-skew-normal --n 3000 --seed 11 --out " + at("chain.csv")) == 0);
  REQUIRE(run_cli("fit-hmm --in " + at("chain.csv") + " --r 2 --seed 2 --out " + at("hmm.json") +
                  " --grid -8:8:9 --grid-out " + at("hmmgrid.csv")) == 0);
  const json fit = load(at("hmm.json"));
  CHECK(fit["model"] == "hmm");
  const auto K = fit["transition"].get<std::vector<std::vector<double>>>();
  REQUIRE(K.size() == 2);
  for (int s = 0; s < 2; ++s) {
    CHECK(K[s][0] + K[s][1] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(K[s][s] > 0.65);  // truth holds each state with probability 0.8
    CHECK(K[s][s] < 0.95);
  }
  const double p0 = fit["pi"][0].get<double>();
  CHECK(p0 > 0.35);
  CHECK(p0 < 0.65);
  CHECK(line_count(at("hmmgrid.csv")) == 2 + 2 * 9);  // two emission components
}

TEST_CASE("experiment rmise writes a report and tidy CSV, invariant to --jobs") {
  const std::string common = "experiment rmise --kind gaussian-mixture --pi1-grid 0.3,0.5 "
                             "--reps 2 --n 200 --fixed-kappa 4 --seed 123 ";
  REQUIRE(run_cli(common + "--jobs 2 --out " + at("rm.json") + " --csv-out " + at("rm.csv")) == 0);
  const json rep = load(at("rm.json"));
  CHECK(rep["kind"] == "rmise");
  CHECK(rep["reps"].get<long>() == 2);
  CHECK(rep["cells"].size() == 12);  // 2 proportions x 3 variables x 2 components
  CHECK(rep["failures"].get<long>() == 0);
  const std::string csv = slurp(at("rm.csv"));
  CHECK(csv.rfind("# triad-csv v1 rmise\n", 0) == 0);
  CHECK(line_count(at("rm.csv")) == 2 + 12);

  REQUIRE(run_cli(common + "--jobs 1 --out " + at("rm1.json")) == 0);
  CHECK(slurp(at("rm1.json")) == slurp(at("rm.json")));
}

TEST_CASE("experiment coverage rejects too few replications") {
  CHECK(run_cli("experiment coverage --reps 10 --n 300 --seed 1 --out " + at("cov.json"), "",
                at("cov.err")) == 1);
  CHECK_FALSE(fs::exists(at("cov.json")));
}

TEST_CASE("config file supplies defaults, flags override, unknown keys are rejected") {
  dump(at("conf.json"),
       json{{"gen", {{"kind", "gaussian-mixture"}, {"n", 50}, {"seed", 7}}}});
  REQUIRE(run_cli("gen --kind gaussian-mixture --n 50 --seed 7 --out " + at("ref.csv")) == 0);
  REQUIRE(run_cli("--config " + at("conf.json") + " gen --out " + at("fromconf.csv")) == 0);
  CHECK(slurp(at("fromconf.csv")) == slurp(at("ref.csv")));

  REQUIRE(run_cli("--config " + at("conf.json") + " gen --seed 8 --out " + at("confflag.csv")) ==
          0);
  CHECK(slurp(at("confflag.csv")) != slurp(at("ref.csv")));

  dump(at("badconf.json"), json{{"gen", {{"no_such_option", 3}}}});
  CHECK(run_cli("--config " + at("badconf.json") + " gen --out " + at("nope.csv"), "",
                at("conf.err")) == 1);
}

TEST_CASE("jadiag diagonalizes a commuting pair and reports the eigenvalue columns") {
  // M_t = A D_t A^{-1} share the eigenvector matrix A.
  const double A[2][2] = {{2.0, 0.3}, {0.1, 1.0}};
  const double det = A[0][0] * A[1][1] - A[0][1] * A[1][0];
  const double Ai[2][2] = {{A[1][1] / det, -A[0][1] / det}, {-A[1][0] / det, A[0][0] / det}};
  auto similarity = [&](double d0, double d1) {
    json m = json::array();
    for (int i = 0; i < 2; ++i) {
      json row = json::array();
      for (int j = 0; j < 2; ++j)
        row.push_back(A[i][0] * d0 * Ai[0][j] + A[i][1] * d1 * Ai[1][j]);
      m.push_back(row);
    }
    return m;
  };
  dump(at("jd.json"), json{{"matrices", {similarity(3.0, 1.0), similarity(0.5, 2.5)}}});

  REQUIRE(run_cli("jadiag --in " + at("jd.json") + " --out " + at("jdres.json") + " --seed 4") ==
          0);
  const json res = load(at("jdres.json"));
  CHECK(res["converged"].get<bool>());
  CHECK(res["criterion"].get<double>() < 1e-12);
  const auto ev = res["eigenvalues"].get<std::vector<std::vector<double>>>();
  REQUIRE(ev.size() == 2);
  // Columns pair the per-matrix eigenvalues: (3, 0.5) and (1, 2.5) in some order.
  const bool order03 = std::abs(ev[0][0] - 3.0) < 1e-8;
  const int c3 = order03 ? 0 : 1, c1 = 1 - c3;
  CHECK(ev[0][c3] == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(ev[1][c3] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(ev[0][c1] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(ev[1][c1] == doctest::Approx(2.5).epsilon(1e-8));
}
