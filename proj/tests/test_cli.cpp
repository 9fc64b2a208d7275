#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "backaction/csv.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kBinary = BACKACTION_SIM_PATH;

struct Run {
  int status;
  std::string out;
};

// Runs the tool with stdout captured into a file of `dir`.
Run run(const std::string& args, const fs::path& dir) {
  fs::create_directories(dir);
  const auto log = dir / "stdout.txt";
  const std::string cmd = kBinary + " " + args + " > " + log.string() + " 2> " + (dir / "stderr.txt").string();
  const int raw = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ss.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("backaction_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string read(const fs::path& p) { return backaction::csv::read_file(p.string()); }

std::string without_timestamp(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    if (!line.starts_with("# timestamp=")) out += line + "\n";
  }
  return out;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("params with an empty config reports the cooperativity") {
  const auto dir = scratch("params");
  const auto r = run("params --out " + (dir / "out").string(), dir);
  CHECK(r.status == 0);
  CHECK(r.out.find("C = 52.36") != std::string::npos);
  const auto text = read(dir / "out" / "params.csv");
  CHECK(text.find("cooperativity_C,52.36") != std::string::npos);
  CHECK(text.find("# command=params\n") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "manifest.csv"));
}

TEST_CASE("nonexistent config exits 1 without output") {
  const auto dir = scratch("missing");
  const auto out = dir / "out";
  const auto r = run("params --config " + (dir / "nope.cfg").string() + " --out " + out.string(), dir);
  CHECK(r.status == 1);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("invalid configs exit 1") {
  const auto dir = scratch("invalid");
  fs::create_directories(dir);
  write(dir / "bad_key.cfg", "no_such_key = 1\n");
  write(dir / "bad_value.cfg", "eta_det = 2\n");
  CHECK(run("params --config " + (dir / "bad_key.cfg").string() + " --out " + (dir / "a").string(), dir).status == 1);
  CHECK(run("params --config " + (dir / "bad_value.cfg").string() + " --out " + (dir / "b").string(), dir).status == 1);
  CHECK(run("frobnicate", dir).status == 1);
  CHECK(run("analyze --out " + (dir / "c").string(), dir).status == 1);
  CHECK(run("--threads 0 params --out " + (dir / "d").string(), dir).status == 1);
}

TEST_CASE("reruns are identical apart from the timestamp") {
  const auto dir = scratch("idempotent");
  fs::create_directories(dir);
  write(dir / "run.cfg", "duration_s = 0.3\ncurve_points = 21\nspectrum_points = 31\n");
  const auto cfg = " --config " + (dir / "run.cfg").string();
  const auto out = " --out " + (dir / "out").string();
  for (const char* copy : {"a", "b"}) {
    REQUIRE(run("spectrum" + cfg + out + " --seed 17", dir).status == 0);
    REQUIRE(run("heating-curve" + cfg + out + " --seed 17", dir).status == 0);
    REQUIRE(run("simulate" + cfg + out + " --seed 17", dir).status == 0);
    fs::copy(dir / "out", dir / copy);
  }
  for (const char* f : {"spectrum.csv", "heating_curve.csv", "trace.csv", "manifest.csv"}) {
    const auto a = read(dir / "a" / f);
    const auto b = read(dir / "b" / f);
    CHECK(a.find("# timestamp=") != std::string::npos);
    CHECK(without_timestamp(a) == without_timestamp(b));
    CHECK(a.find("# seed=17\n") != std::string::npos);
  }
  CHECK(read(dir / "a" / "trace.csv").find("# command=simulate\n") != std::string::npos);
  CHECK(read(dir / "a" / "spectrum.csv").find("# command=spectrum\n") != std::string::npos);
}

TEST_CASE("simulate then analyze") {
  const auto dir = scratch("pipeline");
  const auto out = (dir / "out").string();
  REQUIRE(run("simulate --out " + out + " --seed 3", dir).status == 0);
  const auto r = run("analyze --trace " + out + "/trace.csv --out " + out, dir);
  CHECK(r.status == 0);
  CHECK(r.out.find("recovered peak R/R_fs") != std::string::npos);
  const auto analysis = backaction::csv::parse(read(dir / "out" / "analysis.csv"));
  CHECK(analysis.columns.size() == 7);
  CHECK(analysis.rows.size() > 100);
  const auto manifest = read(dir / "out" / "manifest.csv");
  CHECK(manifest.find("\nseed,3\n") != std::string::npos);
  CHECK(manifest.find("\noutput,analysis.csv\n") != std::string::npos);
}

TEST_CASE("oracle suites pass with the default config") {
  const auto dir = scratch("oracle");
  setenv("BACKACTION_SIM_THREADS", "4", 1);
  const auto r = run("oracle --out " + (dir / "out").string(), dir);
  CHECK(r.status == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  std::istringstream in(read(dir / "out" / "oracle.csv"));
  std::string line;
  int suites = 0;
  while (std::getline(in, line)) {
    if (line.starts_with("#") || line.starts_with("suite,")) continue;
    ++suites;
    CHECK(line.ends_with(",1"));
  }
  CHECK(suites >= 8);
}
