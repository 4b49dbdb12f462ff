#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path work = fs::temp_directory_path() / "bfvae_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + BFVAE_CLI + "\" " + args + " > \"" + (work / "out.txt").string() +
                          "\" 2> \"" + (work / "err.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string out() { return slurp(work / "out.txt"); }
std::string err() { return slurp(work / "err.txt"); }

/// Tiny run flags: every stage, seconds total.
const std::string tiny_any =
    "run --recipe fa15-bfvae -k 3 --epochs 1 -r 2 --higgins-votes 40 --higgins-train 30 --dbsr-iters 200 -q";
const std::string tiny = tiny_any + " --n 200";

struct Fresh {
  Fresh() {
    fs::remove_all(work);
    fs::create_directories(work);
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fresh, "generate is byte-identical across invocations") {
  REQUIRE(run("generate --preset fa15 --seed 3 -o \"" + (work / "a").string() + "\"") == 0);
  REQUIRE(run("generate --preset fa15 --seed 3 -o \"" + (work / "b").string() + "\"") == 0);
  for (const char* f : {"fa15_seed3.csv", "fa15_seed3.manifest.json"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(work / "a" / f));
    CHECK(slurp(work / "a" / f) == slurp(work / "b" / f));
  }
  REQUIRE(run("generate --preset fa15 --seed 4 -o \"" + (work / "c").string() + "\"") == 0);
  CHECK(slurp(work / "a" / "fa15_seed3.csv") != slurp(work / "c" / "fa15_seed4.csv"));
}

TEST_CASE_FIXTURE(Fresh, "usage and configuration errors exit 2") {
  CHECK(run("generate --preset fa7") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("run --recipe fa15-bfvae --no-such-flag") == 2);
  CHECK(run("run --recipe nope") == 2);
  CHECK(run("run --recipe fa15-bfvae --rho 3 --print-config") == 2);
  CHECK(err().find("rho") != std::string::npos);
  const auto cfg = work / "bad.json";
  std::ofstream(cfg) << R"({"training": {"epochz": 3}})";
  CHECK(run("run --config \"" + cfg.string() + "\" --print-config") == 2);
  CHECK(err().find("epochz") != std::string::npos);
}

TEST_CASE_FIXTURE(Fresh, "recipes and resolved configs print") {
  REQUIRE(run("run --list-recipes") == 0);
  CHECK(out().find("fa15-bfvae") != std::string::npos);
  CHECK(out().find("winelike-cvae") != std::string::npos);
  REQUIRE(run("run --recipe fa15-bfvae --beta 0.5 --epochs 3 --print-config") == 0);
  const auto text = out();
  CHECK(text.find("\"epochs\": 3") != std::string::npos);
  CHECK(text.find("0.5") != std::string::npos);
}

TEST_CASE_FIXTURE(Fresh, "run, report and compare") {
  const auto b1 = work / "b1", b2 = work / "b2", b3 = work / "b3";
  REQUIRE(run(tiny + " -o \"" + b1.string() + "\"") == 0);
  REQUIRE(run(tiny + " -o \"" + b2.string() + "\"") == 0);
  CHECK(slurp(b1 / "metrics.json") == slurp(b2 / "metrics.json"));

  REQUIRE(run("report \"" + b1.string() + "\"") == 0);
  CHECK(fs::exists(b1 / "report" / "summary.txt"));
  CHECK(fs::exists(b1 / "report" / "fvh_lt.svg"));
  REQUIRE(run("report \"" + b1.string() + "\" --format csv --out \"" + (work / "csv").string() + "\"") == 0);
  CHECK(fs::exists(work / "csv" / "fvh_lt.csv"));
  CHECK_FALSE(fs::exists(work / "csv" / "fvh_lt.svg"));
  CHECK(run("report \"" + b1.string() + "\" --format png") == 2);

  REQUIRE(run("compare \"" + b1.string() + "\" \"" + b2.string() + "\"") == 0);
  CHECK(out().find("LSDI") != std::string::npos);

  REQUIRE(run(tiny_any + " --n 300 -o \"" + b3.string() + "\"") == 0);
  CHECK(run("compare \"" + b1.string() + "\" \"" + b3.string() + "\"") == 2);
  CHECK(err().find("dataset") != std::string::npos);

  std::ofstream(b1 / "metrics.json", std::ios::app) << " ";
  CHECK(run("report \"" + b1.string() + "\"") == 1);
  CHECK(run("report \"" + (work / "missing").string() + "\"") == 1);
}

TEST_CASE_FIXTURE(Fresh, "a run over a generated csv uses the manifest ground truth") {
  REQUIRE(run("generate --preset fa15 --seed 0 --n 200 -o \"" + work.string() + "\"") == 0);
  const auto csv = work / "fa15_seed0.csv", manifest = work / "fa15_seed0.manifest.json";
  REQUIRE(run(tiny_any + " --csv \"" + csv.string() + "\" --manifest \"" + manifest.string() + "\" -o \"" +
              (work / "m").string() + "\"") == 0);
  const auto metrics = slurp(work / "m" / "metrics.json");
  CHECK(metrics.find("\"higgins\": null") == std::string::npos);
  CHECK(metrics.find("\"fdr\": null") == std::string::npos);
}
