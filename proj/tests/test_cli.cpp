#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  const fs::path out = fs::temp_directory_path() / "chmc_test_cli_stdout.txt";
  const std::string cmd =
      std::string("\"") + CHMC_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream s;
  s << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("validate the shipped example") {
  const Run r = cli(std::string("validate \"") + CHMC_CONFIG_DIR + "/quartic_d40.json\"");
  CHECK(r.code == 0);
  CHECK(r.out.find("\"CHMC-JInf\"") != std::string::npos);
  CHECK(r.out.find("\"dimension\": 40") != std::string::npos);
}

TEST_CASE("invalid configs exit with 1") {
  const fs::path dir = fs::temp_directory_path() / "chmc_test_cli";
  fs::remove_all(dir);
  const fs::path bad = write_config(dir, "bad.json", R"({
    "target": {"kind": "quartic", "dimension": 2}, "output_dir": "o",
    "defaults": {"tau": 0.1, "total_time": 3.95},
    "methods": [{"name": "a", "method": "chmc"}]})");
  Run r = cli("validate \"" + bad.string() + "\"");
  CHECK(r.code == 1);
  CHECK(r.out.find("n_steps not integral") != std::string::npos);
  CHECK(cli("run \"" + bad.string() + "\"").code == 1);
  CHECK(cli("validate \"" + (dir / "absent.json").string() + "\"").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("").code == 1);
  fs::remove_all(dir);
}

TEST_CASE("run then table") {
  const fs::path dir = fs::temp_directory_path() / "chmc_test_cli_run";
  fs::remove_all(dir);
  const fs::path cfg = write_config(dir, "run.json", R"({
    "target": {"kind": "quartic", "dimension": 3}, "output_dir": "out", "chains": 2,
    "defaults": {"iterations": 20},
    "methods": [{"name": "HMC-LF", "method": "hmc-leapfrog"},
                {"name": "CHMC-J0", "method": "chmc"}]})");
  Run r = cli("run -q \"" + cfg.string() + "\"");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "out" / "summary.csv"));
  CHECK(fs::exists(dir / "out" / "meta.json"));
  r = cli("table \"" + (dir / "out").string() + "\"");
  CHECK(r.code == 0);
  CHECK(r.out.find("CHMC-J0") != std::string::npos);
  // a missing run directory is a runtime failure
  CHECK(cli("table \"" + (dir / "nowhere").string() + "\"").code == 2);

  // an output path that is a regular file cannot be created
  std::ofstream(dir / "blocked") << "x";
  const fs::path blocked = write_config(dir, "blocked.json", R"({
    "target": {"kind": "quartic", "dimension": 3}, "output_dir": "blocked/inner",
    "defaults": {"iterations": 2}, "methods": [{"name": "a", "method": "chmc"}]})");
  CHECK(cli("run -q \"" + blocked.string() + "\"").code == 2);
  fs::remove_all(dir);
}
