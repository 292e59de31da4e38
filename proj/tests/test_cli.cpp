#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + ECOGDEC_BIN + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ecog_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("version and help exit cleanly") {
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("--help") == 0);
}

TEST_CASE("argument errors exit with 1") {
  CHECK(run_cli("--no-such-flag") == 1);
  CHECK(run_cli("decode --method rlda") == 1);
  const auto data = scratch("data_bad");
  CHECK(run_cli("synth --days 1 --trials 10 --out " + data.string()) == 0);
  CHECK(run_cli("run --dataset " + data.string() + " --methods rlda,svm --out " + scratch("out_bad").string()) == 1);
  CHECK(run_cli("run --dataset " + data.string() + " --classes 4 --out " + scratch("out_bad").string()) == 1);
  fs::remove_all(data);
}

TEST_CASE("report on an empty directory exits with 2") {
  const auto p = scratch("empty");
  fs::create_directories(p);
  CHECK(run_cli("report --in " + p.string()) == 2);
  fs::remove_all(p);
}

TEST_CASE("synth, decode and run produce outputs") {
  const auto data = scratch("data");
  CHECK(run_cli("synth --days 2 --trials 20 --out " + data.string()) == 0);
  CHECK(fs::exists(data / "day01" / "manifest.json"));
  CHECK(fs::exists(data / "day02" / "samples.f32"));

  const auto dec = scratch("decode");
  CHECK(run_cli("decode --dataset " + (data / "day01").string() + " --method rlda --out " + dec.string()) == 0);
  CHECK(fs::exists(dec / "confusion.csv"));

  const auto spec = scratch("spectra");
  CHECK(run_cli("spectra --dataset " + (data / "day02").string() + " --out " + spec.string()) == 0);
  CHECK(fs::exists(spec / "aep.csv"));

  const auto out = scratch("run");
  CHECK(run_cli("run --dataset " + data.string() + " --methods rlda,fbcsp --out " + out.string()) == 0);
  CHECK(fs::exists(out / "summary.json"));
  CHECK(fs::exists(out / "day02" / "fbcsp" / "confusion.csv"));
  CHECK(run_cli("report --in " + out.string() + " --out " + (out / "again.json").string()) == 0);
  CHECK(fs::exists(out / "again.json"));

  fs::resize_file(data / "day01" / "samples.f32", 64);
  CHECK(run_cli("decode --dataset " + (data / "day01").string() + " --method rlda --out " + dec.string()) == 2);

  for (const auto& p : {data, dec, spec, out}) fs::remove_all(p);
}
