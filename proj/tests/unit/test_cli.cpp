// Drives the built `fctl` binary end to end on a tiny dataset.
#include <doctest.h>

#include <cstdio>
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

Run run(const std::string& args) {
  const std::string cmd = std::string(FCTL_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli exit codes") {
  CHECK(run("").code == 1);
  CHECK(run("no-such-command").code == 1);
  CHECK(run("synth").code == 1);  // --out missing
  CHECK(run("--help").code == 0);
  CHECK(run("eval --pred a.pgm").code == 1);
  const Run gc = run("grad-check --instances 2");
  CHECK(gc.code == 0);
  CHECK(gc.out.find("max relative error") != std::string::npos);
}

TEST_CASE("cli pipeline on a tiny dataset") {
  const fs::path dir = fs::temp_directory_path() / "fctl_test_cli";
  fs::remove_all(dir);
  const std::string data = (dir / "data").string(), model = (dir / "model").string();
  const std::string synth = " --num 2 --size 128 --seed 4";
  REQUIRE(run("synth --out " + data + synth).code == 0);
  REQUIRE(run("synth --out " + (dir / "data2").string() + synth).code == 0);
  CHECK(slurp(dir / "data" / "images" / "000.ppm") == slurp(dir / "data2" / "images" / "000.ppm"));
  CHECK(slurp(dir / "data" / "manifest.csv") == slurp(dir / "data2" / "manifest.csv"));

  const std::string small =
      " --set epochs=2 --set refine_epochs=1 --set patch=32 --set overlap=8 --set lr0=0.001 --set accum_steps=4";
  REQUIRE(run("train-seg --data " + data + " --out " + model + small).code == 0);
  for (const char* f : {"run.cfg", "seg.ckpt", "seg_early.ckpt", "seg_log.csv"}) CHECK(fs::exists(dir / "model" / f));
  CHECK(slurp(dir / "model" / "seg_log.csv").rfind("epoch,iter,lr,loss,train_miou\n", 0) == 0);
  REQUIRE(run("train-refine --data " + data + " --model " + model).code == 0);
  CHECK(fs::exists(dir / "model" / "refine.ckpt"));

  const std::string img = (dir / "data" / "images" / "000.ppm").string();
  const std::string out = (dir / "pred.pgm").string();
  for (const char* mode : {"montage", "average", "refine"}) {
    REQUIRE(run("infer --model " + model + " --image " + img + " --out " + out + " --merge-mode " + mode).code == 0);
    const Run ev = run("eval --pred " + out + " --gt " + (dir / "data" / "labels" / "000.pgm").string());
    CHECK(ev.code == 0);
    CHECK(ev.out.find("miou,f1_macro,accuracy") != std::string::npos);
  }
  const Run ev = run("eval --model " + model + " --data " + data + " --merge-mode average");
  CHECK(ev.code == 0);
  CHECK(ev.out.rfind("class,iou,f1\n", 0) == 0);

  CHECK(run("train-seg --data " + data + " --out " + model + " --set bogus=1").code == 1);
  CHECK(run("infer --model " + (dir / "nothing").string() + " --image " + img + " --out " + out).code == 1);
  fs::remove_all(dir);
}
