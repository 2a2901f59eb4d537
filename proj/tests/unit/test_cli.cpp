#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("san_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Result run(const std::string& args) {
  const auto out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt";
  const std::string cmd = std::string(SAN_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Small settings so each training command takes a second or two.
const std::string kTiny =
    " --set train_frames=6 --set val_frames=2 --set width=16 --set height=16 --set widths=4,8"
    " --set stage1_epochs=1 --set stage2_epochs=1 --set val_every=1";

std::string path(const std::string& name) { return (work_dir() / name).string(); }

const std::string& trained_model() {
  static const std::string ckpt = [] {
    const auto r = run("train --seed 3 --out " + path("run_a") + kTiny);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return path("run_a/model.ckpt");
  }();
  return ckpt;
}

}  // namespace

TEST_CASE("help exits cleanly") {
  const auto r = run("--help");
  CHECK(r.code == 0);
  CHECK(r.out.find("gen-data") != std::string::npos);
  CHECK(r.out.find("gradcheck") != std::string::npos);
}

TEST_CASE("gen-data writes the dataset layout and is idempotent") {
  const std::string args = " --seed 4 --set train_frames=2 --set val_frames=1 --set width=16 --set height=16";
  REQUIRE(run("gen-data --out " + path("data1") + args).code == 0);
  REQUIRE(run("gen-data --out " + path("data2") + args).code == 0);
  for (const char* f : {"train/000000.rgb.dmap", "train/000001.depth.dmap", "val/000000.rgb.dmap", "config.txt"}) {
    CHECK_MESSAGE(fs::exists(work_dir() / "data1" / f), f);
    CHECK(slurp(work_dir() / "data1" / f) == slurp(work_dir() / "data2" / f));
  }
  CHECK(slurp(work_dir() / "data1/train/000000.rgb.dmap").substr(0, 4) == "DMF1");
}

TEST_CASE("train writes checkpoints and metrics, reproducibly") {
  const auto& ckpt = trained_model();
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(path("run_a/stage1.ckpt")));
  CHECK(fs::exists(path("run_a/config.txt")));
  const auto csv = slurp(path("run_a/metrics.csv"));
  CHECK(csv.starts_with("epoch,stage,lr,train_loss,mode,abs_rel,"));
  // One stage-1 row plus prediction and completion rows for stage 2.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  REQUIRE(run("train --seed 3 --out " + path("run_b") + kTiny).code == 0);
  CHECK(slurp(ckpt) == slurp(path("run_b/model.ckpt")));
  CHECK(slurp(path("run_a/metrics.csv")) == slurp(path("run_b/metrics.csv")));
}

TEST_CASE("train from a config file and resume") {
  {
    std::ofstream cfg(path("tiny.cfg"));
    cfg << "# tiny run\ntrain_frames = 6\nval_frames = 2\nwidth = 16\nheight = 16\nwidths = 4,8\n"
           "stage1_epochs = 1\nstage2_epochs = 1\nval_every = 0\n";
  }
  REQUIRE(run("train --seed 5 --config " + path("tiny.cfg") + " --out " + path("full")).code == 0);
  REQUIRE(run("train --seed 5 --config " + path("tiny.cfg") + " --out " + path("part") + " --stop-after 1").code == 0);
  const auto r = run("train --seed 5 --config " + path("tiny.cfg") + " --out " + path("resumed") + " --resume " +
                     path("part/model.ckpt"));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(slurp(path("full/model.ckpt")) == slurp(path("resumed/model.ckpt")));
  // Resuming under a different configuration is refused.
  CHECK(run("train --seed 6 --config " + path("tiny.cfg") + " --out " + path("other") + " --resume " +
            path("part/model.ckpt"))
            .code == 2);
}

TEST_CASE("eval and sweep emit metric csv") {
  const auto& ckpt = trained_model();
  const auto common = " --checkpoint " + ckpt + kTiny;
  auto r = run("eval --mode prediction" + common);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.starts_with("abs_rel,sq_rel,rmse,rmse_log,silog,a1,a2,a3\n"));
  const auto pred = r.out;
  r = run("eval --mode completion --sparsity 0" + common);
  CHECK(r.out == pred);
  REQUIRE(run("sweep --levels 0.1,0.5,1.0 --out " + path("sweep.csv") + common).code == 0);
  const auto sweep = slurp(path("sweep.csv"));
  CHECK(sweep.starts_with("mode,level,abs_rel,"));
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 5);
}

TEST_CASE("complete with an empty sparse map is byte-identical to predict") {
  const auto& ckpt = trained_model();
  REQUIRE(run("gen-data --seed 8 --set train_frames=1 --set val_frames=0 --set width=16 --set height=16 --out " +
              path("one"))
              .code == 0);
  const auto rgb = path("one/train/000000.rgb.dmap");
  {
    // Header for a 16x16x1 raster followed by zeros.
    std::ofstream out(path("empty.dmap"), std::ios::binary);
    const char header[] = {'D', 'M', 'F', '1', 16, 0, 0, 0, 16, 0, 0, 0, 1, 0, 0, 0};
    out.write(header, sizeof header);
    const std::string zeros(16 * 16 * 4, '\0');
    out.write(zeros.data(), std::streamsize(zeros.size()));
  }
  REQUIRE(run("predict --checkpoint " + ckpt + " --rgb " + rgb + " --out " + path("pred.dmap")).code == 0);
  REQUIRE(run("complete --checkpoint " + ckpt + " --rgb " + rgb + " --sparse " + path("empty.dmap") + " --out " +
              path("comp.dmap"))
              .code == 0);
  const auto pred = slurp(path("pred.dmap"));
  CHECK(pred.size() == 16 + 16 * 16 * 4);
  CHECK(pred == slurp(path("comp.dmap")));
  // Real sparse depth changes the output.
  REQUIRE(run("complete --checkpoint " + ckpt + " --rgb " + rgb + " --sparse " + path("one/train/000000.depth.dmap") +
              " --out " + path("comp2.dmap"))
              .code == 0);
  CHECK(pred != slurp(path("comp2.dmap")));
}

TEST_CASE("gradcheck reports every op below tolerance") {
  const auto r = run("gradcheck --precision f64");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "op,max_rel_error,tolerance,pass");
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK_MESSAGE(line.ends_with(",1e-05,yes"), line);
    const auto first = line.find(','), second = line.find(',', first + 1);
    CHECK(std::stod(line.substr(first + 1, second - first - 1)) < 1e-5);
  }
  CHECK(rows >= 10);
  CHECK(run("gradcheck --precision f32").code == 2);
}

TEST_CASE("ablate prints one row per variant") {
  const auto r = run("ablate --seed 2" + kTiny);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.starts_with("variant,pred_rmse,comp_rmse,pred_abs_rel,comp_abs_rel\n"));
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 9);
  CHECK(r.out.find("\nprediction,") != std::string::npos);
  CHECK(r.out.find("\nno_wb,") != std::string::npos);
}

TEST_CASE("exit codes and the machine-readable error line") {
  auto r = run("train --set bogus_key=1 --out " + path("x"));
  CHECK(r.code == 2);
  CHECK(r.err.find("\"error\":\"config\"") != std::string::npos);
  CHECK(r.err.find("\"exit_code\":2") != std::string::npos);
  CHECK_FALSE(fs::exists(path("x")));

  CHECK(run("train --set lambda=3 --out " + path("y")).code == 2);
  CHECK(run("train --set seed=1 --set seed=2").code == 2);
  CHECK(run("no-such-command").code == 2);
  CHECK(run("eval --checkpoint /does/not/exist").code == 2);
  CHECK(run("train --precision f16").code == 2);

  {
    std::ofstream junk(path("junk.ckpt"));
    junk << "not a checkpoint";
  }
  r = run("eval --checkpoint " + path("junk.ckpt"));
  CHECK(r.code == 3);
  CHECK(r.err.find("\"error\":\"runtime\"") != std::string::npos);
  CHECK(r.err.find("\"exit_code\":3") != std::string::npos);

  // A checkpoint precision mismatch is a configuration error.
  CHECK(run("eval --precision f64 --checkpoint " + trained_model()).code == 2);
}
