// SPDX-License-Identifier: Apache-2.0
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "siamban_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

const std::string kSmall =
    " --set model.reduced_channels=8 model.tiny_width=8 train.batch=1 synthetic.train_sequences=2"
    " synthetic.train_length=10 synthetic.eval_sequences=1 synthetic.eval_length=6";

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const fs::path out = workdir() / "stdout.txt";
  const std::string cmd = std::string(SIAMBAN_CLI) + " " + args + " > " + out.string() + " 2> " +
                          (workdir() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) n += line.empty() ? 0 : 1;
  return n;
}

// Trains once and shares the checkpoint between test cases.
const fs::path& checkpoint() {
  static const fs::path ckpt = [] {
    const fs::path out = workdir() / "train";
    const Run r = run("train --synthetic --steps 3 --quiet --out " + out.string() + kSmall);
    REQUIRE(r.code == 0);
    return out / "checkpoints" / "final.ckpt";
  }();
  return ckpt;
}

}  // namespace

TEST_CASE("train writes a checkpoint and echoes the resolved config") {
  const fs::path out = workdir() / "echo";
  const Run r = run("train --synthetic --steps 2 --quiet --out " + out.string() + kSmall + " train.batch=2");
  REQUIRE(r.code == 0);
  const json cfg = json::parse(r.out);
  CHECK(cfg["train"]["batch"] == 2);
  CHECK(cfg["train"]["steps"] == 2);
  CHECK(fs::exists(out / "checkpoints" / "final.ckpt"));
  CHECK(fs::exists(out / "config.json"));
  CHECK(count_lines(out / "train_log.jsonl") == 2);

  ::setenv("SIAMBAN_DATA_ROOT", "/from/env", 1);
  const Run env = run("train --synthetic --steps 1 --quiet --out " + (workdir() / "env").string() + kSmall);
  ::unsetenv("SIAMBAN_DATA_ROOT");
  REQUIRE(env.code == 0);
  CHECK(json::parse(env.out)["paths"]["data_root"] == "/from/env");
}

TEST_CASE("configuration errors exit with the usage code") {
  ::unsetenv("SIAMBAN_DATA_ROOT");
  CHECK(run("train --out " + (workdir() / "nodata").string()).code == 1);
  CHECK(run("train --synthetic --set train.bacth=4").code == 1);
  CHECK(run("train --synthetic --set train.batch=0").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("track --sequence x").code == 1);
}

TEST_CASE("track writes one box per frame") {
  const fs::path seqs = workdir() / "seqs";
  REQUIRE(run("synth --count 1 --length 7 --prefix demo --out " + seqs.string()).code == 0);
  fs::path seq;
  for (const auto& e : fs::directory_iterator(seqs)) seq = e.path();
  REQUIRE_FALSE(seq.empty());
  const fs::path out = workdir() / "track";
  const Run r = run("track --checkpoint " + checkpoint().string() + " --sequence " + seq.string() + " --out " +
                    out.string() + kSmall);
  REQUIRE(r.code == 0);
  CHECK(count_lines(out / "boxes.txt") == 7);
  std::ifstream in(out / "summary.json");
  const json s = json::parse(in);
  CHECK(s["frames"] == 7);
  CHECK(s["scores"].size() == 7);
}

TEST_CASE("a corrupt checkpoint is rejected") {
  const fs::path bad = workdir() / "bad.ckpt";
  fs::copy_file(checkpoint(), bad, fs::copy_options::overwrite_existing);
  {
    std::fstream f(bad, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(fs::file_size(bad) / 2));
    f.put('\x5a');
    f.put('\xa5');
  }
  const Run r = run("eval --synthetic --checkpoint " + bad.string() + " --out " + (workdir() / "bad").string() +
                    kSmall);
  CHECK(r.code != 0);
  CHECK(run("eval --synthetic --checkpoint " + (workdir() / "missing.ckpt").string() + kSmall).code != 0);
}

TEST_CASE("eval writes the results schema") {
  const fs::path out = workdir() / "eval";
  const Run r = run("eval --synthetic --checkpoint " + checkpoint().string() + " --out " + out.string() + kSmall);
  REQUIRE(r.code == 0);
  const json summary = json::parse(r.out);
  CHECK(summary.contains("auc"));
  std::ifstream in(out / "results.json");
  const json j = json::parse(in);
  REQUIRE(j.contains("overall"));
  CHECK(j["overall"]["sequences"] == 1);
  for (const auto& [name, v] : j.items()) {
    if (name == "overall") continue;
    CHECK(v["per_frame_iou"].size() == 6);
    CHECK(count_lines(out / "boxes" / (name + ".txt")) == 6);
  }
}

TEST_CASE("ablate reports one row per variant") {
  const fs::path out = workdir() / "ablate";
  const Run r = run("ablate --synthetic --variants ellipse,circle --steps 2 --out " + out.string() + kSmall);
  REQUIRE(r.code == 0);
  std::ifstream in(out / "ablation.json");
  const json rows = json::parse(in);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0]["variant"] == "ellipse");
  CHECK(rows[1]["variant"] == "circle");
  CHECK(run("ablate --synthetic --variants square --out " + out.string() + kSmall).code == 1);
}
