#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "bmt_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Runs the CLI with stdout and stderr captured; returns the exit status.
int bmt(const std::string& args, const std::string& log = "last") {
  const std::string cmd = std::string(BMT_CLI_PATH) + " " + args + " >" + path(log + ".out") +
                          " 2>" + path(log + ".err");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t line_count(const std::string& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

// Shared fixture: small dataset, encoder and checkpoint.
struct Pipeline {
  std::string data = path("data.jsonl");
  std::string encoder = path("enc.bin");
  std::string model = path("model.bin");
  std::string model_args = " --hidden 16 --hidden 8 --epochs 3 --batch-size 16 --seed 4";

  Pipeline() {
    REQUIRE(bmt("synth --seed 3 --n-blackmarket 60 --n-genuine 60 --out " + data) == 0);
    REQUIRE(bmt("pretrain-encoder --corpus " + data + " --out " + encoder +
                " --seed 5 --epochs 1 --char-dim 4 --gru-hidden 8 --embed-dim 8 --hashtag-min-count 2") == 0);
    REQUIRE(bmt("train --data " + data + " --encoder " + encoder + " --out " + model + model_args) == 0);
  }
};

const Pipeline& pipeline() {
  static const Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("synth is byte-identical across runs") {
  REQUIRE(bmt("synth --seed 7 --n-blackmarket 50 --n-genuine 40 --out " + path("s1.jsonl")) == 0);
  REQUIRE(bmt("synth --seed 7 --n-blackmarket 50 --n-genuine 40 --out " + path("s2.jsonl")) == 0);
  CHECK(slurp(path("s1.jsonl")) == slurp(path("s2.jsonl")));
  CHECK(line_count(path("s1.jsonl")) == 90);
  const std::string sidecar = slurp(path("s1.jsonl.provenance"));
  CHECK(sidecar.find("seed=7") != std::string::npos);
  CHECK(sidecar.find("generator.version=") != std::string::npos);
  CHECK(sidecar.find("difficulty=0.1") != std::string::npos);
}

TEST_CASE("synth defaults and invalid sizes") {
  REQUIRE(bmt("synth --seed 1 --out " + path("default.jsonl")) == 0);
  CHECK(line_count(path("default.jsonl")) == 3796);
  CHECK(bmt("synth --n-blackmarket 0 --out " + path("zero.jsonl")) == 2);
  CHECK(bmt("synth --no-such-flag --out " + path("zero.jsonl")) == 2);
  CHECK(bmt("") == 2);
}

TEST_CASE("config files are layered under flags") {
  std::ofstream(path("synth.ini")) << "[synth]\nseed=7\nn-blackmarket=50\nn-genuine=40\n";
  REQUIRE(bmt("--config " + path("synth.ini") + " synth --out " + path("s3.jsonl")) == 0);
  CHECK(slurp(path("s3.jsonl")) == slurp(path("s1.jsonl")));
  REQUIRE(bmt("--config " + path("synth.ini") + " synth --n-genuine 10 --out " + path("s4.jsonl")) == 0);
  CHECK(line_count(path("s4.jsonl")) == 60);
  CHECK(slurp(path("s4.jsonl.provenance")).find("n-blackmarket=50") != std::string::npos);

  std::ofstream(path("typo.ini")) << "[synth]\nsed=7\n";
  CHECK(bmt("--config " + path("typo.ini") + " synth --out " + path("s5.jsonl")) == 2);
}

TEST_CASE("filter writes kept records and a rejection log") {
  std::ofstream(path("mixed.jsonl"))
      << R"({"id":"1","text":"hello world"})" "\n"
      << R"({"id":"2","text":"x"})" "\n"
      << R"({"id":"3","text":"bonjour","lang":"fr"})" "\n";
  REQUIRE(bmt("filter --in " + path("mixed.jsonl") + " --out " + path("kept.jsonl") +
              " --rejections " + path("rejected.tsv")) == 0);
  CHECK(line_count(path("kept.jsonl")) == 1);
  const std::string rej = slurp(path("rejected.tsv"));
  CHECK(rej.find("too_short") != std::string::npos);
  CHECK(rej.find("language_tag") != std::string::npos);
}

TEST_CASE("schema violations exit with 2") {
  std::ofstream(path("bad.jsonl")) << R"({"id":"1"})" "\n";
  CHECK(bmt("filter --in " + path("bad.jsonl") + " --out " + path("never.jsonl")) == 2);
  CHECK(slurp(path("last.err")).find("line 1") != std::string::npos);
  CHECK(bmt("features --data " + path("missing.jsonl") + " --out " + path("f.tsv")) == 2);
}

TEST_CASE("train is deterministic") {
  const auto& p = pipeline();
  const std::string again = path("model2.bin");
  REQUIRE(bmt("train --data " + p.data + " --encoder " + p.encoder + " --out " + again + p.model_args) == 0);
  CHECK(slurp(p.model) == slurp(again));
  CHECK(slurp(p.model + ".history.tsv") == slurp(again + ".history.tsv"));
  CHECK(line_count(again + ".history.tsv") == 4);
  CHECK(slurp(p.model).substr(0, 4) == "MTLB");
}

TEST_CASE("training on a single class exits with 1") {
  const auto& p = pipeline();
  std::ifstream in(p.data);
  std::ofstream out(path("one_class.jsonl"));
  for (std::string line; std::getline(in, line);)
    if (line.find("\"label\":\"genuine\"") != std::string::npos) out << line << "\n";
  out.close();
  CHECK(bmt("train --data " + path("one_class.jsonl") + " --encoder " + p.encoder + " --out " +
            path("never.bin") + p.model_args) == 1);
}

TEST_CASE("eval reports the three comparison rows deterministically") {
  const auto& p = pipeline();
  const std::string args = " --data " + p.data + " --encoder " + p.encoder +
                           " --folds 3 --hidden 8 --hidden 4 --epochs 2 --batch-size 16 --seed 9";
  REQUIRE(bmt("eval" + args + " --out " + path("r1.json"), "eval1") == 0);
  REQUIRE(bmt("eval" + args + " --out " + path("r2.json"), "eval2") == 0);
  CHECK(slurp(path("r1.json")) == slurp(path("r2.json")));
  CHECK(slurp(path("eval1.out")) == slurp(path("eval2.out")));

  auto j = nlohmann::json::parse(slurp(path("r1.json")));
  std::vector<std::string> names;
  for (const auto& row : j["rows"]) names.push_back(row["name"]);
  CHECK(names == std::vector<std::string>{"Multitask", "Single-task", "Feature-Concat-MLP"});
  const std::string table = slurp(path("eval1.out"));
  for (const auto& n : names) CHECK(table.find(n) != std::string::npos);
}

TEST_CASE("eval of a saved checkpoint") {
  const auto& p = pipeline();
  REQUIRE(bmt("eval --data " + p.data + " --encoder " + p.encoder + " --model " + p.model +
              " --out " + path("single.json")) == 0);
  auto j = nlohmann::json::parse(slurp(path("single.json")));
  CHECK(j.dump().find("macro") != std::string::npos);
}

TEST_CASE("predict a single tweet") {
  const auto& p = pipeline();
  const std::string text = "Google vows to double podcast audience with new Android app http://bit.ly/x via @usatoday";
  REQUIRE(bmt("predict --model " + p.model + " --encoder " + p.encoder + " --text '" + text +
              "' --out " + path("pred.jsonl")) == 0);
  std::ifstream in(path("pred.jsonl"));
  std::string line;
  REQUIRE(std::getline(in, line));
  auto j = nlohmann::json::parse(line);
  const double prob = j["probability_blackmarket"];
  CHECK(prob >= 0.0);
  CHECK(prob <= 1.0);
  const std::string label = j["label"];
  CHECK((label == "genuine" || label == "blackmarket"));
  CHECK(j["retweets_5d"].get<double>() >= 0.0);
  CHECK(j["likes_5d"].get<double>() >= 0.0);
  CHECK(j.contains("id"));
}

TEST_CASE("predict over a dataset is deterministic") {
  const auto& p = pipeline();
  const std::string args = "predict --model " + p.model + " --encoder " + p.encoder + " --data " + p.data;
  REQUIRE(bmt(args + " --out " + path("p1.jsonl")) == 0);
  REQUIRE(bmt(args + " --out " + path("p2.jsonl")) == 0);
  CHECK(slurp(path("p1.jsonl")) == slurp(path("p2.jsonl")));
  CHECK(line_count(path("p1.jsonl")) == 120);
  CHECK(bmt("predict --model " + p.data + " --encoder " + p.encoder + " --text hi") == 2);
}

TEST_CASE("features writes one row per record") {
  const auto& p = pipeline();
  REQUIRE(bmt("features --data " + p.data + " --out " + path("f.tsv")) == 0);
  CHECK(line_count(path("f.tsv")) == 121);  // header plus records
}

TEST_CASE("verify passes and catches an injected gradient fault") {
  CHECK(bmt("verify", "verify") == 0);
  const std::string report = slurp(path("verify.out"));
  for (const char* name : {"grad/fc", "grad/batchnorm", "grad/dropout", "grad/gru_unrolled",
                           "grad/bigru_encoder", "grad/cross_stitch", "grad/softmax_ce", "grad/mse",
                           "grad/joint_multitask", "grad/joint_concat_mlp"})
    CHECK(report.find(name) != std::string::npos);
  CHECK(bmt("verify --inject-gradient-fault 1.01", "fault") == 1);
}
