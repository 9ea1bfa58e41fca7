#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ram/cli.hpp"
#include "ram/digest.hpp"

using namespace ram;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ram_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ram");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("config keys") {
  Config c;
  CHECK(c.get_int("data.n_segments") == 8);
  c.set_assignment("train.lr=0.01");
  CHECK(c.get_double("train.lr") == 0.01);
  CHECK_THROWS_WITH_AS(c.set("train.learning_rate", "1"), doctest::Contains("valid keys: seed model.d_model"),
                       ConfigError);
  CHECK_THROWS_AS(c.set("train.steps", "many"), ConfigError);
  CHECK_THROWS_AS(c.set("eval.rates", "2,x"), ConfigError);
  CHECK(c.get_doubles("eval.rates") == std::vector<double>{2, 4, 8, 16, 32});
}

TEST_CASE("config digest follows content") {
  Config a, b;
  CHECK(a.digest() == b.digest());
  b.set("seed", "2");
  CHECK(a.digest() != b.digest());
  const fs::path dir = scratch("cfg");
  std::ofstream(dir / "x.cfg") << "# comment\n\nseed = 2\n";
  Config c;
  c.load_file(dir / "x.cfg");
  CHECK(c.digest() == b.digest());
  std::ofstream(dir / "bad.cfg") << "seed=1\nbogus=3\n";
  CHECK_THROWS_WITH_AS(c.load_file(dir / "bad.cfg"), doctest::Contains("bad.cfg:2"), ConfigError);
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("codes");
  CHECK(cli({"train", "--out", dir.string()}) == kExitUsage);
  CHECK(cli({"train", "--out", dir.string(), "--set", "data.train_path=" + (dir / "missing.jsonl").string()}) ==
        kExitUsage);
  CHECK(cli({"train", "--set", "nope=1"}) == kExitUsage);
  CHECK(cli({"frobnicate"}) == kExitUsage);
  std::ofstream(dir / "broken.jsonl") << "{not json\n";
  CHECK(cli({"train", "--out", dir.string(), "--set", "data.train_path=" + (dir / "broken.jsonl").string()}) ==
        kExitData);
  CHECK(cli({"eval", "--out", dir.string(), "--checkpoint", (dir / "none.bin").string()}) == kExitUsage);
}

TEST_CASE("gen-data, train and compress") {
  const fs::path dir = scratch("flow");
  const std::vector<std::string> common = {"--set", "model.d_model=16", "--set", "model.n_heads=2",
                                           "--set", "model.d_ff=32",    "--set", "data.train_size=8",
                                           "--set", "data.eval_size=4"};
  auto with = [&](std::vector<std::string> a) {
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  REQUIRE(cli(with({"gen-data", "--out", (dir / "data").string()})) == kExitOk);
  const std::string train = "data.train_path=" + (dir / "data" / "train.jsonl").string();
  REQUIRE(cli(with({"train", "--out", (dir / "a").string(), "--set", train, "--set", "train.steps=3",
                    "--set", "train.batch_size=2"})) == kExitOk);
  REQUIRE(cli(with({"train", "--out", (dir / "b").string(), "--set", train, "--set", "train.steps=3",
                    "--set", "train.batch_size=2"})) == kExitOk);
  CHECK(file_digest(dir / "a" / "checkpoint.bin") == file_digest(dir / "b" / "checkpoint.bin"));

  std::ifstream log(dir / "a" / "train_log.csv");
  std::string line;
  std::getline(log, line);
  CHECK(line.rfind("# config_digest=", 0) == 0);
  std::getline(log, line);
  CHECK(line == "step,loss_nll,loss_con,alpha_histogram,wall_time");

  REQUIRE(cli(with({"compress", "--out", (dir / "c").string(), "--checkpoint",
                    (dir / "a" / "checkpoint.bin").string(), "--input", (dir / "data" / "eval.jsonl").string(),
                    "--alpha", "4"})) == kExitOk);
  std::ifstream in(dir / "c" / "plan.json");
  const auto plan = nlohmann::json::parse(in);
  const SegmentedExample ex = read_jsonl(dir / "data" / "eval.jsonl").front();
  double total = 0.0;
  int close = 0;
  std::string retained;
  for (const auto& s : plan["segments"]) {
    total += s["probability"].get<double>();
    if (s["action"] == "close_read") {
      ++close;
      const auto i = s["index"].get<std::size_t>();
      CHECK(s["text"].get<std::string>() == ex.segment_texts[i]);
      retained += (retained.empty() ? "" : "\n") + ex.segment_texts[i];
    }
  }
  CHECK(std::abs(total - 1.0) <= 1e-9);
  CHECK(close == budget(ex.context_length(), ex.segment_length(), 4.0));
  CHECK(plan["retained_text"].get<std::string>() == retained);

  std::ofstream(dir / "bad.jsonl") << "[1, 2]\n";
  CHECK(cli(with({"compress", "--out", (dir / "c").string(), "--checkpoint", (dir / "a" / "checkpoint.bin").string(),
                  "--input", (dir / "bad.jsonl").string()})) == kExitData);
}

TEST_CASE("checkpoint round trip") {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  const Model m(c, 3);
  const fs::path dir = scratch("ckpt");
  save_checkpoint(m, dir / "m.bin", {{"note", "x"}});
  const Checkpoint back = load_checkpoint(dir / "m.bin");
  CHECK(parameter_digest(back.model) == parameter_digest(m));
  CHECK(back.meta["note"] == "x");
  std::ofstream(dir / "junk.bin") << "nope";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.bin"), DataError);
}
