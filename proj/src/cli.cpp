#include "ram/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "ram/digest.hpp"

namespace ram {

namespace {

constexpr std::uint64_t kEvalSeedOffset = 1000003;

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

Model load_model(const RunOptions& run) {
  if (run.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (!std::filesystem::exists(run.checkpoint)) throw ConfigError("checkpoint not found: " + run.checkpoint.string());
  return load_checkpoint(run.checkpoint).model;
}

std::uint64_t seed_of(const Config& cfg) { return static_cast<std::uint64_t>(cfg.get_int("seed")); }

}  // namespace

ModelConfig model_config(const Config& cfg) {
  ModelConfig m;
  m.d_model = cfg.get_int("model.d_model");
  m.n_layers = cfg.get_int("model.n_layers");
  m.n_heads = cfg.get_int("model.n_heads");
  m.d_ff = cfg.get_int("model.d_ff");
  m.encoder_max_len = cfg.get_int("model.encoder_max_len");
  m.decoder_max_len = cfg.get_int("model.decoder_max_len");
  return m;
}

TrainConfig train_config(const Config& cfg) {
  TrainConfig t;
  t.rate_pool = cfg.get_doubles("train.rate_pool");
  t.tau = cfg.get_double("train.tau");
  t.learning_rate = cfg.get_double("train.lr");
  t.batch_size = cfg.get_int("train.batch_size");
  t.steps = cfg.get_int("train.steps");
  t.mode = parse_mode(cfg.get("train.mode"));
  t.seed = seed_of(cfg);
  t.grad_clip = cfg.get_double("train.grad_clip");
  t.validate();
  return t;
}

NeedleOptions needle_options(const Config& cfg) {
  NeedleOptions o;
  o.answer_len = cfg.get_int("data.answer_len");
  o.answer_only_positives = cfg.get_bool("data.answer_only_positives");
  return o;
}

InferenceOptions inference_options(const Config& cfg) {
  InferenceOptions o;
  o.tau = cfg.get_double("train.tau");
  o.max_answer_len = cfg.get_int("eval.max_answer_len");
  o.workers = cfg.get_int("eval.workers");
  return o;
}

std::string output_header(const Config& cfg) {
  return "# config_digest=" + cfg.digest() + " seed=" + cfg.get("seed");
}

std::vector<SegmentedExample> load_dataset(const Config& cfg, std::string_view key) {
  const std::string& path = cfg.get(key);
  if (path.empty()) throw ConfigError(std::string(key) + " is not set");
  if (!std::filesystem::exists(path)) throw ConfigError("dataset not found: " + path);
  return read_jsonl(path);
}

std::string train_log_header() { return "step,loss_nll,loss_con,alpha_histogram,wall_time"; }

TrainOutcome train_from_config(const Config& cfg, std::span<const SegmentedExample> data,
                               const std::function<void(const std::string&)>& log) {
  const TrainConfig tc = train_config(cfg);
  TrainOutcome out{Model(model_config(cfg), seed_of(cfg)), {}, 0.0};
  Trainer trainer(out.model, tc);
  const int every = std::max(1, cfg.get_int("train.log_every"));
  const auto t0 = std::chrono::steady_clock::now();
  trainer.fit(data, [&](const StepStats& s) {
    if (!log || s.step % every != 0) return;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream row;
    row << s.step << ',' << s.nll << ',' << s.con << ',' << alpha_histogram(s.alphas, tc.rate_pool) << ','
        << wall;
    log(row.str());
  });
  out.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.data_order_digest = trainer.data_order_digest();
  return out;
}

int cmd_gen_data(const Config& cfg, const RunOptions& run) {
  const std::uint64_t seed = seed_of(cfg);
  const int n = cfg.get_int("data.n_segments"), len = cfg.get_int("data.seg_len"), facts = cfg.get_int("data.n_facts");
  const NeedleOptions opts = needle_options(cfg);
  const auto train = make_needle_dataset(seed, cfg.get_int("data.train_size"), n, len, facts, opts);
  const auto eval = make_needle_dataset(seed + kEvalSeedOffset, cfg.get_int("data.eval_size"), n, len, facts, opts);
  std::filesystem::create_directories(run.out);
  write_jsonl(run.out / "train.jsonl", train);
  write_jsonl(run.out / "eval.jsonl", eval);
  std::cout << output_header(cfg) << '\n'
            << "wrote " << train.size() << " train and " << eval.size() << " eval examples to " << run.out.string()
            << '\n';
  return kExitOk;
}

int cmd_train(const Config& cfg, const RunOptions& run) {
  const auto data = load_dataset(cfg, "data.train_path");
  std::ofstream log = open_output(run.out / "train_log.csv");
  log << output_header(cfg) << '\n' << train_log_header() << '\n';
  TrainOutcome t = train_from_config(cfg, data, [&](const std::string& row) { log << row << '\n'; });
  const nlohmann::json meta = {{"config_digest", cfg.digest()},
                               {"seed", cfg.get_int("seed")},
                               {"mode", cfg.get("train.mode")},
                               {"steps", cfg.get_int("train.steps")},
                               {"data_order_digest", t.data_order_digest}};
  const auto path = run.out / "checkpoint.bin";
  save_checkpoint(t.model, path, meta);
  std::cout << output_header(cfg) << '\n'
            << "checkpoint " << path.string() << " digest " << file_digest(path) << " params "
            << parameter_digest(t.model) << " data_order " << t.data_order_digest << " wall_time_s " << t.wall_time_s
            << '\n';
  return kExitOk;
}

int cmd_eval(const Config& cfg, const RunOptions& run) {
  const Model model = load_model(run);
  const auto data = load_dataset(cfg, "data.eval_path");
  const Mode mode = parse_mode(cfg.get("train.mode"));
  const auto pool = cfg.get_doubles("train.rate_pool");
  std::ofstream out = open_output(run.out / "metrics.csv");
  out << output_header(cfg) << '\n' << eval_csv_header() << '\n';
  for (double alpha : cfg.get_doubles("eval.rates")) {
    const EvalRow row = evaluate(model, data, alpha, mode, inference_options(cfg), pool);
    out << eval_csv_row(row) << '\n';
    std::cout << eval_csv_row(row) << '\n';
  }
  return kExitOk;
}

int cmd_ablate(const Config& cfg, const RunOptions& run) {
  const auto train = load_dataset(cfg, "data.train_path");
  const auto eval = load_dataset(cfg, "data.eval_path");
  const double alpha = cfg.get_double("ablate.alpha");
  std::ofstream out = open_output(run.out / "ablation.csv");
  out << output_header(cfg) << '\n' << eval_csv_header() << ",data_order_digest\n";
  for (Mode mode : kAllModes) {
    Config c = cfg;
    c.set("train.mode", to_string(mode));
    std::string order;
    Model model = [&] {
      if (mode == Mode::standard && !run.checkpoint.empty()) {
        Checkpoint ck = load_checkpoint(run.checkpoint);
        order = ck.meta.value("data_order_digest", "");
        return std::move(ck.model);
      }
      TrainOutcome t = train_from_config(c, train);
      order = t.data_order_digest;
      save_checkpoint(t.model, run.out / ("checkpoint_" + std::string(to_string(mode)) + ".bin"),
                      {{"mode", to_string(mode)}, {"data_order_digest", order}});
      return std::move(t.model);
    }();
    const EvalRow row = evaluate(model, eval, alpha, mode, inference_options(cfg));
    out << eval_csv_row(row) << ',' << order << '\n';
    std::cout << eval_csv_row(row) << ',' << order << '\n';
  }
  return kExitOk;
}

int cmd_compress(const Config& cfg, const RunOptions& run) {
  const Model model = load_model(run);
  if (run.input.empty()) throw ConfigError("--input is required");
  std::ifstream in(run.input);
  if (!in) throw DataError("cannot read " + run.input.string());
  std::string line;
  while (std::getline(in, line) && line.find_first_not_of(" \t\r") == std::string::npos) {
  }
  const SegmentedExample ex = from_jsonl_line(line);
  ex.validate(model.config.vocab);
  const Compression c = compress(model, ex, run.alpha, parse_mode(cfg.get("train.mode")), inference_options(cfg));
  nlohmann::json j = plan_to_json(ex, c);
  j["config_digest"] = cfg.digest();
  j["seed"] = cfg.get_int("seed");
  std::ofstream out = open_output(run.out / "plan.json");
  out << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_bench(const Config& cfg, const RunOptions& run) {
  const int n = cfg.get_int("bench.n_segments"), len = cfg.get_int("bench.seg_len");
  ModelConfig mc = model_config(cfg);
  Model model = run.checkpoint.empty() ? Model(mc, seed_of(cfg)) : load_model(run);
  // Position tables must cover the benchmark lengths.
  if (model.config.encoder_max_len < len || model.config.decoder_max_len < n * len + 16) {
    if (!run.checkpoint.empty()) throw ConfigError("checkpoint context is too short for the benchmark shape");
    mc.encoder_max_len = std::max(mc.encoder_max_len, len);
    mc.decoder_max_len = n * len + 16;
    model = Model(mc, seed_of(cfg));
  }
  const auto data = make_needle_dataset(seed_of(cfg) + kEvalSeedOffset, cfg.get_int("bench.examples"), n, len,
                                        cfg.get_int("data.n_facts"), needle_options(cfg));
  BenchOptions opts;
  opts.repetitions = cfg.get_int("bench.repetitions");
  opts.warmup = cfg.get_int("bench.warmup");
  opts.answer_len = cfg.get_int("bench.answer_len");
  opts.tau = cfg.get_double("train.tau");
  const auto rows = bench(model, data, cfg.get_doubles("bench.rates"), opts);
  std::ofstream out = open_output(run.out / "bench.csv");
  out << output_header(cfg) << '\n' << bench_csv_header() << '\n';
  std::cout << bench_csv_header() << '\n';
  for (const BenchRow& r : rows) {
    out << bench_csv_row(r) << '\n';
    std::cout << bench_csv_row(r) << '\n';
  }
  return kExitOk;
}

int cmd_flops(const Config& cfg, const RunOptions& run) {
  const int n = cfg.get_int("bench.n_segments"), len = cfg.get_int("bench.seg_len");
  const ModelDims dims = ModelDims::from(model_config(cfg));
  std::ofstream out = open_output(run.out / "flops.csv");
  out << output_header(cfg) << "\n# softmax, normalization and activation FLOPs are not counted\n"
      << flops_csv_header() << '\n';
  for (double alpha : cfg.get_doubles("bench.rates")) {
    const FlopsReport r = flops_report(n * len, len, 2, cfg.get_int("bench.answer_len"), alpha, dims);
    out << flops_csv_row(r) << '\n';
    std::cout << flops_csv_row(r) << '\n';
  }
  return kExitOk;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Query-aware adaptive context compression"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<long long> seed;
  std::string rates, mode;
  std::optional<int> workers;
  RunOptions run;
  std::string out = ".", checkpoint, input;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file (key=value lines)");
    sub->add_option("--set", overrides, "Override, key=value (repeatable)");
    sub->add_option("--seed", seed, "Seed");
    sub->add_option("--out", out, "Output directory");
  };
  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const Config&, const RunOptions&);
  };
  const Command commands[] = {
      {"gen-data", "Generate the synthetic train/eval sets", cmd_gen_data},
      {"train", "Train a model and write a checkpoint and training log", cmd_train},
      {"eval", "Evaluate a checkpoint over a rate grid", cmd_eval},
      {"ablate", "Train and evaluate every mode under a shared seed", cmd_ablate},
      {"compress", "Write the compression plan for one example", cmd_compress},
      {"bench", "Latency benchmark over a rate grid", cmd_bench},
      {"flops", "Analytical FLOPs over a rate grid", cmd_flops},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    common(sub);
    const std::string name = c.name;
    if (name == "eval" || name == "ablate" || name == "compress" || name == "bench") {
      sub->add_option("--checkpoint", checkpoint, "Checkpoint file");
    }
    if (name == "eval" || name == "bench") sub->add_option("--rates", rates, "Comma-separated rates");
    if (name == "train" || name == "eval" || name == "compress") sub->add_option("--mode", mode, "Mode");
    if (name == "eval") sub->add_option("--workers", workers, "Evaluation threads");
    if (name == "compress") {
      sub->add_option("--input", input, "JSONL file holding the example")->required();
      sub->add_option("--alpha", run.alpha, "Compression rate");
    }
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    Config cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const std::string& o : overrides) cfg.set_assignment(o);
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (!mode.empty()) cfg.set("train.mode", mode);
    if (workers) cfg.set("eval.workers", std::to_string(*workers));
    for (const auto& [sub, c] : subs) {
      if (!sub->parsed()) continue;
      if (!rates.empty()) cfg.set(std::string(c->name) == "bench" ? "bench.rates" : "eval.rates", rates);
      parse_mode(cfg.get("train.mode"));
      run.out = out;
      run.checkpoint = checkpoint;
      run.input = input;
      return c->fn(cfg, run);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace ram
