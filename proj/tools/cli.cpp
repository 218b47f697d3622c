#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <sstream>

#include "neptune/checkpoint.hpp"
#include "neptune/errors.hpp"
#include "neptune/eval.hpp"
#include "neptune/kernels.hpp"
#include "neptune/kg.hpp"
#include "neptune/synthetic.hpp"
#include "neptune/training.hpp"

namespace fs = std::filesystem;

namespace neptune::cli {

namespace {

enum class Verbosity { quiet, info, debug };

Verbosity verbosity_from_env() {
  const char* v = std::getenv("NEPTUNE_LOG");
  if (!v) return Verbosity::info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return Verbosity::quiet;
  if (s == "debug" || s == "2") return Verbosity::debug;
  return Verbosity::info;
}

class Log {
 public:
  Log(std::ostream& err, Verbosity v) : err_(err), v_(v) {}
  void info(const std::string& m) const {
    if (v_ >= Verbosity::info) err_ << "[neptune] " << m << '\n';
  }
  void debug(const std::string& m) const {
    if (v_ >= Verbosity::debug) err_ << "[neptune:debug] " << m << '\n';
  }

 private:
  std::ostream& err_;
  Verbosity v_;
};

/// Raised for bad paths/flags that CLI11 cannot see.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

nlohmann::json file_fingerprint(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return {{"path", p.string()}, {"bytes", bytes.size()}, {"crc32", crc32(bytes.data(), bytes.size())}};
}

void require_dataset(const fs::path& dir) {
  for (const char* f : {"train.txt", "valid.txt", "test.txt"}) {
    if (!fs::is_regular_file(dir / f)) throw IoError("missing dataset file " + (dir / f).string());
  }
}

// Flags that mirror TrainConfig fields. Values stay as strings so that only
// flags given on the command line override the config file.
struct ConfigFlags {
  std::vector<std::pair<std::string, std::string>> values;

  void add_to(CLI::App& app) {
    static const char* keys[] = {"d",          "k",           "lr",
                                 "lr_decay",   "epochs",      "batch_size",
                                 "input_dropout", "hidden1_dropout", "hidden2_dropout",
                                 "batch_norm", "label_smoothing", "activation",
                                 "seed",       "adam_beta1",  "adam_beta2",
                                 "adam_eps",   "valid_every", "keep_best"};
    values.reserve(std::size(keys));
    for (const char* key : keys) values.emplace_back(key, "");
    for (auto& [key, value] : values) {
      app.add_option("--" + key, value, "TrainConfig." + key);
    }
  }

  void apply(TrainConfig& cfg) const {
    for (const auto& [key, value] : values) {
      if (!value.empty()) set_config_value(cfg, key, value);
    }
  }
};

TrainConfig read_config_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UsageError("cannot open config file " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::vector<std::string> nearest_labels(const Vocabulary& v, const std::string& label,
                                        std::size_t n) {
  std::vector<std::pair<std::size_t, std::string>> scored;
  scored.reserve(v.size());
  for (const auto& l : v.labels()) scored.emplace_back(edit_distance(label, l), l);
  const std::size_t m = std::min(n, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(m), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back(scored[i].second);
  return out;
}

std::uint32_t lookup(const Vocabulary& v, const std::string& label, const char* what) {
  if (auto id = v.find(label)) return *id;
  std::string msg = std::string("unknown ") + what + " '" + label + "'; nearest matches:";
  for (const auto& s : nearest_labels(v, label, 5)) msg += " " + s;
  throw ParseError("vocabulary", 0, msg);
}

Checkpoint load_for(const fs::path& ckpt, const KnowledgeGraph& g) {
  Checkpoint c = load_checkpoint(ckpt);
  check_compatible(c, g);
  return c;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config;
  ConfigFlags flags;
};

int cmd_train(const TrainArgs& a, std::ostream& out, const Log& log) {
  const fs::path data(a.data), dir(a.out);
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : read_config_file(a.config);
  a.flags.apply(cfg);
  cfg.validate();

  require_dataset(data);
  const auto t0 = std::chrono::steady_clock::now();
  const KnowledgeGraph g = load_graph(data);
  const double t_load = seconds_since(t0);
  log.info("loaded " + std::to_string(g.num_entities()) + " entities, " +
           std::to_string(g.raw_relation_count()) + " relations (" +
           std::to_string(g.num_relations()) + " with reciprocals), " +
           std::to_string(g.raw_split(Split::train).size()) + " training triples");

  fs::create_directories(dir);
  std::ofstream train_log(dir / "train.log", std::ios::trunc);
  if (!train_log) throw IoError("cannot write " + (dir / "train.log").string());

  const auto t1 = std::chrono::steady_clock::now();
  TrainResult res = train(g, cfg, [&](const EpochLog& e) {
    train_log << format_epoch_log(e) << '\n';
    log.debug(format_epoch_log(e));
  });
  const double t_train = seconds_since(t1);
  train_log.flush();

  const auto t2 = std::chrono::steady_clock::now();
  save_checkpoint(dir / "checkpoint.nptn", make_checkpoint(res.params, res.adam, cfg, &g));
  if (res.best) {
    save_checkpoint(dir / "best.nptn", make_checkpoint(*res.best, res.adam, cfg, &g));
  }
  const double t_save = seconds_since(t2);

  nlohmann::json cfg_json = nlohmann::json::object();
  {
    std::istringstream kv(to_key_values(cfg));
    std::string line;
    while (std::getline(kv, line)) {
      const auto eq = line.find(" = ");
      if (eq != std::string::npos) cfg_json[line.substr(0, eq)] = line.substr(eq + 3);
    }
  }
  nlohmann::json manifest = {
      {"config", cfg_json},
      {"config_text", to_key_values(cfg)},
      {"seed", cfg.seed},
      {"version", NEPTUNE_VERSION},
      {"kernels", std::string(kernels::to_string(kernels::active().isa))},
      {"dataset",
       {{"dir", data.string()},
        {"train", file_fingerprint(data / "train.txt")},
        {"valid", file_fingerprint(data / "valid.txt")},
        {"test", file_fingerprint(data / "test.txt")}}},
      {"timings_sec", {{"load", t_load}, {"train", t_train}, {"save", t_save}}},
      {"final_loss", res.log.empty() ? 0.0 : res.log.back().mean_loss},
  };
  std::ofstream mf(dir / "manifest.json", std::ios::trunc);
  mf << manifest.dump(2) << '\n';

  out << "wrote " << (dir / "checkpoint.nptn").string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint, data, split = "test", dump;
  std::size_t threads = 1;
  std::size_t batch_size = 256;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, const Log& log) {
  require_dataset(a.data);
  const KnowledgeGraph g = load_graph(a.data);
  const Checkpoint c = load_for(a.checkpoint, g);
  const Split split = parse_split(a.split);
  const auto t0 = std::chrono::steady_clock::now();
  const RankingReport r =
      evaluate(c.params, g, split, c.config.activation, EvalOptions{a.batch_size, a.threads});
  log.debug("evaluation took " + std::to_string(seconds_since(t0)) + " s");
  out << format_report(r) << '\n';
  if (!a.dump.empty()) {
    std::ofstream dump(a.dump, std::ios::trunc);
    if (!dump) throw IoError("cannot write " + a.dump);
    write_rank_dump(dump, r, g);
  }
  return kExitOk;
}

struct ScoreArgs {
  std::string checkpoint, data, head, relation;
  std::size_t top_k = 10;
  bool annotate = false;
};

int cmd_score(const ScoreArgs& a, std::ostream& out, const Log&) {
  require_dataset(a.data);
  const KnowledgeGraph g = load_graph(a.data);
  const Checkpoint c = load_for(a.checkpoint, g);
  const EntityId h = lookup(g.entities(), a.head, "entity");
  const RelationId r = lookup(g.relations(), a.relation, "relation");

  const Vector scores = score_all_tails(c.params, h, r, c.config.activation);
  std::vector<EntityId> order(scores.size());
  std::iota(order.begin(), order.end(), EntityId{0});
  const std::size_t k = std::min(a.top_k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](EntityId x, EntityId y) {
                      return scores[x] > scores[y] || (scores[x] == scores[y] && x < y);
                    });
  const auto known = g.known_tails(h, r);
  out.precision(9);
  for (std::size_t i = 0; i < k; ++i) {
    const EntityId t = order[i];
    out << (i + 1) << '\t' << g.entities().label(t) << '\t' << scores[t];
    if (a.annotate && std::binary_search(known.begin(), known.end(), t)) out << "\tknown";
    out << '\n';
  }
  return kExitOk;
}

struct VocabArgs {
  std::string data, out, kind = "entities";
};

int cmd_export_vocab(const VocabArgs& a, std::ostream& out, const Log&) {
  require_dataset(a.data);
  const KnowledgeGraph g = load_graph(a.data);
  const Vocabulary& v = a.kind == "relations" ? g.relations() : g.entities();
  if (a.out.empty() || a.out == "-") {
    write_vocabulary(out, v);
  } else {
    std::ofstream f(a.out, std::ios::trunc);
    if (!f) throw IoError("cannot write " + a.out);
    write_vocabulary(f, v);
  }
  return kExitOk;
}

struct SynthArgs {
  std::string out;
  SyntheticSpec spec;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, const Log&) {
  write_synthetic(a.out, make_synthetic(a.spec));
  out << "wrote synthetic dataset to " << a.out << '\n';
  return kExitOk;
}

}  // namespace

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"NePTuNe / TuckER knowledge-graph link prediction"};
  app.require_subcommand(1);
  std::string isa = "auto";
  app.add_option("--kernels", isa, "Inner-loop variant: auto, scalar or avx2")
      ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--data", train_args.data, "Directory with train/valid/test.txt")->required();
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--config", train_args.config, "key = value config file");
  train_args.flags.add_to(*train_cmd);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Filtered MRR / Hits@n on a split");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--data", eval_args.data)->required();
  eval_cmd->add_option("--split", eval_args.split)->check(CLI::IsMember({"train", "valid", "test"}));
  eval_cmd->add_option("--dump", eval_args.dump, "Write per-triple ranks here");
  eval_cmd->add_option("--threads", eval_args.threads)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--batch-size", eval_args.batch_size)->check(CLI::PositiveNumber);

  ScoreArgs score_args;
  auto* score_cmd = app.add_subcommand("score", "Top-k tails for a (head, relation) query");
  score_cmd->add_option("--checkpoint", score_args.checkpoint)->required();
  score_cmd->add_option("--data", score_args.data)->required();
  score_cmd->add_option("--head", score_args.head)->required();
  score_cmd->add_option("--relation", score_args.relation)->required();
  score_cmd->add_option("--top-k", score_args.top_k)->check(CLI::PositiveNumber);
  score_cmd->add_flag("--annotate-filtered", score_args.annotate, "Mark known-true tails");

  VocabArgs vocab_args;
  auto* vocab_cmd = app.add_subcommand("export-vocab", "Dump id<TAB>label");
  vocab_cmd->add_option("--data", vocab_args.data)->required();
  vocab_cmd->add_option("--out", vocab_args.out, "Output file (default stdout)");
  vocab_cmd->add_option("--kind", vocab_args.kind)->check(CLI::IsMember({"entities", "relations"}));

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Write a random synthetic dataset");
  synth_cmd->add_option("--out", synth_args.out)->required();
  synth_cmd->add_option("--entities", synth_args.spec.entities);
  synth_cmd->add_option("--relations", synth_args.spec.relations);
  synth_cmd->add_option("--triples", synth_args.spec.triples);
  synth_cmd->add_option("--heldout", synth_args.spec.heldout);
  synth_cmd->add_option("--seed", synth_args.spec.seed);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const Log log(err, verbosity_from_env());
  try {
    kernels::select(kernels::parse_isa(isa));
    log.debug(std::string("kernels: ") + kernels::active().name);
    if (train_cmd->parsed()) return cmd_train(train_args, out, log);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, out, log);
    if (score_cmd->parsed()) return cmd_score(score_args, out, log);
    if (vocab_cmd->parsed()) return cmd_export_vocab(vocab_args, out, log);
    if (synth_cmd->parsed()) return cmd_synth(synth_args, out, log);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const CheckpointMismatchError& e) {
    err << "checkpoint/dataset mismatch: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace neptune::cli
