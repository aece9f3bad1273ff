// divnet: train, evaluate and inspect slate rerankers from the shell.
//
// Exit status: 0 on success, 1 when a run fails, 2 for usage, config and
// path errors.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "divnet/baselines.hpp"
#include "divnet/checkpoint.hpp"
#include "divnet/data.hpp"
#include "divnet/errors.hpp"
#include "divnet/metrics.hpp"
#include "divnet/model.hpp"
#include "divnet/rng.hpp"
#include "divnet/run_config.hpp"
#include "divnet/synthetic.hpp"
#include "divnet/training.hpp"

namespace fs = std::filesystem;
using namespace divnet;

namespace {

constexpr int kRunFailure = 1;
constexpr int kUsageFailure = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Paths {
  std::string config;
  std::string data;
  std::string validation;
  std::string checkpoint;
  std::string input;
  std::string out;
  std::string json;
};

struct Invocation {
  std::string command;
  unsigned mask = 0;
  Paths paths;
  std::map<std::string, std::string> flag_text;
  std::map<std::string, bool> flag_switch;
  CLI::App* app = nullptr;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Header lines shared by every text artifact. LETOR and metadata readers
// skip '#' lines, CSV consumers can pass comment='#'.
std::string provenance(const std::string& command, const RunConfig& run,
                       const std::string& checkpoint_hash) {
  return "# divnet " + command + "\n# config " + run.to_json().dump() + "\n# checkpoint " +
         checkpoint_hash + "\n";
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec || !fs::is_directory(path)) throw UsageError("cannot create output directory '" + path + "'");
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) ensure_directory(parent.string());
}

RunConfig resolve(const Invocation& inv) {
  RunConfig run(inv.mask);
  if (!inv.paths.config.empty()) {
    if (!fs::is_regular_file(inv.paths.config))
      throw UsageError("config file '" + inv.paths.config + "' does not exist");
    run.load_file(inv.paths.config);
  }
  auto apply = [&](const std::string& key, const std::string& value) {
    if (auto note = run.set_flag(key, value)) std::cerr << "divnet: note: " << *note << '\n';
  };
  for (const auto& [key, value] : inv.flag_text) apply(key, value);
  for (const auto& [key, on] : inv.flag_switch)
    if (on) apply(key, "true");
  return run;
}

struct LoadedCheckpoint {
  Checkpoint ckpt;
  std::string hash;
  std::size_t item_dim = 0;
  std::size_t user_dim = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path) {
  require_file(path, "checkpoint");
  LoadedCheckpoint out;
  const std::string text = read_file(path);
  try {
    out.ckpt = parse_checkpoint(text);
  } catch (const VersionError& e) {
    throw UsageError("checkpoint '" + path + "': " + e.what());
  } catch (const IntegrityError& e) {
    throw UsageError("checkpoint '" + path + "': " + e.what());
  }
  out.hash = "fnv1a64:" + hex64(fnv1a64(text));
  const auto& model = out.ckpt.config.at("model");
  out.item_dim = model.at("item_dim").get<std::size_t>();
  out.user_dim = model.value("user_dim", std::size_t{0});
  return out;
}

void inherit_from_checkpoint(RunConfig& run, const Checkpoint& ckpt) {
  if (!ckpt.config.contains("run")) return;
  const auto& stored = ckpt.config.at("run");
  for (const char* key : {"alpha"})
    if (run.has(key) && stored.contains(key)) run.inherit(key, stored.at(key).get<std::string>(), "checkpoint");
}

std::vector<RankingInstance> load_data(const std::string& path, std::size_t width, std::size_t user_dim,
                                       const char* what) {
  require_file(path, what);
  try {
    return load_letor(path, width, user_dim);
  } catch (const ParseError& e) {
    if (width != 0 && std::string(e.what()).find("exceeds width") != std::string::npos)
      throw UsageError("dimension mismatch: " + path + " has more features than the checkpoint's " +
                       std::to_string(width) + " (" + e.what() + ")");
    throw UsageError(path + ": " + e.what());
  }
}

void expect_kind(const Checkpoint& ckpt, ModelKind wanted, const std::string& method) {
  if (ckpt.kind != wanted)
    throw UsageError("method '" + method + "' needs a " + to_string(wanted) + " checkpoint, got " +
                     to_string(ckpt.kind));
}

EvalOptions eval_options(const RunConfig& run) {
  EvalOptions o;
  o.cutoffs = run.counts("cutoffs");
  if (o.cutoffs.empty()) throw ConfigError("cutoffs must list at least one value");
  o.graded = run.boolean("graded_ndcg");
  o.per_query = run.boolean("per_query");
  o.threads = std::max<std::size_t>(1, run.count("threads"));
  return o;
}

void print_summary(std::ostream& out, const EvalReport& report) {
  const auto doc = report.to_json();
  out << "method " << (report.method.empty() ? "-" : report.method) << "  queries "
      << doc.at("queries").get<std::size_t>() << '\n';
  for (const auto& [name, value] : doc.at("metrics").items()) {
    char line[96];
    std::snprintf(line, sizeof line, "  %-10s %.4f\n", name.c_str(), value.get<double>());
    out << line;
  }
}

// ---- train -----------------------------------------------------------------

int cmd_train(const Invocation& inv) {
  RunConfig run = resolve(inv);
  if (inv.paths.out.empty()) throw UsageError("missing --out directory");
  const std::size_t user_dim = run.count("user_dim");
  auto data = load_data(inv.paths.data, 0, user_dim, "data file");
  if (data.empty()) throw UsageError("data file '" + inv.paths.data + "' holds no queries");
  const std::size_t width = data.front().item_dim;

  std::vector<RankingInstance> train_set, validation;
  if (!inv.paths.validation.empty()) {
    train_set = std::move(data);
    validation = load_data(inv.paths.validation, width, user_dim, "validation file");
  } else {
    const double fraction = run.real("validation_fraction");
    if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("validation_fraction must lie in [0, 1)");
    Permutation order = identity_permutation(data.size());
    Rng rng(run.integer("seed") ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::size_t n_val = fraction > 0 ? std::max<std::size_t>(1, std::llround(fraction * data.size())) : 0;
    if (n_val >= data.size()) throw ConfigError("validation_fraction leaves no training queries");
    for (std::size_t i = 0; i < order.size(); ++i)
      (i < n_val ? validation : train_set).push_back(data[order[i]]);
  }
  for (auto* set : {&train_set, &validation})
    for (auto& inst : *set) {
      if (inst.item_dim < width) inst = [&] {
        // Sparse rows may omit trailing features; pad to the common width.
        RankingInstance padded = inst;
        padded.item_features.assign(inst.num_items * width, 0.0);
        for (std::size_t i = 0; i < inst.num_items; ++i)
          std::copy(inst.item_row(i).begin(), inst.item_row(i).end(),
                    padded.item_features.begin() + i * width);
        padded.item_dim = width;
        return padded;
      }();
      if (inst.item_dim != width)
        throw UsageError("dimension mismatch: query '" + inst.query_id + "' has " +
                         std::to_string(inst.item_dim) + " features, expected " + std::to_string(width));
    }

  ensure_directory(inv.paths.out);
  const std::string method = run.text("method");
  const bool reproducible = run.boolean("reproducible");
  const fs::path out_dir(inv.paths.out);
  const double alpha = run.real("alpha");

  Checkpoint ckpt;
  Ranker ranker;
  std::string epoch_log = "epoch,reinforce_loss,supervised_loss,loss,val_ndcg@10,val_map@10,improved" +
                          std::string(reproducible ? "" : ",wall_seconds") + "\n";
  DivNetParams params;
  PointwiseScorer scorer;
  if (method == "divnet") {
    const auto model = model_config_from(run, width, user_dim);
    const auto config = train_config_from(run);
    auto state = train(train_set, validation, model, config, [&](const EpochRecord& r) {
      epoch_log += std::to_string(r.epoch) + ',' + fmt(r.reinforce_loss) + ',' + fmt(r.supervised_loss) +
                   ',' + fmt(r.total_loss) + ',' + fmt(r.validation_ndcg10) + ',' +
                   fmt(r.validation_map10) + ',' + (r.improved ? "1" : "0");
      if (!reproducible) epoch_log += ',' + fmt(r.wall_seconds);
      epoch_log += '\n';
      std::cerr << "epoch " << r.epoch << " loss " << r.total_loss << " val_ndcg@10 " << r.validation_ndcg10
                << (r.improved ? " *" : "") << '\n';
    });
    params = state.best_params;
    ckpt = make_checkpoint(params, ModelKind::DivNet);
    ckpt.config["train"] = config.to_json();
    ranker = [&](const RankingInstance& inst) { return greedy_rank(inst, params, alpha); };
  } else if (method == "prm") {
    params = train_prm(train_set, validation, model_config_from(run, width, user_dim), prm_config_from(run));
    ckpt = make_checkpoint(params, ModelKind::Prm);
    ranker = [&](const RankingInstance& inst) { return prm_rank(inst, params); };
  } else if (method == "pointwise") {
    scorer = train_pointwise(train_set, validation, pointwise_config_from(run));
    ckpt = make_checkpoint(scorer);
    ranker = [&](const RankingInstance& inst) { return pointwise_rank(inst, scorer); };
  } else {
    throw ConfigError("train: method must be divnet, prm or pointwise, got '" + method + "'");
  }
  ckpt.config["run"] = run.to_json();
  const std::string ckpt_text = serialize_checkpoint(ckpt);
  const std::string ckpt_path = (out_dir / "checkpoint.json").string();
  write_file(ckpt_path, ckpt_text);
  const std::string hash = "fnv1a64:" + hex64(fnv1a64(ckpt_text));
  const std::string header = provenance("train", run, hash);
  write_file((out_dir / "epochs.csv").string(), header + epoch_log);

  if (!validation.empty()) {
    EvalOptions options;
    options.cutoffs = {1, 3, 5, 10};
    const auto report = evaluate(ranker, validation, options, method);
    write_file((out_dir / "validation_report.csv").string(), header + report.to_csv());
    auto doc = report.to_json();
    doc["config"] = run.to_json();
    doc["checkpoint"] = hash;
    write_file((out_dir / "validation_report.json").string(), doc.dump(2) + "\n");
    print_summary(std::cout, report);
  }
  std::cout << "checkpoint " << ckpt_path << " " << hash << '\n';
  return 0;
}

// ---- eval ------------------------------------------------------------------

std::string with_suffix(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

int cmd_eval(const Invocation& inv) {
  RunConfig run = resolve(inv);
  const auto loaded = load_checkpoint(inv.paths.checkpoint);
  inherit_from_checkpoint(run, loaded.ckpt);
  const std::string method = run.text("method");
  const auto data = load_data(inv.paths.data, loaded.item_dim, loaded.user_dim, "data file");
  if (data.empty()) throw UsageError("data file '" + inv.paths.data + "' holds no queries");
  const auto options = eval_options(run);

  std::vector<double> alphas = run.reals("alpha_sweep");
  const bool sweep = !alphas.empty();
  if (sweep && method != "divnet") throw ConfigError("alpha_sweep applies to method divnet only");
  if (!sweep) alphas = {run.real("alpha")};

  DivNetParams params;
  PointwiseScorer scorer;
  if (method == "divnet" || method == "prm") {
    expect_kind(loaded.ckpt, method == "divnet" ? ModelKind::DivNet : ModelKind::Prm, method);
    params = params_from_checkpoint(loaded.ckpt);
  } else if (method == "pointwise" || method == "submodular" || method == "dpp") {
    expect_kind(loaded.ckpt, ModelKind::Pointwise, method);
    scorer = scorer_from_checkpoint(loaded.ckpt);
  } else {
    throw ConfigError("eval: unknown method '" + method + "'");
  }
  const double gamma = run.real("gamma");

  for (double alpha : alphas) {
    Ranker ranker;
    if (method == "divnet") {
      ranker = [&params, alpha](const RankingInstance& inst) { return greedy_rank(inst, params, alpha); };
    } else if (method == "prm") {
      ranker = [&](const RankingInstance& inst) { return prm_rank(inst, params); };
    } else if (method == "pointwise") {
      ranker = [&](const RankingInstance& inst) { return pointwise_rank(inst, scorer); };
    } else if (method == "submodular") {
      ranker = [&](const RankingInstance& inst) {
        return submodular_greedy(inst, scorer.utilities(inst), gamma);
      };
    } else {
      ranker = [&](const RankingInstance& inst) { return dpp_greedy(inst, scorer.utilities(inst)); };
    }
    const auto report = evaluate(ranker, data, options, method);
    RunConfig echoed = run;
    if (sweep) echoed.inherit("alpha", fmt(alpha), "sweep");
    if (sweep) std::cout << "alpha " << fmt(alpha) << '\n';
    print_summary(std::cout, report);
    const std::string header = provenance("eval", echoed, loaded.hash);
    const std::string suffix = sweep ? ".alpha-" + fmt(alpha) : "";
    if (!inv.paths.out.empty()) {
      ensure_parent(inv.paths.out);
      write_file(with_suffix(inv.paths.out, suffix), header + report.to_csv());
    }
    if (!inv.paths.json.empty()) {
      ensure_parent(inv.paths.json);
      auto doc = report.to_json();
      doc["config"] = echoed.to_json();
      doc["checkpoint"] = loaded.hash;
      write_file(with_suffix(inv.paths.json, suffix), doc.dump(2) + "\n");
    }
  }
  return 0;
}

// ---- rerank ----------------------------------------------------------------

int cmd_rerank(const Invocation& inv) {
  RunConfig run = resolve(inv);
  const auto loaded = load_checkpoint(inv.paths.checkpoint);
  expect_kind(loaded.ckpt, ModelKind::DivNet, "rerank");
  inherit_from_checkpoint(run, loaded.ckpt);
  const auto params = params_from_checkpoint(loaded.ckpt);
  const auto slates = load_data(inv.paths.input, loaded.item_dim, loaded.user_dim, "input slate file");

  DecodeOptions options;
  options.alpha = run.real("alpha");
  const std::string mode = run.text("mode");
  if (mode == "greedy") {
    options.mode = DecodeMode::Greedy;
  } else if (mode == "sample") {
    options.mode = DecodeMode::Sample;
  } else {
    throw ConfigError("mode must be greedy or sample, got '" + mode + "'");
  }
  // One seed per slate from the master seed; greedy decoding never reads it.
  Rng seeds(run.integer("seed"));

  std::string body = "query_id,step,item,probability,determinant,logit\n";
  for (const auto& inst : slates) {
    options.seed = seeds.next_u64();
    SlateDecode decode;
    {
      NoGradGuard no_grad;
      decode = decode_slate(inst, params, options);
    }
    for (std::size_t t = 0; t < decode.permutation.size(); ++t)
      body += inst.query_id + ',' + std::to_string(t) + ',' + std::to_string(decode.permutation[t]) + ',' +
              fmt(decode.step_probabilities[t]) + ',' + fmt(decode.step_determinants[t]) + ',' +
              fmt(decode.step_logits[t]) + '\n';
  }
  const std::string text = provenance("rerank", run, loaded.hash) + body;
  if (inv.paths.out.empty()) {
    std::cout << text;
  } else {
    ensure_parent(inv.paths.out);
    write_file(inv.paths.out, text);
  }
  return 0;
}

// ---- synth -----------------------------------------------------------------

int cmd_synth(const Invocation& inv) {
  RunConfig run = resolve(inv);
  if (inv.paths.out.empty()) throw UsageError("missing --out directory");
  const auto config = synthetic_config_from(run);
  const std::string oracle = run.text("oracle");
  if (oracle != "auto" && oracle != "true" && oracle != "false")
    throw ConfigError("oracle must be auto, true or false");
  constexpr std::size_t kOracleLimit = 8;
  if (oracle == "true" && config.num_items > kOracleLimit)
    throw ConfigError("oracle table enumerates " + std::to_string(config.num_items) +
                      "! orders per query; use num_items <= " + std::to_string(kOracleLimit) +
                      " or oracle = false");
  const bool with_oracle = oracle == "true" || (oracle == "auto" && config.num_items <= kOracleLimit);

  const auto dataset = generate_synthetic(config, run.count("num_queries"));
  ensure_directory(inv.paths.out);
  const fs::path dir(inv.paths.out);
  const std::string header = provenance("synth", run, "none") +
                             (config.beta == 1.0 ? "# interaction-free: beta = 1\n" : "");

  std::ostringstream letor;
  write_letor(letor, dataset.instances);
  write_file((dir / "data.letor").string(), header + letor.str());
  std::ostringstream meta;
  write_synthetic_metadata(meta, dataset.metadata);
  write_file((dir / "metadata.csv").string(), header + meta.str());

  if (with_oracle) {
    std::string table = "query_id,order,permutation,expected_clicks\n";
    auto row = [&](const std::string& qid, const char* name, const Permutation& p, double value) {
      std::string perm;
      for (std::size_t i = 0; i < p.size(); ++i) perm += (i ? " " : "") + std::to_string(p[i]);
      table += qid + ',' + name + ',' + perm + ',' + fmt(value) + '\n';
    };
    for (const auto& q : dataset.metadata) {
      const auto best = oracle_optimal_slate(q);
      std::vector<double> a;
      for (const auto& item : q.items) a.push_back(item.attractiveness);
      const auto by_a = rank_by_scores(a);
      const auto shown = identity_permutation(q.items.size());
      row(q.query_id, "optimal", best.permutation, best.expected_clicks);
      row(q.query_id, "attractiveness", by_a, expected_clicks(q, by_a));
      row(q.query_id, "display", shown, expected_clicks(q, shown));
    }
    write_file((dir / "oracle.csv").string(), header + table);
  }
  std::cout << "wrote " << dataset.instances.size() << " queries to " << dir.string() << '\n';
  return 0;
}

// ---- attention -------------------------------------------------------------

int cmd_attention(const Invocation& inv) {
  RunConfig run = resolve(inv);
  const auto loaded = load_checkpoint(inv.paths.checkpoint);
  expect_kind(loaded.ckpt, ModelKind::DivNet, "attention");
  inherit_from_checkpoint(run, loaded.ckpt);
  const auto params = params_from_checkpoint(loaded.ckpt);
  const auto slates = load_data(inv.paths.input, loaded.item_dim, loaded.user_dim, "slate file");
  if (slates.empty()) throw UsageError("slate file '" + inv.paths.input + "' holds no queries");

  const std::string wanted = run.text("query");
  const RankingInstance* inst = &slates.front();
  if (!wanted.empty()) {
    inst = nullptr;
    for (const auto& s : slates)
      if (s.query_id == wanted) inst = &s;
    if (inst == nullptr) throw UsageError("query '" + wanted + "' is not in " + inv.paths.input);
  }
  DecodeOptions options;
  options.alpha = run.real("alpha");
  SlateDecode decode;
  {
    NoGradGuard no_grad;
    decode = decode_slate(*inst, params, options);
  }
  const auto matrix = export_attention(decode);
  const std::size_t n = decode.permutation.size();
  std::string body = "step,item";
  for (std::size_t c = 0; c < n; ++c) body += ",s" + std::to_string(c);
  body += '\n';
  for (std::size_t r = 0; r < n; ++r) {
    body += std::to_string(r) + ',' + std::to_string(decode.permutation[r]);
    for (std::size_t c = 0; c < n; ++c) body += ',' + fmt(matrix[r * n + c]);
    body += '\n';
  }
  const std::string text = provenance("attention", run, loaded.hash) + "# query " + inst->query_id + "\n" + body;
  if (inv.paths.out.empty()) {
    std::cout << text;
  } else {
    ensure_parent(inv.paths.out);
    write_file(inv.paths.out, text);
  }
  return 0;
}

CLI::App* add_command(CLI::App& app, Invocation& inv, const std::string& name, unsigned mask,
                      const std::string& description) {
  auto* sub = app.add_subcommand(name, description);
  sub->add_option("--config", inv.paths.config, "key = value settings file");
  for (const auto& key : config_keys()) {
    if (!(key.commands & mask)) continue;
    if (key.is_flag) {
      sub->add_flag_callback(flag_name(key.name), [&inv, mask, k = std::string(key.name)] {
        if (inv.mask == mask) inv.flag_switch[k] = true;
      }, key.help);
    } else {
      sub->add_option_function<std::string>(flag_name(key.name),
          [&inv, mask, k = std::string(key.name)](const std::string& v) {
            if (inv.mask == mask) inv.flag_text[k] = v;
          },
          std::string(key.help) + " [" + key.fallback + "]");
    }
  }
  sub->callback([&inv, name, mask] {
    inv.command = name;
    inv.mask = mask;
  });
  sub->preparse_callback([&inv, name, mask](std::size_t) {
    inv.command = name;
    inv.mask = mask;
  });
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DivNet slate reranking"};
  app.require_subcommand(1);
  Invocation inv;

  auto* train_cmd = add_command(app, inv, "train", kTrainCommand, "train a model and write a checkpoint");
  train_cmd->add_option("--data", inv.paths.data, "training queries, LETOR format")->required();
  train_cmd->add_option("--validation", inv.paths.validation, "validation queries; default a held-out share");
  train_cmd->add_option("--out", inv.paths.out, "output directory")->required();

  auto* eval_cmd = add_command(app, inv, "eval", kEvalCommand, "evaluate a checkpoint or baseline");
  eval_cmd->add_option("--checkpoint", inv.paths.checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--data", inv.paths.data, "queries, LETOR format")->required();
  eval_cmd->add_option("--out", inv.paths.out, "report CSV");
  eval_cmd->add_option("--json", inv.paths.json, "report JSON");

  auto* rerank_cmd = add_command(app, inv, "rerank", kRerankCommand, "rerank slates with a DivNet checkpoint");
  rerank_cmd->add_option("--checkpoint", inv.paths.checkpoint, "DivNet checkpoint")->required();
  rerank_cmd->add_option("--input", inv.paths.input, "slates, LETOR format")->required();
  rerank_cmd->add_option("--out", inv.paths.out, "output CSV; default stdout");

  auto* synth_cmd = add_command(app, inv, "synth", kSynthCommand, "generate a planted-diversity dataset");
  synth_cmd->add_option("--out", inv.paths.out, "output directory")->required();

  auto* attention_cmd = add_command(app, inv, "attention", kAttentionCommand, "export decoder attention");
  attention_cmd->add_option("--checkpoint", inv.paths.checkpoint, "DivNet checkpoint")->required();
  attention_cmd->add_option("--input", inv.paths.input, "slate file, LETOR format")->required();
  attention_cmd->add_option("--out", inv.paths.out, "output CSV; default stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageFailure;
  }

  try {
    if (inv.command == "train") return cmd_train(inv);
    if (inv.command == "eval") return cmd_eval(inv);
    if (inv.command == "rerank") return cmd_rerank(inv);
    if (inv.command == "synth") return cmd_synth(inv);
    if (inv.command == "attention") return cmd_attention(inv);
    return kUsageFailure;
  } catch (const UsageError& e) {
    std::cerr << "divnet: error: " << e.what() << '\n';
    return kUsageFailure;
  } catch (const ConfigError& e) {
    std::cerr << "divnet: error: " << e.what() << '\n';
    return kUsageFailure;
  } catch (const NonFiniteError& e) {
    std::cerr << "divnet: training diverged: " << e.what() << '\n';
    return kRunFailure;
  } catch (const std::exception& e) {
    std::cerr << "divnet: error: " << e.what() << '\n';
    return kRunFailure;
  }
}
