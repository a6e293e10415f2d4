#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "muse/commands.hpp"

namespace {

// Flags are kept as text and handed to the shared config resolver, so the
// config file and the command line go through the same parser.
struct FlagSet {
  std::vector<std::pair<std::string, std::string*>> slots;
  std::vector<std::unique_ptr<std::string>> storage;

  void add(CLI::App* app, const std::string& name, const std::string& help) {
    storage.push_back(std::make_unique<std::string>());
    slots.emplace_back(name, storage.back().get());
    app->add_option("--" + name, *storage.back(), help);
  }

  std::map<std::string, std::string> given(const CLI::App* app) const {
    std::map<std::string, std::string> out;
    for (const auto& [name, value] : slots)
      if (app->count("--" + name)) out[name] = *value;
    return out;
  }
};

void add_input_flags(CLI::App* app, FlagSet& flags) {
  flags.add(app, "input", "edge list file or ingest output directory");
  flags.add(app, "format-cols", "src,dst,weight column indices (default 0,1,2)");
  flags.add(app, "delimiter", "auto, comma or whitespace");
  flags.add(app, "out", "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"muse: multi-faceted signed network embedding"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::string config_file;

  auto* ingest = app.add_subcommand("ingest", "parse an edge list into canonical form");
  FlagSet ingest_flags;
  add_input_flags(ingest, ingest_flags);

  auto* train = app.add_subcommand("train", "split, train and evaluate");
  FlagSet train_flags;
  add_input_flags(train, train_flags);
  train_flags.add(train, "facets", "number of facets M (default 3)");
  train_flags.add(train, "dim", "dimensions per facet D (default 32)");
  train_flags.add(train, "orders", "neighbor orders L (default 2)");
  train_flags.add(train, "lambda", "weight of the sign loss (default 4)");
  train_flags.add(train, "lr", "Adam learning rate (default 1e-4)");
  train_flags.add(train, "epochs", "training epochs (default 300)");
  train_flags.add(train, "batch-edges", "edges per step, or auto");
  train_flags.add(train, "seed", "random seed (default 42)");
  train_flags.add(train, "split", "training fraction (default 0.8)");
  train_flags.add(train, "split-seed", "split seed (defaults to --seed)");
  train_flags.add(train, "neighbor-cap", "per-set cap: integer, none or auto");
  train_flags.add(train, "leaky-slope", "LeakyReLU slope (default 0.2)");
  train_flags.add(train, "update-granularity", "per-epoch or per-node");
  train_flags.add(train, "share-attention", "reuse W_T/W_A across orders (true/false)");
  train_flags.add(train, "lambda-grid", "sweep lambda: a..b or comma list");
  train_flags.add(train, "facet-grid", "sweep M: a..b or comma list");
  train->add_option("--config", config_file, "key=value config file");
  ingest->add_option("--config", config_file, "key=value config file");

  auto* evaluate = app.add_subcommand("evaluate", "recompute test metrics from a checkpoint");
  muse::EvaluateArgs eval_args;
  std::string eval_input, eval_out;
  evaluate->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
  evaluate->add_option("--split", eval_args.split_manifest, "split manifest (split.tsv)")->required();
  evaluate->add_option("--input", eval_input, "graph (defaults to the training input)");
  evaluate->add_option("--out", eval_out, "write the report here as well");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 3;
  }

  try {
    if (!config_file.empty()) config_path = config_file;
    if (*ingest) {
      const auto cfg = muse::resolve_run_config(config_path, ingest_flags.given(ingest));
      muse::cmd_ingest(cfg, std::cout);
    } else if (*train) {
      const auto cfg = muse::resolve_run_config(config_path, train_flags.given(train));
      muse::cmd_train(cfg, std::cout);
    } else if (*evaluate) {
      if (evaluate->count("--input")) eval_args.input = eval_input;
      if (evaluate->count("--out")) eval_args.out = eval_out;
      muse::cmd_evaluate(eval_args, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "muse: " << e.what() << '\n';
    return muse::exit_code(e);
  }
  return 0;
}
