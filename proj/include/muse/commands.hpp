#pragma once

#include <exception>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "muse/metrics.hpp"
#include "muse/model.hpp"
#include "muse/sgraph.hpp"
#include "muse/trainer.hpp"

namespace muse {

struct RunConfig {
  std::string input;
  std::string format_cols = "0,1,2";
  Delimiter delimiter = Delimiter::automatic;
  ModelConfig model;
  TrainConfig train;
  double split = 0.8;
  std::optional<std::uint64_t> split_seed;  // defaults to train.seed
  // "auto" picks default_neighbor_cap(n), "none" disables capping.
  std::string neighbor_cap = "auto";
  std::string out = "muse-out";
  std::vector<double> lambda_grid;
  std::vector<int> facet_grid;

  std::uint64_t resolved_split_seed() const { return split_seed.value_or(train.seed); }
};

// Settings use the long flag names without dashes, e.g. "lr", "batch-edges".
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

// Flat key=value lines; '#' starts a comment. Throws ConfigError.
std::map<std::string, std::string> read_config_file(std::istream& in);
std::map<std::string, std::string> read_config_file(const std::string& path);

// Defaults, then the config file (if any), then explicit flags.
RunConfig resolve_run_config(const std::optional<std::string>& config_path,
                             const std::map<std::string, std::string>& flags);

// "a..b" (integer steps) or "x,y,z".
std::vector<double> parse_double_grid(const std::string& text);
std::vector<int> parse_int_grid(const std::string& text);

// Every resolved field as a JSON object.
std::string run_config_json(const RunConfig& cfg);

/************ commands *************************************/

struct IngestSummary {
  std::size_t nodes = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::string to_json() const;
};

// Loads `input`: an ingest output directory (its edges.tsv) or a raw edge list.
SignedGraph load_graph(const RunConfig& cfg);

// Writes edges.tsv, id_map.tsv and summary.json into cfg.out.
IngestSummary cmd_ingest(const RunConfig& cfg, std::ostream& log);

// One report per grid point (a single one without grids). Each report is also
// printed to `out` as a JSON line.
std::vector<EvalReport> cmd_train(const RunConfig& cfg, std::ostream& out);

struct EvaluateArgs {
  std::string checkpoint;
  std::string split_manifest;
  std::optional<std::string> input;  // defaults to the path recorded at train time
  std::optional<std::string> out;    // optional EvalReport file
};

EvalReport cmd_evaluate(const EvaluateArgs& args, std::ostream& out);

// 0 ok, 2 parse/format, 3 config, 4 training, 5 integrity, 1 anything else.
int exit_code(const std::exception& err);

}  // namespace muse
