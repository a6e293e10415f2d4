#include "muse/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "muse/errors.hpp"
#include "muse/io.hpp"
#include "muse/objective.hpp"

#ifndef MUSE_GIT_DESCRIBE
#define MUSE_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;

namespace muse {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    if (v < 0 && std::is_unsigned_v<T>) throw std::out_of_range(value);
    return static_cast<T>(v);
  } catch (const std::logic_error&) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    return parse_double(value, key);
  } catch (const FormatError&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

Delimiter parse_delimiter(const std::string& value) {
  if (value == "auto") return Delimiter::automatic;
  if (value == "comma") return Delimiter::comma;
  if (value == "whitespace") return Delimiter::whitespace;
  throw ConfigError("delimiter must be auto, comma or whitespace, got '" + value + "'");
}

const char* to_string(Delimiter d) {
  switch (d) {
    case Delimiter::comma: return "comma";
    case Delimiter::whitespace: return "whitespace";
    default: return "auto";
  }
}

std::string text_of(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream ss;
  fn(ss);
  return ss.str();
}

std::string graph_digest(const SignedGraph& g) {
  return sha256_hex(text_of([&](std::ostream& o) { write_canonical_edges(o, g); }));
}

std::vector<int> labels_of(std::span<const SignedEdge> edges) {
  std::vector<int> labels;
  labels.reserve(edges.size());
  for (const auto& e : edges) labels.push_back(sign_label(e.sign));
  return labels;
}

NeighborSets build_sets(const SignedGraph& g, std::span<const SignedEdge> train_edges,
                        const ModelConfig& model, std::uint64_t seed) {
  const auto train_graph = SignedGraph::from_edges(g.raw_ids(), train_edges);
  return higher_order_neighbor_sets(train_graph, model.orders, model.neighbor_cap, seed);
}

EvalReport evaluate_embeddings(const Tensor& emb, const ParamStore& params,
                               std::span<const SignedEdge> test) {
  const auto scores = score_edges(emb, test, PredictorParams::from(params));
  return evaluate_scores(scores, labels_of(test));
}

std::string format_label(double v) {
  const double r = std::round(v);
  return r == v ? std::to_string(static_cast<long long>(r)) : format_double(v);
}

EvalReport run_once(const RunConfig& cfg, const SignedGraph& g, const std::string& input_sha,
                    const fs::path& dir, std::ostream& out) {
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(dir);

  RunConfig resolved = cfg;
  if (cfg.neighbor_cap == "auto")
    resolved.model.neighbor_cap = default_neighbor_cap(g.num_nodes());
  resolved.model.validate();
  resolved.train.validate();

  const auto split = split_edges(g, cfg.split, cfg.resolved_split_seed());
  const auto gdigest = graph_digest(g);
  const std::string manifest_text = text_of([&](std::ostream& o) {
    write_split_manifest(o, g, split,
                         {{"graph_sha256", gdigest},
                          {"split_fraction", format_double(cfg.split)},
                          {"split_seed", std::to_string(cfg.resolved_split_seed())},
                          {"n_train", std::to_string(split.train.size())},
                          {"n_test", std::to_string(split.test.size())}});
  });
  write_file((dir / "split.tsv").string(), manifest_text);

  const auto sets = build_sets(g, split.train, resolved.model, resolved.train.seed);
  auto result = train(g, sets, split, resolved.model, resolved.train);
  const auto report = evaluate_embeddings(result.embeddings, result.params, split.test);

  Checkpoint ckpt;
  ckpt.model = resolved.model;
  ckpt.train = resolved.train;
  ckpt.epochs_done = resolved.train.epochs;
  ckpt.history = result.history;
  ckpt.meta = {{"input", fs::absolute(cfg.input).string()},
               {"input_sha256", input_sha},
               {"graph_sha256", gdigest},
               {"split_sha256", sha256_hex(manifest_text)},
               {"format_cols", cfg.format_cols},
               {"delimiter", to_string(cfg.delimiter)}};
  ckpt.params = std::move(result.params);
  save_checkpoint(ckpt, (dir / "checkpoint.txt").string());

  write_file((dir / "embeddings.txt").string(), text_of([&](std::ostream& o) {
               write_embeddings(o, g, result.embeddings, resolved.model);
             }));
  write_file((dir / "loss_history.tsv").string(), text_of([&](std::ostream& o) {
               o << "epoch\ttotal\tstructure\tsign\n";
               for (const auto& s : ckpt.history)
                 o << s.epoch << '\t' << format_double(s.total) << '\t'
                   << format_double(s.structure) << '\t' << format_double(s.sign) << '\n';
             }));
  const auto report_json = report.to_json();
  write_file((dir / "eval.json").string(), report_json + "\n");

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  nlohmann::ordered_json manifest;
  manifest["config"] = nlohmann::ordered_json::parse(run_config_json(cfg));
  manifest["resolved_neighbor_cap"] =
      resolved.model.neighbor_cap ? nlohmann::ordered_json(*resolved.model.neighbor_cap) : nullptr;
  manifest["seed"] = resolved.train.seed;
  manifest["split_seed"] = cfg.resolved_split_seed();
  manifest["git_describe"] = MUSE_GIT_DESCRIBE;
  manifest["wall_seconds"] = wall;
  manifest["input_sha256"] = input_sha;
  manifest["graph_sha256"] = gdigest;
  manifest["split_sha256"] = ckpt.meta["split_sha256"];
  manifest["eval"] = nlohmann::ordered_json::parse(report_json);
  write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");

  out << report_json << '\n';
  return report;
}

}  // namespace

/************ configuration ********************************/

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "input") cfg.input = value;
  else if (key == "format-cols") { parse_column_spec(value); cfg.format_cols = value; }
  else if (key == "delimiter") cfg.delimiter = parse_delimiter(value);
  else if (key == "facets") cfg.model.facets = parse_integer<int>(key, value);
  else if (key == "dim") cfg.model.dim = parse_integer<int>(key, value);
  else if (key == "orders") cfg.model.orders = parse_integer<int>(key, value);
  else if (key == "leaky-slope") cfg.model.leaky_slope = parse_real(key, value);
  else if (key == "share-attention") cfg.model.share_attention = parse_bool(key, value);
  else if (key == "lambda") cfg.train.lambda = parse_real(key, value);
  else if (key == "lr") cfg.train.learning_rate = parse_real(key, value);
  else if (key == "epochs") cfg.train.epochs = parse_integer<int>(key, value);
  else if (key == "batch-edges") {
    if (value == "auto") cfg.train.batch_edges.reset();
    else cfg.train.batch_edges = parse_integer<std::size_t>(key, value);
  }
  else if (key == "seed") cfg.train.seed = parse_integer<std::uint64_t>(key, value);
  else if (key == "update-granularity") cfg.train.granularity = parse_granularity(value);
  else if (key == "split") cfg.split = parse_real(key, value);
  else if (key == "split-seed") cfg.split_seed = parse_integer<std::uint64_t>(key, value);
  else if (key == "neighbor-cap") {
    cfg.model.neighbor_cap.reset();
    if (value != "auto" && value != "none")
      cfg.model.neighbor_cap = parse_integer<std::size_t>(key, value);
    cfg.neighbor_cap = value;
  }
  else if (key == "out") cfg.out = value;
  else if (key == "lambda-grid") cfg.lambda_grid = parse_double_grid(value);
  else if (key == "facet-grid") cfg.facet_grid = parse_int_grid(value);
  else throw ConfigError("unknown setting '" + key + "'");
}

std::map<std::string, std::string> read_config_file(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(no) + ": expected key=value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(no) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return read_config_file(in);
}

RunConfig resolve_run_config(const std::optional<std::string>& config_path,
                             const std::map<std::string, std::string>& flags) {
  RunConfig cfg;
  if (config_path)
    for (const auto& [k, v] : read_config_file(*config_path)) apply_setting(cfg, k, v);
  for (const auto& [k, v] : flags) apply_setting(cfg, k, v);
  if (!(cfg.split > 0.0 && cfg.split < 1.0)) throw ConfigError("split must lie in (0, 1)");
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

std::vector<double> parse_double_grid(const std::string& text) {
  std::vector<double> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = parse_integer<long long>("grid", trim(text.substr(0, dots)));
    const auto hi = parse_integer<long long>("grid", trim(text.substr(dots + 2)));
    if (hi < lo) throw ConfigError("grid range '" + text + "' is empty");
    for (auto v = lo; v <= hi; ++v) out.push_back(static_cast<double>(v));
    return out;
  }
  std::istringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_real("grid", trim(item)));
  if (out.empty()) throw ConfigError("empty grid");
  return out;
}

std::vector<int> parse_int_grid(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_double_grid(text)) {
    if (v != std::round(v)) throw ConfigError("grid values must be integers: '" + text + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string run_config_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["input"] = cfg.input;
  j["format_cols"] = cfg.format_cols;
  j["delimiter"] = to_string(cfg.delimiter);
  j["facets"] = cfg.model.facets;
  j["dim"] = cfg.model.dim;
  j["orders"] = cfg.model.orders;
  j["leaky_slope"] = cfg.model.leaky_slope;
  j["share_attention"] = cfg.model.share_attention;
  j["neighbor_cap"] = cfg.neighbor_cap;
  j["lambda"] = cfg.train.lambda;
  j["lr"] = cfg.train.learning_rate;
  j["epochs"] = cfg.train.epochs;
  j["batch_edges"] = cfg.train.batch_edges ? nlohmann::ordered_json(*cfg.train.batch_edges)
                                           : nlohmann::ordered_json("auto");
  j["seed"] = cfg.train.seed;
  j["adam_beta1"] = cfg.train.adam.beta1;
  j["adam_beta2"] = cfg.train.adam.beta2;
  j["adam_epsilon"] = cfg.train.adam.epsilon;
  j["update_granularity"] = to_string(cfg.train.granularity);
  j["split"] = cfg.split;
  j["split_seed"] = cfg.resolved_split_seed();
  j["out"] = cfg.out;
  j["lambda_grid"] = cfg.lambda_grid;
  j["facet_grid"] = cfg.facet_grid;
  return j.dump();
}

/************ commands *************************************/

std::string IngestSummary::to_json() const {
  nlohmann::ordered_json j;
  j["nodes"] = nodes;
  j["positive_edges"] = positive;
  j["negative_edges"] = negative;
  return j.dump();
}

SignedGraph load_graph(const RunConfig& cfg) {
  if (cfg.input.empty()) throw ConfigError("no input given");
  fs::path path = cfg.input;
  ColumnSpec spec = parse_column_spec(cfg.format_cols, cfg.delimiter);
  if (fs::is_directory(path)) {
    path /= "edges.tsv";
    spec = parse_column_spec("0,1,2", Delimiter::whitespace);
  }
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  const auto records = parse_edge_list(in, spec);
  return build_graph(records);
}

IngestSummary cmd_ingest(const RunConfig& cfg, std::ostream& log) {
  const auto g = load_graph(cfg);
  const fs::path dir = cfg.out;
  fs::create_directories(dir);
  write_file((dir / "edges.tsv").string(),
             text_of([&](std::ostream& o) { write_canonical_edges(o, g); }));
  write_file((dir / "id_map.tsv").string(), text_of([&](std::ostream& o) { write_id_map(o, g); }));
  const IngestSummary summary{g.num_nodes(), g.num_positive(), g.num_negative()};
  write_file((dir / "summary.json").string(), summary.to_json() + "\n");
  log << summary.to_json() << '\n';
  return summary;
}

std::vector<EvalReport> cmd_train(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.lambda_grid.empty() && !cfg.facet_grid.empty())
    throw ConfigError("use either --lambda-grid or --facet-grid, not both");
  const auto g = load_graph(cfg);
  const fs::path input = fs::is_directory(cfg.input) ? fs::path(cfg.input) / "edges.tsv"
                                                     : fs::path(cfg.input);
  const auto input_sha = sha256_hex(read_file(input.string()));

  std::vector<EvalReport> reports;
  if (!cfg.lambda_grid.empty()) {
    for (double lambda : cfg.lambda_grid) {
      RunConfig point = cfg;
      point.lambda_grid.clear();
      point.train.lambda = lambda;
      out << "lambda=" << format_label(lambda) << ' ';
      reports.push_back(
          run_once(point, g, input_sha, fs::path(cfg.out) / ("lambda-" + format_label(lambda)), out));
    }
  } else if (!cfg.facet_grid.empty()) {
    for (int m : cfg.facet_grid) {
      RunConfig point = cfg;
      point.facet_grid.clear();
      point.model.facets = m;
      out << "facets=" << m << ' ';
      reports.push_back(
          run_once(point, g, input_sha, fs::path(cfg.out) / ("facets-" + std::to_string(m)), out));
    }
  } else {
    reports.push_back(run_once(cfg, g, input_sha, cfg.out, out));
  }
  return reports;
}

EvalReport cmd_evaluate(const EvaluateArgs& args, std::ostream& out) {
  const auto ckpt = load_checkpoint(args.checkpoint);
  const auto manifest_text = read_file(args.split_manifest);
  const auto expected = ckpt.meta.find("split_sha256");
  if (expected == ckpt.meta.end() || expected->second != sha256_hex(manifest_text))
    throw IntegrityError("split manifest does not match the checkpoint");

  RunConfig cfg;
  cfg.input = args.input.value_or(ckpt.meta.count("input") ? ckpt.meta.at("input") : "");
  if (ckpt.meta.count("format_cols")) cfg.format_cols = ckpt.meta.at("format_cols");
  if (ckpt.meta.count("delimiter")) cfg.delimiter = parse_delimiter(ckpt.meta.at("delimiter"));
  const auto g = load_graph(cfg);
  if (!ckpt.meta.count("graph_sha256") || ckpt.meta.at("graph_sha256") != graph_digest(g))
    throw IntegrityError("graph does not match the checkpoint");

  std::istringstream manifest_in(manifest_text);
  const auto manifest = read_split_manifest(manifest_in, g);
  const auto train_edges = complement_edges(g, manifest.test);
  const auto sets = build_sets(g, train_edges, ckpt.model, ckpt.train.seed);
  const auto emb = forward(ckpt.params, sets, ckpt.model);
  const auto report = evaluate_embeddings(emb, ckpt.params, manifest.test);

  const auto json = report.to_json();
  if (args.out) write_file(*args.out, json + "\n");
  out << json << '\n';
  return report;
}

int exit_code(const std::exception& err) {
  if (dynamic_cast<const IntegrityError*>(&err)) return 5;
  if (dynamic_cast<const TrainingError*>(&err) || dynamic_cast<const DomainError*>(&err) ||
      dynamic_cast<const ObjectiveError*>(&err))
    return 4;
  if (dynamic_cast<const ConfigError*>(&err) || dynamic_cast<const ContractError*>(&err) ||
      dynamic_cast<const SplitError*>(&err))
    return 3;
  if (dynamic_cast<const ParseError*>(&err) || dynamic_cast<const FormatError*>(&err) ||
      dynamic_cast<const GraphError*>(&err))
    return 2;
  return 1;
}

}  // namespace muse
