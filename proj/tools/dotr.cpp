// dotr: drive, lint, convert and synthesize reasoning-DAG traces.
//
// Exit codes: 0 success, 1 findings, 2 round budget exhausted,
// 3 backend failure, 64 usage, 65 bad data, 74 I/O.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dot/backend.hpp"
#include "dot/engine.hpp"
#include "dot/graph.hpp"
#include "dot/serialize.hpp"
#include "dot/synth.hpp"
#include "dot/trace.hpp"
#include "dot/validate.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFindings = 1;
constexpr int kExitBudget = 2;
constexpr int kExitBackend = 3;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;
constexpr int kExitIo = 74;

std::vector<std::string> split_csv(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool read_file(const std::filesystem::path& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream buffer;
  buffer << in.rdbuf();
  out = buffer.str();
  return true;
}

bool write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return false;
  out << content;
  return out.good();
}

struct Settings {
  dot::EngineConfig engine;
  dot::HttpBackendConfig http;
};

// Config files are flat key=value lines ('#' starts a comment). Values here
// sit below environment and flags in precedence.
int apply_config_file(const std::filesystem::path& path, Settings& settings,
                      const std::vector<std::string>& flag_set_keys) {
  std::string text;
  if (!read_file(path, text)) {
    std::cerr << "cannot read config file: " << path << "\n";
    return kExitIo;
  }
  const auto overridden = [&](const std::string& key) {
    return std::find(flag_set_keys.begin(), flag_set_keys.end(), key) != flag_set_keys.end();
  };
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped(dot::detail::trim(line));
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      std::cerr << path << ":" << line_no << ": expected key=value\n";
      return kExitUsage;
    }
    const std::string key(dot::detail::trim(stripped.substr(0, eq)));
    const std::string value(dot::detail::trim(stripped.substr(eq + 1)));
    if (overridden(key)) continue;
    try {
      if (key == "min_verified") settings.engine.min_verified = std::stoi(value);
      else if (key == "max_rounds") settings.engine.max_rounds = std::stoi(value);
      else if (key == "max_refinements_per_line")
        settings.engine.max_refinements_per_line = std::stoi(value);
      else if (key == "verify_markers") settings.engine.verify_markers = split_csv(value);
      else if (key == "include_context_edges")
        settings.engine.include_context_edges = (value == "true" || value == "1");
      else if (key == "max_tokens") settings.engine.max_tokens = std::stoi(value);
      else if (key == "temperature") settings.engine.temperature = std::stod(value);
      else if (key == "base_url") settings.http.base_url = value;
      else if (key == "model") settings.http.model = value;
      else if (key == "api_key_env") settings.http.api_key_env = value;
      else if (key == "timeout_ms") settings.http.timeout_ms = std::stoi(value);
      else if (key == "retries") settings.http.retries = std::stoi(value);
      else {
        std::cerr << path << ":" << line_no << ": unknown key '" << key << "'\n";
        return kExitUsage;
      }
    } catch (const std::exception&) {
      std::cerr << path << ":" << line_no << ": bad value for '" << key << "'\n";
      return kExitUsage;
    }
  }
  return kExitOk;
}

void print_parse_error(const dot::ParseError& error) {
  std::cerr << to_string(error.kind) << " at byte " << error.position << ": " << error.message
            << "\n";
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string problem;
  std::string script_path;
  bool use_http = false;
  std::string out_trace;
  std::string out_dag;
};

int cmd_run(const RunArgs& args, const Settings& settings) {
  const bool scripted = !args.script_path.empty();
  if (scripted == args.use_http) {
    std::cerr << "select exactly one backend: --script PATH or --http\n";
    return kExitUsage;
  }

  std::unique_ptr<dot::Backend> backend;
  if (scripted) {
    auto loaded = dot::load_script(args.script_path);
    if (!loaded.ok()) {
      const dot::BackendError& err = loaded.error();
      if (err.kind == dot::BackendErrorKind::Io) {
        std::cerr << err.message << "\n";
        return kExitIo;
      }
      std::cerr << args.script_path << ":" << err.line << ": " << err.message << "\n";
      return kExitData;
    }
    backend = std::move(loaded).value();
  } else {
    if (settings.http.base_url.empty() || settings.http.model.empty()) {
      std::cerr << "--http requires --base-url and --model\n";
      return kExitUsage;
    }
    auto created = dot::HttpBackend::create(settings.http);
    if (!created.ok()) {
      std::cerr << created.error().message << "\n";
      return kExitUsage;
    }
    backend = std::move(created).value();
  }

  const dot::SessionResult result = dot::run_session(args.problem, *backend, settings.engine);

  if (!args.out_trace.empty() && !result.trace.blocks.empty()) {
    auto formatted = dot::format_trace_file(result.trace);
    if (!formatted.ok()) {
      std::cerr << "cannot render trace: " << formatted.error().message << "\n";
      return kExitData;
    }
    if (!write_file(args.out_trace, formatted.value())) {
      std::cerr << "cannot write " << args.out_trace << "\n";
      return kExitIo;
    }
  }
  if (!args.out_dag.empty() && !result.dag.nodes().empty()) {
    if (!write_file(args.out_dag, dot::to_json(result.dag) + "\n")) {
      std::cerr << "cannot write " << args.out_dag << "\n";
      return kExitIo;
    }
  }

  switch (result.outcome) {
    case dot::Outcome::Summarized:
      std::cout << result.answer << "\n";
      return kExitOk;
    case dot::Outcome::BudgetExhausted:
      std::cerr << "session ended without a summary: " << result.message << "\n";
      return kExitBudget;
    case dot::Outcome::BackendFailure:
      std::cerr << "backend failure: " << result.message << "\n";
      return kExitBackend;
  }
  return kExitBackend;
}

// ---------------------------------------------------------------------------

int cmd_parse(const std::string& path, bool lenient) {
  std::string text;
  if (!read_file(path, text)) {
    std::cerr << "cannot read " << path << "\n";
    return kExitIo;
  }

  if (!lenient) {
    auto parsed = dot::parse_stream(text);
    if (!parsed.ok()) {
      print_parse_error(parsed.error());
      return kExitData;
    }
    auto resolved = dot::infer_linkage(std::move(parsed).value());
    if (!resolved.ok()) {
      print_parse_error(resolved.error());
      return kExitData;
    }
    auto dag = dot::apply_trace(resolved.value());
    if (!dag.ok()) {
      std::cerr << "block " << dag.error().block_index << " (bytes " << dag.error().span_begin
                << ".." << dag.error().span_end << "): " << dag.error().message << "\n";
      return kExitData;
    }
    const dot::NodeCounts counts = dag.value().node_counts();
    std::cout << "nodes: " << counts.total_nodes() << ", edges: " << counts.edges << "\n";
    return kExitOk;
  }

  dot::ParseOptions opts;
  opts.lenient = true;
  dot::ParseReport report = dot::parse_stream(text, opts);
  std::vector<dot::ParseError> findings = report.errors;
  auto resolved = dot::infer_linkage(report.trace);
  if (resolved.ok()) {
    auto dag = dot::apply_trace(resolved.value());
    if (dag.ok()) {
      const dot::NodeCounts counts = dag.value().node_counts();
      std::cout << "nodes: " << counts.total_nodes() << ", edges: " << counts.edges << "\n";
    } else {
      findings.push_back({dot::ParseErrorKind::BadAttribute, dag.error().span_begin,
                          "block does not apply: " + dag.error().message});
    }
  } else {
    findings.push_back(resolved.error());
  }
  for (const dot::ParseError& finding : findings) print_parse_error(finding);
  return findings.empty() ? kExitOk : kExitFindings;
}

// ---------------------------------------------------------------------------

int cmd_validate(const std::string& path) {
  std::string text;
  if (!read_file(path, text)) {
    std::cerr << "cannot read " << path << "\n";
    return kExitIo;
  }
  auto parsed = dot::parse_dag_document(text);
  if (!parsed.ok()) {
    std::cerr << to_string(parsed.error().kind) << " " << parsed.error().path << ": "
              << parsed.error().message << "\n";
    return kExitData;
  }
  const dot::ReasoningDag& dag = parsed.value();

  std::vector<dot::Violation> violations = dot::validate(dag);
  if (dag.summary_count() == 1) {
    auto closure = dot::summary_closure(dag);
    if (!closure.ok()) {
      for (const dot::Violation& v : closure.error()) {
        const auto same = [&](const dot::Violation& w) {
          return w.kind == v.kind && w.nodes == v.nodes && w.message == v.message;
        };
        if (std::none_of(violations.begin(), violations.end(), same)) violations.push_back(v);
      }
    }
  }
  for (const dot::Violation& v : violations) {
    std::cout << to_string(v.kind) << ": " << v.message << "\n";
  }
  if (violations.empty()) {
    std::cout << "valid\n";
    return kExitOk;
  }
  return kExitFindings;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  std::string path;
  std::string format;
  bool figure_style = false;
  std::string out;
};

int emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    return kExitOk;
  }
  if (!write_file(out_path, content)) {
    std::cerr << "cannot write " << out_path << "\n";
    return kExitIo;
  }
  return kExitOk;
}

int cmd_export(const ExportArgs& args) {
  std::string text;
  if (!read_file(args.path, text)) {
    std::cerr << "cannot read " << args.path << "\n";
    return kExitIo;
  }
  const std::string_view sniffed = dot::detail::trim(text);
  const bool is_json = !sniffed.empty() && sniffed.front() == '{';

  std::optional<dot::Trace> trace;
  std::optional<dot::ReasoningDag> dag;
  if (is_json) {
    auto parsed = dot::from_json(text);
    if (!parsed.ok()) {
      std::cerr << to_string(parsed.error().kind) << " " << parsed.error().path << ": "
                << parsed.error().message << "\n";
      return kExitData;
    }
    dag = std::move(parsed).value();
  } else {
    auto parsed = dot::parse_stream(text);
    if (!parsed.ok()) {
      print_parse_error(parsed.error());
      return kExitData;
    }
    auto resolved = dot::infer_linkage(std::move(parsed).value());
    if (!resolved.ok()) {
      print_parse_error(resolved.error());
      return kExitData;
    }
    trace = std::move(resolved).value();
    auto applied = dot::apply_trace(*trace);
    if (!applied.ok()) {
      std::cerr << "trace does not build a graph: " << applied.error().message << "\n";
      return kExitData;
    }
    const std::vector<dot::Violation> violations = dot::validate(applied.value());
    if (!violations.empty()) {
      for (const dot::Violation& v : violations) {
        std::cerr << to_string(v.kind) << ": " << v.message << "\n";
      }
      return kExitData;
    }
    dag = std::move(applied).value();
  }

  if (args.format == "json") {
    return emit(args.out, dot::to_json(*dag) + "\n");
  }
  if (args.format == "graphviz") {
    return emit(args.out, dot::to_graphviz(*dag, args.figure_style));
  }
  // training
  if (!trace) {
    std::cerr << "training export needs a trace input, not a DAG document\n";
    return kExitUsage;
  }
  auto record = dot::to_training_example(*trace);
  if (!record.ok()) {
    std::cerr << record.error().message << "\n";
    return kExitData;
  }
  return emit(args.out, record.value() + "\n");
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::uint64_t seed = 0;
  int depth = 2;
  double refute_rate = 0.25;
  int count = 1;
  std::string out_dir;
  bool no_context = false;
};

int cmd_synth(const SynthArgs& args) {
  std::error_code ec;
  std::filesystem::create_directories(args.out_dir, ec);
  if (ec) {
    std::cerr << "cannot create " << args.out_dir << ": " << ec.message() << "\n";
    return kExitIo;
  }
  dot::SynthOptions opts;
  opts.seed = args.seed;
  opts.depth = args.depth;
  opts.refute_rate = args.refute_rate;
  opts.include_context = !args.no_context;
  for (int i = 0; i < args.count; ++i) {
    const dot::Trace trace = dot::synth_trace(opts, static_cast<std::uint64_t>(i));
    auto formatted = dot::format_trace_file(trace);
    if (!formatted.ok()) {
      std::cerr << "generator produced an unrenderable trace: " << formatted.error().message << "\n";
      return kExitData;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "trace-%04d.trace", i);
    const std::filesystem::path path = std::filesystem::path(args.out_dir) / name;
    if (!write_file(path, formatted.value())) {
      std::cerr << "cannot write " << path << "\n";
      return kExitIo;
    }
  }
  std::cout << "wrote " << args.count << " trace(s) to " << args.out_dir << "\n";
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"reasoning-DAG engine: run sessions, lint traces, export graphs"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path,
                 "key=value config file (falls back to $DOT_CONFIG); flags win over it");

  Settings settings;
  RunArgs run_args;
  std::string parse_path;
  ExportArgs export_args;
  std::string validate_path;
  SynthArgs synth_args;

  CLI::App* run = app.add_subcommand("run", "drive a reasoning session against a backend");
  run->add_option("problem", run_args.problem, "problem statement")->required();
  run->add_option("--script", run_args.script_path, "scripted backend: canned completion file");
  run->add_flag("--http", run_args.use_http, "HTTP chat-completions backend");
  run->add_option("--out-trace", run_args.out_trace, "write the session trace here");
  run->add_option("--out-dag", run_args.out_dag, "write the session DAG JSON here");
  auto* opt_base_url = run->add_option("--base-url", settings.http.base_url, "backend base URL");
  auto* opt_model = run->add_option("--model", settings.http.model, "model name");
  auto* opt_key_env =
      run->add_option("--api-key-env", settings.http.api_key_env, "env var holding the API key");
  auto* opt_timeout = run->add_option("--timeout-ms", settings.http.timeout_ms, "request timeout");
  auto* opt_retries = run->add_option("--retries", settings.http.retries, "transport retries");
  auto* opt_min_verified =
      run->add_option("--min-verified", settings.engine.min_verified, "verified steps required");
  auto* opt_max_rounds =
      run->add_option("--max-rounds", settings.engine.max_rounds, "critic-step budget");
  auto* opt_max_refinements = run->add_option(
      "--max-refinements-per-line", settings.engine.max_refinements_per_line,
      "refinements before a line is abandoned");
  std::string markers_csv;
  auto* opt_markers = run->add_option("--verify-markers", markers_csv,
                                      "comma-separated verdict markers for bare critiques");
  auto* opt_no_context = run->add_flag("--no-context-edges", "do not attach root context edges");
  auto* opt_max_tokens =
      run->add_option("--max-tokens", settings.engine.max_tokens, "completion token cap");
  auto* opt_temperature =
      run->add_option("--temperature", settings.engine.temperature, "sampling temperature");

  CLI::App* parse = app.add_subcommand("parse", "parse a trace file and report its graph size");
  parse->add_option("path", parse_path, "trace file")->required();
  bool flag_strict = false, flag_lenient = false;
  parse->add_flag("--strict", flag_strict, "first error wins (default)");
  parse->add_flag("--lenient", flag_lenient, "collect findings and keep going");

  CLI::App* validate_cmd = app.add_subcommand("validate", "check a DAG JSON document");
  validate_cmd->add_option("path", validate_path, "DAG JSON file")->required();

  CLI::App* export_cmd = app.add_subcommand("export", "convert a trace or DAG document");
  export_cmd->add_option("path", export_args.path, "trace or DAG JSON file")->required();
  export_cmd->add_option("--format", export_args.format, "json, graphviz or training")
      ->required()
      ->check(CLI::IsMember({"json", "graphviz", "training"}));
  export_cmd->add_flag("--figure-style", export_args.figure_style,
                       "expand verified propositions into labeled verification nodes");
  export_cmd->add_option("--out", export_args.out, "output file (default stdout)");

  CLI::App* synth = app.add_subcommand("synth", "emit seeded synthetic traces");
  synth->add_option("--seed", synth_args.seed, "generator seed");
  synth->add_option("--depth", synth_args.depth, "verified lines per trace");
  synth->add_option("--refute-rate", synth_args.refute_rate, "chance a line is refuted first")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--count", synth_args.count, "number of traces")->check(CLI::NonNegativeNumber);
  synth->add_option("--out-dir", synth_args.out_dir, "output directory")->required();
  synth->add_flag("--no-context-edges", synth_args.no_context, "omit root context edges");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  // Precedence: flags > environment > config file.
  if (config_path.empty()) {
    if (const char* env = std::getenv("DOT_CONFIG"); env != nullptr && *env != '\0') {
      config_path = env;
    }
  }
  if (!config_path.empty()) {
    std::vector<std::string> flag_set;
    const auto note = [&](const CLI::Option* opt, const char* key) {
      if (opt->count() > 0) flag_set.push_back(key);
    };
    note(opt_base_url, "base_url");
    note(opt_model, "model");
    note(opt_key_env, "api_key_env");
    note(opt_timeout, "timeout_ms");
    note(opt_retries, "retries");
    note(opt_min_verified, "min_verified");
    note(opt_max_rounds, "max_rounds");
    note(opt_max_refinements, "max_refinements_per_line");
    note(opt_markers, "verify_markers");
    note(opt_no_context, "include_context_edges");
    note(opt_max_tokens, "max_tokens");
    note(opt_temperature, "temperature");
    const int rc = apply_config_file(config_path, settings, flag_set);
    if (rc != kExitOk) return rc;
  }
  if (opt_markers->count() > 0) settings.engine.verify_markers = split_csv(markers_csv);
  if (opt_no_context->count() > 0) settings.engine.include_context_edges = false;

  if (run->parsed()) return cmd_run(run_args, settings);
  if (parse->parsed()) {
    if (flag_strict && flag_lenient) {
      std::cerr << "--strict and --lenient are mutually exclusive\n";
      return kExitUsage;
    }
    return cmd_parse(parse_path, flag_lenient);
  }
  if (validate_cmd->parsed()) return cmd_validate(validate_path);
  if (export_cmd->parsed()) return cmd_export(export_args);
  if (synth->parsed()) return cmd_synth(synth_args);
  return kExitUsage;
}
