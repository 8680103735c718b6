// mekb: compile, query, sample, learn from and serve maximum-entropy
// knowledge bases.
//
// Exit codes: 0 converged / ok, 1 parse, schema or i/o error,
// 2 inconsistent, 3 sweep limit reached.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "httplib.h"

#include "mekb/archive.hpp"
#include "mekb/knowledge_base.hpp"
#include "mekb/learning.hpp"
#include "mekb/query.hpp"
#include "mekb/service.hpp"

namespace {

using namespace mekb;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInconsistent = 2;
constexpr int kExitSweepLimit = 3;

struct Globals {
  std::optional<double> tolerance;
  std::optional<std::size_t> max_sweeps;
  std::optional<std::string> heuristic;
  std::uint64_t seed = 1;
  bool oracle = false;
};

int exit_code(SolveStatus s) {
  switch (s) {
    case SolveStatus::kConverged: return kExitOk;
    case SolveStatus::kInconsistent: return kExitInconsistent;
    case SolveStatus::kSweepLimit: return kExitSweepLimit;
  }
  return kExitError;
}

void apply_overrides(SolverOptions& o, const Globals& g) {
  if (g.tolerance) {
    if (!(*g.tolerance > 0.0)) throw Error(ErrorKind::kRange, "--tolerance must be positive");
    o.tolerance = *g.tolerance;
  }
  if (g.max_sweeps) o.max_sweeps = *g.max_sweeps;
  if (g.heuristic) {
    auto h = parse_heuristic(*g.heuristic);
    if (!h) throw Error(ErrorKind::kParse, "unknown heuristic '" + *g.heuristic + "'");
    o.heuristic = *h;
  }
}

bool looks_like_archive(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  return first != std::string::npos && text[first] == '{';
}

// Archives load as they are; KB source files are compiled on the fly.
KnowledgeBase load_input(const std::string& path, const Globals& g) {
  const std::string text = read_file(path);
  if (looks_like_archive(text)) {
    KnowledgeBase kb = load_archive(text);
    apply_overrides(kb.options, g);
    return kb;
  }
  KnowledgeBaseSource src = parse_kb(text);
  apply_overrides(src.options, g);
  return compile(src);
}

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty() || out_path == "-")
    std::cout << content;
  else
    write_file(out_path, content);
}

int cmd_compile(const std::string& kb_path, const std::string& out_path, const std::string& ledger_path,
                const Globals& g) {
  KnowledgeBaseSource src = parse_kb(read_file(kb_path));
  apply_overrides(src.options, g);
  const KnowledgeBase kb = compile(src);
  std::cout << ledger_snapshot(kb.report);
  if (!out_path.empty()) write_file(out_path, save_archive(kb));
  if (!ledger_path.empty()) write_file(ledger_path, ledger_csv(kb.report.ledger));
  return exit_code(kb.report.status);
}

int cmd_query(const std::string& path, const std::string& query_path, const std::vector<std::string>& lines,
              const Globals& g) {
  const KnowledgeBase kb = load_input(path, g);
  std::string text;
  if (!query_path.empty()) text = read_file(query_path);
  for (const auto& l : lines) text += l + "\n";
  const QuerySpec spec = parse_query(text, kb.schema);
  const QueryResult result = complex_query(kb.dist, spec, kb.options, kb.schema);
  if (!result.feasible()) {
    std::cout << "hypotheticals are inconsistent:";
    for (const auto& id : result.report.offending_rules) std::cout << " " << id;
    std::cout << "\n";
    if (!result.report.message.empty()) std::cout << "note: " << result.report.message << "\n";
    return kExitInconsistent;
  }
  if (result.report.status == SolveStatus::kSweepLimit)
    std::cout << "warning: hypotheticals hit the sweep limit\n";
  for (const auto& a : result.answers) {
    if (a.probability)
      std::printf("%s = %.6f\n", a.text.c_str(), *a.probability);
    else
      std::printf("%s = undefined (%s)\n", a.text.c_str(), a.note.c_str());
  }
  if (g.oracle) {
    const OracleResult o = oracle_project(to_explicit_joint(kb.dist, kb.schema), spec.hypotheticals,
                                          kb.options.tolerance, kb.options.max_sweeps);
    double worst = 0.0;
    for (std::size_t i = 0; i < spec.imperatives.size(); ++i) {
      if (!result.answers[i].probability) continue;
      const double expected =
          conditional_probability(o.joint, spec.imperatives[i].conclusion, spec.imperatives[i].premise);
      worst = std::max(worst, std::abs(expected - *result.answers[i].probability));
    }
    std::printf("oracle max discrepancy: %.3e\n", worst);
  }
  return exit_code(result.report.status);
}

int cmd_sample(const std::string& path, std::size_t n, const std::string& out_path, const Globals& g) {
  const KnowledgeBase kb = load_input(path, g);
  emit(out_path, sample_to_csv(draw_sample(kb.dist, n, g.seed, kb.schema.size()), kb.schema));
  return kExitOk;
}

int cmd_learn(const std::string& path, const std::string& sample_path, double alpha, const std::string& out_path,
              const Globals& g) {
  KnowledgeBase kb = load_archive(read_file(path));
  apply_overrides(kb.options, g);
  const Sample sample = sample_from_csv(read_file(sample_path), kb.schema);
  const LearnedKnowledgeBase learned = learn(kb, sample, alpha);
  for (const auto& w : learned.warnings) std::cerr << "warning: " << w << "\n";
  // the archive may own stdout
  (out_path.empty() || out_path == "-" ? std::cerr : std::cout) << ledger_snapshot(learned.kb.report);
  emit(out_path, save_archive(learned.kb));
  return exit_code(learned.kb.report.status);
}

int cmd_export(const std::string& path, const std::string& graph, const std::string& fmt, bool ledger,
               const std::string& out_path, const Globals& g) {
  const KnowledgeBase kb = load_input(path, g);
  if (ledger) {
    emit(out_path, fmt == "json" ? ledger_json(kb.report.ledger).dump(2) + "\n" : ledger_csv(kb.report.ledger));
    return kExitOk;
  }
  auto kind = parse_graph_kind(graph);
  if (!kind) throw Error(ErrorKind::kParse, "unknown graph kind '" + graph + "'");
  emit(out_path,
       export_graph(*kind, fmt == "json" ? GraphFormat::kJson : GraphFormat::kDot, kb.schema, kb.rules, &kb.tree()));
  return kExitOk;
}

int cmd_serve(const std::string& path, const std::string& bind, int port, const Globals& g) {
  Service service(load_input(path, g));
  httplib::Server svr;
  service.register_routes(svr);
  std::cerr << "listening on http://" << bind << ":" << port << "\n";
  if (!svr.listen(bind, port)) throw Error(ErrorKind::kIo, "cannot listen on " + bind + ":" + std::to_string(port));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maximum-entropy knowledge base shell"};
  app.require_subcommand(1, 1);
  Globals g;
  app.add_option("--tolerance", g.tolerance, "Residual tolerance for convergence");
  app.add_option("--max-sweeps", g.max_sweeps, "Sweep limit");
  app.add_option("--heuristic", g.heuristic, "Triangulation heuristic")
      ->check(CLI::IsMember({"min_fill", "max_cardinality"}));
  app.add_option("--seed", g.seed, "Seed for sampling");
  app.add_flag("--oracle", g.oracle, "Cross-check query answers on the explicit joint");

  std::string input, output, ledger_out, query_file, sample_file, graph = "dependency", format = "dot",
                                                                   bind = "127.0.0.1";
  std::vector<std::string> query_lines;
  std::size_t n = 1000;
  double alpha = 0.0;
  int port = 8080;
  bool ledger = false;

  auto* compile = app.add_subcommand("compile", "Compile a KB file into an archive");
  compile->add_option("kb", input, "KB source file")->required()->check(CLI::ExistingFile);
  compile->add_option("-o,--output", output, "Archive to write");
  compile->add_option("--ledger", ledger_out, "Write the entropy ledger as CSV");

  auto* query = app.add_subcommand("query", "Run a query file or inline lines against a KB");
  query->add_option("kb", input, "Archive or KB source")->required()->check(CLI::ExistingFile);
  query->add_option("query", query_file, "Query file")->check(CLI::ExistingFile);
  query->add_option("-e,--expr", query_lines, "Inline 'assume ...' or 'eval ...' line");

  auto* sample = app.add_subcommand("sample", "Draw a seeded sample as CSV");
  sample->add_option("kb", input, "Archive or KB source")->required()->check(CLI::ExistingFile);
  sample->add_option("-n", n, "Number of draws");
  sample->add_option("-o,--output", output, "CSV file (default stdout)");

  auto* learn = app.add_subcommand("learn", "Blend a sample into an archive and re-solve");
  learn->add_option("archive", input, "Archive")->required()->check(CLI::ExistingFile);
  learn->add_option("--sample", sample_file, "Sample CSV")->required()->check(CLI::ExistingFile);
  learn->add_option("--alpha", alpha, "Blend weight in [0, 1]")->required();
  learn->add_option("-o,--output", output, "Archive to write (default stdout)");

  auto* exp = app.add_subcommand("export", "Export a graph or the entropy ledger");
  exp->add_option("kb", input, "Archive or KB source")->required()->check(CLI::ExistingFile);
  exp->add_option("--graph", graph, "dependency | mixed | structure")
      ->check(CLI::IsMember({"dependency", "mixed", "structure"}));
  exp->add_flag("--ledger", ledger, "Export the ledger instead of a graph");
  exp->add_option("--format", format, "dot | json for graphs, csv | json for the ledger")
      ->check(CLI::IsMember({"dot", "json", "csv"}));
  exp->add_option("-o,--output", output, "Output file (default stdout)");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  serve->add_option("kb", input, "Archive or KB source")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port, "Port");
  serve->add_option("--bind", bind, "Address to bind (loopback by default)");

  for (auto* sub : {compile, query, sample, learn, exp, serve}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitError;
  }

  try {
    if (*compile) return cmd_compile(input, output, ledger_out, g);
    if (*query) return cmd_query(input, query_file, query_lines, g);
    if (*sample) return cmd_sample(input, n, output, g);
    if (*learn) return cmd_learn(input, sample_file, alpha, output, g);
    if (*exp) return cmd_export(input, graph, format, ledger, output, g);
    if (*serve) return cmd_serve(input, bind, port, g);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
