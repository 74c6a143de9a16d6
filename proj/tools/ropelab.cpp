// ropelab: coefficient dumps, logit-scale tables and attention-entropy profiling.
//
// Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "ropelab/config.hpp"
#include "ropelab/csv.hpp"
#include "ropelab/profiler.hpp"

namespace {

using namespace ropelab;

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kValidation = 3 };

struct GlobalOptions {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

RunConfig load_config(const GlobalOptions& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_run_config(g.config);
  if (g.seed) cfg.model.seed = *g.seed;
  if (g.config.empty()) {
    cfg.rope.d = cfg.model.d_head;
    cfg.validate();
  }
  if (g.verbose) cfg.profiler.verbose = true;
  if (!g.output.empty()) cfg.profiler.output = g.output;
  return cfg;
}

// Writes to the configured path, or stdout when none is set.
class OutputSink {
 public:
  explicit OutputSink(const std::filesystem::path& path) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw IoError("cannot open output file: " + path.string());
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  bool to_stdout() const { return !file_; }
  void finish(const std::filesystem::path& path) {
    stream().flush();
    if (!stream()) throw IoError("failed writing output: " + path.string());
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

ModelWeights build_weights(const RunConfig& cfg) {
  ModelWeights w = cfg.weights ? load_weights(*cfg.weights, cfg.model) : init_weights(cfg.model);
  if (cfg.profiler.zero_q) zero_query_projections(w);
  return w;
}

DocumentSet read_documents(const RunConfig& cfg) {
  if (cfg.profiler.documents.empty())
    throw ValidationError("profiler.documents is not set");
  DocumentSet docs = load_documents(cfg.profiler.documents, cfg.profiler.limit);
  for (const auto& w : docs.warnings) std::cerr << "warning: " << w << '\n';
  return docs;
}

std::vector<Position> profile_positions(const RunConfig& cfg) {
  return cfg.profiler.positions.empty() ? default_positions(cfg.model.max_positions)
                                        : cfg.profiler.positions;
}

void print_summary(std::ostream& os, const std::vector<EntropyReport>& reports) {
  for (const auto& report : reports) {
    if (report.rows.empty()) continue;
    Position lo = report.rows.front().position;
    Position hi = lo;
    for (const auto& r : report.rows) {
      lo = std::min(lo, r.position);
      hi = std::max(hi, r.position);
    }
    os << "[" << report.label << "] attention entropy (uniform baseline in brackets)\n";
    for (const auto& r : report.rows) {
      if (r.position != lo && r.position != hi) continue;
      os << "  layer " << r.layer << "  position " << r.position << ": "
         << format_double(r.mean_entropy) << "  [" << format_double(r.uniform_baseline)
         << "]  n_docs=" << r.n_docs << '\n';
    }
  }
}

void emit_reports(const RunConfig& cfg, const std::vector<EntropyReport>& reports) {
  OutputSink sink(cfg.profiler.output);
  write_report_csv(sink.stream(), reports);
  sink.finish(cfg.profiler.output);
  if (cfg.profiler.verbose) {
    if (cfg.profiler.output.empty()) {
      write_per_document_csv(std::cerr, reports);
    } else {
      auto path = cfg.profiler.output;
      path += ".docs.csv";
      OutputSink docs(path);
      write_per_document_csv(docs.stream(), reports);
      docs.finish(path);
    }
  }
  print_summary(sink.to_stdout() ? std::cerr : std::cout, reports);
}

int cmd_dump_coeffs(const GlobalOptions& g, const std::string& positions_text) {
  const RunConfig cfg = load_config(g);
  const auto positions = parse_position_list(positions_text);
  require(!positions.empty(), "dump-coeffs: no positions given");
  for (Position p : positions) require(p >= 0, "dump-coeffs: positions must be non-negative");
  OutputSink sink(cfg.profiler.output);
  write_coefficient_dump(sink.stream(), cfg.rope, positions);
  sink.finish(cfg.profiler.output);
  return kOk;
}

int cmd_scale_table(const GlobalOptions& g, const std::string& layers_text,
                    const std::string& positions_text) {
  const RunConfig cfg = load_config(g);
  std::vector<int> layers = parse_int_list(layers_text);
  if (layers.empty())
    for (int l = 0; l < cfg.model.n_layers; ++l) layers.push_back(l);
  std::vector<Position> positions = parse_position_list(positions_text);
  if (positions.empty()) positions = profile_positions(cfg);
  OutputSink sink(cfg.profiler.output);
  auto& os = sink.stream();
  os << "layer,position,t\n";
  for (int layer : layers)
    for (Position p : positions)
      os << layer << ',' << p << ',' << format_double(logit_scale(cfg.scaling, layer, p)) << '\n';
  sink.finish(cfg.profiler.output);
  return kOk;
}

int cmd_profile(const GlobalOptions& g, bool zero_q) {
  RunConfig cfg = load_config(g);
  cfg.profiler.zero_q = cfg.profiler.zero_q || zero_q;
  const DocumentSet docs = read_documents(cfg);
  const ModelWeights weights = build_weights(cfg);
  ProfileOptions opts;
  opts.label = std::string(to_string(cfg.rope.method));
  opts.keep_per_document = cfg.profiler.verbose;
  const auto report = profile(cfg.model, weights, cfg.rope, cfg.scaling, docs,
                              profile_positions(cfg), opts);
  emit_reports(cfg, {report});
  return kOk;
}

MethodVariant parse_variant(const std::string& text, const RunConfig& cfg) {
  MethodVariant v{text, cfg.rope, cfg.scaling};
  const auto colon = text.find(':');
  v.rope.method = parse_rope_method(std::string_view(text).substr(0, colon));
  if (colon != std::string::npos) {
    v.policy.kind = parse_scaling_kind(std::string_view(text).substr(colon + 1));
  } else if (v.rope.method == RopeMethod::YaRN) {
    v.policy.kind = ScalingKind::YaRN;
  } else if (v.rope.method == RopeMethod::EntropyAwareABF) {
    v.policy.kind = ScalingKind::EntropyAware;
  } else {
    v.policy.kind = ScalingKind::None;
  }
  return v;
}

int cmd_compare(const GlobalOptions& g, std::vector<std::string> variant_texts, bool zero_q) {
  RunConfig cfg = load_config(g);
  cfg.profiler.zero_q = cfg.profiler.zero_q || zero_q;
  if (variant_texts.empty())
    variant_texts = {"RoPE", "PI", "NTK-Aware", "NTK-By-Parts", "YaRN", "ABF", "EntropyAwareABF"};
  std::vector<MethodVariant> variants;
  for (const auto& t : variant_texts) variants.push_back(parse_variant(t, cfg));
  const DocumentSet docs = read_documents(cfg);
  const ModelWeights weights = build_weights(cfg);
  ProfileOptions opts;
  opts.keep_per_document = cfg.profiler.verbose;
  const auto reports =
      compare_methods(cfg.model, weights, variants, docs, profile_positions(cfg), opts);
  emit_reports(cfg, reports);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rotary position encoding and attention-entropy laboratory"};
  app.require_subcommand(1);

  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Run configuration file");
  app.add_option("--output", g.output, "Output path (stdout when omitted)");
  auto* seed_opt = app.add_option("--seed", seed, "Override model.seed");
  app.add_flag("--verbose", g.verbose, "Per-document entropy dump");
  // Global options may also follow the subcommand name.
  app.fallthrough();

  std::string positions = "0,1,1000";
  auto* dump = app.add_subcommand("dump-coeffs", "Write the rotary coefficient table as CSV");
  dump->add_option("--positions", positions, "Comma-separated positions");

  bool zero_q = false;
  auto* prof = app.add_subcommand("profile", "Profile attention entropy over a document set");
  prof->add_flag("--zero-q", zero_q, "Zero all query projections (uniform attention)");

  std::string table_layers;
  std::string table_positions;
  auto* table = app.add_subcommand("scale-table", "Print the logit multiplier t per layer and position");
  table->add_option("--layers", table_layers, "Comma-separated layer indices");
  table->add_option("--positions", table_positions, "Comma-separated positions");

  std::vector<std::string> variants;
  auto* cmp = app.add_subcommand("compare", "Profile several rope methods on identical inputs");
  cmp->add_option("--variant", variants, "METHOD[:SCALING], repeatable");
  cmp->add_flag("--zero-q", zero_q, "Zero all query projections (uniform attention)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*dump) return cmd_dump_coeffs(g, positions);
    if (*prof) return cmd_profile(g, zero_q);
    if (*table) return cmd_scale_table(g, table_layers, table_positions);
    if (*cmp) return cmd_compare(g, variants, zero_q);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kUsage;
}
