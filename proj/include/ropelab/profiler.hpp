#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ropelab/model.hpp"

namespace ropelab {

struct DocumentSet {
  std::vector<std::vector<TokenId>> docs;
  std::string source_path;
  std::vector<std::string> warnings;  // one per skipped line, with its line number
};

/// One document per line, space-separated decimal token ids. Empty or
/// malformed lines are skipped with a warning; loading stops after `limit`
/// documents.
DocumentSet load_documents(const std::filesystem::path& path, std::size_t limit);

struct EntropyRow {
  int layer = 0;
  Position position = 0;
  double mean_entropy = 0.0;
  double std_entropy = 0.0;  // population standard deviation across documents
  double uniform_baseline = 0.0;
  std::size_t n_docs = 0;
};

/// Per-document, per-head entropies behind one report cell.
struct DocumentEntropy {
  std::size_t doc = 0;
  int layer = 0;
  Position position = 0;
  std::vector<double> head_entropy;

  double head_mean() const;
};

struct EntropyReport {
  std::string label;
  std::vector<EntropyRow> rows;  // layer-major, positions ascending
  std::vector<DocumentEntropy> per_document;
};

struct ProfileOptions {
  std::string label = "default";
  bool keep_per_document = false;
  unsigned threads = 0;  // 0 picks hardware concurrency
};

/// Powers of two minus one, 15, 31, 63, ..., not exceeding max_positions - 1.
std::vector<Position> default_positions(Position max_positions);

/// Attention entropy of the query row at each position, averaged over heads
/// and then aggregated across the documents long enough to reach it.
EntropyReport profile(const ModelSpec& spec, const ModelWeights& weights, const RopeConfig& rope,
                      const ScalingPolicy& policy, const DocumentSet& docs,
                      const std::vector<Position>& positions, const ProfileOptions& options = {});

struct MethodVariant {
  std::string label;
  RopeConfig rope;
  ScalingPolicy policy;
};

std::vector<EntropyReport> compare_methods(const ModelSpec& spec, const ModelWeights& weights,
                                           const std::vector<MethodVariant>& variants,
                                           const DocumentSet& docs,
                                           const std::vector<Position>& positions,
                                           const ProfileOptions& options = {});

/// label,layer,position,mean_entropy,std_entropy,uniform_baseline,n_docs
void write_report_csv(std::ostream& out, const std::vector<EntropyReport>& reports);

/// label,doc,layer,position,head,entropy
void write_per_document_csv(std::ostream& out, const std::vector<EntropyReport>& reports);

}  // namespace ropelab
