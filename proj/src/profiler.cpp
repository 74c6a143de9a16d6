#include "ropelab/profiler.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include "ropelab/csv.hpp"

namespace ropelab {

namespace {

// entropy[layer][position index][head] for one document; positions the
// document does not reach are left empty.
using DocumentProfile = std::vector<std::vector<std::vector<double>>>;

DocumentProfile profile_document(const ModelSpec& spec, const ModelWeights& weights,
                                 const RopeConfig& rope, const ScalingPolicy& policy,
                                 const std::vector<TokenId>& doc,
                                 const std::vector<Position>& positions) {
  const auto needed = std::min<std::size_t>(
      {doc.size(), static_cast<std::size_t>(positions.back()) + 1,
       static_cast<std::size_t>(spec.max_positions)});
  // Causal attention: rows up to `needed` are unaffected by later tokens.
  const std::span<const TokenId> tokens(doc.data(), needed);
  const ForwardResult fwd =
      forward(spec, weights, tokens, rope, policy, {TraceMode::EntropyOnly, false});

  DocumentProfile out(spec.n_layers, std::vector<std::vector<double>>(positions.size()));
  for (int l = 0; l < spec.n_layers; ++l) {
    for (std::size_t p = 0; p < positions.size(); ++p) {
      if (static_cast<std::size_t>(positions[p]) >= needed) break;
      auto& heads = out[l][p];
      for (const VectorXs& entropy : fwd.traces[l].entropy) heads.push_back(entropy(positions[p]));
    }
  }
  return out;
}

void validate_positions(const std::vector<Position>& positions, const ModelSpec& spec) {
  require(!positions.empty(), "profile: no positions requested");
  require(std::is_sorted(positions.begin(), positions.end()) &&
              std::adjacent_find(positions.begin(), positions.end()) == positions.end(),
          "profile: positions must be strictly ascending");
  require(positions.front() >= 0, "profile: positions must be non-negative");
  require(positions.back() < spec.max_positions,
          "profile: position " + std::to_string(positions.back()) +
              " is beyond the model's max_positions " + std::to_string(spec.max_positions));
}

}  // namespace

double DocumentEntropy::head_mean() const {
  double sum = 0.0;
  for (double h : head_entropy) sum += h;
  return head_entropy.empty() ? 0.0 : sum / static_cast<double>(head_entropy.size());
}

DocumentSet load_documents(const std::filesystem::path& path, std::size_t limit) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read document file: " + path.string());
  DocumentSet set;
  set.source_path = path.string();
  std::string line;
  std::size_t line_no = 0;
  while (set.docs.size() < limit && std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim(line);
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (text.empty()) {
      set.warnings.push_back(where + "empty line skipped");
      continue;
    }
    std::vector<TokenId> doc;
    bool ok = true;
    for (std::string_view field : split(text, ' ')) {
      field = trim(field);
      if (field.empty()) continue;
      TokenId id = 0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), id);
      if (ec != std::errc() || ptr != field.data() + field.size() || id < 0) {
        set.warnings.push_back(where + "malformed token '" + std::string(field) + "', line skipped");
        ok = false;
        break;
      }
      doc.push_back(id);
    }
    if (ok) set.docs.push_back(std::move(doc));
  }
  if (in.bad()) throw IoError("error while reading document file: " + path.string());
  require(!set.docs.empty(), "no valid documents in " + path.string());
  return set;
}

std::vector<Position> default_positions(Position max_positions) {
  std::vector<Position> out;
  for (Position p = 15; p < max_positions; p = 2 * p + 1) out.push_back(p);
  return out;
}

EntropyReport profile(const ModelSpec& spec, const ModelWeights& weights, const RopeConfig& rope,
                      const ScalingPolicy& policy, const DocumentSet& docs,
                      const std::vector<Position>& positions, const ProfileOptions& options) {
  spec.validate();
  rope.validate();
  policy.validate();
  validate_positions(positions, spec);
  require(!docs.docs.empty(), "profile: document set is empty");
  for (const auto& doc : docs.docs) require(!doc.empty(), "profile: empty document");
  const Position largest = positions.back();
  require(std::any_of(docs.docs.begin(), docs.docs.end(),
                      [&](const auto& d) { return static_cast<Position>(d.size()) > largest; }),
          "profile: no document is long enough for position " + std::to_string(largest));

  std::vector<DocumentProfile> per_doc(docs.docs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < docs.docs.size(); i = next++) {
      try {
        per_doc[i] = profile_document(spec, weights, rope, policy, docs.docs[i], positions);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  threads = std::clamp<unsigned>(threads, 1, static_cast<unsigned>(docs.docs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  // Aggregation runs in document order, independent of thread scheduling.
  EntropyReport report;
  report.label = options.label;
  for (int l = 0; l < spec.n_layers; ++l) {
    for (std::size_t p = 0; p < positions.size(); ++p) {
      std::vector<double> values;
      for (std::size_t d = 0; d < per_doc.size(); ++d) {
        const auto& heads = per_doc[d][l][p];
        if (heads.empty()) continue;
        DocumentEntropy cell{d, l, positions[p], heads};
        values.push_back(cell.head_mean());
        if (options.keep_per_document) report.per_document.push_back(std::move(cell));
      }
      EntropyRow row;
      row.layer = l;
      row.position = positions[p];
      row.n_docs = values.size();
      row.uniform_baseline = std::log(static_cast<double>(positions[p]) + 1.0);
      double sum = 0.0;
      for (double v : values) sum += v;
      row.mean_entropy = sum / static_cast<double>(values.size());
      double squares = 0.0;
      for (double v : values) squares += (v - row.mean_entropy) * (v - row.mean_entropy);
      row.std_entropy = std::sqrt(squares / static_cast<double>(values.size()));
      report.rows.push_back(row);
    }
  }
  return report;
}

std::vector<EntropyReport> compare_methods(const ModelSpec& spec, const ModelWeights& weights,
                                           const std::vector<MethodVariant>& variants,
                                           const DocumentSet& docs,
                                           const std::vector<Position>& positions,
                                           const ProfileOptions& options) {
  require(!variants.empty(), "compare: no variants given");
  std::set<std::string> labels;
  for (const auto& v : variants)
    require(labels.insert(v.label).second, "compare: duplicate label '" + v.label + "'");

  std::vector<EntropyReport> reports;
  for (const auto& v : variants) {
    ProfileOptions opts = options;
    opts.label = v.label;
    reports.push_back(profile(spec, weights, v.rope, v.policy, docs, positions, opts));
  }
  return reports;
}

void write_report_csv(std::ostream& out, const std::vector<EntropyReport>& reports) {
  out << "label,layer,position,mean_entropy,std_entropy,uniform_baseline,n_docs\n";
  for (const auto& report : reports)
    for (const auto& r : report.rows)
      out << report.label << ',' << r.layer << ',' << r.position << ','
          << format_double(r.mean_entropy) << ',' << format_double(r.std_entropy) << ','
          << format_double(r.uniform_baseline) << ',' << r.n_docs << '\n';
}

void write_per_document_csv(std::ostream& out, const std::vector<EntropyReport>& reports) {
  out << "label,doc,layer,position,head,entropy\n";
  for (const auto& report : reports)
    for (const auto& cell : report.per_document)
      for (std::size_t h = 0; h < cell.head_entropy.size(); ++h)
        out << report.label << ',' << cell.doc << ',' << cell.layer << ',' << cell.position << ','
            << h << ',' << format_double(cell.head_entropy[h]) << '\n';
}

}  // namespace ropelab
