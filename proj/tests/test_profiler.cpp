#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ropelab/csv.hpp"
#include "ropelab/profiler.hpp"
#include "test_util.hpp"

using namespace ropelab;
using ropelab::test::near;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

ModelSpec small_spec() {
  ModelSpec spec;
  spec.n_layers = 3;
  spec.n_heads = 2;
  spec.d_head = 8;
  spec.vocab_size = 60;
  spec.max_positions = 128;
  spec.seed = 7;
  return spec;
}

RopeConfig rope_for(const ModelSpec& spec, RopeMethod method = RopeMethod::RoPE) {
  RopeConfig rope;
  rope.method = method;
  rope.d = spec.d_head;
  rope.context = 32;
  rope.target_context = 128;
  return rope;
}

DocumentSet random_docs(std::size_t count, const std::vector<std::size_t>& lengths,
                        std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  DocumentSet set;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<TokenId> doc(lengths[i % lengths.size()]);
    for (auto& t : doc) t = static_cast<TokenId>(rng() % 60);
    set.docs.push_back(std::move(doc));
  }
  return set;
}

const EntropyRow& row_at(const EntropyReport& r, int layer, Position pos) {
  for (const auto& row : r.rows)
    if (row.layer == layer && row.position == pos) return row;
  throw std::logic_error("row not found");
}

}  // namespace

TEST_CASE("load_documents") {
  SUBCASE("parses token ids") {
    const auto path = write_temp("ropelab_docs_basic.txt", "5 17 9\n1 2\n");
    const auto set = load_documents(path, 128);
    REQUIRE(set.docs.size() == 2);
    CHECK(set.docs[0] == std::vector<TokenId>{5, 17, 9});
    CHECK(set.warnings.empty());
  }
  SUBCASE("skips empty and malformed lines with line numbers") {
    const auto path = write_temp("ropelab_docs_bad.txt", "1 2 3\n\n4 x 6\n7 8\n");
    const auto set = load_documents(path, 128);
    REQUIRE(set.docs.size() == 2);
    CHECK(set.docs[1] == std::vector<TokenId>{7, 8});
    REQUIRE(set.warnings.size() == 2);
    CHECK(set.warnings[0].find(":2:") != std::string::npos);
    CHECK(set.warnings[1].find(":3:") != std::string::npos);
    CHECK(set.warnings[1].find("'x'") != std::string::npos);
  }
  SUBCASE("negative ids are malformed") {
    const auto set = load_documents(write_temp("ropelab_docs_neg.txt", "1 -2\n3\n"), 128);
    CHECK(set.docs.size() == 1);
    CHECK(set.warnings.size() == 1);
  }
  SUBCASE("limit") {
    std::string text;
    for (int i = 0; i < 500; ++i) text += std::to_string(i) + " 1\n";
    const auto set = load_documents(write_temp("ropelab_docs_many.txt", text), 128);
    CHECK(set.docs.size() == 128);
    CHECK(set.docs.back().front() == 127);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(load_documents("/nonexistent/ropelab/docs.txt", 128), IoError);
    CHECK_THROWS_AS(load_documents(write_temp("ropelab_docs_empty.txt", "\n\n"), 128),
                    ValidationError);
  }
}

TEST_CASE("default_positions") {
  CHECK(default_positions(4096) == std::vector<Position>{15, 31, 63, 127, 255, 511, 1023, 2047, 4095});
  CHECK(default_positions(128) == std::vector<Position>{15, 31, 63, 127});
  CHECK(default_positions(10).empty());
}

TEST_CASE("zero queries reproduce the uniform baseline") {
  const ModelSpec spec = small_spec();
  ModelWeights w = init_weights(spec);
  zero_query_projections(w);
  const auto docs = random_docs(4, {128, 100});
  const auto report = profile(spec, w, rope_for(spec, RopeMethod::YaRN), ScalingPolicy::yarn(4.0),
                              docs, {0, 15, 63, 127});
  CHECK(report.rows.size() == 3 * 4);
  for (const auto& row : report.rows) {
    CHECK(near(row.mean_entropy, std::log(row.position + 1.0), 1e-6));
    CHECK(row.uniform_baseline == std::log(row.position + 1.0));
    CHECK(row.std_entropy < 1e-6);
  }
  CHECK(row_at(report, 0, 0).mean_entropy == 0.0);
  CHECK(row_at(report, 1, 63).n_docs == 4);
  CHECK(row_at(report, 1, 127).n_docs == 2);
}

TEST_CASE("aggregation matches the per-document cells") {
  const ModelSpec spec = small_spec();
  const ModelWeights w = init_weights(spec);
  const auto docs = random_docs(5, {128, 40, 90});
  ProfileOptions opts;
  opts.keep_per_document = true;
  const auto report = profile(spec, w, rope_for(spec), ScalingPolicy::none(), docs, {15, 63, 127}, opts);
  for (const auto& row : report.rows) {
    std::vector<double> values;
    for (const auto& cell : report.per_document) {
      if (cell.layer != row.layer || cell.position != row.position) continue;
      REQUIRE(cell.head_entropy.size() == 2);
      double sum = 0.0;
      for (double h : cell.head_entropy) {
        CHECK(h >= 0.0);
        CHECK(h <= std::log(row.position + 1.0) + 1e-12);
        sum += h;
      }
      CHECK(near(cell.head_mean(), sum / 2.0, 1e-12));
      values.push_back(cell.head_mean());
    }
    REQUIRE(values.size() == row.n_docs);
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    CHECK(near(row.mean_entropy, mean, 1e-12));
    CHECK(near(row.std_entropy, std::sqrt(var / values.size()), 1e-12));
  }
  CHECK(row_at(report, 0, 63).n_docs == 3);
  CHECK(row_at(report, 0, 127).n_docs == 2);
}

TEST_CASE("truncating documents does not change entropies") {
  const ModelSpec spec = small_spec();
  const ModelWeights w = init_weights(spec);
  const auto docs = random_docs(2, {128});
  const auto full = profile(spec, w, rope_for(spec), ScalingPolicy::none(), docs, {15, 31, 127});
  const auto short_run = profile(spec, w, rope_for(spec), ScalingPolicy::none(), docs, {15, 31});
  for (const auto& row : short_run.rows)
    CHECK(row.mean_entropy == row_at(full, row.layer, row.position).mean_entropy);
}

TEST_CASE("thread count does not change results") {
  const ModelSpec spec = small_spec();
  const ModelWeights w = init_weights(spec);
  const auto docs = random_docs(6, {128, 64});
  ProfileOptions one;
  one.threads = 1;
  ProfileOptions four;
  four.threads = 4;
  std::ostringstream a, b;
  write_report_csv(a, {profile(spec, w, rope_for(spec), ScalingPolicy::none(), docs, {15, 63}, one)});
  write_report_csv(b, {profile(spec, w, rope_for(spec), ScalingPolicy::none(), docs, {15, 63}, four)});
  CHECK(a.str() == b.str());
}

TEST_CASE("profile errors") {
  const ModelSpec spec = small_spec();
  const ModelWeights w = init_weights(spec);
  const auto docs = random_docs(2, {20});
  const auto run = [&](std::vector<Position> positions) {
    return profile(spec, w, rope_for(spec), ScalingPolicy::none(), docs, positions);
  };
  try {
    run({15, 63});
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("63") != std::string::npos);
  }
  CHECK_THROWS_AS(run({}), ValidationError);
  CHECK_THROWS_AS(run({15, 7}), ValidationError);
  CHECK_THROWS_AS(run({7, 7}), ValidationError);
  CHECK_THROWS_AS(run({-1}), ValidationError);
  CHECK_THROWS_AS(run({128}), ValidationError);
}

TEST_CASE("compare_methods") {
  const ModelSpec spec = small_spec();
  const ModelWeights w = init_weights(spec);
  const auto docs = random_docs(3, {128});
  const std::vector<Position> positions = {15, 31};

  SUBCASE("one report per variant, same shape") {
    const auto reports = compare_methods(
        spec, w,
        {{"RoPE", rope_for(spec), ScalingPolicy::none()},
         {"ABF", rope_for(spec, RopeMethod::ABF), ScalingPolicy::none()}},
        docs, positions);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].label == "RoPE");
    CHECK(reports[1].rows.size() == reports[0].rows.size());
    std::ostringstream os;
    write_report_csv(os, reports);
    CHECK(split(os.str(), '\n').size() == 1 + 2 * 3 * 2 + 1);
  }
  SUBCASE("entropy-aware scaling is inert inside the window") {
    const auto reports = compare_methods(
        spec, w,
        {{"none", rope_for(spec, RopeMethod::EntropyAwareABF), ScalingPolicy::none()},
         {"aware", rope_for(spec, RopeMethod::EntropyAwareABF), ScalingPolicy::entropy_aware(32)}},
        docs, positions);
    for (std::size_t i = 0; i < reports[0].rows.size(); ++i)
      CHECK(reports[0].rows[i].mean_entropy == reports[1].rows[i].mean_entropy);
  }
  SUBCASE("larger constant t never raises entropy in the first layer") {
    const auto reports = compare_methods(
        spec, w,
        {{"t1", rope_for(spec), ScalingPolicy::constant(1.0)},
         {"t4", rope_for(spec), ScalingPolicy::constant(4.0)}},
        docs, positions, {.keep_per_document = true});
    // Layer 0 sees identical inputs, so every head's entropy must drop.
    for (std::size_t i = 0; i < reports[0].per_document.size(); ++i) {
      const auto& a = reports[0].per_document[i];
      const auto& b = reports[1].per_document[i];
      if (a.layer != 0) continue;
      for (std::size_t h = 0; h < a.head_entropy.size(); ++h)
        CHECK(b.head_entropy[h] <= a.head_entropy[h] + 1e-12);
    }
  }
  SUBCASE("duplicate labels") {
    CHECK_THROWS_AS(compare_methods(spec, w,
                                    {{"x", rope_for(spec), ScalingPolicy::none()},
                                     {"x", rope_for(spec), ScalingPolicy::none()}},
                                    docs, positions),
                    ValidationError);
  }
}

TEST_CASE("csv writers") {
  EntropyReport r;
  r.label = "RoPE";
  r.rows.push_back({1, 15, 0.5, 0.25, std::log(16.0), 3});
  r.per_document.push_back({2, 1, 15, {0.125, 0.75}});
  std::ostringstream report, docs;
  write_report_csv(report, {r});
  write_per_document_csv(docs, {r});
  CHECK(report.str() ==
        "label,layer,position,mean_entropy,std_entropy,uniform_baseline,n_docs\n"
        "RoPE,1,15,0.5,0.25,2.772588722239781,3\n");
  CHECK(docs.str() ==
        "label,doc,layer,position,head,entropy\n"
        "RoPE,2,1,15,0,0.125\n"
        "RoPE,2,1,15,1,0.75\n");
}
