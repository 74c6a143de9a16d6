#include "ropelab/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "ropelab/csv.hpp"

namespace ropelab {

namespace {

template <typename T>
T parse_number(std::string_view text, const std::string& key) {
  text = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ValidationError(key + ": cannot parse '" + std::string(text) + "' as a number");
  return value;
}

bool parse_bool(std::string_view text, const std::string& key) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ValidationError(key + ": expected true or false, got '" + std::string(text) + "'");
}

template <typename T>
std::vector<T> parse_list(std::string_view text, const std::string& what) {
  std::vector<T> out;
  text = trim(text);
  if (text.empty()) return out;
  for (auto field : split(text, ',')) out.push_back(parse_number<T>(field, what));
  return out;
}

}  // namespace

std::vector<Position> parse_position_list(std::string_view text) {
  return parse_list<Position>(text, "position list");
}

std::vector<int> parse_int_list(std::string_view text) { return parse_list<int>(text, "integer list"); }

void RunConfig::validate() const {
  model.validate();
  rope.validate();
  scaling.validate();
  require(rope.d == model.d_head, "rope.d (" + std::to_string(rope.d) +
                                      ") must equal model.d_head (" +
                                      std::to_string(model.d_head) + ")");
  for (Position p : profiler.positions)
    require(p >= 0 && p < model.max_positions,
            "profiler.positions: " + std::to_string(p) + " outside [0, max_positions)");
}

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir,
                           const std::string& source) {
  RunConfig cfg;
  std::optional<int> rope_d;
  std::optional<int> d_model;
  std::optional<double> rope_s;
  std::optional<std::int64_t> scaling_c;
  std::optional<double> scaling_s;

  auto resolve = [&](std::string_view v) {
    std::filesystem::path p{std::string(v)};
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };

  using Setter = std::function<void(std::string_view, const std::string&)>;
  const std::map<std::string, Setter, std::less<>> setters{
      {"model.n_layers", [&](auto v, auto& k) { cfg.model.n_layers = parse_number<int>(v, k); }},
      {"model.n_heads", [&](auto v, auto& k) { cfg.model.n_heads = parse_number<int>(v, k); }},
      {"model.d_head", [&](auto v, auto& k) { cfg.model.d_head = parse_number<int>(v, k); }},
      {"model.d_model", [&](auto v, auto& k) { d_model = parse_number<int>(v, k); }},
      {"model.vocab_size", [&](auto v, auto& k) { cfg.model.vocab_size = parse_number<int>(v, k); }},
      {"model.max_positions",
       [&](auto v, auto& k) { cfg.model.max_positions = parse_number<std::int64_t>(v, k); }},
      {"model.seed", [&](auto v, auto& k) { cfg.model.seed = parse_number<std::uint64_t>(v, k); }},
      {"model.init_range",
       [&](auto v, auto& k) { cfg.model.init_range = parse_number<double>(v, k); }},
      {"model.weights", [&](auto v, auto&) { cfg.weights = resolve(v); }},
      {"rope.method", [&](auto v, auto&) { cfg.rope.method = parse_rope_method(v); }},
      {"rope.d", [&](auto v, auto& k) { rope_d = parse_number<int>(v, k); }},
      {"rope.base", [&](auto v, auto& k) { cfg.rope.base = parse_number<double>(v, k); }},
      {"rope.c", [&](auto v, auto& k) { cfg.rope.context = parse_number<std::int64_t>(v, k); }},
      {"rope.c_target",
       [&](auto v, auto& k) { cfg.rope.target_context = parse_number<std::int64_t>(v, k); }},
      {"rope.s", [&](auto v, auto& k) { rope_s = parse_number<double>(v, k); }},
      {"rope.ntk_alpha", [&](auto v, auto& k) { cfg.rope.ntk_alpha = parse_number<double>(v, k); }},
      {"rope.ntk_beta", [&](auto v, auto& k) { cfg.rope.ntk_beta = parse_number<double>(v, k); }},
      {"rope.ntk_convention",
       [&](auto v, auto&) { cfg.rope.ntk_convention = parse_ntk_convention(v); }},
      {"rope.abf_base", [&](auto v, auto& k) { cfg.rope.abf_base = parse_number<double>(v, k); }},
      {"scaling.kind", [&](auto v, auto&) { cfg.scaling.kind = parse_scaling_kind(v); }},
      {"scaling.c", [&](auto v, auto& k) { scaling_c = parse_number<std::int64_t>(v, k); }},
      {"scaling.s", [&](auto v, auto& k) { scaling_s = parse_number<double>(v, k); }},
      {"scaling.n_train",
       [&](auto v, auto& k) { cfg.scaling.train_length = parse_number<std::int64_t>(v, k); }},
      {"scaling.value", [&](auto v, auto& k) { cfg.scaling.value = parse_number<double>(v, k); }},
      {"scaling.exempt_layers",
       [&](auto v, auto&) {
         const auto layers = parse_int_list(v);
         cfg.scaling.exempt_layers = std::set<int>(layers.begin(), layers.end());
       }},
      {"profiler.positions", [&](auto v, auto&) { cfg.profiler.positions = parse_position_list(v); }},
      {"profiler.documents", [&](auto v, auto&) { cfg.profiler.documents = resolve(v); }},
      {"profiler.limit",
       [&](auto v, auto& k) { cfg.profiler.limit = parse_number<std::size_t>(v, k); }},
      {"profiler.output", [&](auto v, auto&) { cfg.profiler.output = resolve(v); }},
      {"profiler.verbose", [&](auto v, auto& k) { cfg.profiler.verbose = parse_bool(v, k); }},
      {"profiler.zero_q", [&](auto v, auto& k) { cfg.profiler.zero_q = parse_bool(v, k); }},
  };

  std::set<std::string, std::less<>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ValidationError(where + ": expected 'section.key = value'");
    const std::string key(trim(text.substr(0, eq)));
    const std::string_view value = trim(text.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ValidationError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ValidationError(where + ": duplicate key '" + key + "'");
    try {
      it->second(value, key);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }

  cfg.rope.d = rope_d.value_or(cfg.model.d_head);
  if (d_model)
    require(*d_model == cfg.model.d_model(),
            "model.d_model (" + std::to_string(*d_model) + ") must equal n_heads * d_head (" +
                std::to_string(cfg.model.d_model()) + ")");
  if (rope_s)
    require(std::abs(*rope_s - cfg.rope.scale()) <= 1e-12 * cfg.rope.scale(),
            "rope.s must equal rope.c_target / rope.c = " + format_double(cfg.rope.scale()));
  cfg.scaling.context = scaling_c.value_or(cfg.rope.context);
  cfg.scaling.scale = scaling_s.value_or(cfg.rope.scale());
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path.string());
  return parse_run_config(in, path.parent_path(), path.string());
}

}  // namespace ropelab
