#include "cfglearn/solver_adapter.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "cfglearn/error.hpp"
#include "cfglearn/logreg.hpp"
#include "cfglearn/random.hpp"

namespace cfglearn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  if (s == "inf" || s == "+inf" || s == "Inf" || s == "INF" || s == "infinity")
    return kInfinity;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double unit_from(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

}  // namespace

double second_best(std::span<const double> gaps) {
  if (gaps.empty()) throw DataError("no gap values to reduce");
  std::vector<double> sorted(gaps.begin(), gaps.end());
  std::stable_sort(sorted.begin(), sorted.end());
  return sorted.size() >= 2 ? sorted[1] : sorted[0];
}

RawPerformance parse_performance_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  const auto header = split_fields(line);
  const std::vector<std::string_view> expected{"instance_id", "config_id", "seed", "gap"};
  if (header != expected)
    throw ParseError(fmt::format(
        "line {}: header must be 'instance_id,config_id,seed,gap'", line_no));

  std::map<PerformanceKey, std::vector<std::pair<std::int64_t, double>>> by_pair;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 4)
      throw ParseError(fmt::format("line {}: expected 4 fields, got {}", line_no, f.size()));
    if (f[0].empty() || f[1].empty())
      throw ParseError(fmt::format("line {}: empty instance or configuration id", line_no));
    std::int64_t seed = 0;
    auto [ptr, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), seed);
    if (f[2].empty() || ec != std::errc() || ptr != f[2].data() + f[2].size())
      throw ParseError(fmt::format("line {}: malformed seed '{}'", line_no, f[2]));
    const auto gap = parse_double(f[3]);
    if (!gap || std::isnan(*gap) || *gap < 0.0)
      throw ParseError(fmt::format("line {}: gap must be a nonnegative number or 'inf', got '{}'",
                                   line_no, f[3]));
    auto& seeds = by_pair[PerformanceKey{std::string(f[0]), std::string(f[1])}];
    for (const auto& [s, _] : seeds)
      if (s == seed)
        throw ParseError(fmt::format("line {}: duplicate seed {} for ({}, {})", line_no, seed,
                                     f[0], f[1]));
    seeds.emplace_back(seed, *gap);
  }
  if (by_pair.empty()) throw DataError("performance file has no data rows");

  RawPerformance raw;
  for (const auto& [key, seeds] : by_pair) {
    std::vector<double> gaps;
    for (const auto& [s, g] : seeds) gaps.push_back(g);
    raw.keys.push_back(key);
    raw.values.push_back(second_best(gaps));
  }
  return raw;
}

RawPerformance load_performance_csv(const std::filesystem::path& path) {
  return parse_performance_csv(read_text(path));
}

FeatureTable parse_features_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  const auto header = split_fields(line);
  if (header.empty() || header[0] != "instance_id")
    throw ParseError(fmt::format("line {}: header must start with 'instance_id'", line_no));
  const std::size_t t = header.size() - 1;

  FeatureTable table;
  table.features = Matrix(0, t);
  std::vector<double> row(t);
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != t + 1)
      throw ParseError(fmt::format("line {}: expected {} fields, got {}", line_no, t + 1, f.size()));
    if (f[0].empty()) throw ParseError(fmt::format("line {}: empty instance id", line_no));
    for (std::size_t j = 0; j < t; ++j) {
      const auto v = parse_double(f[j + 1]);
      if (!v || !std::isfinite(*v))
        throw ParseError(fmt::format("line {}: malformed feature '{}'", line_no, f[j + 1]));
      row[j] = *v;
    }
    if (std::find(table.instance_ids.begin(), table.instance_ids.end(), f[0]) !=
        table.instance_ids.end())
      throw ParseError(fmt::format("line {}: duplicate instance '{}'", line_no, f[0]));
    table.instance_ids.emplace_back(f[0]);
    table.features.append_row(row);
  }
  if (table.instance_ids.empty()) throw DataError("feature file has no data rows");
  return table;
}

FeatureTable load_features_csv(const std::filesystem::path& path) {
  return parse_features_csv(read_text(path));
}

void SyntheticSpec::validate() const {
  if (!(noise_std >= 0.0)) throw ArgumentError("noise_std must be nonnegative");
  if (!(inf_probability >= 0.0 && inf_probability < 1.0))
    throw ArgumentError("inf_probability must lie in [0,1)");
}

double synthetic_performance(const SyntheticSpec& spec, std::span<const double> features,
                             const Configuration& c) {
  if (features.size() + c.size() != spec.hidden_weights.size())
    throw DimensionError(fmt::format("synthetic oracle expects {} inputs, got {} + {}",
                                     spec.hidden_weights.size(), features.size(), c.size()));
  double z = spec.hidden_bias;
  for (std::size_t j = 0; j < features.size(); ++j) z += spec.hidden_weights[j] * features[j];
  for (std::size_t j = 0; j < c.size(); ++j)
    if (c[j]) z += spec.hidden_weights[features.size() + j];

  // Counter-based stream keyed by (seed, f, c).
  std::uint64_t key = mix64(spec.seed);
  for (double v : features) key = mix64(key ^ std::bit_cast<std::uint64_t>(v));
  for (std::size_t j = 0; j < c.size(); ++j) key = mix64(key ^ (c[j] ? 0xA5ULL + j : 0x5AULL + j));

  if (spec.inf_probability > 0.0 && unit_from(mix64(key ^ 3)) < spec.inf_probability)
    return kInfinity;

  double gap = 1.0 - sigmoid(z);
  if (spec.noise_std > 0.0) {
    const double u1 = unit_from(mix64(key ^ 1)), u2 = unit_from(mix64(key ^ 2));
    const double normal =
        std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
    gap += spec.noise_std * normal;
  }
  return std::max(gap, 0.0);
}

Dataset build_dataset(const SchemaDocument& doc, const FeatureTable& features,
                      const PerformanceSource& source,
                      const std::optional<std::string>& default_config_id, double gamma,
                      std::uint64_t seed) {
  std::vector<Configuration> configs = enumerate_feasible(doc.schema, doc.constraints);
  if (configs.empty()) throw DataError("the schema admits no feasible configuration");
  std::vector<std::string> ids;
  ids.reserve(configs.size());
  for (const Configuration& c : configs) ids.push_back(config_id(decode_configuration(doc.schema, c)));

  std::size_t default_index = 0;
  if (default_config_id) {
    const Configuration d = encode_configuration(doc.schema, parse_config_id(doc.schema, *default_config_id));
    auto it = std::find(configs.begin(), configs.end(), d);
    if (it == configs.end())
      throw DataError(fmt::format("default configuration '{}' is infeasible", *default_config_id));
    default_index = static_cast<std::size_t>(it - configs.begin());
  }

  const std::size_t n = features.instance_ids.size(), k = configs.size();
  Matrix gaps(n, k);
  switch (source.kind) {
    case PerformanceSource::Kind::csv: {
      const RawPerformance raw = load_performance_csv(source.csv_path);
      std::map<std::string, std::size_t> inst_pos, cfg_pos;
      for (std::size_t i = 0; i < n; ++i) inst_pos[features.instance_ids[i]] = i;
      for (std::size_t c = 0; c < k; ++c) cfg_pos[ids[c]] = c;
      std::vector<std::uint8_t> seen(n * k, 0);
      for (std::size_t r = 0; r < raw.keys.size(); ++r) {
        const auto i = inst_pos.find(raw.keys[r].instance_id);
        if (i == inst_pos.end())
          throw DataError(fmt::format("performance row for unknown instance '{}'",
                                      raw.keys[r].instance_id));
        const auto c = cfg_pos.find(raw.keys[r].config_id);
        if (c == cfg_pos.end())
          throw DataError(fmt::format("performance row for unknown or infeasible configuration '{}'",
                                      raw.keys[r].config_id));
        gaps(i->second, c->second) = raw.values[r];
        seen[i->second * k + c->second] = 1;
      }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c)
          if (!seen[i * k + c])
            throw DataError(fmt::format("no performance recorded for ({}, {})",
                                        features.instance_ids[i], ids[c]));
      break;
    }
    case PerformanceSource::Kind::synthetic:
      source.synthetic.validate();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c)
          gaps(i, c) = synthetic_performance(source.synthetic, features.features.row(i), configs[c]);
      break;
    case PerformanceSource::Kind::external:
      source.command.validate(doc.schema);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c)
          gaps(i, c) = run_external(source.command,
                                    (source.instance_dir / features.instance_ids[i]).string(),
                                    configs[c], doc.schema);
      break;
  }
  return make_dataset(doc, features.instance_ids, features.features, std::move(configs),
                      std::move(gaps), default_index, gamma, seed);
}

}  // namespace cfglearn
