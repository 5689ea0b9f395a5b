#include "cfglearn/config_space.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "cfglearn/error.hpp"

namespace cfglearn {

ParameterSchema::ParameterSchema(std::vector<Parameter> parameters)
    : parameters_(std::move(parameters)) {
  std::set<std::string_view> names;
  offsets_.reserve(parameters_.size());
  for (const Parameter& p : parameters_) {
    if (p.name.empty()) throw SchemaError("parameter with empty name");
    if (!names.insert(p.name).second)
      throw SchemaError(fmt::format("duplicate parameter name '{}'", p.name));
    if (p.settings.size() < 2)
      throw SchemaError(fmt::format("parameter '{}' needs at least 2 settings", p.name));
    std::set<std::string_view> labels(p.settings.begin(), p.settings.end());
    if (labels.size() != p.settings.size())
      throw SchemaError(fmt::format("parameter '{}' has duplicate setting labels", p.name));
    offsets_.push_back(dimension_);
    dimension_ += p.settings.size();
  }
}

std::optional<std::size_t> ParameterSchema::find_parameter(std::string_view name) const {
  for (std::size_t i = 0; i < parameters_.size(); ++i)
    if (parameters_[i].name == name) return i;
  return std::nullopt;
}

std::size_t ParameterSchema::bit_index(std::string_view param, std::string_view setting) const {
  auto p = find_parameter(param);
  if (!p) throw SchemaError(fmt::format("unknown parameter '{}'", param));
  const auto& labels = parameters_[*p].settings;
  auto it = std::find(labels.begin(), labels.end(), setting);
  if (it == labels.end())
    throw SchemaError(fmt::format("unknown setting '{}' for parameter '{}'", setting, param));
  return offsets_[*p] + static_cast<std::size_t>(it - labels.begin());
}

std::uint64_t ParameterSchema::combination_count() const noexcept {
  std::uint64_t total = 1;
  for (const Parameter& p : parameters_) {
    std::uint64_t next = 0;
    if (__builtin_mul_overflow(total, p.settings.size(), &next))
      return std::numeric_limits<std::uint64_t>::max();
    total = next;
  }
  return total;
}

Configuration::Configuration(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto b : bits_)
    if (b > 1) throw DimensionError("configuration entries must be 0 or 1");
}

std::vector<double> Configuration::as_reals() const {
  return {bits_.begin(), bits_.end()};
}

std::string Configuration::to_string() const {
  std::string out;
  out.reserve(bits_.size());
  for (auto b : bits_) out.push_back(b ? '1' : '0');
  return out;
}

Configuration encode_configuration(const ParameterSchema& schema,
                                   std::span<const std::size_t> settings) {
  if (settings.size() != schema.parameter_count())
    throw SchemaError(fmt::format("expected {} setting indices, got {}",
                                  schema.parameter_count(), settings.size()));
  std::vector<std::uint8_t> bits(schema.dimension(), 0);
  for (std::size_t i = 0; i < settings.size(); ++i) {
    if (settings[i] >= schema.num_settings(i))
      throw SchemaError(fmt::format("setting index {} out of range for parameter '{}'",
                                    settings[i], schema.parameter(i).name));
    bits[schema.block_offset(i) + settings[i]] = 1;
  }
  return Configuration(std::move(bits));
}

SettingTuple decode_configuration(const ParameterSchema& schema, const Configuration& c) {
  if (c.size() != schema.dimension())
    throw DecodeError(fmt::format("configuration has {} bits, schema expects {}", c.size(),
                                  schema.dimension()));
  SettingTuple out(schema.parameter_count());
  for (std::size_t i = 0; i < schema.parameter_count(); ++i) {
    std::size_t set = 0;
    for (std::size_t k = 0; k < schema.num_settings(i); ++k) {
      if (c[schema.block_offset(i) + k]) {
        out[i] = k;
        ++set;
      }
    }
    if (set != 1)
      throw DecodeError(fmt::format("block of parameter '{}' has {} bits set",
                                    schema.parameter(i).name, set));
  }
  return out;
}

std::string config_id(std::span<const std::size_t> settings) {
  std::string out;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    if (i) out.push_back('-');
    out += std::to_string(settings[i]);
  }
  return out;
}

SettingTuple parse_config_id(const ParameterSchema& schema, std::string_view id) {
  SettingTuple out;
  std::size_t pos = 0;
  while (pos <= id.size()) {
    std::size_t end = id.find('-', pos);
    if (end == std::string_view::npos) end = id.size();
    std::size_t value = 0;
    auto part = id.substr(pos, end - pos);
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size())
      throw SchemaError(fmt::format("malformed configuration id '{}'", id));
    out.push_back(value);
    pos = end + 1;
  }
  // Validates arity and ranges.
  (void)encode_configuration(schema, out);
  return out;
}

// ---------------------------------------------------------------------------

Rational Rational::normalized() const {
  if (den == 0) throw SchemaError("rational with zero denominator");
  std::int64_t n = num, d = den;
  if (d < 0) {
    n = -n;
    d = -d;
  }
  std::int64_t g = std::gcd(n, d);
  if (g > 1) {
    n /= g;
    d /= g;
  }
  return {n, d};
}

Rational Rational::parse(std::string_view text) {
  auto bad = [&] { return SchemaError(fmt::format("malformed rational '{}'", text)); };
  auto parse_int = [&](std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) throw bad();
    return v;
  };

  if (auto slash = text.find('/'); slash != std::string_view::npos)
    return Rational{parse_int(text.substr(0, slash)), parse_int(text.substr(slash + 1))}
        .normalized();

  if (auto dot = text.find('.'); dot != std::string_view::npos) {
    auto frac = text.substr(dot + 1);
    if (frac.size() > 17) throw bad();
    std::string digits(text.substr(0, dot));
    digits += frac;
    if (digits.empty() || digits == "-" || digits == "+") throw bad();
    std::int64_t den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
    return Rational{parse_int(digits), den}.normalized();
  }
  return Rational{parse_int(text), 1};
}

namespace {

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) throw SchemaError("constraint coefficients overflow");
  return r;
}

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r = 0;
  if (__builtin_add_overflow(a, b, &r)) throw SchemaError("constraint coefficients overflow");
  return r;
}

}  // namespace

ConstraintSystem::ConstraintSystem(std::size_t columns,
                                   std::vector<std::vector<std::int64_t>> a,
                                   std::vector<std::int64_t> d,
                                   std::vector<std::string> labels)
    : columns_(columns), a_(std::move(a)), d_(std::move(d)), labels_(std::move(labels)) {
  if (a_.size() != d_.size())
    throw DimensionError("constraint matrix and right-hand side differ in row count");
  if (labels_.empty()) labels_.resize(d_.size());
  if (labels_.size() != d_.size()) throw DimensionError("one label per constraint row required");
  for (const auto& r : a_)
    if (r.size() != columns_) throw DimensionError("constraint row has wrong column count");
}

void ConstraintSystem::append_row(std::vector<std::int64_t> coeffs, std::int64_t rhs,
                                  std::string label) {
  if (coeffs.size() != columns_) throw DimensionError("constraint row has wrong column count");
  a_.push_back(std::move(coeffs));
  d_.push_back(rhs);
  labels_.push_back(std::move(label));
}

ConstraintSystem build_constraints(const ParameterSchema& schema,
                                   std::span<const LinearInequality> extra) {
  const std::size_t s = schema.dimension();
  ConstraintSystem cs(s, {}, {}, {});
  for (std::size_t i = 0; i < schema.parameter_count(); ++i) {
    std::vector<std::int64_t> upper(s, 0), lower(s, 0);
    for (std::size_t k = 0; k < schema.num_settings(i); ++k) {
      upper[schema.block_offset(i) + k] = 1;
      lower[schema.block_offset(i) + k] = -1;
    }
    const auto& name = schema.parameter(i).name;
    cs.append_row(std::move(upper), 1, "onehot_le:" + name);
    cs.append_row(std::move(lower), -1, "onehot_ge:" + name);
  }

  for (const LinearInequality& ineq : extra) {
    // Common denominator of the whole row, so scaling keeps it exact.
    std::int64_t scale = ineq.rhs.normalized().den;
    for (const LinearTerm& t : ineq.terms) scale = std::lcm(scale, t.coeff.normalized().den);

    std::vector<std::int64_t> row(s, 0);
    for (const LinearTerm& t : ineq.terms) {
      Rational q = t.coeff.normalized();
      std::size_t j = schema.bit_index(t.param, t.setting);
      row[j] = checked_add(row[j], checked_mul(q.num, scale / q.den));
    }
    Rational r = ineq.rhs.normalized();
    cs.append_row(std::move(row), checked_mul(r.num, scale / r.den), ineq.label);
  }
  return cs;
}

bool is_feasible(const ConstraintSystem& cs, const Configuration& c) {
  if (c.size() != cs.columns())
    throw DimensionError(fmt::format("configuration has {} bits, constraints have {} columns",
                                     c.size(), cs.columns()));
  for (std::size_t i = 0; i < cs.rows(); ++i) {
    auto row = cs.row(i);
    std::int64_t lhs = 0;
    for (std::size_t j = 0; j < row.size(); ++j)
      if (c[j]) lhs += row[j];
    if (lhs > cs.rhs(i)) return false;
  }
  return true;
}

std::vector<Configuration> enumerate_feasible(const ParameterSchema& schema,
                                              const ConstraintSystem& cs, std::uint64_t cap) {
  if (cs.columns() != schema.dimension())
    throw DimensionError("constraint system does not match schema dimension");
  const std::uint64_t total = schema.combination_count();
  if (total > cap)
    throw EnumerationCapError(fmt::format(
        "configuration space has {} points, above the enumeration cap of {}", total, cap));

  std::vector<Configuration> out;
  const std::size_t n = schema.parameter_count();
  SettingTuple settings(n, 0);
  for (std::uint64_t k = 0; k < total; ++k) {
    Configuration c = encode_configuration(schema, settings);
    if (is_feasible(cs, c)) out.push_back(std::move(c));
    // Odometer increment, last parameter fastest.
    for (std::size_t i = n; i-- > 0;) {
      if (++settings[i] < schema.num_settings(i)) break;
      settings[i] = 0;
    }
  }
  return out;
}

}  // namespace cfglearn
