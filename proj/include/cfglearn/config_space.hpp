#pragma once

// Categorical solver parameters, their one-hot binary encoding, and the
// integer linear system A c <= d that carves out the valid configurations.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cfglearn {

struct Parameter {
  std::string name;
  std::vector<std::string> settings;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

class ParameterSchema {
 public:
  ParameterSchema() = default;
  /// Throws SchemaError on duplicate names/labels or fewer than two settings.
  explicit ParameterSchema(std::vector<Parameter> parameters);

  std::size_t parameter_count() const noexcept { return parameters_.size(); }
  /// Binary dimension s: total number of settings over all parameters.
  std::size_t dimension() const noexcept { return dimension_; }
  std::span<const Parameter> parameters() const noexcept { return parameters_; }
  const Parameter& parameter(std::size_t i) const { return parameters_.at(i); }
  /// First bit of parameter i's one-hot block.
  std::size_t block_offset(std::size_t i) const { return offsets_.at(i); }
  std::size_t num_settings(std::size_t i) const { return parameters_.at(i).settings.size(); }

  std::optional<std::size_t> find_parameter(std::string_view name) const;
  /// Bit index of (parameter, setting label). Throws SchemaError if unknown.
  std::size_t bit_index(std::string_view param, std::string_view setting) const;

  /// Product of setting counts, saturated at UINT64_MAX.
  std::uint64_t combination_count() const noexcept;

  friend bool operator==(const ParameterSchema& a, const ParameterSchema& b) {
    return a.parameters_ == b.parameters_;
  }

 private:
  std::vector<Parameter> parameters_;
  std::vector<std::size_t> offsets_;
  std::size_t dimension_ = 0;
};

/// A point of {0,1}^s.
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::vector<std::uint8_t> bits);

  std::size_t size() const noexcept { return bits_.size(); }
  bool operator[](std::size_t j) const noexcept { return bits_[j] != 0; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  /// Bits as 0.0 / 1.0, for use as model inputs.
  std::vector<double> as_reals() const;
  std::string to_string() const;

  auto operator<=>(const Configuration&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

using SettingTuple = std::vector<std::size_t>;

Configuration encode_configuration(const ParameterSchema& schema,
                                   std::span<const std::size_t> settings);
/// Throws DecodeError when any block is not exactly one-hot.
SettingTuple decode_configuration(const ParameterSchema& schema, const Configuration& c);

/// Identifier used in data files: setting indices joined with '-', e.g. "1-0-2".
std::string config_id(std::span<const std::size_t> settings);
SettingTuple parse_config_id(const ParameterSchema& schema, std::string_view id);

/// Exact rational p/q with q > 0, used for user-supplied constraint data.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  /// Accepts "7", "-3/4", "0.25".
  static Rational parse(std::string_view text);
  Rational normalized() const;
};

struct LinearTerm {
  std::string param;
  std::string setting;
  Rational coeff;
};

/// sum(terms) <= rhs over named (parameter, setting) bits.
struct LinearInequality {
  std::string label;
  std::vector<LinearTerm> terms;
  Rational rhs;
};

/// A c <= d with integer entries. Rational rows are scaled to integers when
/// built, which leaves the feasible set unchanged.
class ConstraintSystem {
 public:
  ConstraintSystem() = default;
  ConstraintSystem(std::size_t columns, std::vector<std::vector<std::int64_t>> a,
                   std::vector<std::int64_t> d, std::vector<std::string> labels);

  std::size_t rows() const noexcept { return d_.size(); }
  std::size_t columns() const noexcept { return columns_; }
  std::span<const std::int64_t> row(std::size_t i) const { return a_.at(i); }
  std::int64_t rhs(std::size_t i) const { return d_.at(i); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }

  void append_row(std::vector<std::int64_t> coeffs, std::int64_t rhs, std::string label);

 private:
  std::size_t columns_ = 0;
  std::vector<std::vector<std::int64_t>> a_;
  std::vector<std::int64_t> d_;
  std::vector<std::string> labels_;
};

/// One-hot rows first (two per parameter: block sum <= 1 and -block sum <= -1),
/// then `extra` in the given order.
ConstraintSystem build_constraints(const ParameterSchema& schema,
                                   std::span<const LinearInequality> extra = {});

/// Exact check of every row. Throws DimensionError on size mismatch.
bool is_feasible(const ConstraintSystem& cs, const Configuration& c);

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

/// All schema-valid configurations satisfying `cs`, in lexicographic order of
/// their setting tuples (last parameter varies fastest).
std::vector<Configuration> enumerate_feasible(const ParameterSchema& schema,
                                              const ConstraintSystem& cs,
                                              std::uint64_t cap = kDefaultEnumerationCap);

}  // namespace cfglearn
