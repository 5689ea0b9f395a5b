#include "cfglearn/schema_file.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "cfglearn/error.hpp"

namespace cfglearn {

namespace {

Rational rational_from_json(const nlohmann::json& v) {
  if (v.is_number_integer()) return Rational{v.get<std::int64_t>(), 1};
  if (v.is_number_float()) {
    double x = v.get<double>();
    if (std::floor(x) != x || std::abs(x) > 9.0e15)
      throw SchemaError(fmt::format(
          "non-integral coefficient {} must be written as a string (\"p/q\" or decimal)", x));
    return Rational{static_cast<std::int64_t>(x), 1};
  }
  if (v.is_string()) return Rational::parse(v.get<std::string>());
  throw SchemaError("coefficient must be a number or a string");
}

nlohmann::json rational_to_json(const Rational& r) {
  Rational q = r.normalized();
  if (q.den == 1) return q.num;
  return fmt::format("{}/{}", q.num, q.den);
}

}  // namespace

SchemaDocument parse_schema_document(const nlohmann::json& doc) {
  try {
    std::vector<Parameter> params;
    for (const auto& p : doc.at("parameters")) {
      Parameter param;
      param.name = p.at("name").get<std::string>();
      for (const auto& s : p.at("settings")) {
        if (s.is_string())
          param.settings.push_back(s.get<std::string>());
        else
          param.settings.push_back(s.dump());
      }
      params.push_back(std::move(param));
    }
    SchemaDocument out{ParameterSchema(std::move(params)), {}, {}};

    if (doc.contains("constraints")) {
      for (const auto& c : doc.at("constraints")) {
        LinearInequality ineq;
        ineq.label = c.value("label", fmt::format("row{}", out.extra.size()));
        ineq.rhs = rational_from_json(c.at("rhs"));
        for (const auto& t : c.at("terms")) {
          LinearTerm term;
          term.param = t.at("param").get<std::string>();
          const auto& setting = t.at("setting");
          if (setting.is_number_integer()) {
            auto p = out.schema.find_parameter(term.param);
            if (!p) throw SchemaError(fmt::format("unknown parameter '{}'", term.param));
            auto idx = setting.get<std::int64_t>();
            if (idx < 0 || static_cast<std::size_t>(idx) >= out.schema.num_settings(*p))
              throw SchemaError(fmt::format("setting index {} out of range for '{}'", idx,
                                            term.param));
            term.setting = out.schema.parameter(*p).settings[static_cast<std::size_t>(idx)];
          } else {
            term.setting = setting.get<std::string>();
          }
          term.coeff = t.contains("coeff") ? rational_from_json(t.at("coeff")) : Rational{1, 1};
          ineq.terms.push_back(std::move(term));
        }
        out.extra.push_back(std::move(ineq));
      }
    }
    out.constraints = build_constraints(out.schema, out.extra);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(fmt::format("invalid schema document: {}", e.what()));
  }
}

SchemaDocument load_schema_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(fmt::format("cannot open schema file '{}'", path.string()));
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(fmt::format("cannot parse '{}': {}", path.string(), e.what()));
  }
  return parse_schema_document(doc);
}

nlohmann::json to_json(const SchemaDocument& doc) {
  nlohmann::json params = nlohmann::json::array();
  for (const Parameter& p : doc.schema.parameters())
    params.push_back({{"name", p.name}, {"settings", p.settings}});
  nlohmann::json rows = nlohmann::json::array();
  for (const LinearInequality& ineq : doc.extra) {
    nlohmann::json terms = nlohmann::json::array();
    for (const LinearTerm& t : ineq.terms)
      terms.push_back(
          {{"param", t.param}, {"setting", t.setting}, {"coeff", rational_to_json(t.coeff)}});
    rows.push_back({{"label", ineq.label}, {"terms", terms}, {"rhs", rational_to_json(ineq.rhs)}});
  }
  return {{"parameters", params}, {"constraints", rows}};
}

}  // namespace cfglearn
