#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "cfglearn/config_space.hpp"

namespace cfglearn {

/// Parsed schema + constraints document:
///
///   { "parameters":  [ {"name": "...", "settings": ["...", ...]}, ... ],
///     "constraints": [ {"label": "...",
///                       "terms": [ {"param": "...", "setting": "...", "coeff": 1} ],
///                       "rhs": 0}, ... ] }
///
/// One-hot rows are implicit. `setting` may be a label or a 0-based index;
/// `coeff` and `rhs` may be integers or strings such as "3/4" or "0.5".
struct SchemaDocument {
  ParameterSchema schema;
  std::vector<LinearInequality> extra;
  ConstraintSystem constraints;
};

SchemaDocument parse_schema_document(const nlohmann::json& doc);
SchemaDocument load_schema_document(const std::filesystem::path& path);
nlohmann::json to_json(const SchemaDocument& doc);

}  // namespace cfglearn
