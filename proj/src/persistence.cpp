#include "cfglearn/persistence.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "cfglearn/error.hpp"

namespace cfglearn {

namespace {

using nlohmann::json;

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PersistenceError(fmt::format("cannot open '{}'", path.string()));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw PersistenceError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw PersistenceError(fmt::format("cannot write '{}'", path.string()));
  out << j.dump(1) << "\n";
  if (!out) throw PersistenceError(fmt::format("write to '{}' failed", path.string()));
}

void check_version(const json& j, int expected, std::string_view what) {
  if (!j.contains("format_version"))
    throw PersistenceError(fmt::format("{} file has no format_version", what));
  const int v = j.at("format_version").get<int>();
  if (v != expected)
    throw PersistenceError(
        fmt::format("{} file has format_version {}, expected {}", what, v, expected));
}

json gap_to_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

double gap_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw PersistenceError("gap entries must be numbers or \"inf\"");
  }
  return j.get<double>();
}

template <typename F>
auto guarded(std::string_view what, F&& f) {
  try {
    return f();
  } catch (const PersistenceError&) {
    throw;
  } catch (const json::exception& e) {
    throw PersistenceError(fmt::format("malformed {} file: {}", what, e.what()));
  } catch (const Error& e) {
    throw PersistenceError(fmt::format("invalid {} file: {}", what, e.what()));
  }
}

}  // namespace

const LinearModel& StoredModel::pao() const {
  if (variant != Variant::pao || model.output_dim() != 1)
    throw ArgumentError("model is not a single-output PaO model");
  return model.outputs.front();
}

json train_config_to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate}, {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},       {"seed", cfg.seed},
          {"weight_init_scale", cfg.weight_init_scale},
          {"l2_penalty", cfg.l2_penalty},       {"patience", cfg.patience}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig base) {
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.epochs = j.value("epochs", base.epochs);
  base.batch_size = j.value("batch_size", base.batch_size);
  base.seed = j.value("seed", base.seed);
  base.weight_init_scale = j.value("weight_init_scale", base.weight_init_scale);
  base.l2_penalty = j.value("l2_penalty", base.l2_penalty);
  base.patience = j.value("patience", base.patience);
  return base;
}

json model_to_json(const StoredModel& m) {
  json weights = json::array(), biases = json::array();
  for (const LinearModel& out : m.model.outputs) {
    weights.push_back(out.w);
    biases.push_back(out.b);
  }
  json scaling = nullptr;
  if (m.feature_scaling)
    scaling = {{"mean", m.feature_scaling->mean}, {"scale", m.feature_scaling->scale},
               {"folded_into_weights", true}};
  return {{"format_version", kModelFormatVersion},
          {"variant", std::string(to_string(m.variant))},
          {"input_dim", m.model.input_dim()},
          {"output_dim", m.model.output_dim()},
          {"feature_dim", m.feature_dim},
          {"weights", weights},
          {"biases", biases},
          {"train_config", train_config_to_json(m.train_config)},
          {"feature_scaling", scaling},
          {"master_seed", m.master_seed}};
}

StoredModel model_from_json(const json& j) {
  return guarded("model", [&] {
    check_version(j, kModelFormatVersion, "model");
    StoredModel m;
    m.variant = parse_variant(j.at("variant").get<std::string>());
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    const auto input_dim = j.at("input_dim").get<std::size_t>();
    const auto output_dim = j.at("output_dim").get<std::size_t>();
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != output_dim || biases.size() != output_dim)
      throw PersistenceError("weights/biases do not match output_dim");
    for (std::size_t h = 0; h < output_dim; ++h) {
      LinearModel out{weights[h].get<std::vector<double>>(), biases[h].get<double>()};
      if (out.w.size() != input_dim) throw PersistenceError("weight row does not match input_dim");
      m.model.outputs.push_back(std::move(out));
    }
    if (m.variant == Variant::pao && output_dim != 1)
      throw PersistenceError("a pao model has exactly one output");
    if (m.variant == Variant::pai && input_dim != m.feature_dim + 1)
      throw PersistenceError("a pai model has feature_dim + 1 inputs");
    if (m.variant == Variant::pao && input_dim <= m.feature_dim)
      throw PersistenceError("a pao model has more inputs than features");
    m.train_config = train_config_from_json(j.at("train_config"));
    if (const auto& s = j.at("feature_scaling"); !s.is_null())
      m.feature_scaling = FeatureScaling{s.at("mean").get<std::vector<double>>(),
                                         s.at("scale").get<std::vector<double>>()};
    m.master_seed = j.value("master_seed", std::uint64_t{0});
    return m;
  });
}

void save_model(const std::filesystem::path& path, const StoredModel& m) {
  write_json(path, model_to_json(m));
}

StoredModel load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

json dataset_to_json(const Dataset& ds) {
  json instances = json::array();
  for (std::size_t i = 0; i < ds.instance_count(); ++i) {
    auto f = ds.features.row(i);
    instances.push_back({{"id", ds.instance_ids[i]},
                         {"features", std::vector<double>(f.begin(), f.end())}});
  }
  json configs = json::array();
  for (std::size_t c = 0; c < ds.config_count(); ++c)
    configs.push_back({{"id", ds.config_ids[c]}, {"bits", ds.configs[c].to_string()}});
  json gaps = json::array(), rho = json::array();
  for (std::size_t i = 0; i < ds.instance_count(); ++i) {
    json grow = json::array(), rrow = json::array();
    for (std::size_t c = 0; c < ds.config_count(); ++c) {
      grow.push_back(gap_to_json(ds.gaps(i, c)));
      rrow.push_back(ds.rho(i, c));
    }
    gaps.push_back(std::move(grow));
    rho.push_back(std::move(rrow));
  }
  return {{"format_version", kDatasetFormatVersion},
          {"seed", ds.seed},
          {"gamma", ds.gamma},
          {"schema", to_json(ds.schema)},
          {"default_config_id", ds.config_ids[ds.default_config]},
          {"instances", instances},
          {"configs", configs},
          {"gaps", gaps},
          {"rho", rho}};
}

Dataset dataset_from_json(const json& j) {
  return guarded("dataset", [&] {
    check_version(j, kDatasetFormatVersion, "dataset");
    Dataset ds;
    ds.schema = parse_schema_document(j.at("schema"));
    ds.seed = j.value("seed", std::uint64_t{0});
    ds.gamma = j.at("gamma").get<double>();

    const auto& instances = j.at("instances");
    for (const auto& inst : instances) {
      ds.instance_ids.push_back(inst.at("id").get<std::string>());
      ds.features.append_row(inst.at("features").get<std::vector<double>>());
    }
    for (const auto& c : j.at("configs")) {
      const std::string bits = c.at("bits").get<std::string>();
      std::vector<std::uint8_t> v;
      for (char ch : bits) {
        if (ch != '0' && ch != '1') throw PersistenceError("configuration bits must be 0/1");
        v.push_back(ch == '1' ? 1 : 0);
      }
      Configuration cfg(std::move(v));
      const std::string id = c.at("id").get<std::string>();
      if (config_id(decode_configuration(ds.schema.schema, cfg)) != id)
        throw PersistenceError(fmt::format("configuration id '{}' does not match its bits", id));
      ds.config_ids.push_back(id);
      ds.configs.push_back(std::move(cfg));
    }

    const std::size_t n = ds.instance_ids.size(), k = ds.configs.size();
    const auto& gaps = j.at("gaps");
    const auto& rho = j.at("rho");
    if (gaps.size() != n || rho.size() != n)
      throw PersistenceError("performance tables must have one row per instance");
    ds.gaps = Matrix(n, k);
    ds.rho = Matrix(n, k);
    for (std::size_t i = 0; i < n; ++i) {
      if (gaps[i].size() != k || rho[i].size() != k)
        throw PersistenceError("performance rows must have one entry per configuration");
      for (std::size_t c = 0; c < k; ++c) {
        ds.gaps(i, c) = gap_from_json(gaps[i][c]);
        ds.rho(i, c) = rho[i][c].get<double>();
      }
    }
    const std::string def = j.at("default_config_id").get<std::string>();
    auto it = std::find(ds.config_ids.begin(), ds.config_ids.end(), def);
    if (it == ds.config_ids.end())
      throw PersistenceError(fmt::format("default configuration '{}' not in dataset", def));
    ds.default_config = static_cast<std::size_t>(it - ds.config_ids.begin());
    ds.validate();
    return ds;
  });
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  write_json(path, dataset_to_json(ds));
}

Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_json(read_json(path)); }

}  // namespace cfglearn
