#include "cfglearn/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "cfglearn/error.hpp"

namespace cfglearn {

namespace {

struct Column {
  std::string title;
  const VariantSummary* summary;
  std::string label;
};

std::vector<Column> columns(const ExperimentSummary& s) {
  std::vector<Column> out;
  if (s.pao) out.push_back({"PaO", &*s.pao, "pao"});
  if (s.pai) out.push_back({"PaI", &*s.pai, "pai"});
  return out;
}

std::string fixed2(double v) { return fmt::format("{:.2f}", v); }

std::string opt2(const std::optional<double>& v) { return v ? fixed2(*v) : "n/a"; }

std::string ratio_cell(std::size_t num, std::size_t den) { return fmt::format("{}/{:02}", num, den); }

std::size_t run_count(const std::vector<Column>& cols) {
  std::size_t n = 0;
  for (const Column& c : cols) n = std::max(n, c.summary->runs.size());
  return n;
}

using Row = std::vector<std::string>;

// Rows of cells: run label, then im, nw, pd, CPU blocks with one cell per variant.
std::vector<Row> summary_rows(const ExperimentSummary& s) {
  const auto cols = columns(s);
  std::vector<Row> rows;
  const std::size_t runs = run_count(cols);
  for (std::size_t k = 0; k < runs; ++k) {
    Row row{std::to_string(k + 1)};
    for (int metric = 0; metric < 4; ++metric)
      for (const Column& c : cols) {
        if (k >= c.summary->runs.size()) {
          row.push_back("-");
          continue;
        }
        const RunStats& r = c.summary->runs[k];
        switch (metric) {
          case 0: row.push_back(ratio_cell(r.improved, r.attempted)); break;
          case 1: row.push_back(ratio_cell(r.non_worsened, r.attempted)); break;
          case 2: row.push_back(r.attempted ? fixed2(r.pd) : "n/a"); break;
          default: row.push_back(r.cpu_seconds ? fixed2(*r.cpu_seconds) : "-"); break;
        }
      }
    rows.push_back(std::move(row));
  }

  auto stat_row = [&](const std::string& label, auto pick) {
    Row row{label};
    for (int metric = 0; metric < 4; ++metric)
      for (const Column& c : cols) row.push_back(pick(*c.summary, metric));
    rows.push_back(std::move(row));
  };
  stat_row("sum", [](const VariantSummary& v, int metric) -> std::string {
    switch (metric) {
      case 0: return ratio_cell(v.improved_total, v.attempted_total);
      case 1: return ratio_cell(v.non_worsened_total, v.attempted_total);
      case 2: return fixed2(v.pd.sum);
      default: return v.cpu ? fixed2(v.cpu->sum) : "-";
    }
  });
  stat_row("mean", [](const VariantSummary& v, int metric) -> std::string {
    switch (metric) {
      case 0: return fixed2(v.im.mean);
      case 1: return fixed2(v.nw.mean);
      case 2: return fixed2(v.pd.mean);
      default: return v.cpu ? fixed2(v.cpu->mean) : "-";
    }
  });
  stat_row("stdev", [](const VariantSummary& v, int metric) -> std::string {
    switch (metric) {
      case 0: return opt2(v.im.stdev);
      case 1: return opt2(v.nw.stdev);
      case 2: return opt2(v.pd.stdev);
      default: return v.cpu ? opt2(v.cpu->stdev) : "-";
    }
  });
  return rows;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw PersistenceError(fmt::format("cannot open '{}'", p.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw PersistenceError(fmt::format("cannot write '{}'", p.string()));
  out << text;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::string format_summary_table(const ExperimentSummary& summary) {
  const auto cols = columns(summary);
  if (cols.empty()) return "no runs\n";
  std::vector<Row> rows = summary_rows(summary);

  const std::size_t per = cols.size();
  Row header1{"run"}, header2{""};
  for (const char* metric : {"im", "nw", "pd", "CPU"})
    for (std::size_t i = 0; i < per; ++i) {
      header1.push_back(i == 0 ? metric : "");
      header2.push_back(cols[i].title);
    }
  rows.insert(rows.begin(), header2);
  rows.insert(rows.begin(), header1);

  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const Row& r : rows)
    for (std::size_t j = 0; j < r.size(); ++j) width[j] = std::max(width[j], r[j].size());

  std::string out;
  for (const Row& r : rows) {
    std::string line = fmt::format("{:<{}}", r[0], width[0]);
    for (std::size_t j = 1; j < r.size(); ++j) line += fmt::format("  {:>{}}", r[j], width[j]);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

std::string format_summary_csv(const ExperimentSummary& summary) {
  const auto cols = columns(summary);
  std::string out = "run";
  for (const char* metric : {"im", "nw", "pd", "cpu"})
    for (const Column& c : cols) out += fmt::format(",{}_{}", metric, c.label);
  out += "\n";
  for (const Row& r : summary_rows(summary)) {
    for (std::size_t j = 0; j < r.size(); ++j) out += (j ? "," : "") + r[j];
    out += "\n";
  }
  return out;
}

std::string format_records_csv(const RunResult& run) {
  std::string out = "variant,instance_id,config_id,rho_chosen,rho_default,improved,non_worsened,pd,r\n";
  for (const VariantRun& v : run.variants)
    for (std::size_t i = 0; i < v.records.size(); ++i) {
      const EvaluationRecord& r = v.records[i];
      out += fmt::format("{},{},{},{:.17g},{:.17g},{},{},{:.17g},{:.17g}\n", to_string(v.variant),
                         r.instance_id, r.config_id, r.rho_chosen, r.rho_default,
                         r.improved ? 1 : 0, r.non_worsened ? 1 : 0, r.pd, v.r_values[i]);
    }
  return out;
}

LoadedRecords parse_records_csv(const std::string& text) {
  LoadedRecords out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("records file is empty");
  ++line_no;
  if (line.rfind("variant,instance_id,config_id", 0) != 0)
    throw ParseError("records file: unexpected header");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 9) throw ParseError(fmt::format("records line {}: expected 9 fields", line_no));
    try {
      EvaluationRecord r;
      r.instance_id = cells[1];
      r.config_id = cells[2];
      r.rho_chosen = std::stod(cells[3]);
      r.rho_default = std::stod(cells[4]);
      r.improved = cells[5] == "1";
      r.non_worsened = cells[6] == "1";
      r.pd = std::stod(cells[7]);
      const Variant v = parse_variant(cells[0]);
      (v == Variant::pao ? out.pao : out.pai).push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ParseError(fmt::format("records line {}: malformed number", line_no));
    } catch (const ArgumentError& e) {
      throw ParseError(fmt::format("records line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

void write_experiment_outputs(const std::filesystem::path& dir, const ExperimentResult& result,
                              const ExperimentConfig& cfg) {
  std::filesystem::create_directories(dir / "runs");
  write_file(dir / "summary.txt", format_summary_table(result.summary));
  write_file(dir / "summary.csv", format_summary_csv(result.summary));

  for (const RunResult& run : result.runs) {
    const auto run_dir = dir / "runs" / std::to_string(run.run_index + 1);
    std::filesystem::create_directories(run_dir);
    write_file(run_dir / "records.csv", format_records_csv(run));

    nlohmann::json meta;
    meta["run_index"] = run.run_index + 1;
    meta["master_seed"] = cfg.master_seed;
    meta["in_sample"] = run.split.in_sample;
    meta["out_of_sample"] = run.split.out_of_sample;
    meta["clustered_space"] = "standardized training inputs X";
    meta["variants"] = nlohmann::json::object();
    for (const VariantRun& v : run.variants) {
      nlohmann::json j;
      j["attempted"] = v.records.size();
      j["failed_instances"] = v.failed_instances;
      j["train_loss"] = v.train_loss;
      j["validation_loss"] = optional_json(v.validation_loss);
      j["test_loss"] = optional_json(v.test_loss);
      j["epochs_run"] = v.epochs_run;
      j["stopped_early"] = v.stopped_early;
      j["stopping_rule"] = cfg.train.patience > 0 ? "early-stopping" : "fixed-epochs";
      j["split_sizes"] = v.split_sizes;
      j["cpu_seconds"] = optional_json(v.stats.cpu_seconds);
      meta["variants"][std::string(to_string(v.variant))] = j;
    }
    write_file(run_dir / "run.json", meta.dump(2) + "\n");
  }
}

ExperimentSummary load_experiment_summary(const std::filesystem::path& dir) {
  const auto runs_dir = dir / "runs";
  if (!std::filesystem::is_directory(runs_dir))
    throw PersistenceError(fmt::format("'{}' has no runs/ directory", dir.string()));
  std::vector<std::size_t> indices;
  for (const auto& entry : std::filesystem::directory_iterator(runs_dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && !name.empty() &&
        std::all_of(name.begin(), name.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
      indices.push_back(std::stoul(name));
  }
  std::sort(indices.begin(), indices.end());
  if (indices.empty()) throw PersistenceError("no run directories found");

  std::vector<RunStats> pao, pai;
  for (std::size_t k : indices) {
    const auto run_dir = runs_dir / std::to_string(k);
    const LoadedRecords recs = parse_records_csv(read_file(run_dir / "records.csv"));
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(read_file(run_dir / "run.json"));
    } catch (const nlohmann::json::exception& e) {
      throw PersistenceError(fmt::format("run {}: {}", k, e.what()));
    }
    const auto& variants = meta.at("variants");
    for (Variant v : {Variant::pao, Variant::pai}) {
      const std::string key(to_string(v));
      if (!variants.contains(key)) continue;
      std::optional<double> cpu;
      if (!variants[key]["cpu_seconds"].is_null()) cpu = variants[key]["cpu_seconds"].get<double>();
      const auto& records = v == Variant::pao ? recs.pao : recs.pai;
      (v == Variant::pao ? pao : pai).push_back(run_stats(records, cpu));
    }
  }
  ExperimentSummary out;
  if (!pao.empty()) out.pao = summarize(std::move(pao));
  if (!pai.empty()) out.pai = summarize(std::move(pai));
  return out;
}

}  // namespace cfglearn
