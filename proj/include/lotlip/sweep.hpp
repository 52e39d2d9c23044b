#pragma once

#include "lotlip/evaluation.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

namespace lotlip {

enum class SweepAxis { KSubcaptions, TokenLimit, MCorners };

inline const char* to_string(SweepAxis a) {
  switch (a) {
  case SweepAxis::KSubcaptions: return "k_subcaptions";
  case SweepAxis::TokenLimit: return "token_limit";
  case SweepAxis::MCorners: return "m_corners";
  }
  return "?";
}

inline SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "k_subcaptions") return SweepAxis::KSubcaptions;
  if (s == "token_limit") return SweepAxis::TokenLimit;
  if (s == "m_corners") return SweepAxis::MCorners;
  throw Error("unknown sweep axis '" + s + "' (expected k_subcaptions|token_limit|m_corners)");
}

struct SweepSpec {
  SweepAxis axis = SweepAxis::KSubcaptions;
  std::vector<int> values;
  RunConfig base;
  /// Repeat r trains with seed base.train.seed + r.
  int repeats = 1;
  std::vector<std::string> templates = default_templates();

  void validate() const {
    if (values.empty()) throw Error("sweep needs at least one axis value");
    if (repeats < 1) throw Error("sweep needs repeats >= 1");
    for (int v : values) {
      if (v < 0 || (v == 0 && axis != SweepAxis::KSubcaptions && axis != SweepAxis::MCorners)) {
        throw Error("sweep values must be positive");
      }
    }
  }
};

/// Metric columns of a sweep row, in CSV order.
inline const std::vector<std::string>& sweep_metric_names() {
  static const std::vector<std::string> names{
      "long_r1_i2t", "long_r1_t2i", "long_r5_i2t", "long_r5_t2i", "short_r1_i2t", "short_r1_t2i",
      "short_r5_i2t", "short_r5_t2i", "acc1", "flops", "final_loss", "wall_seconds"};
  return names;
}

struct SweepRow {
  std::string axis;
  int value = 0;
  std::uint64_t seed = 0;
  /// "ok" or "error: <message>".
  std::string status = "ok";
  /// Aligned with sweep_metric_names(); NaN when not measured.
  std::vector<double> metrics = std::vector<double>(sweep_metric_names().size(), std::nan(""));

  double metric(const std::string& name) const {
    const auto& names = sweep_metric_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw Error("unknown sweep metric '" + name + "'");
    return metrics[static_cast<std::size_t>(it - names.begin())];
  }
  void set(const std::string& name, double v) {
    const auto& names = sweep_metric_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw Error("unknown sweep metric '" + name + "'");
    metrics[static_cast<std::size_t>(it - names.begin())] = v;
  }
  bool ok() const { return status == "ok"; }
};

using SweepTable = std::vector<SweepRow>;

/// The run configuration of one cell. The base config is copied, never modified.
inline RunConfig cell_config(const SweepSpec& spec, int value, int repeat) {
  RunConfig c = spec.base;
  c.train.seed = spec.base.train.seed + static_cast<std::uint64_t>(repeat);
  switch (spec.axis) {
  case SweepAxis::KSubcaptions:
    c.train.k_subcaptions = value;
    c.train.use_long_texts = value > 0;
    break;
  case SweepAxis::TokenLimit: c.model.text.limit = value; break;
  case SweepAxis::MCorners: c.model.text.corners = value; break;
  }
  return c;
}

/// Trains a fresh model for one cell and evaluates it on `eval`.
inline SweepRow run_cell(const SweepSpec& spec, const Dataset& train_data, const Dataset& eval, int value, int repeat) {
  SweepRow row;
  row.axis = to_string(spec.axis);
  row.value = value;
  const RunConfig config = cell_config(spec, value, repeat);
  row.seed = config.train.seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    TrainState state = init_training(config, train_data, spec.templates);
    double last_loss = std::nan("");
    train(state, train_data, [&](const StepMetrics& m) { last_loss = m.loss_total; });
    for (const auto& r : evaluate_all(eval, state.model, spec.templates)) {
      const std::string prefix = r.task == "long_retrieval" ? "long_" : r.task == "short_retrieval" ? "short_" : "";
      if (r.r1_i2t) row.set(prefix + "r1_i2t", *r.r1_i2t);
      if (r.r1_t2i) row.set(prefix + "r1_t2i", *r.r1_t2i);
      if (r.r5_i2t) row.set(prefix + "r5_i2t", *r.r5_i2t);
      if (r.r5_t2i) row.set(prefix + "r5_t2i", *r.r5_t2i);
      if (r.acc1) row.set("acc1", *r.acc1);
    }
    row.set("flops", static_cast<double>(flops_estimate(state.model.config.text, state.model.config.text.limit)));
    row.set("final_loss", last_loss);
  } catch (const std::exception& e) {
    row.status = std::string("error: ") + e.what();
  }
  row.set("wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return row;
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string format_metric(double v) { return std::isnan(v) ? "nan" : format_double(v); }

inline double parse_metric(const std::string& s) {
  if (s == "nan") return std::nan("");
  return parse_number<double>("csv", s);
}

inline std::string cells_header() {
  std::string h = "axis,value,seed,status";
  for (const auto& n : sweep_metric_names()) h += "," + n;
  return h;
}

inline std::string row_line(const SweepRow& r) {
  std::string line = r.axis + "," + std::to_string(r.value) + "," + std::to_string(r.seed) + "," + csv_escape(r.status);
  for (double v : r.metrics) line += "," + format_metric(v);
  return line;
}

} // namespace detail

inline void write_cells_csv(std::ostream& out, const SweepTable& table) {
  out << "# one row per (axis value, seed); metrics are fractions in [0,1] except flops (text encoder, "
         "2 x MACs at the token limit), final_loss (last step total loss), wall_seconds; nan = not measured\n";
  out << detail::cells_header() << '\n';
  for (const auto& r : table) out << detail::row_line(r) << '\n';
}

inline SweepTable read_cells_csv(std::istream& in) {
  SweepTable table;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != detail::cells_header()) throw Error("unexpected sweep CSV header");
      header_seen = true;
      continue;
    }
    const auto f = detail::csv_split(line);
    if (f.size() != 4 + sweep_metric_names().size()) throw Error("malformed sweep CSV row");
    SweepRow r;
    r.axis = f[0];
    r.value = detail::parse_number<int>("value", f[1]);
    r.seed = detail::parse_number<std::uint64_t>("seed", f[2]);
    r.status = f[3];
    for (std::size_t i = 0; i < r.metrics.size(); ++i) r.metrics[i] = detail::parse_metric(f[4 + i]);
    table.push_back(std::move(r));
  }
  return table;
}

inline SweepTable load_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open sweep table '" + path + "'");
  return read_cells_csv(in);
}

struct AggregateRow {
  std::string axis;
  int value = 0;
  std::size_t n = 0;
  std::vector<double> mean;
  /// Sample standard deviation (n - 1); 0 for a single seed.
  std::vector<double> stddev;
};

/// Mean and sample stddev over successful cells, per axis value, in first-appearance order.
inline std::vector<AggregateRow> aggregate(const SweepTable& table) {
  std::vector<AggregateRow> out;
  std::map<std::pair<std::string, int>, std::size_t> slot;
  std::vector<std::vector<const SweepRow*>> members;
  for (const auto& r : table) {
    auto key = std::make_pair(r.axis, r.value);
    if (!slot.count(key)) {
      slot[key] = out.size();
      out.push_back({r.axis, r.value, 0, {}, {}});
      members.emplace_back();
    }
    if (r.ok()) members[slot[key]].push_back(&r);
  }
  const std::size_t k = sweep_metric_names().size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& a = out[i];
    a.n = members[i].size();
    a.mean.assign(k, std::nan(""));
    a.stddev.assign(k, std::nan(""));
    for (std::size_t m = 0; m < k; ++m) {
      std::vector<double> xs;
      for (const auto* r : members[i]) {
        if (!std::isnan(r->metrics[m])) xs.push_back(r->metrics[m]);
      }
      if (xs.empty()) continue;
      double sum = 0.0;
      for (double x : xs) sum += x;
      const double mean = sum / static_cast<double>(xs.size());
      double ss = 0.0;
      for (double x : xs) ss += (x - mean) * (x - mean);
      a.mean[m] = mean;
      a.stddev[m] = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
    }
  }
  return out;
}

inline void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "# per axis value: n successful seeds, then <metric>_mean and <metric>_std (sample stddev) for each metric\n";
  out << "axis,value,n";
  for (const auto& n : sweep_metric_names()) out << ',' << n << "_mean," << n << "_std";
  out << '\n';
  for (const auto& a : rows) {
    out << a.axis << ',' << a.value << ',' << a.n;
    for (std::size_t m = 0; m < a.mean.size(); ++m) {
      out << ',' << detail::format_metric(a.mean[m]) << ',' << detail::format_metric(a.stddev[m]);
    }
    out << '\n';
  }
}

/// Writes `dir`/cells.csv (tidy, one row per cell) and `dir`/aggregate.csv.
inline void emit_plot_data(const SweepTable& table, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "cells.csv", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "cells.csv").string());
    write_cells_csv(out, table);
  }
  std::ofstream out(dir / "aggregate.csv", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "aggregate.csv").string());
  write_aggregate_csv(out, aggregate(table));
}

/// Runs every (value, repeat) cell, appending each finished row to
/// `out_dir`/cells.partial.csv. Cells already present there are not rerun.
/// The returned table is ordered by value list, then repeat.
inline SweepTable run_sweep(const SweepSpec& spec, const Dataset& train_data, const Dataset& eval,
                            const std::filesystem::path& out_dir, int jobs = 1, std::ostream* log = nullptr) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  const auto partial = out_dir / "cells.partial.csv";
  std::map<std::pair<int, std::uint64_t>, SweepRow> done;
  if (std::filesystem::exists(partial)) {
    std::ifstream in(partial);
    for (auto& r : read_cells_csv(in)) {
      if (r.axis == to_string(spec.axis)) done[{r.value, r.seed}] = std::move(r);
    }
  }
  const bool fresh = !std::filesystem::exists(partial) || std::filesystem::file_size(partial) == 0;
  std::ofstream append(partial, std::ios::app | std::ios::binary);
  if (!append) throw Error("cannot write " + partial.string());
  if (fresh) {
    append << "# incremental sweep log\n" << detail::cells_header() << '\n';
    append.flush();
  }

  struct Cell {
    int value;
    int repeat;
  };
  std::vector<Cell> todo;
  for (int v : spec.values) {
    for (int r = 0; r < spec.repeats; ++r) {
      if (!done.count({v, spec.base.train.seed + static_cast<std::uint64_t>(r)})) todo.push_back({v, r});
    }
  }
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      SweepRow row = run_cell(spec, train_data, eval, todo[i].value, todo[i].repeat);
      std::lock_guard lock(mu);
      append << detail::row_line(row) << '\n';
      append.flush();
      if (log) *log << "cell " << row.axis << "=" << row.value << " seed=" << row.seed << " " << row.status << '\n';
      done[{row.value, row.seed}] = std::move(row);
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(todo.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SweepTable table;
  for (int v : spec.values) {
    for (int r = 0; r < spec.repeats; ++r) table.push_back(done.at({v, spec.base.train.seed + static_cast<std::uint64_t>(r)}));
  }
  return table;
}

} // namespace lotlip
