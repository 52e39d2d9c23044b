#pragma once

#include "lotlip/checkpoint.hpp"
#include "lotlip/sweep.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace lotlip::cli {

inline constexpr const char* kConfigEnv = "LOTLIP_CONFIG";

/// Usage errors exit 1; everything thrown after parsing exits 2.
struct UsageError : Error {
  using Error::Error;
};

namespace detail {

inline std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

/// Registers `--<key>` for each config key (all of them when `only` is empty).
class ConfigFlags {
 public:
  void attach(CLI::App* app, const std::vector<std::string>& only = {}) {
    for (const auto& k : config_keys()) {
      if (!only.empty() && std::find(only.begin(), only.end(), k.name) == only.end()) continue;
      names_.push_back(k.name);
    }
    values_.resize(names_.size());
    for (std::size_t i = 0; i < names_.size(); ++i) {
      options_.push_back(app->add_option(dashed(names_[i]), values_[i], find_config_key(names_[i]).help)->group("Config"));
    }
    preset_ = app->add_option("--preset", preset_value_, "Image tower preset applied before the config file: lit|scratch|none")
                  ->group("Config");
    app->add_option("--config", config_path_, std::string("Key = value config file (default: $") + kConfigEnv + ")")
        ->group("Config");
    app->add_flag("--print-config", print_config_, "Print the fully resolved configuration and exit")->group("Config");
  }

  KeyValues flags() const {
    KeyValues kv;
    if (preset_ && preset_->count()) kv.emplace_back("preset", preset_value_);
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (options_[i]->count()) kv.emplace_back(names_[i], values_[i]);
    }
    return kv;
  }

  KeyValues file() const {
    std::string path = config_path_;
    if (path.empty()) {
      if (const char* env = std::getenv(kConfigEnv); env && *env) path = env;
    }
    return path.empty() ? KeyValues{} : read_config_file(path);
  }

  /// Malformed flag values are usage errors; malformed file values are not.
  RunConfig resolve(const RunConfig& base = {}) const {
    const KeyValues kv = flags();
    try {
      resolve_config({}, kv, base);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    return resolve_config(file(), kv, base);
  }

  bool print_config() const { return print_config_; }

 private:
  std::vector<std::string> names_;
  std::vector<std::string> values_;
  std::vector<CLI::Option*> options_;
  CLI::Option* preset_ = nullptr;
  std::string preset_value_;
  std::string config_path_;
  bool print_config_ = false;
};

inline void print_config(std::ostream& out, const RunConfig& c, bool json) {
  if (json) {
    out << config_to_json(c).dump() << '\n';
  } else {
    out << dump_config(c);
  }
}

inline std::vector<ManifestRecord> load_records(const std::string& path, std::ostream& err) {
  auto result = read_manifest_file(path, 0, &err);
  if (result.records.empty()) throw Error("manifest '" + path + "' has no valid records");
  return std::move(result.records);
}

inline std::filesystem::path base_dir(const std::string& manifest) {
  return std::filesystem::absolute(manifest).parent_path();
}

inline std::vector<std::string> read_templates(const std::string& path) {
  if (path.empty()) return default_templates();
  std::ifstream in(path);
  if (!in) throw Error("cannot open template file '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (!t.empty() && t.front() != '#') out.emplace_back(t);
  }
  if (out.empty()) throw Error("template file '" + path + "' has no templates");
  return out;
}

inline std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = trim(item);
    if (t.empty()) continue;
    try {
      out.push_back(lotlip::detail::parse_number<int>("values", std::string(t)));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  if (out.empty()) throw UsageError("--values needs a comma-separated list of integers");
  return out;
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline void print_report(std::ostream& out, const EvalReport& r) {
  out << r.task << ":";
  const auto put = [&](const char* name, const std::optional<double>& v) {
    if (v) out << ' ' << name << '=' << fixed(*v);
  };
  put("R@1(i2t)", r.r1_i2t);
  put("R@5(i2t)", r.r5_i2t);
  put("R@1(t2i)", r.r1_t2i);
  put("R@5(t2i)", r.r5_t2i);
  put("Acc@1", r.acc1);
  out << " images=" << r.n_images << " texts=" << r.n_texts << '\n';
}

inline nlohmann::ordered_json matrix_rows(const Matrix& m) {
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.row(i).data(), m.row(i).data() + m.cols());
    rows.push_back(row);
  }
  return rows;
}

} // namespace detail

struct Options {
  bool json = false;
  std::uint64_t seed = 1;
};

inline int run_gen_corpus(const SyntheticCorpusOptions& opt, const std::string& out_path, std::size_t n_eval,
                          const std::string& eval_path, const std::string& image_dir, int image_size, bool json,
                          std::ostream& out) {
  auto records = generate_synthetic_corpus(opt);
  if (!image_dir.empty()) {
    const auto manifest_dir = detail::base_dir(out_path);
    std::filesystem::create_directories(image_dir);
    for (auto& r : records) {
      const auto file = std::filesystem::absolute(image_dir) / (r.id + ".ppm");
      write_pnm(file.string(), render_attribute_image(r.attributes, opt.values_per_slot(), image_size));
      r.image_path = std::filesystem::relative(file, manifest_dir).generic_string();
      r.image_feature.reset();
    }
  }
  std::vector<ManifestRecord> eval;
  if (n_eval > 0) {
    if (eval_path.empty()) throw UsageError("--eval needs --eval-out");
    auto split = split_manifest(records, n_eval);
    records = std::move(split.train);
    eval = std::move(split.eval);
    write_manifest_file(eval_path, eval);
  }
  write_manifest_file(out_path, records);
  if (json) {
    nlohmann::ordered_json j{{"out", out_path}, {"records", records.size()}, {"eval_records", eval.size()},
                             {"seed", opt.seed}, {"attributes", opt.n_attributes}, {"values", opt.values_per_slot()},
                             {"classes", synthetic_class_names(opt)}};
    out << j.dump() << '\n';
  } else {
    out << "wrote " << records.size() << " records to " << out_path;
    if (!eval.empty()) out << " and " << eval.size() << " to " << eval_path;
    out << '\n';
  }
  return 0;
}

inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Long-text language-image pre-training with corner tokens (toy scale).", "lotlip"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  Options o;

  const auto common = [&o](CLI::App* sub, bool with_seed = true) {
    sub->add_flag("--json", o.json, "Machine-readable output");
    if (with_seed) sub->add_option("--seed", o.seed, "Seed (this subcommand is otherwise deterministic)")->capture_default_str();
  };

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "Write a deterministic synthetic attribute corpus");
  SyntheticCorpusOptions gen_opt;
  std::string gen_out, gen_eval_out, gen_images;
  std::size_t gen_eval = 0;
  int gen_image_size = 32;
  common(gen, false);
  gen->add_option("--seed", gen_opt.seed, "Corpus seed")->capture_default_str();
  gen->add_option("--n", gen_opt.n, "Number of records")->capture_default_str();
  gen->add_option("--attributes", gen_opt.n_attributes, "Attribute slots per record")->capture_default_str();
  gen->add_option("--values", gen_opt.n_values, "Values per slot (0 = same as --attributes)")->capture_default_str();
  gen->add_option("--feature-dim", gen_opt.feature_dim, "Image feature width")->capture_default_str();
  gen->add_option("--out", gen_out, "Output manifest (JSONL)")->required();
  gen->add_option("--eval", gen_eval, "Hold out the last N records as an eval split")->capture_default_str();
  gen->add_option("--eval-out", gen_eval_out, "Eval split manifest");
  gen->add_option("--images", gen_images, "Also render PPM images into this directory (vit mode)");
  gen->add_option("--image-size", gen_image_size, "Rendered image side in pixels")->capture_default_str();

  // stats
  auto* stats = app.add_subcommand("stats", "Corpus statistics of a manifest");
  std::string stats_corpus;
  common(stats);
  stats->add_option("--corpus", stats_corpus, "Manifest (JSONL)")->required();

  // tokenize
  auto* tok = app.add_subcommand("tokenize", "Show the token layout of a text");
  std::string tok_text, tok_checkpoint, tok_corpus;
  int tok_limit = TextEncoderConfig{}.limit, tok_corners = TextEncoderConfig{}.corners;
  bool tok_single = false;
  common(tok);
  tok->add_option("--text", tok_text, "Text to tokenize")->required();
  tok->add_option("--limit", tok_limit, "Token limit")->capture_default_str();
  tok->add_option("--corners", tok_corners, "Corner tokens")->capture_default_str();
  tok->add_flag("--single", tok_single, "Treat the text as one caption (no sub-caption split)");
  tok->add_option("--checkpoint", tok_checkpoint, "Take vocabulary, limit and corners from a checkpoint");
  tok->add_option("--corpus", tok_corpus, "Build the vocabulary from this manifest (default: from the text)");

  // mask
  auto* mask = app.add_subcommand("mask", "Print an attention mask as a 0/1 grid (row = query)");
  int mask_len = 6, mask_corners = 2;
  std::string mask_mode = "corner";
  common(mask);
  mask->add_option("--len", mask_len, "Sequence length")->capture_default_str();
  mask->add_option("--corners", mask_corners, "Corner tokens after CLS")->capture_default_str();
  mask->add_option("--mask-mode", mask_mode, "corner|full")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a manifest and write a checkpoint");
  std::string tr_corpus, tr_out, tr_metrics, tr_resume, tr_templates;
  bool tr_timing = false, tr_quiet = false;
  tr->add_flag("--json", o.json, "Machine-readable summary");
  tr->add_option("--corpus", tr_corpus, "Training manifest (JSONL)");
  tr->add_option("--out", tr_out, "Checkpoint to write at the end");
  tr->add_option("--metrics", tr_metrics, "Also write one JSON metrics record per step to this file");
  tr->add_option("--resume", tr_resume, "Continue from this checkpoint");
  tr->add_option("--templates", tr_templates, "Prompt template file; its words join the vocabulary");
  tr->add_flag("--timing", tr_timing, "Include step wall time in metrics records (not reproducible)");
  tr->add_flag("--quiet", tr_quiet, "Do not echo metrics records to stdout");
  detail::ConfigFlags tr_cfg;
  tr_cfg.attach(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "Zero-shot retrieval and classification of a checkpoint");
  std::string ev_checkpoint, ev_corpus, ev_templates, ev_export;
  common(ev);
  ev->add_option("--checkpoint", ev_checkpoint, "Checkpoint")->required();
  ev->add_option("--corpus", ev_corpus, "Eval manifest (JSONL)")->required();
  ev->add_option("--templates", ev_templates, "Prompt template file, one template per line with {}");
  ev->add_option("--export", ev_export, "Write image and text embeddings with ids to this JSON file");

  // flops
  auto* fl = app.add_subcommand("flops", "Closed-form text encoder FLOPs");
  int fl_effective = 0;
  common(fl);
  fl->add_option("--effective", fl_effective, "Effective length (default: the token limit)");
  detail::ConfigFlags fl_cfg;
  fl_cfg.attach(fl, {"limit", "depth", "dim", "heads", "mlp_ratio"});

  // sweep
  auto* sw = app.add_subcommand("sweep", "Train and evaluate one model per (axis value, seed)");
  std::string sw_axis, sw_values, sw_corpus, sw_eval_corpus, sw_out, sw_templates;
  int sw_seeds = 1, sw_jobs = 1;
  std::size_t sw_holdout = 64;
  sw->add_flag("--json", o.json, "Machine-readable summary");
  sw->add_option("--axis", sw_axis, "k_subcaptions|token_limit|m_corners")->required();
  sw->add_option("--values", sw_values, "Comma-separated axis values")->required();
  sw->add_option("--seeds", sw_seeds, "Repeats; repeat r uses seed + r")->capture_default_str();
  sw->add_option("--corpus", sw_corpus, "Manifest (JSONL)")->required();
  sw->add_option("--eval-corpus", sw_eval_corpus, "Eval manifest (default: last --holdout records of --corpus)");
  sw->add_option("--holdout", sw_holdout, "Eval records held out of --corpus when --eval-corpus is absent")->capture_default_str();
  sw->add_option("--out", sw_out, "Output directory")->required();
  sw->add_option("--jobs", sw_jobs, "Cells trained concurrently")->capture_default_str();
  sw->add_option("--templates", sw_templates, "Prompt template file");
  detail::ConfigFlags sw_cfg;
  sw_cfg.attach(sw);

  // inspect
  auto* in = app.add_subcommand("inspect", "Describe a checkpoint");
  std::string in_checkpoint;
  common(in);
  in->add_option("--checkpoint", in_checkpoint, "Checkpoint")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    if (gen->parsed()) {
      return run_gen_corpus(gen_opt, gen_out, gen_eval, gen_eval_out, gen_images, gen_image_size, o.json, out);
    }

    if (stats->parsed()) {
      std::ifstream f(stats_corpus);
      if (!f) throw Error("cannot open manifest '" + stats_corpus + "'");
      const auto s = corpus_stats(f, &err);
      if (o.json) {
        out << to_json(s).dump() << '\n';
      } else {
        out << "images: " << s.n_images << "\nlong texts: " << s.n_texts << "\nshort texts: " << s.n_short_texts << "\nskipped lines: " << s.n_skipped
            << "\navg sub-captions per long text: " << detail::fixed(s.avg_subcaptions_per_text)
            << "\navg tokens per long text: " << detail::fixed(s.avg_tokens_per_text) << '\n';
      }
      return 0;
    }

    if (tok->parsed()) {
      Vocabulary vocab;
      if (!tok_checkpoint.empty()) {
        const auto s = load_checkpoint(tok_checkpoint);
        vocab = s.model.vocab;
        if (tok->count("--limit") == 0) tok_limit = s.model.config.text.limit;
        if (tok->count("--corners") == 0) tok_corners = s.model.config.text.corners;
      } else if (!tok_corpus.empty()) {
        vocab = build_vocabulary(detail::load_records(tok_corpus, err));
      } else {
        const auto words = split_words(tok_text);
        vocab = Vocabulary::from_words(std::set<std::string>(words.begin(), words.end()));
      }
      const auto seq = tokenize(tok_text, tok_limit, tok_corners, vocab,
                                tok_single ? Segmentation::Single : Segmentation::Subcaptions);
      if (o.json) {
        nlohmann::ordered_json j{{"ids", seq.ids}, {"true_length", seq.true_length}, {"corners", seq.corners}};
        auto roles = nlohmann::json::array(), tokens = nlohmann::json::array();
        for (std::size_t i = 0; i < seq.ids.size(); ++i) {
          roles.push_back(role_name(seq.roles[i]));
          tokens.push_back(vocab.token_of(seq.ids[i]));
        }
        j["roles"] = roles;
        j["tokens"] = tokens;
        out << j.dump() << '\n';
      } else {
        for (std::size_t i = 0; i < seq.ids.size(); ++i) {
          out << i << '\t' << seq.ids[i] << '\t' << role_name(seq.roles[i]) << '\t' << vocab.token_of(seq.ids[i]) << '\n';
        }
        out << "true_length " << seq.true_length << '\n';
      }
      return 0;
    }

    if (mask->parsed()) {
      MaskMode mode;
      try {
        mode = parse_mask_mode(mask_mode);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      const auto m = build_corner_mask(debug_roles(mask_len, mask_corners), mode);
      if (o.json) {
        std::vector<std::vector<int>> rows(static_cast<std::size_t>(m.size()), std::vector<int>(static_cast<std::size_t>(m.size())));
        for (int q = 0; q < m.size(); ++q) {
          for (int k = 0; k < m.size(); ++k) rows[static_cast<std::size_t>(q)][static_cast<std::size_t>(k)] = m(q, k) ? 1 : 0;
        }
        out << nlohmann::ordered_json{{"len", mask_len}, {"corners", mask_corners}, {"mask_mode", to_string(mode)}, {"mask", rows}}.dump()
            << '\n';
      } else {
        print_mask(out, m);
      }
      return 0;
    }

    if (tr->parsed()) {
      const auto templates = detail::read_templates(tr_templates);
      std::optional<TrainState> state;
      RunConfig config;
      if (!tr_resume.empty()) {
        state = load_checkpoint(tr_resume);
        config = tr_cfg.resolve(state->config);
      } else {
        config = tr_cfg.resolve();
      }
      if (tr_cfg.print_config()) {
        detail::print_config(out, config, o.json);
        return 0;
      }
      if (tr_corpus.empty()) throw UsageError("train needs --corpus");
      if (tr_out.empty()) throw UsageError("train needs --out");
      config.train.validate();
      Dataset data = make_dataset(detail::load_records(tr_corpus, err), config.model.image, detail::base_dir(tr_corpus));
      if (state) {
        check_model_compatible(state->model.config, finalize_model_config(config.model, state->model.vocab));
        state->config.train = config.train;
      } else {
        state = init_training(config, data, templates);
      }
      std::ofstream metrics;
      if (!tr_metrics.empty()) {
        metrics.open(tr_metrics, std::ios::binary | (state->opt.step > 0 ? std::ios::app : std::ios::trunc));
        if (!metrics) throw Error("cannot write metrics file '" + tr_metrics + "'");
      }
      StepMetrics last;
      train(*state, data, [&](const StepMetrics& m) {
        const std::string line = to_json(m, tr_timing).dump();
        if (!tr_quiet) out << line << '\n';
        if (metrics.is_open()) metrics << line << '\n';
        last = m;
      });
      if (metrics.is_open()) metrics.flush();
      save_checkpoint(*state, tr_out);
      if (o.json) {
        out << nlohmann::ordered_json{{"checkpoint", tr_out}, {"step", state->opt.step}, {"loss_total", last.loss_total}}.dump() << '\n';
      } else {
        out << "saved " << tr_out << " at step " << state->opt.step << '\n';
      }
      return 0;
    }

    if (ev->parsed()) {
      const auto templates = detail::read_templates(ev_templates);
      const TrainState s = load_checkpoint(ev_checkpoint);
      const Dataset data = make_dataset(detail::load_records(ev_corpus, err), s.model.config.image, detail::base_dir(ev_corpus));
      const auto reports = evaluate_all(data, s.model, templates);
      bool nan = false;
      for (const auto& r : reports) {
        nan = nan || r.has_nan();
        if (o.json) {
          out << to_json(r).dump() << '\n';
        } else {
          detail::print_report(out, r);
        }
      }
      if (!ev_export.empty()) {
        const auto shorts = embed_eval_set(data, s.model, TextKind::Short);
        nlohmann::ordered_json j{{"image_ids", shorts.image_ids}, {"images", detail::matrix_rows(shorts.images)},
                                 {"short_text_ids", shorts.text_ids}, {"short_texts", detail::matrix_rows(shorts.texts)}};
        bool any_long = false;
        for (const auto& r : data.records) {
          for (const auto& t : r.long_texts) any_long = any_long || !t.empty();
        }
        if (any_long) {
          const auto longs = embed_eval_set(data, s.model, TextKind::LongFull);
          j["long_text_ids"] = longs.text_ids;
          j["long_texts"] = detail::matrix_rows(longs.texts);
        }
        std::ofstream f(ev_export, std::ios::binary);
        if (!f) throw Error("cannot write '" + ev_export + "'");
        f << j.dump() << '\n';
      }
      if (nan) {
        err << "error: a metric is NaN\n";
        return 2;
      }
      return 0;
    }

    if (fl->parsed()) {
      const RunConfig c = fl_cfg.resolve();
      if (fl_cfg.print_config()) {
        detail::print_config(out, c, o.json);
        return 0;
      }
      auto shape = c.model.text;
      shape.vocab_size = Vocabulary::kFirstCorner + shape.corners;
      shape.validate();
      const int eff = fl_effective > 0 ? fl_effective : c.model.text.limit;
      if (eff > c.model.text.limit) throw UsageError("--effective exceeds --limit");
      const auto f = flops_estimate(c.model.text, eff);
      if (o.json) {
        out << nlohmann::ordered_json{{"flops", f}, {"effective_len", eff}, {"depth", c.model.text.depth},
                                      {"dim", c.model.text.width}, {"heads", c.model.text.heads},
                                      {"mlp_width", c.model.text.mlp_width()}}
                   .dump()
            << '\n';
      } else {
        out << f << '\n';
      }
      return 0;
    }

    if (sw->parsed()) {
      SweepSpec spec;
      try {
        spec.axis = parse_sweep_axis(sw_axis);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      spec.values = detail::parse_int_list(sw_values);
      spec.repeats = sw_seeds;
      spec.base = sw_cfg.resolve();
      spec.templates = detail::read_templates(sw_templates);
      if (sw_cfg.print_config()) {
        detail::print_config(out, spec.base, o.json);
        return 0;
      }
      spec.validate();
      auto records = detail::load_records(sw_corpus, err);
      std::vector<ManifestRecord> eval_records;
      if (!sw_eval_corpus.empty()) {
        eval_records = detail::load_records(sw_eval_corpus, err);
      } else {
        if (sw_holdout == 0 || sw_holdout >= records.size()) throw UsageError("--holdout must leave records on both sides");
        auto split = split_manifest(records, sw_holdout);
        records = std::move(split.train);
        eval_records = std::move(split.eval);
      }
      const auto& img = spec.base.model.image;
      const Dataset train_data = make_dataset(std::move(records), img, detail::base_dir(sw_corpus));
      const Dataset eval_data = make_dataset(std::move(eval_records), img,
                                             detail::base_dir(sw_eval_corpus.empty() ? sw_corpus : sw_eval_corpus),
                                             train_data.class_names);
      const auto table = run_sweep(spec, train_data, eval_data, sw_out, sw_jobs, o.json ? nullptr : &err);
      emit_plot_data(table, sw_out);
      const auto agg = aggregate(table);
      std::size_t failed = 0;
      for (const auto& r : table) failed += r.ok() ? 0 : 1;
      if (o.json) {
        auto rows = nlohmann::ordered_json::array();
        for (const auto& a : agg) {
          nlohmann::ordered_json j{{"axis", a.axis}, {"value", a.value}, {"n", a.n}};
          for (std::size_t m = 0; m < a.mean.size(); ++m) {
            const auto& name = sweep_metric_names()[m];
            j[name + "_mean"] = a.mean[m];
            j[name + "_std"] = a.stddev[m];
          }
          rows.push_back(j);
        }
        out << nlohmann::ordered_json{{"out", sw_out}, {"cells", table.size()}, {"failed", failed}, {"aggregate", rows}}.dump() << '\n';
      } else {
        out << sw_axis << "\tn\tlong R@1 i2t\tlong R@1 t2i\tshort R@1 i2t\tAcc@1\tflops\n";
        for (const auto& a : agg) {
          const auto col = [&](const char* name) {
            const auto& names = sweep_metric_names();
            const auto i = static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
            return a.mean[i];
          };
          out << a.value << '\t' << a.n << '\t' << detail::fixed(col("long_r1_i2t")) << '\t' << detail::fixed(col("long_r1_t2i"))
              << '\t' << detail::fixed(col("short_r1_i2t")) << '\t' << detail::fixed(col("acc1")) << '\t'
              << static_cast<std::uint64_t>(col("flops")) << '\n';
        }
        out << "wrote " << (std::filesystem::path(sw_out) / "cells.csv").string() << " and aggregate.csv";
        if (failed) out << " (" << failed << " failed cells)";
        out << '\n';
      }
      return 0;
    }

    if (in->parsed()) {
      CheckpointInfo info;
      const TrainState s = deserialize_checkpoint(read_file_bytes(in_checkpoint), &info);
      const auto count = [](const ParameterSet& p) { return p.scalar_count(); };
      if (o.json) {
        out << nlohmann::ordered_json{{"version", info.version},
                                      {"step", s.opt.step},
                                      {"vocab_size", s.model.vocab.size()},
                                      {"text_params", count(s.model.text)},
                                      {"image_params", count(s.model.image)},
                                      {"tau", current_tau(s.model.objective)},
                                      {"config", config_to_json(s.config)}}
                   .dump()
            << '\n';
      } else {
        out << "checkpoint version " << info.version << ", step " << s.opt.step << "\nvocabulary " << s.model.vocab.size()
            << " tokens\ntext parameters " << count(s.model.text) << "\nimage parameters " << count(s.model.image)
            << "\ntau " << current_tau(s.model.objective) << "\n" << dump_config(s.config);
      }
      return 0;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

} // namespace lotlip::cli
