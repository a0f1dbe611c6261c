#include "effloc/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "effloc/checkpoint.hpp"
#include "effloc/config.hpp"
#include "effloc/dataset.hpp"
#include "effloc/errors.hpp"
#include "effloc/grad_check.hpp"
#include "effloc/loss.hpp"
#include "effloc/model.hpp"
#include "effloc/optimizer.hpp"
#include "effloc/profiler.hpp"
#include "effloc/scene.hpp"
#include "effloc/trainer.hpp"

namespace effloc {

namespace {

namespace fs = std::filesystem;

bool verbose_logging() {
  const char* v = std::getenv("EFFLOC_LOG");
  return v == nullptr || std::string(v) != "quiet";
}

/// Accepts a shipped config name or a path to a config text file.
ModelConfig resolve_config(const std::string& spec) {
  for (const auto& n : config_names()) {
    if (spec == n) return config_by_name(spec);
  }
  if (fs::exists(spec)) {
    std::ifstream f(spec);
    std::stringstream buf;
    buf << f.rdbuf();
    return ModelConfig::from_text(buf.str());
  }
  std::string names;
  for (const auto& n : config_names()) {
    if (!names.empty()) names += ", ";
    names += n;
  }
  throw UsageError("--config '" + spec +
                   "' is neither a shipped config (" + names +
                   ") nor an existing file");
}

/// Golden-angle layout generalizing the shipped scene to any landmark count.
SceneSpec build_scene(std::size_t landmarks, std::size_t resolution) {
  if (landmarks < 4) {
    throw UsageError("--landmarks must be at least 4 (pose observability)");
  }
  SceneSpec s = default_scene();
  if (landmarks == s.landmarks.size() && resolution == s.resolution) return s;
  const double scale = double(resolution) / double(s.resolution);
  s.resolution = resolution;
  s.focal *= scale;
  s.cx = double(resolution) / 2.0;
  s.cy = double(resolution) / 2.0;
  s.landmarks.clear();
  const std::array<std::array<double, 3>, 8> palette{{
      {0.95, 0.15, 0.15}, {0.15, 0.95, 0.15}, {0.20, 0.35, 0.95},
      {0.95, 0.85, 0.15}, {0.90, 0.25, 0.90}, {0.15, 0.90, 0.90},
      {0.95, 0.55, 0.15}, {0.90, 0.90, 0.90},
  }};
  for (std::size_t i = 0; i < landmarks; ++i) {
    const double a = 2.39996322972865332 * double(i);
    const double ring = 0.9 + 0.7 * double(i % 2);
    Landmark l;
    l.position = {ring * std::cos(a), ring * std::sin(a),
                  5.0 + 2.5 * double((i * 7) % 10) / 10.0};
    const auto& base = palette[i % palette.size()];
    const double shade = 0.75 + 0.25 * double((i / palette.size()) % 2);
    l.color = {base[0] * shade, base[1] * shade, base[2] * shade};
    l.radius = 0.28 + 0.06 * double(i % 4);
    s.landmarks.push_back(l);
  }
  s.validate();
  return s;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

int cmd_synth_gen(const std::string& out_dir, std::size_t count,
                  std::uint64_t seed, std::size_t resolution,
                  std::size_t landmarks, bool force, std::ostream& out) {
  if (count == 0) throw UsageError("--count must be at least 1");
  const fs::path root(out_dir);
  if (fs::exists(root) && !fs::is_empty(root) && !force) {
    throw UsageError("output directory " + root.string() +
                     " exists and is not empty (use --force to overwrite)");
  }
  if (verbose_logging()) {
    out << "resolved configuration: synth-gen --out " << out_dir
        << " --count " << count << " --seed " << seed << " --resolution "
        << resolution << " --landmarks " << landmarks
        << (force ? " --force" : "") << "\n";
  }
  const SceneSpec scene = build_scene(landmarks, resolution);
  generate_dataset(scene, count, seed, root);
  std::size_t train = 0, val = 0, test = 0;
  for (std::size_t i = 0; i < count; ++i) {
    switch (split_of_index(i)) {
      case Split::Train: ++train; break;
      case Split::Val: ++val; break;
      case Split::Test: ++test; break;
    }
  }
  out << "wrote " << count << " samples to " << root.string() << " ("
      << scene.landmarks.size() << " landmarks, " << resolution << "x"
      << resolution << ", extent " << fmt_double(scene.extent())
      << ")\n";
  out << "split: " << train << " train / " << val << " val / " << test
      << " test\n";
  return 0;
}

void write_eval_csv(const fs::path& path, const EvalResult& result) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << "id,position_error,rotation_error_deg\n";
  char buf[128];
  for (const auto& r : result.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g\n", r.id.c_str(),
                  r.position_error, r.rotation_error_deg);
    f << buf;
  }
}

void print_stats(std::ostream& out, const TrajectoryStats& st) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "median position error:  %.17g\n"
                "mean position error:    %.17g\n"
                "median rotation error:  %.17g deg\n"
                "mean rotation error:    %.17g deg\n",
                st.median_position, st.mean_position, st.median_rotation_deg,
                st.mean_rotation_deg);
  out << buf;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"EffLoc: lightweight-transformer camera relocalization"};
  app.require_subcommand(1);

  // --- synth-gen
  auto* gen = app.add_subcommand(
      "synth-gen", "Generate a synthetic pinhole pose dataset");
  std::string gen_out;
  std::size_t gen_count = 2000, gen_resolution = 72, gen_landmarks = 16;
  std::uint64_t gen_seed = 1;
  bool gen_force = false;
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--count", gen_count, "Number of samples (default 2000)");
  gen->add_option("--seed", gen_seed, "Generation seed (default 1)");
  gen->add_option("--resolution", gen_resolution,
                  "Rendered image size in pixels (default 72; training "
                  "crops to the model resolution)");
  gen->add_option("--landmarks", gen_landmarks,
                  "Number of scene landmarks (default 16, minimum 4)");
  gen->add_flag("--force", gen_force, "Overwrite an existing non-empty dir");

  // --- train
  auto* tr = app.add_subcommand("train", "Train a model on a dataset");
  std::string tr_data, tr_config = "tiny", tr_out = "train_out", tr_resume;
  TrainConfig tr_cfg;
  tr->add_option("--data", tr_data, "Dataset directory (from synth-gen)")
      ->required();
  tr->add_option("--config", tr_config,
                 "Model config: shipped name or config file (default tiny)");
  tr->add_option("--epochs", tr_cfg.epochs, "Total epochs (default 30)");
  tr->add_option("--lr", tr_cfg.lr0, "Initial learning rate (default 1e-3)");
  tr->add_option("--batch", tr_cfg.batch_size, "Mini-batch size (default 32)");
  tr->add_option("--weight-decay", tr_cfg.weight_decay,
                 "Decoupled weight decay (default 3.5e-2)");
  tr->add_option("--seed", tr_cfg.seed, "Training seed (default 42)");
  tr->add_option("--clip-norm", tr_cfg.clip_norm,
                 "Global gradient-norm clip, 0 disables (default 0)");
  tr->add_option("--checkpoint-interval", tr_cfg.checkpoint_interval,
                 "Checkpoint every N epochs (default 5)");
  std::vector<double> tr_jitter{0.2, 0.2, 0.2, 0.05};
  tr->add_option("--jitter", tr_jitter,
                 "Color jitter strengths: brightness contrast saturation hue "
                 "(desk default 0.2 0.2 0.2 0.05; the full-scale recipe is "
                 "0.7 0.7 0.7 0.5)")
      ->expected(4);
  tr->add_option("--out", tr_out, "Run directory (default train_out)");
  tr->add_option("--resume", tr_resume, "Checkpoint to continue from");

  // --- eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ev_data, ev_ckpt, ev_csv = "eval_samples.csv",
                       ev_split = "val";
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--csv", ev_csv,
                 "Per-sample CSV output path (default eval_samples.csv)");
  ev->add_option("--split", ev_split,
                 "Dataset split: train|val|test|all (default val)");

  // --- profile
  auto* pr = app.add_subcommand(
      "profile", "Analytic parameter/MAC/FLOP report for a config");
  std::string pr_config = "effloc", pr_csv;
  std::size_t pr_resolution = 0;
  bool pr_no_regressor = false;
  pr->add_option("--config", pr_config,
                 "Model config: shipped name or file (default effloc)");
  pr->add_option("--resolution", pr_resolution,
                 "Input resolution (default: the config's)");
  pr->add_option("--csv", pr_csv, "Also write the report as CSV here");
  pr->add_flag("--no-regressor", pr_no_regressor,
               "Exclude the pose-regressor head from the report");

  // --- grad-check
  auto* gc = app.add_subcommand(
      "grad-check", "Finite-difference check of every model gradient");
  std::string gc_config = "tiny";
  double gc_tolerance = 1e-4;
  std::uint64_t gc_seed = 42;
  gc->add_option("--config", gc_config,
                 "Model config: shipped name or file (default tiny)");
  gc->add_option("--tolerance", gc_tolerance,
                 "Maximum relative error (default 1e-4)");
  gc->add_option("--seed", gc_seed, "Probe seed (default 42)");

  try {
    app.parse(argc, argv);

    if (gen->parsed()) {
      return cmd_synth_gen(gen_out, gen_count, gen_seed, gen_resolution,
                           gen_landmarks, gen_force, out);
    }

    if (tr->parsed()) {
      tr_cfg.jitter = {tr_jitter[0], tr_jitter[1], tr_jitter[2], tr_jitter[3]};
      tr_cfg.validate();
      const LoadedDataset data = load_dataset(tr_data);

      ModelConfig cfg;
      std::size_t start_epoch = 0;
      Checkpoint ck;
      if (!tr_resume.empty()) {
        ck = load_checkpoint(tr_resume);
        cfg = ck.config;
        start_epoch = ck.epoch;
      } else {
        cfg = resolve_config(tr_config);
      }
      if (data.scene.resolution < cfg.input_resolution) {
        throw DataError("dataset images (" +
                        std::to_string(data.scene.resolution) +
                        "px) are smaller than the model input (" +
                        std::to_string(cfg.input_resolution) + "px)");
      }
      if (verbose_logging()) {
        out << "resolved configuration: train --data " << tr_data
            << " --config " << cfg.name << " --epochs " << tr_cfg.epochs
            << " --batch " << tr_cfg.batch_size << " --lr "
            << fmt_double(tr_cfg.lr0) << " --weight-decay "
            << fmt_double(tr_cfg.weight_decay) << " --seed " << tr_cfg.seed
            << " --jitter " << fmt_double(tr_cfg.jitter.brightness) << " "
            << fmt_double(tr_cfg.jitter.contrast) << " "
            << fmt_double(tr_cfg.jitter.saturation) << " "
            << fmt_double(tr_cfg.jitter.hue) << " --out " << tr_out
            << (tr_resume.empty() ? ""
                                  : (" --resume " + tr_resume +
                                     " (continuing at epoch " +
                                     std::to_string(start_epoch + 1) + ")"))
            << "\n" << cfg.to_text();
      }

      EffLocModel model(cfg, tr_cfg.seed);
      LossState loss_state = LossState::init();
      AdamW optimizer;
      for (const auto& [name, t] : model.store().params()) {
        optimizer.add_parameter(name, t, /*decay=*/true);
      }
      optimizer.add_parameter("loss/alpha", loss_state.alpha, false);
      optimizer.add_parameter("loss/beta", loss_state.beta, false);
      if (!tr_resume.empty()) {
        restore_state(ck, model, &loss_state, &optimizer);
      }

      const TrainResult result =
          train(model, loss_state, optimizer, data, tr_cfg, tr_out,
                start_epoch);
      const EpochLog& last = result.logs.back();
      out << "finished epoch " << last.epoch << ": train_loss "
          << fmt_double(last.train_loss) << ", val median "
          << fmt_double(last.val.median_position) << " / "
          << fmt_double(last.val.median_rotation_deg) << " deg\n";
      out << "final checkpoint: " << result.final_checkpoint.string() << "\n";
      return 0;
    }

    if (ev->parsed()) {
      const Checkpoint ck = load_checkpoint(ev_ckpt);
      const LoadedDataset data = load_dataset(ev_data);
      if (data.scene.resolution < ck.config.input_resolution) {
        throw DataError("dataset images (" +
                        std::to_string(data.scene.resolution) +
                        "px) are smaller than the checkpoint's input (" +
                        std::to_string(ck.config.input_resolution) + "px)");
      }
      if (verbose_logging()) {
        out << "resolved configuration: eval --data " << ev_data
            << " --checkpoint " << ev_ckpt << " --split " << ev_split
            << " --csv " << ev_csv << "\n";
      }
      EffLocModel model(ck.config, 0);
      restore_state(ck, model, nullptr, nullptr);

      std::vector<PoseSample> samples;
      if (ev_split == "all") {
        samples = data.samples;
      } else {
        Split want;
        if (ev_split == "train") want = Split::Train;
        else if (ev_split == "val") want = Split::Val;
        else if (ev_split == "test") want = Split::Test;
        else throw UsageError("--split must be train, val, test or all");
        for (std::size_t i : split_indices(data.samples.size(), want)) {
          samples.push_back(data.samples[i]);
        }
      }
      if (samples.empty()) throw DataError("selected split is empty");
      const EvalResult result = evaluate(model, samples);
      write_eval_csv(ev_csv, result);
      out << "evaluated " << samples.size() << " samples (" << ev_split
          << " split)\n";
      print_stats(out, result.stats);
      out << "per-sample errors: " << ev_csv << "\n";
      return 0;
    }

    if (pr->parsed()) {
      const ModelConfig cfg = resolve_config(pr_config);
      const std::size_t res =
          pr_resolution == 0 ? cfg.input_resolution : pr_resolution;
      if (verbose_logging()) {
        out << "resolved configuration: profile --config " << cfg.name
            << " --resolution " << res
            << (pr_no_regressor ? " --no-regressor" : "") << "\n";
      }
      const ProfileReport rep = profile(cfg, res, !pr_no_regressor);
      out << rep.to_table();
      if (!pr_csv.empty()) {
        std::ofstream f(pr_csv, std::ios::binary);
        if (!f) throw DataError("cannot write " + pr_csv);
        f << rep.to_csv();
        out << "csv report: " << pr_csv << "\n";
      }
      return 0;
    }

    if (gc->parsed()) {
      const ModelConfig cfg = resolve_config(gc_config);
      ModelGradCheckOptions opts;
      opts.seed = gc_seed;
      opts.tolerance = gc_tolerance;
      if (verbose_logging()) {
        out << "resolved configuration: grad-check --config " << cfg.name
            << " --tolerance " << fmt_double(gc_tolerance) << " --seed "
            << gc_seed << "\n";
      }
      const GradCheckReport report = model_grad_check(cfg, opts);
      out << "checked " << report.checked
          << " parameter elements, max relative error "
          << fmt_double(report.max_rel_err) << "\n";
      if (!report.ok()) {
        err << report.failures.size() << " gradient(s) above tolerance "
            << fmt_double(gc_tolerance) << ":\n";
        for (std::size_t i = 0; i < report.failures.size() && i < 20; ++i) {
          const auto& f = report.failures[i];
          err << "  " << f.name << "[" << f.index << "]: analytic "
              << f.analytic << " vs numeric " << f.numeric << " (rel "
              << f.rel_err << ")\n";
        }
        return 3;
      }
      out << "gradient check passed\n";
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::ostringstream help;
      const int code = app.exit(e, help, help);
      out << help.str();
      return code;
    }
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const TrainingError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace effloc
