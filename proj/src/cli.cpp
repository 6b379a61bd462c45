#include "talforge/cli.hpp"

#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"

#include "talforge/binary.hpp"
#include "talforge/checkpoint.hpp"
#include "talforge/config.hpp"
#include "talforge/io.hpp"
#include "talforge/optim.hpp"
#include "talforge/pipeline.hpp"
#include "talforge/postprocess.hpp"
#include "talforge/synthetic.hpp"

namespace talforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::pair<std::string, std::string>> kCommands = {
    {"gen-synthetic", "write a synthetic dataset (annotations, class scores, features)"},
    {"train", "train the proposal network and/or the cascade refiner"},
    {"infer", "generate coarse proposals for one subset"},
    {"refine", "run the cascade refiner over a proposal file"},
    {"postproc", "soft-NMS and class assignment, writes detections"},
    {"ensemble", "fuse several proposal files"},
    {"eval", "mAP of a detection file against the annotations"},
    {"report", "comparison table from metric files"},
};

struct PublishedRow {
  const char* method;
  const char* validation;
  const char* testing;
};

// Published ActivityNet-1.3 numbers, shown as text only.
constexpr PublishedRow kPublished[] = {
    {"BSN (baseline)", "30.03", "32.84"}, {"BSN", "32.8", "-"},        {"BMN (baseline)", "33.85", "36.42"},
    {"BMN", "36.5", "-"},                 {"CBR-Net", "38.0", "-"}, {"Ensemble", "40.1", "42.788"},
};

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string data;
  std::string work;
};

PipelineConfig resolve_config(const CommonOptions& opts) {
  PipelineConfig cfg = opts.config.empty() ? PipelineConfig::toy() : load_config(opts.config);
  apply_overrides(cfg, opts.overrides);
  return cfg;
}

fs::path pick_dir(const std::string& flag, const std::string& configured, const std::string& what) {
  const std::string dir = flag.empty() ? configured : flag;
  if (dir.empty()) throw std::invalid_argument("no " + what + " directory: pass --" + what + " or set paths." + what + "_dir");
  return dir;
}

fs::path or_default(const std::string& flag, const fs::path& fallback) { return flag.empty() ? fallback : fs::path(flag); }

void add_common(CLI::App* cmd, CommonOptions& opts, bool dirs) {
  cmd->add_option("--config", opts.config, "pipeline config JSON (defaults to the toy setup)");
  cmd->add_option("--set", opts.overrides, "override a config value, e.g. --set train.epochs=5")->take_all();
  if (dirs) {
    cmd->add_option("--data", opts.data, "dataset directory (overrides paths.data_dir)");
    cmd->add_option("--work", opts.work, "working directory for checkpoints and outputs (overrides paths.work_dir)");
  }
}

void load_weights(TrainedModels& models, const fs::path& work, bool with_cascade) {
  const auto pnet = work / "proposal.talw";
  if (!fs::exists(pnet)) throw std::invalid_argument("missing checkpoint " + pnet.string() + " (run train first)");
  restore(models.net.parameters(), load_checkpoint(pnet));
  if (with_cascade) {
    const auto casc = work / "cascade.talw";
    if (!fs::exists(casc)) throw std::invalid_argument("missing checkpoint " + casc.string() + " (run train first)");
    restore(models.cascade.parameters(), load_checkpoint(casc));
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string render_report(const std::vector<std::pair<std::string, json>>& rows) {
  std::ostringstream os;
  os << "| Method | mAP@0.50 | mAP@0.75 | mAP@0.95 | average mAP |\n";
  os << "|---|---|---|---|---|\n";
  for (const auto& [label, doc] : rows) {
    const auto& per = doc.at("per_threshold");
    auto cell = [&](const char* key) { return per.contains(key) ? fixed(100.0 * per.at(key).get<double>(), 2) : "-"; };
    os << "| " << label << " | " << cell("0.50") << " | " << cell("0.75") << " | " << cell("0.95") << " | "
       << fixed(100.0 * doc.at("average_mAP").get<double>(), 2) << " |\n";
  }
  os << "\nPublished ActivityNet-1.3 results (mAP %, for reference only):\n\n";
  os << "| Method | Validation | Testing |\n|---|---|---|\n";
  for (const auto& r : kPublished) os << "| " << r.method << " | " << r.validation << " | " << r.testing << " |\n";
  os << "\nThe published numbers are NOT reproduced here. They depend on Kinetics-pretrained\n"
        "backbone features and training on the full ActivityNet-1.3 corpus. The rows above\n"
        "the reference table come from this repository's metric files.\n";
  return os.str();
}

}  // namespace

std::string cli_usage() {
  std::ostringstream os;
  os << "usage: talforge <command> [options]\n\ncommands:\n";
  for (const auto& [name, help] : kCommands) {
    os << "  " << name;
    for (std::size_t i = name.size(); i < 15; ++i) os << ' ';
    os << help << "\n";
  }
  os << "\nevery command accepts --config <file> and --set key=value; run talforge <command> --help for details\n";
  return os.str();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    (args.empty() ? err : out) << cli_usage();
    return args.empty() ? 2 : 0;
  }
  bool known = false;
  for (const auto& [name, help] : kCommands) known = known || name == args[0];
  if (!known) {
    err << "error: unknown command '" << args[0] << "'\n\n" << cli_usage();
    return 2;
  }

  CLI::App app{"temporal action localization pipeline", "talforge"};
  app.require_subcommand(1, 1);
  CommonOptions common;

  std::string out_path, in_path, subset = "validation", stage = "all", dump_dir, pr_dir;
  std::vector<std::string> inputs, metric_specs;
  std::vector<double> weights;
  bool skip_nms = false;

  auto* gen = app.add_subcommand("gen-synthetic", kCommands[0].second);
  add_common(gen, common, false);
  gen->add_option("--out", out_path, "output directory (defaults to paths.data_dir)");

  auto* train = app.add_subcommand("train", kCommands[1].second);
  add_common(train, common, true);
  train->add_option("--stage", stage, "proposal, cascade or all")
      ->check(CLI::IsMember({"proposal", "cascade", "all"}));

  auto* infer = app.add_subcommand("infer", kCommands[2].second);
  add_common(infer, common, true);
  infer->add_option("--subset", subset, "annotation subset to process (empty = all)");
  infer->add_option("--out", out_path, "proposal file (default <work>/proposals.json)");
  infer->add_option("--dump-dir", dump_dir, "write per-video boundary probabilities and confidence maps here");

  auto* refine = app.add_subcommand("refine", kCommands[3].second);
  add_common(refine, common, true);
  refine->add_option("--in", in_path, "proposal file (default <work>/proposals.json)");
  refine->add_option("--out", out_path, "refined proposal file (default <work>/proposals_refined.json)");

  auto* post = app.add_subcommand("postproc", kCommands[4].second);
  add_common(post, common, true);
  post->add_option("--in", in_path, "proposal file (default <work>/proposals_refined.json)");
  post->add_option("--out", out_path, "detection file (default <work>/results.json)");
  post->add_flag("--skip-nms", skip_nms, "input is already suppressed (ensemble output); assign classes only");

  auto* ens = app.add_subcommand("ensemble", kCommands[5].second);
  add_common(ens, common, false);
  ens->add_option("--in", inputs, "proposal files to fuse")->required()->take_all();
  ens->add_option("--weights", weights, "one positive weight per input (default postprocess.ensemble_weights)")
      ->take_all();
  ens->add_option("--out", out_path, "fused proposal file")->required();

  auto* eval = app.add_subcommand("eval", kCommands[6].second);
  add_common(eval, common, true);
  eval->add_option("--results", in_path, "detection file (default <work>/results.json)");
  eval->add_option("--subset", subset, "annotation subset to score (empty = all)");
  eval->add_option("--out", out_path, "metric file (default <work>/metrics.json)");
  eval->add_option("--pr-dir", pr_dir, "write precision-recall CSVs here");

  auto* report = app.add_subcommand("report", kCommands[7].second);
  add_common(report, common, false);
  report->add_option("--metrics", metric_specs, "label=path pairs of metric files")->take_all();
  report->add_option("--out", out_path, "also write the table to this file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.get_subcommands().front()->help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    auto subs = app.get_subcommands();
    err << (subs.empty() ? cli_usage() : subs.front()->help());
    return 2;
  }

  try {
    const PipelineConfig cfg = resolve_config(common);

    if (gen->parsed()) {
      const fs::path dir = or_default(out_path, cfg.paths.data_dir);
      if (dir.empty()) throw std::invalid_argument("no output directory: pass --out or set paths.data_dir");
      const auto data = gen_synthetic(cfg.synthetic);
      write_dataset(dir, data);
      out << "wrote " << data.annotations.videos.size() << " videos to " << dir.string() << "\n";
      return 0;
    }

    if (ens->parsed()) {
      std::vector<double> w = weights.empty() ? cfg.postprocess.ensemble_weights : weights;
      if (w.empty()) w.assign(inputs.size(), 1.0);
      if (w.size() != inputs.size()) {
        throw std::invalid_argument("ensemble: " + std::to_string(w.size()) + " weights for " +
                                    std::to_string(inputs.size()) + " inputs");
      }
      std::vector<WeightedResults> sets;
      for (std::size_t i = 0; i < inputs.size(); ++i) sets.push_back({w[i], load_proposals(inputs[i])});
      write_proposals(ensemble(sets, cfg.postprocess.nms), out_path);
      out << "fused " << inputs.size() << " proposal files into " << out_path << "\n";
      return 0;
    }

    if (report->parsed()) {
      if (metric_specs.empty()) throw std::invalid_argument("report: pass at least one --metrics label=path");
      std::vector<std::pair<std::string, json>> rows;
      for (const auto& spec : metric_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) {
          throw std::invalid_argument("report: --metrics expects label=path, got \"" + spec + "\"");
        }
        rows.emplace_back(spec.substr(0, eq), read_json(spec.substr(eq + 1)));
      }
      const std::string table = render_report(rows);
      out << table;
      if (!out_path.empty()) binary::write_text(out_path, table);
      return 0;
    }

    if (eval->parsed()) {
      const fs::path data_dir = pick_dir(common.data, cfg.paths.data_dir, "data");
      const fs::path work = (in_path.empty() || out_path.empty()) ? pick_dir(common.work, cfg.paths.work_dir, "work") : "";
      const auto annotations = subset_annotations(load_annotations(data_dir / "annotations.json"), subset);
      const auto detections = load_results(or_default(in_path, work / "results.json"));
      const auto result = mean_map(detections, annotations, cfg.eval);
      write_json(or_default(out_path, work / "metrics.json"), metrics_to_json(result));
      if (!pr_dir.empty()) write_pr_curves(result, pr_dir);
      for (const auto& [thr, value] : result.per_threshold) {
        out << "mAP@" << threshold_key(thr) << " " << fixed(value, 6) << "\n";
      }
      out << "average_mAP " << fixed(result.average_map, 6) << "\n";
      return 0;
    }

    if (post->parsed()) {
      const fs::path data_dir = pick_dir(common.data, cfg.paths.data_dir, "data");
      const fs::path work = (in_path.empty() || out_path.empty()) ? pick_dir(common.work, cfg.paths.work_dir, "work") : "";
      const auto classes = load_class_scores(data_dir / "class_scores.json");
      const auto proposals = load_proposals(or_default(in_path, work / "proposals_refined.json"));
      const auto detections = skip_nms ? classify(proposals, classes, cfg.postprocess.top_k)
                                       : postprocess(proposals, classes, cfg.postprocess);
      const auto path = or_default(out_path, work / "results.json");
      write_results(detections, path);
      out << "wrote " << detections.size() << " detections to " << path.string() << "\n";
      return 0;
    }

    const fs::path data_dir = pick_dir(common.data, cfg.paths.data_dir, "data");
    const fs::path work = pick_dir(common.work, cfg.paths.work_dir, "work");
    const Dataset data = load_dataset(data_dir);
    TrainedModels models = init_models(cfg);

    if (train->parsed()) {
      json log;
      if (stage == "proposal" || stage == "all") {
        const auto l = train_proposal_stage(models, data, cfg);
        save_checkpoint(work / "proposal.talw", models.net.parameters());
        log["proposal_epoch_loss"] = l.epoch_loss;
        out << "proposal net: " << l.epoch_loss.size() << " epochs, final loss "
            << (l.epoch_loss.empty() ? 0.0 : l.epoch_loss.back()) << "\n";
      } else {
        load_weights(models, work, false);
      }
      if (stage == "cascade" || stage == "all") {
        const auto l = train_cascade_stage(models, data, cfg);
        save_checkpoint(work / "cascade.talw", models.cascade.parameters());
        log["cascade_stage_loss"] = l.stage_loss;
        out << "cascade: " << l.stage_loss.size() << " stages trained\n";
      }
      write_json(work / ("train_log_" + stage + ".json"), log);
      return 0;
    }

    if (infer->parsed()) {
      load_weights(models, work, false);
      const auto ids = data.annotations.video_ids(subset);
      if (!dump_dir.empty()) {
        for (const auto& id : ids) {
          const auto inf = infer_video(models.net, data.features.at(id), cfg.cascade.max_proposals);
          write_json(fs::path(dump_dir) / (id + ".json"), video_dump_json(inf.probs, inf.map));
        }
      }
      const auto proposals = infer_proposals(models.net, data, subset, cfg.cascade.max_proposals);
      const auto path = or_default(out_path, work / "proposals.json");
      write_proposals(proposals, path);
      out << "wrote proposals for " << proposals.size() << " videos to " << path.string() << "\n";
      return 0;
    }

    if (refine->parsed()) {
      load_weights(models, work, true);
      const auto refined = refine_proposals(models, data, load_proposals(or_default(in_path, work / "proposals.json")));
      const auto path = or_default(out_path, work / "proposals_refined.json");
      write_proposals(refined, path);
      out << "wrote refined proposals for " << refined.size() << " videos to " << path.string() << "\n";
      return 0;
    }

  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << cli_usage();
  return 2;
}

}  // namespace talforge
