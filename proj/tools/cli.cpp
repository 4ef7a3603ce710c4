#include "cli.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "objcomp/annotation/server.hpp"
#include "objcomp/datagen/dataset_io.hpp"
#include "objcomp/errors.hpp"
#include "objcomp/pipeline/config.hpp"
#include "objcomp/pipeline/evaluate.hpp"
#include "objcomp/pipeline/lock_file.hpp"
#include "objcomp/pipeline/stages.hpp"

namespace objcomp::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using pipeline::RunConfig;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c, bool global_seed = true) {
  app->add_option("-c,--config", c.config_path, "JSON run configuration");
  app->add_option("--set", c.sets, "Override a config key, e.g. --set stages.stage3.steps=100");
  app->add_option("-o,--output-dir", c.output_dir, "Run directory (output_dir)");
  if (global_seed) app->add_option("--seed", c.seed, "Global seed (seed)");
}

RunConfig resolve(const Common& c, std::vector<std::string> extra) {
  json doc = c.config_path.empty() ? RunConfig::desk().to_json() : [&] {
    std::ifstream in(c.config_path);
    if (!in) throw ConfigError("cannot open config " + c.config_path);
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config " + c.config_path + ": " + e.what());
    }
  }();
  std::vector<std::string> sets = c.sets;
  if (c.output_dir) sets.push_back("output_dir=" + json(*c.output_dir).dump());
  if (c.seed) sets.push_back("seed=" + std::to_string(*c.seed));
  for (auto& e : extra) sets.push_back(std::move(e));
  return RunConfig::from_json(pipeline::apply_overrides(std::move(doc), sets));
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

adaptor::ProgressFn progress_printer(int stage, long total) {
  const long every = std::max(1L, total / 20);
  return [=](long step, double loss) {
    if (step % every == 0 || step == total) {
      std::fprintf(stderr, "stage %d  step %ld/%ld  loss %.6f\n", stage, step, total, loss);
    }
  };
}

annotation::AnnotationServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Self-supervised object compositing: data generation, training, sampling and evaluation"};
  app.require_subcommand(1);

  Common common;

  auto* cfg = app.add_subcommand("config", "Print the effective configuration");
  add_common(cfg, common);

  auto* datagen = app.add_subcommand("datagen", "Write a synthetic triplet dataset");
  add_common(datagen, common);
  std::string dg_out;
  std::optional<int> dg_count;
  std::optional<double> dg_rotation;
  datagen->add_option("--out", dg_out, "Dataset directory")->required();
  datagen->add_option("--count", dg_count, "Number of triplets (dataset.count)");
  datagen->add_option("--rotation", dg_rotation, "Max rotation in degrees (dataset.perturbation.rotation_max_deg)");

  auto* train = app.add_subcommand("train", "Run one training stage");
  add_common(train, common);
  int stage = -1;
  train->add_option("--stage", stage, "0 = base generator, 1-2 = adaptor, 3 = generator fine-tuning")
      ->required()
      ->check(CLI::Range(0, 3));

  auto* composite = app.add_subcommand("composite", "Composite an object into a background");
  add_common(composite, common, false);
  std::string c_bg, c_obj, c_bbox, c_out = "composite.png";
  std::optional<int> c_steps;
  std::uint64_t c_seed = 0;
  composite->add_option("--background", c_bg, "Background PNG")->required();
  composite->add_option("--object", c_obj, "Object PNG (RGBA or RGB)")->required();
  composite->add_option("--bbox", c_bbox, "Hole as x,y,w,h in background pixels")->required();
  composite->add_option("--steps", c_steps, "Sampling steps (diffusion.sample_steps)");
  composite->add_option("--seed", c_seed, "Sampling seed");
  composite->add_option("--out", c_out, "Output PNG; a .json sidecar is written next to it");

  auto* evaluate = app.add_subcommand("evaluate", "Score the trained model on a held-out set");
  add_common(evaluate, common);
  std::string e_out;
  evaluate->add_option("--out", e_out, "Report path (default <output_dir>/reports/evaluate.json)");

  auto* stress = app.add_subcommand("stress-eval", "Evaluate under the strong-rotation protocol");
  add_common(stress, common);
  std::string s_out;
  bool s_baseline = false;
  stress->add_option("--out", s_out, "Report path (default <output_dir>/reports/stress_eval.json)");
  stress->add_flag("--baseline", s_baseline, "Also score an untrained model on the same set");

  auto* serve = app.add_subcommand("serve", "Run the annotation HTTP service");
  add_common(serve, common);
  int port = 8080;
  std::string host = "127.0.0.1", assets, store;
  serve->add_option("--port", port, "TCP port");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--assets", assets, "Directory with objects/ and backgrounds/")->required();
  serve->add_option("--store", store, "Annotation JSONL file (default <assets>/annotations.jsonl)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*cfg) {
      std::cout << resolve(common, {}).to_json().dump(2) << "\n";
    } else if (*datagen) {
      std::vector<std::string> extra;
      if (dg_count) extra.push_back("dataset.count=" + std::to_string(*dg_count));
      if (dg_rotation) extra.push_back("dataset.perturbation.rotation_max_deg=" + json(*dg_rotation).dump());
      const auto config = resolve(common, extra);
      pipeline::LockFile lock(dg_out);
      const auto triplets = datagen::generate_triplets(config.dataset);
      datagen::write_dataset(triplets, dg_out);
      std::fprintf(stderr, "wrote %zu triplets to %s\n", triplets.size(), dg_out.c_str());
    } else if (*train) {
      const auto config = resolve(common, {});
      pipeline::LockFile lock(config.output_dir);
      const auto out =
          pipeline::run_stage(stage, config, progress_printer(stage, config.stage(stage).steps));
      std::cout << out.checkpoint_id << "\n";
    } else if (*composite) {
      std::vector<std::string> extra;
      if (c_steps) extra.push_back("diffusion.sample_steps=" + std::to_string(*c_steps));
      const auto config = resolve(common, extra);
      const BBox bbox = annotation::parse_bbox(c_bbox);
      generator::CompositeRequest req;
      req.background = to_rgb(read_png(c_bg));
      req.object = read_png(c_obj);
      annotation::validate_bbox(bbox, req.background.width, req.background.height);
      req.mask = hole_mask(req.background.width, req.background.height, bbox);
      req.steps = config.diffusion.sample_steps;
      req.seed = c_seed;
      const auto models = pipeline::load_trained_models(config);
      const Image result = generator::sample_composite(req, models.adaptor, models.visual, models.unet,
                                                       pipeline::make_schedule(config));
      const fs::path out_path(c_out);
      if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
      write_png(out_path, result);
      fs::path sidecar = out_path;
      sidecar.replace_extension(".json");
      write_json(sidecar, {{"background", c_bg},
                           {"object", c_obj},
                           {"bbox", annotation::bbox_json(bbox)},
                           {"steps", req.steps},
                           {"seed", req.seed},
                           {"checkpoint_ids", models.checkpoint_ids}});
      std::cout << out_path.string() << "\n";
    } else if (*evaluate) {
      const auto config = resolve(common, {});
      pipeline::LockFile lock(config.output_dir);
      const auto report = pipeline::evaluate(config);
      const fs::path path = e_out.empty() ? config.output_dir / "reports" / "evaluate.json" : fs::path(e_out);
      write_json(path, report);
      std::cout << report.at("metrics").dump(2) << "\n";
    } else if (*stress) {
      const auto config = resolve(common, {});
      pipeline::LockFile lock(config.output_dir);
      const auto report = pipeline::stress_eval(config, s_baseline);
      const fs::path path = s_out.empty() ? config.output_dir / "reports" / "stress_eval.json" : fs::path(s_out);
      write_json(path, report);
      std::cout << report.at("metrics").dump(2) << "\n";
    } else if (*serve) {
      const auto config = resolve(common, {});
      annotation::ServerOptions options;
      options.asset_dir = assets;
      options.store_path = store.empty() ? fs::path(assets) / "annotations.jsonl" : fs::path(store);
      options.export_steps = config.diffusion.sample_steps;
      options.export_seed = config.seed;
      options.warn = [](const std::string& m) { std::fprintf(stderr, "warning: %s\n", m.c_str()); };
      annotation::AnnotationServer server(options);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::fprintf(stderr, "serving %s on http://%s:%d\n", assets.c_str(), host.c_str(), port);
      const bool ok = server.listen(host, port);
      g_server = nullptr;
      if (!ok) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const annotation::ValidationError& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return kExitConfig;
  } catch (const OrderingError& e) {
    std::fprintf(stderr, "ordering error: %s\n", e.what());
    return kExitOrdering;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace objcomp::cli
