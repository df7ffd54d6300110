// Command-line surface for the synthetic two-stage detection pipeline:
//   gen          generate a seeded synthetic scene + feature blobs
//   init-params  create a seeded parameter registry
//   run          run the pipeline (proposals-only or full two-stage)
//   eval         score detections against scene ground truth
//   bench        per-stage wall-time statistics
//
// Exit codes: 0 ok, 2 invalid config, 3 missing/unreadable files,
// 4 dimension mismatches.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "lssinst/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lssinst;

namespace {

int verbosity() {
  const char* env = std::getenv("LSSINST_LOG");
  if (!env) return 0;
  return std::string(env) == "debug" ? 1 : 0;
}

RunConfig config_from_path(const std::string& path) {
  if (path.empty()) {
    RunConfig cfg;
    cfg.validate();
    return cfg;
  }
  return load_config(path);
}

std::string feature_path(const fs::path& dir, int t, int v) {
  return (dir / ("t" + std::to_string(t) + "_v" + std::to_string(v) + ".fgrd")).string();
}

std::vector<std::vector<FeatureGrid>> load_features(const fs::path& scene_path,
                                                    const SyntheticScene& scene) {
  const fs::path dir = scene_path.parent_path() / "features";
  std::vector<std::vector<FeatureGrid>> out;
  for (int t = 0; t < scene.num_frames(); ++t) {
    std::vector<FeatureGrid> views;
    for (std::size_t v = 0; v < scene.rig.size(); ++v)
      views.push_back(load_fgrd(feature_path(dir, t, static_cast<int>(v))));
    out.push_back(std::move(views));
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open for writing: " + path);
  os << text;
}

int cmd_gen(const std::string& config_path, std::uint64_t seed_override, bool has_seed,
            const std::string& out_dir) {
  RunConfig cfg = config_from_path(config_path);
  const std::uint64_t seed = has_seed ? seed_override : cfg.scene_seed;
  SyntheticScene scene = generate_scene(cfg, seed);
  fs::create_directories(fs::path(out_dir) / "features");
  save_scene((fs::path(out_dir) / "scene.json").string(), scene);
  for (int t = 0; t < scene.num_frames(); ++t) {
    const auto views = render_features(scene, t);
    for (std::size_t v = 0; v < views.size(); ++v)
      save_fgrd(feature_path(fs::path(out_dir) / "features", t, static_cast<int>(v)),
                views[v]);
  }
  if (verbosity() > 0)
    std::cerr << "gen: wrote " << scene.num_frames() << " frames x " << scene.rig.size()
              << " views to " << out_dir << "\n";
  return 0;
}

int cmd_init_params(const std::string& config_path, std::uint64_t seed_override,
                    bool has_seed, const std::string& out_path) {
  RunConfig cfg = config_from_path(config_path);
  const std::uint64_t seed = has_seed ? seed_override : cfg.param_seed;
  ParamRegistry reg = build_registry(cfg);
  init_params(reg, cfg, seed);
  reg.save(out_path);
  return 0;
}

int cmd_run(const std::string& scene_path, const std::string& params_path,
            const std::string& config_path, const std::string& out_path,
            const std::string& stage_name) {
  RunConfig cfg = config_from_path(config_path);
  SyntheticScene scene = load_scene(scene_path);
  if (cfg.extrinsics_jitter > 0.0)
    jitter_extrinsics(scene, cfg.extrinsics_jitter, cfg.scene_seed);
  const ParamRegistry reg = ParamRegistry::load(params_path);
  const auto features = load_features(scene_path, scene);
  const Stage stage = stage_name == "proposals" ? Stage::Proposals : Stage::Full;

  const PipelineResult result = run_pipeline(scene, features, reg, cfg, stage);
  nlohmann::ordered_json meta;
  meta["stage"] = stage_name;
  meta["scene_seed"] = scene.seed;
  meta["out_box_num"] = cfg.out_box_num;
  write_text(out_path, detections_to_json(result.detections, meta).dump(2) + "\n");
  return 0;
}

int cmd_eval(const std::string& det_path, const std::string& scene_path,
             const std::string& out_path) {
  std::ifstream is(det_path);
  if (!is) throw ParseError("cannot open " + det_path);
  nlohmann::json dj;
  try {
    is >> dj;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("detections: " + std::string(e.what()));
  }
  const auto dets = detections_from_json(dj);
  const SyntheticScene scene = load_scene(scene_path);

  std::vector<ScoredBox> preds;
  for (const auto& d : dets) preds.push_back(d.box);
  const MetricsReport report = evaluate(preds, ground_truth_boxes(scene));
  if (!out_path.empty()) write_text(out_path, metrics_to_json(report).dump(2) + "\n");
  std::cout << "mAP=" << report.map << ", NDS=" << report.nds << "\n";
  return 0;
}

int cmd_bench(const std::string& scene_path, const std::string& params_path,
              const std::string& config_path, int repeat, const std::string& out_path) {
  RunConfig cfg = config_from_path(config_path);
  const SyntheticScene scene = load_scene(scene_path);
  const ParamRegistry reg = ParamRegistry::load(params_path);
  const auto features = load_features(scene_path, scene);

  struct Stat {
    double sum = 0, min = 1e300, max = 0;
    void add(double v) {
      sum += v;
      min = std::min(min, v);
      max = std::max(max, v);
    }
  };
  Stat lift, pool, adaptor, sampling, fusion;
  for (int r = 0; r < repeat; ++r) {
    const PipelineResult result = run_pipeline(scene, features, reg, cfg, Stage::Full);
    lift.add(result.timings.lift_s);
    pool.add(result.timings.pool_s);
    adaptor.add(result.timings.adaptor_s);
    sampling.add(result.timings.sampling_s);
    fusion.add(result.timings.fusion_s);
  }

  nlohmann::ordered_json j;
  auto report = [&](const char* name, const Stat& s) {
    const double mean = s.sum / repeat;
    std::cout << name << ": mean=" << mean << "s min=" << s.min << "s max=" << s.max
              << "s\n";
    j[name] = {{"mean_s", mean}, {"min_s", s.min}, {"max_s", s.max}};
  };
  std::cout << "stage timings over " << repeat << " repeat(s)\n";
  report("lift", lift);
  report("pool", pool);
  report("adaptor", adaptor);
  report("sampling", sampling);
  report("fusion", fusion);
  if (!out_path.empty()) write_text(out_path, j.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic two-stage multi-camera 3D detection pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_path, scene_path, params_path, det_path;
  std::string stage_name = "full";
  std::uint64_t seed = 0;
  int repeat = 1;

  auto* gen = app.add_subcommand("gen", "generate a synthetic scene");
  gen->add_option("--config", config_path);
  auto* gen_seed = gen->add_option("--seed", seed);
  gen->add_option("--out", out_path)->required();

  auto* init = app.add_subcommand("init-params", "initialize a parameter registry");
  init->add_option("--config", config_path);
  auto* init_seed = init->add_option("--seed", seed);
  init->add_option("--out", out_path)->required();

  auto* run = app.add_subcommand("run", "run the detection pipeline");
  run->add_option("--scene", scene_path)->required();
  run->add_option("--params", params_path)->required();
  run->add_option("--config", config_path);
  run->add_option("--out", out_path)->required();
  run->add_option("--stage", stage_name)
      ->check(CLI::IsMember({"proposals", "full"}));

  auto* eval = app.add_subcommand("eval", "evaluate detections against ground truth");
  eval->add_option("--det", det_path)->required();
  eval->add_option("--scene", scene_path)->required();
  eval->add_option("--out", out_path);

  auto* bench = app.add_subcommand("bench", "per-stage timing statistics");
  bench->add_option("--scene", scene_path)->required();
  bench->add_option("--params", params_path)->required();
  bench->add_option("--config", config_path);
  bench->add_option("--repeat", repeat)->check(CLI::PositiveNumber);
  bench->add_option("--out", out_path);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(config_path, seed, !gen_seed->empty(), out_path);
    if (init->parsed())
      return cmd_init_params(config_path, seed, !init_seed->empty(), out_path);
    if (run->parsed())
      return cmd_run(scene_path, params_path, config_path, out_path, stage_name);
    if (eval->parsed()) return cmd_eval(det_path, scene_path, out_path);
    if (bench->parsed())
      return cmd_bench(scene_path, params_path, config_path, repeat, out_path);
  } catch (const InvalidConfig& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DimensionMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const HeadsMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
