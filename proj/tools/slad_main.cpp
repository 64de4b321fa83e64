// slad: train a teacher, distill a few-step student, sample, evaluate, ablate.
//
// Exit codes: 0 success, 2 configuration or argument error, 3 runtime failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "slad/commands.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "Override the config seed");
  cmd->add_option("--out", c.out, "Output run directory")->required();
}

slad::RunConfig resolve(const Common& c) {
  slad::RunConfig config = slad::load_config(c.config);
  if (c.seed) {
    nlohmann::json j = slad::to_json(config);
    j["seed"] = *c.seed;
    config = slad::parse_config(j);
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sub-path linear approximation distillation for few-step diffusion sampling"};
  app.require_subcommand(1);

  Common common;
  std::string checkpoint;
  std::string resume;

  auto* train = app.add_subcommand("train-teacher", "Train the noise-prediction teacher");
  add_common(train, common);
  train->add_option("--resume", resume, "Continue from a teacher checkpoint")->check(CLI::ExistingFile);

  auto* distill = app.add_subcommand("distill", "Distill a few-step student from a teacher");
  add_common(distill, common);
  distill->add_option("--checkpoint", checkpoint, "Teacher checkpoint, or 'analytic'");
  distill->add_option("--resume", resume, "Continue from a student checkpoint")->check(CLI::ExistingFile);

  slad::SampleOptions sample_opts;
  std::uint64_t sample_seed = 0;
  std::optional<int> label;
  auto* sample = app.add_subcommand("sample", "Draw samples from a checkpoint");
  sample->add_option("--checkpoint", sample_opts.checkpoint, "Teacher or student checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  sample->add_option("--out", sample_opts.out_dir, "Output directory")->required();
  sample->add_option("--steps", sample_opts.steps, "Sampling steps")->capture_default_str();
  sample->add_option("--count", sample_opts.count, "Number of samples")->capture_default_str();
  sample->add_option("--label", label, "Class label (-1 for unconditional; default cycles over classes)");
  sample->add_option("--seed", sample_seed, "Sampling seed")->capture_default_str();
  sample->add_option("--guidance", sample_opts.guidance, "Guidance scale for teacher DDIM sampling")
      ->capture_default_str();
  sample->add_flag("--online", sample_opts.online, "Use the online weights instead of the EMA weights");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against held-out data");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required()->check(CLI::ExistingFile);

  std::string ablation;
  auto* ablate = app.add_subcommand("ablate", "Run an ablation sweep");
  ablate->add_option("ablation", ablation, "step-size | error-surface | guidance-scale | sl-vs-dl")
      ->required()
      ->check(CLI::IsMember({"step-size", "error-surface", "guidance-scale", "sl-vs-dl"}));
  add_common(ablate, common);
  ablate->add_option("--checkpoint", checkpoint, "Teacher checkpoint, or 'analytic'");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      slad::run_train_teacher(resolve(common), common.out, resume);
    } else if (*distill) {
      slad::run_distill(resolve(common), common.out, checkpoint, resume);
    } else if (*sample) {
      sample_opts.seed = sample_seed;
      sample_opts.label = label;
      slad::run_sample(sample_opts);
    } else if (*eval) {
      std::cout << slad::run_eval(resolve(common), checkpoint, common.out).dump(2) << "\n";
    } else if (*ablate) {
      slad::run_ablate(ablation, resolve(common), common.out, checkpoint);
    }
  } catch (const slad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
