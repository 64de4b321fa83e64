#include "slad/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "slad/report.hpp"
#include "slad/subpath.hpp"

namespace slad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kHeldOutOffset = 1ULL << 50;
constexpr const char* kAnalyticTeacher = "analytic";

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void prepare_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--out: an output directory is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
}

void snapshot_config(const RunConfig& config, const std::string& dir) {
  write_new_file(join(dir, "config.json"), to_json(config).dump(2) + "\n");
}

std::string step_name(long step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%07ld.ckpt", step);
  return buf;
}

void save_new(const Checkpoint& ckpt, const std::string& path) {
  if (fs::exists(path)) throw std::runtime_error("refusing to overwrite existing file " + path);
  save_checkpoint(ckpt, path);
}

void progress(const std::string& what, long step, long total, double loss) {
  std::fprintf(stderr, "[%s] step %ld/%ld loss %.6g\n", what.c_str(), step, total, loss);
}

// Architecture, schedule and data of a checkpoint must match the config that
// is about to use it.
void require_compatible(const RunConfig& config, const Checkpoint& ckpt, const std::string& what) {
  if (ckpt.schedule != to_json(config.schedule)) throw ConfigError(what + ": schedule differs from the config");
  if (ckpt.model != to_json(config.resolved_model())) throw ConfigError(what + ": model differs from the config");
  if (ckpt.dataset != to_json(config.dataset)) throw ConfigError(what + ": dataset differs from the config");
}

std::map<std::string, Tensor> map_of(const std::map<std::string, Tensor>& m) { return m; }

Checkpoint base_checkpoint(const RunConfig& config, CheckpointKind kind) {
  Checkpoint c;
  c.kind = kind;
  c.config_hash = config_hash(config);
  c.seed = config.seed;
  c.schedule = to_json(config.schedule);
  c.model = to_json(config.resolved_model());
  c.dataset = to_json(config.dataset);
  return c;
}

Checkpoint load_resume(const RunConfig& config, const std::string& path, CheckpointKind kind) {
  Checkpoint c = load_checkpoint(path);
  if (c.kind != kind) throw ConfigError("--resume: " + path + " is a " + to_string(c.kind) + " checkpoint");
  const std::string hash = config_hash(config);
  if (c.config_hash != hash) {
    throw ConfigError("--resume: config hash " + hash + " does not match checkpoint hash " + c.config_hash +
                      "; refusing to resume under a different configuration");
  }
  require_compatible(config, c, "--resume");
  return c;
}

// The teacher used for distillation: a checkpointed network or the closed form.
struct TeacherSource {
  std::unique_ptr<ModelBundle> bundle;
  std::unique_ptr<EpsModel> model;
  std::optional<std::uint64_t> seed;
  std::string hash;
  bool analytic = false;
};

TeacherSource open_teacher(const RunConfig& config, const NoiseSchedule& sched, const Dataset& data,
                           const std::string& override_path) {
  const std::string path = override_path.empty() ? config.distill.teacher_checkpoint : override_path;
  if (path.empty()) throw ConfigError("distill.teacher_checkpoint: no teacher given (set it or pass --checkpoint)");
  TeacherSource src;
  if (path == kAnalyticTeacher) {
    if (config.dataset.kind != DatasetKind::GaussianMixture || config.dataset.n_modes != 1) {
      throw ConfigError("distill.teacher_checkpoint: the analytic teacher needs a one-mode gaussian_mixture dataset");
    }
    const auto centers = data.mode_centers();
    Tensor mean({1, centers[0].size()}, centers[0]);
    src.model = std::make_unique<AnalyticTeacher>(mean, data.mode_scale(), sched);
    src.analytic = true;
    return src;
  }
  src.bundle = load_bundle(path);
  if (src.bundle->ckpt.kind != CheckpointKind::Teacher) throw ConfigError(path + ": not a teacher checkpoint");
  require_compatible(config, src.bundle->ckpt, path);
  src.model = std::make_unique<NetworkEps>(src.bundle->net, src.bundle->ckpt.theta, src.bundle->sched);
  src.seed = src.bundle->ckpt.seed;
  src.hash = src.bundle->ckpt.config_hash;
  return src;
}

json eval_json(const SampleEval& e) {
  json j = {{"n_steps", e.n_steps}, {"energy_distance", e.energy_distance}};
  if (e.coverage) {
    j["modes_covered"] = e.coverage->covered;
    j["mode_histogram"] = e.coverage->histogram;
  }
  return j;
}

struct DistillOutcome {
  DistillState state;
  double final_loss = 0.0;
};

// Shared by the distill command and ablations. Writes distill_log.csv (and
// eval_log.csv when eval_every > 0) into `dir`.
DistillOutcome distill_into(const RunConfig& config, const Denoiser& net, const TeacherSource& teacher,
                            const Dataset& data, const NoiseSchedule& sched, const std::string& dir,
                            std::optional<Checkpoint> resume, const std::string& label) {
  const DistillConfig& dc = config.distill.train;
  ParamStore init;
  if (!config.distill.init_checkpoint.empty()) {
    const Checkpoint c = load_checkpoint(config.distill.init_checkpoint);
    if (c.kind != CheckpointKind::Teacher) {
      throw ConfigError("distill.init_checkpoint: " + config.distill.init_checkpoint + " is not a teacher checkpoint");
    }
    require_compatible(config, c, "distill.init_checkpoint");
    init = student_init(net, c.theta);
  } else if (teacher.analytic) {
    Rng rng = Rng(config.seed).split("student-init");
    init = net.init(rng);
  } else {
    init = student_init(net, teacher.bundle->ckpt.theta);
  }
  DistillOutcome out{make_distill_state(init, dc)};
  if (resume) {
    out.state.theta = resume->theta;
    out.state.theta_minus = resume->theta_minus;
    out.state.optimizer.restore(resume->adam_m, resume->adam_v, resume->adam_steps);
    out.state.step = resume->step;
  }

  CsvWriter log(join(dir, "distill_log.csv"), {"step", "loss", "grad_norm"});
  std::unique_ptr<CsvWriter> eval_log;
  if (config.distill.eval_every > 0) {
    eval_log = std::make_unique<CsvWriter>(join(dir, "eval_log.csv"),
                                           std::vector<std::string>{"step", "n_steps", "energy_distance"});
  }

  auto make_ckpt = [&](const DistillState& s) {
    Checkpoint c = base_checkpoint(config, CheckpointKind::Student);
    c.parent_seed = teacher.seed;
    c.parent_hash = teacher.analytic ? std::string(kAnalyticTeacher) : teacher.hash;
    c.step = s.step;
    c.theta = s.theta;
    c.theta_minus = s.theta_minus;
    c.adam_m = map_of(s.optimizer.first_moment());
    c.adam_v = map_of(s.optimizer.second_moment());
    c.adam_steps = s.optimizer.steps();
    return c;
  };

  const long total = dc.iterations;
  distill(out.state, net, *teacher.model, data, dc, sched, [&](const DistillLogRow& row, const DistillState& s) {
    out.final_loss = row.loss;
    const long done = row.step + 1;
    if (done % config.distill.log_every == 0 || done == total) {
      log.row({row.step, row.loss, row.grad_norm});
      progress(label, done, total, row.loss);
    }
    if (eval_log && done % config.distill.eval_every == 0) {
      NetworkGenerator gen(net, s.theta_minus, sched);
      for (const SampleEval& e : evaluate_generator(gen, data, sched, config.eval, config.seed)) {
        eval_log->row({done, static_cast<long>(e.n_steps), e.energy_distance});
      }
      eval_log->flush();
    }
    if (config.distill.checkpoint_every > 0 && done % config.distill.checkpoint_every == 0 && done != total) {
      fs::create_directories(join(dir, "checkpoints"));
      save_new(make_ckpt(s), join(join(dir, "checkpoints"), step_name(done)));
    }
  });
  save_new(make_ckpt(out.state), join(dir, "student.ckpt"));
  return out;
}

int largest_divisor_at_most(int k, int cap) {
  for (int d = std::min(k, cap); d >= 1; --d) {
    if (k % d == 0) return d;
  }
  return 1;
}

}  // namespace

ModelBundle::ModelBundle(Checkpoint checkpoint)
    : ckpt(std::move(checkpoint)),
      sched(schedule_from_json(ckpt.schedule).build()),
      net(denoiser_from_json(ckpt.model)),
      data(dataset_from_json(ckpt.dataset)) {}

std::unique_ptr<ModelBundle> load_bundle(const std::string& path) {
  return std::make_unique<ModelBundle>(load_checkpoint(path));
}

ParamStore student_init(const Denoiser& net, const ParamStore& teacher) {
  ParamStore p = teacher;
  for (const std::string& name : net.gamma_parameter_names()) {
    p.set(name, Tensor(p.at(name).shape(), 0.0));
  }
  return p;
}

LabeledBatch held_out_data(const Dataset& data, std::size_t count) { return data.sample(kHeldOutOffset, count); }

std::vector<int> cycling_labels(std::size_t count, int num_labels) {
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(num_labels));
  return labels;
}

namespace {

SampleEval score(const Tensor& samples, int n_steps, const Dataset& data, const EvalConfig& eval) {
  SampleEval e;
  e.n_steps = n_steps;
  e.energy_distance = energy_distance(samples, held_out_data(data, eval.n_samples).points);
  if (data.spec().kind == DatasetKind::GaussianMixture) {
    e.coverage = mode_coverage(samples, data.mode_centers(), eval.coverage_threshold);
  }
  return e;
}

}  // namespace

std::vector<SampleEval> evaluate_generator(const GeneratorModel& model, const Dataset& data,
                                           const NoiseSchedule& sched, const EvalConfig& eval, std::uint64_t seed) {
  const std::vector<int> labels = cycling_labels(eval.n_samples, data.num_labels());
  std::vector<SampleEval> out;
  auto run = [&](int n, std::span<const int> grid, std::uint64_t stream) {
    Rng rng = Rng(seed).split("eval").split(stream);
    out.push_back(score(multistep_sample(model, eval.n_samples, n, labels, sched, rng, grid), n, data, eval));
  };
  for (int n : eval.steps) run(n, {}, static_cast<std::uint64_t>(n));
  if (!eval.sample_grid.empty()) {
    run(static_cast<int>(eval.sample_grid.size()), eval.sample_grid, 1ULL << 32);
  }
  return out;
}

SampleEval evaluate_teacher(const EpsModel& teacher, const Dataset& data, const NoiseSchedule& sched,
                            const EvalConfig& eval, std::uint64_t seed) {
  const std::vector<int> labels = cycling_labels(eval.n_samples, data.num_labels());
  Rng rng = Rng(seed).split("eval-teacher");
  const Tensor z = rng.normal_tensor(eval.n_samples, static_cast<std::size_t>(data.dim()));
  const Tensor x = ddim_sample(teacher, z, eval.teacher_ddim_steps, labels, eval.teacher_guidance, sched);
  return score(x, eval.teacher_ddim_steps, data, eval);
}

void run_train_teacher(const RunConfig& config, const std::string& out_dir, const std::string& resume) {
  prepare_dir(out_dir);
  const NoiseSchedule sched = config.schedule.build();
  const Dataset data(config.dataset);
  const Denoiser net(config.resolved_model());

  ParamStore init;
  AdamWConfig opt;
  opt.lr = config.teacher.train.lr;
  opt.clip_norm = config.teacher.train.clip_norm;
  AdamW optimizer(opt);
  long first_step = 0;
  if (!resume.empty()) {
    Checkpoint c = load_resume(config, resume, CheckpointKind::Teacher);
    init = c.theta;
    optimizer.restore(c.adam_m, c.adam_v, c.adam_steps);
    first_step = c.step;
  } else {
    Rng rng = Rng(config.seed).split("teacher-init");
    init = net.init(rng);
  }
  snapshot_config(config, out_dir);

  auto make_ckpt = [&](const ParamStore& params, long step) {
    Checkpoint c = base_checkpoint(config, CheckpointKind::Teacher);
    c.step = step;
    c.theta = params;
    c.theta_minus = params;
    c.adam_m = map_of(optimizer.first_moment());
    c.adam_v = map_of(optimizer.second_moment());
    c.adam_steps = optimizer.steps();
    return c;
  };

  CsvWriter log(join(out_dir, "train_log.csv"), {"step", "loss", "grad_norm"});
  const long total = config.teacher.train.steps;
  // The observer sees only log rows, so periodic checkpoints run training in segments.
  ParamStore params = std::move(init);
  const long every = config.teacher.checkpoint_every > 0 ? config.teacher.checkpoint_every : total;
  long step = first_step;
  while (step < total) {
    TeacherConfig segment = config.teacher.train;
    segment.steps = static_cast<int>(std::min<long>(total, (step / every + 1) * every));
    params = train_teacher(net, data, sched, segment, std::move(params), optimizer, [&](const TrainLogRow& row) {
      const long done = row.step + 1;
      if (done % config.teacher.log_every == 0 || done == total) {
        log.row({row.step, row.loss, row.grad_norm});
        progress("teacher", done, total, row.loss);
      }
    }, step);
    step = segment.steps;
    if (step < total) {
      fs::create_directories(join(out_dir, "checkpoints"));
      save_new(make_ckpt(params, step), join(join(out_dir, "checkpoints"), step_name(step)));
    }
  }
  save_new(make_ckpt(params, std::max(step, first_step)), join(out_dir, "teacher.ckpt"));
}

void run_distill(const RunConfig& config, const std::string& out_dir, const std::string& teacher,
                 const std::string& resume) {
  prepare_dir(out_dir);
  const NoiseSchedule sched = config.schedule.build();
  const Dataset data(config.dataset);
  const Denoiser net(config.resolved_model());
  const TeacherSource src = open_teacher(config, sched, data, teacher);
  std::optional<Checkpoint> state;
  if (!resume.empty()) state = load_resume(config, resume, CheckpointKind::Student);
  snapshot_config(config, out_dir);
  distill_into(config, net, src, data, sched, out_dir, std::move(state), "distill");
}

void run_sample(const SampleOptions& o) {
  if (o.steps < 1) throw ConfigError("--steps: must be >= 1");
  if (o.count < 1) throw ConfigError("--count: must be >= 1");
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint: a checkpoint is required");
  const auto bundle = load_bundle(o.checkpoint);
  const int T = bundle->sched.steps();
  if (o.steps > T) throw ConfigError("--steps: must not exceed the " + std::to_string(T) + " diffusion steps");
  const int num_labels = bundle->net.config().num_labels;
  if (o.label && (*o.label < kNullLabel || *o.label >= num_labels)) {
    throw ConfigError("--label: must lie in [-1, " + std::to_string(num_labels - 1) + "]");
  }
  prepare_dir(o.out_dir);
  const std::vector<int> labels =
      o.label ? std::vector<int>(o.count, *o.label) : cycling_labels(o.count, num_labels);
  Rng rng = Rng(o.seed).split("sample");
  Tensor x;
  if (bundle->ckpt.kind == CheckpointKind::Teacher) {
    NetworkEps eps(bundle->net, bundle->ckpt.theta, bundle->sched);
    const Tensor z = rng.normal_tensor(o.count, static_cast<std::size_t>(bundle->net.config().dim));
    x = ddim_sample(eps, z, o.steps, labels, o.guidance, bundle->sched);
  } else {
    NetworkGenerator gen(bundle->net, o.online ? bundle->ckpt.theta : bundle->ckpt.theta_minus, bundle->sched);
    x = multistep_sample(gen, o.count, o.steps, labels, bundle->sched, rng);
  }

  std::vector<std::string> header;
  for (std::size_t d = 0; d < x.cols(); ++d) header.push_back("x" + std::to_string(d));
  header.push_back("label");
  CsvWriter csv(join(o.out_dir, "samples.csv"), header);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::vector<CsvCell> cells(x.row(i).begin(), x.row(i).end());
    cells.emplace_back(static_cast<long>(labels[i]));
    csv.row(cells);
  }
  if (x.cols() >= 2) {
    write_new_file(join(o.out_dir, "samples.svg"),
                   svg_scatter(x, labels, to_string(bundle->ckpt.kind) + " samples, " + std::to_string(o.steps) +
                                              (o.steps == 1 ? " step" : " steps")));
  }
}

json run_eval(const RunConfig& config, const std::string& checkpoint, const std::string& out_dir) {
  if (checkpoint.empty()) throw ConfigError("--checkpoint: a checkpoint is required");
  const auto bundle = load_bundle(checkpoint);
  require_compatible(config, bundle->ckpt, checkpoint);
  prepare_dir(out_dir);
  const NoiseSchedule& sched = bundle->sched;
  const Dataset& data = bundle->data;
  json metrics = {{"checkpoint", checkpoint},
                  {"kind", to_string(bundle->ckpt.kind)},
                  {"config_hash", bundle->ckpt.config_hash},
                  {"step", bundle->ckpt.step}};
  if (bundle->ckpt.kind == CheckpointKind::Teacher) {
    NetworkEps eps(bundle->net, bundle->ckpt.theta, sched);
    metrics["ddim"] = eval_json(evaluate_teacher(eps, data, sched, config.eval, config.seed));
  } else {
    NetworkGenerator gen(bundle->net, bundle->ckpt.theta_minus, sched);
    json runs = json::array();
    for (const SampleEval& e : evaluate_generator(gen, data, sched, config.eval, config.seed)) runs.push_back(eval_json(e));
    metrics["few_step"] = runs;

    DeltaOptions d;
    d.k = config.eval.delta_k;
    d.t_min = config.eval.delta_t_min;
    d.n_samples = config.eval.delta_samples;
    d.chained = config.eval.delta_chained;
    Rng rng = Rng(config.seed).split("delta");
    const auto curve = delta_error(gen, data, sched, d, rng);
    CsvWriter csv(join(out_dir, "delta.csv"), {"t", "delta"});
    for (const auto& p : curve) csv.row({static_cast<long>(p.t), p.delta});
    metrics["delta_top_quartile_mean"] = top_quartile_mean(curve);
  }
  write_new_file(join(out_dir, "metrics.json"), metrics.dump(2) + "\n");
  return metrics;
}

void run_ablate(const std::string& which, const RunConfig& config, const std::string& out_dir,
                const std::string& teacher) {
  static const std::vector<std::string> kinds{"step-size", "error-surface", "guidance-scale", "sl-vs-dl"};
  if (std::find(kinds.begin(), kinds.end(), which) == kinds.end()) {
    throw ConfigError("ablate: unknown ablation '" + which + "' (expected step-size, error-surface, guidance-scale or sl-vs-dl)");
  }
  prepare_dir(out_dir);
  const NoiseSchedule sched = config.schedule.build();
  const AblateConfig& a = config.ablate;
  snapshot_config(config, out_dir);

  if (which == "error-surface") {
    CsvWriter csv(join(out_dir, "error_surface.csv"), {"t", "k", "gamma", "error"});
    std::vector<double> grid(static_cast<std::size_t>(a.surface_gamma_points));
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<double>(i) / static_cast<double>(grid.size() - 1);
    std::vector<SvgSeries> series;
    for (int t : a.surface_t) {
      for (int k : a.surface_k) {
        if (k > t) continue;
        const std::vector<double> e = sigma_error_surface(t, k, sched, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) csv.row({static_cast<long>(t), static_cast<long>(k), grid[i], e[i]});
        series.push_back({"t=" + std::to_string(t) + " k=" + std::to_string(k), grid, e});
      }
    }
    write_new_file(join(out_dir, "error_surface.svg"), svg_lines(series, "noise-level error", "gamma", "error"));
    return;
  }

  const Dataset data(config.dataset);
  const Denoiser net(config.resolved_model());
  const TeacherSource src = open_teacher(config, sched, data, teacher);

  struct Variant {
    std::string name;
    RunConfig config;
    std::vector<CsvCell> key;
  };
  std::vector<Variant> variants;
  std::vector<std::string> key_header;
  auto base = config;
  if (a.iterations > 0) base.distill.train.iterations = a.iterations;
  if (which == "step-size") {
    key_header = {"k", "k_phi", "multiple_estimation"};
    for (int k : a.step_sizes) {
      for (bool me : {false, true}) {
        RunConfig c = base;
        c.distill.train.k = k;
        c.distill.train.k_phi = me ? largest_divisor_at_most(k, a.me_k_phi) : k;
        variants.push_back({"k" + std::to_string(k) + (me ? "_me" : ""), c,
                            {static_cast<long>(k), static_cast<long>(c.distill.train.k_phi), std::string(me ? "yes" : "no")}});
      }
    }
  } else if (which == "guidance-scale") {
    key_header = {"w"};
    for (double w : a.guidance_scales) {
      RunConfig c = base;
      c.distill.train.w = w;
      char buf[32];
      std::snprintf(buf, sizeof buf, "w%g", w);
      variants.push_back({buf, c, {w}});
    }
  } else {
    key_header = {"mode"};
    for (DistillMode m : {DistillMode::SL, DistillMode::DL, DistillMode::ConsistencyBaseline}) {
      RunConfig c = base;
      c.distill.train.mode = m;
      variants.push_back({to_string(m), c, {to_string(m)}});
    }
  }

  std::vector<std::string> header = key_header;
  for (const char* h : {"n_steps", "energy_distance", "modes_covered", "final_loss", "delta_top_quartile_mean"}) {
    header.emplace_back(h);
  }
  CsvWriter csv(join(out_dir, "ablation.csv"), header);
  for (const Variant& v : variants) {
    try {
      v.config.distill.train.validate(sched.steps());
    } catch (const std::invalid_argument& e) {
      throw ConfigError("ablate." + which + " (" + v.name + "): " + e.what());
    }
    const std::string dir = join(out_dir, v.name);
    prepare_dir(dir);
    const DistillOutcome r = distill_into(v.config, net, src, data, sched, dir, std::nullopt, v.name);
    NetworkGenerator gen(net, r.state.theta_minus, sched);
    DeltaOptions d;
    d.k = config.eval.delta_k;
    d.t_min = config.eval.delta_t_min;
    d.n_samples = config.eval.delta_samples;
    d.chained = config.eval.delta_chained;
    Rng rng = Rng(config.seed).split("delta");
    const double delta = top_quartile_mean(delta_error(gen, data, sched, d, rng));
    for (const SampleEval& e : evaluate_generator(gen, data, sched, config.eval, config.seed)) {
      std::vector<CsvCell> row = v.key;
      row.emplace_back(static_cast<long>(e.n_steps));
      row.emplace_back(e.energy_distance);
      row.emplace_back(static_cast<long>(e.coverage ? e.coverage->covered : -1));
      row.emplace_back(r.final_loss);
      row.emplace_back(delta);
      csv.row(row);
    }
    csv.flush();
  }
}

}  // namespace slad
