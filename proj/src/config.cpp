#include "slad/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace slad {

using nlohmann::json;

namespace {

// Reads fields from one JSON object, tracking which keys were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& msg) {
    throw ConfigError(key + ": " + msg);
  }

  std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

  const json* find(const std::string& name) {
    seen_.insert(name);
    auto it = j_.find(name);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& name, T& out) {
    const json* v = find(name);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) fail(key(name), "expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) fail(key(name), "expected an integer");
        if (std::is_unsigned_v<T> && v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0) {
          fail(key(name), "expected a non-negative integer");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) fail(key(name), "expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) fail(key(name), "expected a string");
      }
      out = v->get<T>();
    } catch (const json::exception& e) {
      fail(key(name), e.what());
    }
  }

  template <typename T>
  void read_list(const std::string& name, std::vector<T>& out) {
    const json* v = find(name);
    if (!v) return;
    if (!v->is_array()) fail(key(name), "expected an array");
    std::vector<T> tmp;
    for (const auto& e : *v) {
      if constexpr (std::is_integral_v<T>) {
        if (!e.is_number_integer()) fail(key(name), "expected an array of integers");
      } else {
        if (!e.is_number()) fail(key(name), "expected an array of numbers");
      }
      tmp.push_back(e.get<T>());
    }
    out = std::move(tmp);
  }

  Section child(const std::string& name) {
    const json* v = find(name);
    static const json empty = json::object();
    return Section(v ? *v : empty, key(name));
  }

  bool has(const std::string& name) const { return j_.contains(name); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(key(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& msg) {
  if (!ok) Section::fail(key, msg);
}

// Runs a validate() method and rethrows its message under the section path.
template <typename F>
void validated(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    Section::fail(path, e.what());
  }
}

ScheduleConfig read_schedule(Section s) {
  ScheduleConfig c;
  s.read("T", c.T);
  s.read("beta_start", c.beta_start);
  s.read("beta_end", c.beta_end);
  s.finish();
  validated("schedule", [&] { (void)c.build(); });
  return c;
}

DatasetSpec read_dataset(Section s) {
  DatasetSpec d;
  if (const json* k = s.find("kind")) {
    if (!k->is_string()) Section::fail(s.key("kind"), "expected a string");
    validated(s.key("kind"), [&] { d.kind = dataset_kind_from_string(k->get<std::string>()); });
  }
  s.read("dim", d.dim);
  s.read("n_modes", d.n_modes);
  s.read("radius", d.radius);
  s.read("scale", d.scale);
  s.read("normalize", d.normalize);
  s.read("seed", d.seed);
  s.finish();
  validated("dataset", [&] { d.validate(); });
  return d;
}

DenoiserConfig read_model(Section s) {
  DenoiserConfig m;
  s.read("width", m.width);
  s.read("hidden_layers", m.hidden_layers);
  s.read("label_dim", m.label_dim);
  s.read("t_freqs", m.t_freqs);
  s.read("gamma_freqs", m.gamma_freqs);
  s.read("freq_min", m.freq_min);
  s.read("freq_max", m.freq_max);
  s.read("sigma_data", m.sigma_data);
  s.read("precondition", m.precondition);
  s.read("data_std", m.data_std);
  s.finish();
  return m;
}

}  // namespace

DenoiserConfig RunConfig::resolved_model() const {
  DenoiserConfig m = model;
  m.dim = dataset.dim;
  m.num_labels = Dataset(dataset).num_labels();
  return m;
}

RunConfig parse_config(const json& doc) {
  RunConfig c;
  Section root(doc, "");
  root.read("seed", c.seed);
  c.schedule = read_schedule(root.child("schedule"));
  c.dataset = read_dataset(root.child("dataset"));
  c.model = read_model(root.child("model"));
  validated("model", [&] { c.resolved_model().validate(); });
  const int T = c.schedule.T;

  {
    Section s = root.child("teacher");
    TeacherConfig& t = c.teacher.train;
    s.read("steps", t.steps);
    s.read("batch_size", t.batch_size);
    s.read("lr", t.lr);
    s.read("clip_norm", t.clip_norm);
    s.read("null_label_prob", t.null_label_prob);
    s.read("log_every", c.teacher.log_every);
    s.read("checkpoint_every", c.teacher.checkpoint_every);
    s.finish();
    t.seed = c.seed;
    validated("teacher", [&] { t.validate(); });
    require(c.teacher.log_every >= 1, "teacher.log_every", "must be >= 1");
    require(c.teacher.checkpoint_every >= 0, "teacher.checkpoint_every", "must be >= 0");
  }

  {
    Section s = root.child("distill");
    DistillConfig& d = c.distill.train;
    s.read("k", d.k);
    s.read("k_phi", d.k_phi);
    s.read("w", d.w);
    s.read("mu", d.mu);
    if (const json* v = s.find("metric")) {
      if (!v->is_string()) Section::fail("distill.metric", "expected a string");
      validated("distill.metric", [&] { d.metric = metric_from_string(v->get<std::string>()); });
    }
    if (const json* v = s.find("mode")) {
      if (!v->is_string()) Section::fail("distill.mode", "expected a string");
      validated("distill.mode", [&] { d.mode = distill_mode_from_string(v->get<std::string>()); });
    }
    s.read("iterations", d.iterations);
    s.read("batch_size", d.batch_size);
    s.read("lr", d.lr);
    s.read("clip_norm", d.clip_norm);
    s.read("exact_sigma", d.exact_sigma);
    if (const json* v = s.find("gamma_override"); v && !v->is_null()) {
      if (!v->is_number()) Section::fail("distill.gamma_override", "expected a number or null");
      d.gamma_override = v->get<double>();
    }
    s.read("teacher_checkpoint", c.distill.teacher_checkpoint);
    s.read("init_checkpoint", c.distill.init_checkpoint);
    s.read("log_every", c.distill.log_every);
    s.read("eval_every", c.distill.eval_every);
    s.read("checkpoint_every", c.distill.checkpoint_every);
    s.finish();
    d.seed = c.seed;
    if (d.k_phi >= 1 && d.k % d.k_phi != 0) {
      Section::fail("distill.k_phi", "k (" + std::to_string(d.k) + ") must be divisible by k_phi (" +
                                         std::to_string(d.k_phi) + ")");
    }
    validated("distill", [&] { d.validate(T); });
    require(c.distill.log_every >= 1, "distill.log_every", "must be >= 1");
    require(c.distill.eval_every >= 0, "distill.eval_every", "must be >= 0");
    require(c.distill.checkpoint_every >= 0, "distill.checkpoint_every", "must be >= 0");
  }

  {
    Section s = root.child("eval");
    EvalConfig& e = c.eval;
    s.read("n_samples", e.n_samples);
    s.read_list("steps", e.steps);
    s.read_list("sample_grid", e.sample_grid);
    s.read("coverage_threshold", e.coverage_threshold);
    s.read("teacher_ddim_steps", e.teacher_ddim_steps);
    s.read("teacher_guidance", e.teacher_guidance);
    s.read("delta_k", e.delta_k);
    s.read("delta_t_min", e.delta_t_min);
    s.read("delta_samples", e.delta_samples);
    s.read("delta_chained", e.delta_chained);
    s.finish();
    require(e.n_samples >= 2, "eval.n_samples", "must be >= 2");
    for (int n : e.steps) require(n >= 1 && n <= T, "eval.steps", "entries must lie in [1, T]");
    for (std::size_t i = 0; i < e.sample_grid.size(); ++i) {
      require(e.sample_grid[i] >= 1 && e.sample_grid[i] <= T, "eval.sample_grid", "entries must lie in [1, T]");
      if (i > 0) require(e.sample_grid[i] < e.sample_grid[i - 1], "eval.sample_grid", "must be strictly decreasing");
    }
    require(e.coverage_threshold >= 0.0 && e.coverage_threshold <= 1.0, "eval.coverage_threshold",
            "must lie in [0, 1]");
    require(e.teacher_ddim_steps >= 1 && e.teacher_ddim_steps <= T, "eval.teacher_ddim_steps", "must lie in [1, T]");
    require(e.teacher_guidance >= 0.0, "eval.teacher_guidance", "must be >= 0");
    require(e.delta_k >= 1 && e.delta_k <= T, "eval.delta_k", "must lie in [1, T]");
    require(e.delta_t_min >= e.delta_k && e.delta_t_min < T, "eval.delta_t_min", "must lie in [delta_k, T)");
    require(e.delta_samples >= 1, "eval.delta_samples", "must be >= 1");
  }

  {
    Section s = root.child("ablate");
    AblateConfig& a = c.ablate;
    s.read_list("step_sizes", a.step_sizes);
    s.read("me_k_phi", a.me_k_phi);
    s.read_list("guidance_scales", a.guidance_scales);
    s.read_list("surface_t", a.surface_t);
    s.read_list("surface_k", a.surface_k);
    s.read("surface_gamma_points", a.surface_gamma_points);
    s.read("iterations", a.iterations);
    s.finish();
    for (int k : a.step_sizes) require(k >= 1 && k <= T, "ablate.step_sizes", "entries must lie in [1, T]");
    require(a.me_k_phi >= 1, "ablate.me_k_phi", "must be >= 1");
    for (double w : a.guidance_scales) require(w >= 0.0, "ablate.guidance_scales", "entries must be >= 0");
    for (int t : a.surface_t) require(t >= 1 && t <= T, "ablate.surface_t", "entries must lie in [1, T]");
    for (int k : a.surface_k) require(k >= 1 && k <= T, "ablate.surface_k", "entries must lie in [1, T]");
    require(a.surface_gamma_points >= 2, "ablate.surface_gamma_points", "must be >= 2");
    require(a.iterations >= 0, "ablate.iterations", "must be >= 0");
  }

  root.finish();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ScheduleConfig& s) {
  return {{"T", s.T}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

json to_json(const DatasetSpec& d) {
  return {{"kind", to_string(d.kind)}, {"dim", d.dim},         {"n_modes", d.n_modes},     {"radius", d.radius},
          {"scale", d.scale},          {"normalize", d.normalize}, {"seed", d.seed}};
}

json to_json(const DenoiserConfig& m) {
  return {{"dim", m.dim},
          {"width", m.width},
          {"hidden_layers", m.hidden_layers},
          {"num_labels", m.num_labels},
          {"label_dim", m.label_dim},
          {"t_freqs", m.t_freqs},
          {"gamma_freqs", m.gamma_freqs},
          {"freq_min", m.freq_min},
          {"freq_max", m.freq_max},
          {"sigma_data", m.sigma_data},
          {"precondition", m.precondition},
          {"data_std", m.data_std}};
}

ScheduleConfig schedule_from_json(const json& j) {
  return read_schedule(Section(j, "schedule"));
}

DatasetSpec dataset_from_json(const json& j) { return read_dataset(Section(j, "dataset")); }

DenoiserConfig denoiser_from_json(const json& j) {
  Section s(j, "model");
  DenoiserConfig m;
  s.read("dim", m.dim);
  s.read("num_labels", m.num_labels);
  s.read("width", m.width);
  s.read("hidden_layers", m.hidden_layers);
  s.read("label_dim", m.label_dim);
  s.read("t_freqs", m.t_freqs);
  s.read("gamma_freqs", m.gamma_freqs);
  s.read("freq_min", m.freq_min);
  s.read("freq_max", m.freq_max);
  s.read("sigma_data", m.sigma_data);
  s.read("precondition", m.precondition);
  s.read("data_std", m.data_std);
  s.finish();
  validated("model", [&] { m.validate(); });
  return m;
}

json to_json(const RunConfig& c) {
  json model = to_json(c.model);
  model.erase("dim");
  model.erase("num_labels");
  const TeacherConfig& t = c.teacher.train;
  const DistillConfig& d = c.distill.train;
  const EvalConfig& e = c.eval;
  const AblateConfig& a = c.ablate;
  return {
      {"seed", c.seed},
      {"schedule", to_json(c.schedule)},
      {"dataset", to_json(c.dataset)},
      {"model", model},
      {"teacher",
       {{"steps", t.steps},
        {"batch_size", t.batch_size},
        {"lr", t.lr},
        {"clip_norm", t.clip_norm},
        {"null_label_prob", t.null_label_prob},
        {"log_every", c.teacher.log_every},
        {"checkpoint_every", c.teacher.checkpoint_every}}},
      {"distill",
       {{"k", d.k},
        {"k_phi", d.k_phi},
        {"w", d.w},
        {"mu", d.mu},
        {"metric", to_string(d.metric)},
        {"mode", to_string(d.mode)},
        {"iterations", d.iterations},
        {"batch_size", d.batch_size},
        {"lr", d.lr},
        {"clip_norm", d.clip_norm},
        {"exact_sigma", d.exact_sigma},
        {"gamma_override", d.gamma_override ? json(*d.gamma_override) : json(nullptr)},
        {"teacher_checkpoint", c.distill.teacher_checkpoint},
        {"init_checkpoint", c.distill.init_checkpoint},
        {"log_every", c.distill.log_every},
        {"eval_every", c.distill.eval_every},
        {"checkpoint_every", c.distill.checkpoint_every}}},
      {"eval",
       {{"n_samples", e.n_samples},
        {"steps", e.steps},
        {"sample_grid", e.sample_grid},
        {"coverage_threshold", e.coverage_threshold},
        {"teacher_ddim_steps", e.teacher_ddim_steps},
        {"teacher_guidance", e.teacher_guidance},
        {"delta_k", e.delta_k},
        {"delta_t_min", e.delta_t_min},
        {"delta_samples", e.delta_samples},
        {"delta_chained", e.delta_chained}}},
      {"ablate",
       {{"step_sizes", a.step_sizes},
        {"me_k_phi", a.me_k_phi},
        {"guidance_scales", a.guidance_scales},
        {"surface_t", a.surface_t},
        {"surface_k", a.surface_k},
        {"surface_gamma_points", a.surface_gamma_points},
        {"iterations", a.iterations}}},
  };
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& config) {
  json j = to_json(config);
  j["teacher"].erase("steps");
  j["distill"].erase("iterations");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace slad
