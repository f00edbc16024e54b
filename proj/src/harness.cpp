#include "diffrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "diffrl/estimators.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace diffrl::harness {

namespace {

// key -> (setter from json value). Shared by file parsing and env overrides.
using Setter = std::function<void(ExperimentConfig&, const json&)>;

template <class T>
T get_as(const json& v, const char* key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for config key '") + key + "'");
  }
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> m;
    auto add = [&m](const char* k, auto member) {
      m[k] = [k, member](ExperimentConfig& c, const json& v) {
        c.*member = get_as<std::decay_t<decltype(c.*member)>>(v, k);
      };
    };
    add("experiment", &ExperimentConfig::experiment);
    add("env", &ExperimentConfig::env);
    add("algo", &ExperimentConfig::algo);
    add("seeds", &ExperimentConfig::seeds);
    add("out_dir", &ExperimentConfig::out_dir);
    add("workers", &ExperimentConfig::workers);
    add("gamma", &ExperimentConfig::gamma);
    add("lambda", &ExperimentConfig::td_lambda);
    add("horizon", &ExperimentConfig::horizon);
    add("h_min", &ExperimentConfig::h_min);
    add("h_max", &ExperimentConfig::h_max);
    add("num_envs", &ExperimentConfig::num_envs);
    add("max_windows", &ExperimentConfig::max_windows);
    add("actor_lr", &ExperimentConfig::actor_lr);
    add("critic_lr", &ExperimentConfig::critic_lr);
    add("alpha_phi", &ExperimentConfig::alpha_phi);
    add("contact_threshold", &ExperimentConfig::contact_threshold);
    add("horizon_sign", &ExperimentConfig::horizon_sign);
    add("grad_norm", &ExperimentConfig::grad_norm);
    add("log_std_init", &ExperimentConfig::log_std_init);
    add("actor_layers", &ExperimentConfig::actor_layers);
    add("critic_layers", &ExperimentConfig::critic_layers);
    add("critic_heads", &ExperimentConfig::critic_heads);
    add("critic_minibatch", &ExperimentConfig::critic_minibatch);
    add("critic_max_iters", &ExperimentConfig::critic_max_iters);
    add("critic_tol", &ExperimentConfig::critic_tol);
    add("critic_until_convergence",
        &ExperimentConfig::critic_until_convergence);
    add("critic_fixed_iters", &ExperimentConfig::critic_fixed_iters);
    add("use_critic", &ExperimentConfig::use_critic);
    add("stiff_norm", &ExperimentConfig::stiff_norm);
    add("record_wall_time", &ExperimentConfig::record_wall_time);
    add("episode_length", &ExperimentConfig::episode_length);
    add("action_scale", &ExperimentConfig::action_scale);
    add("reset_noise_scale", &ExperimentConfig::reset_noise_scale);
    add("contact_k_n", &ExperimentConfig::contact_k_n);
    add("contact_k_d", &ExperimentConfig::contact_k_d);
    add("contact_mu", &ExperimentConfig::contact_mu);
    add("contact_nu", &ExperimentConfig::contact_nu);
    add("script_stiff_from", &ExperimentConfig::script_stiff_from);
    add("script_period", &ExperimentConfig::script_period);
    add("script_high", &ExperimentConfig::script_high);
    add("theta", &ExperimentConfig::theta);
    add("nu", &ExperimentConfig::nu);
    add("sigma", &ExperimentConfig::sigma);
    add("n_grid", &ExperimentConfig::n_grid);
    add("reps", &ExperimentConfig::reps);
    add("ball_n", &ExperimentConfig::ball_n);
    add("ball_h", &ExperimentConfig::ball_h);
    add("ball_sigma", &ExperimentConfig::ball_sigma);
    add("ball_theta", &ExperimentConfig::ball_theta);
    add("ball_seeds", &ExperimentConfig::ball_seeds);
    add("h_grid", &ExperimentConfig::h_grid);
    add("h_converged", &ExperimentConfig::h_converged);
    return m;
  }();
  return table;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["env"] = c.env;
  j["algo"] = c.algo;
  j["seeds"] = c.seeds;
  j["out_dir"] = c.out_dir;
  j["workers"] = c.workers;
  j["gamma"] = c.gamma;
  j["lambda"] = c.td_lambda;
  j["horizon"] = c.horizon;
  j["h_min"] = c.h_min;
  j["h_max"] = c.h_max;
  j["num_envs"] = c.num_envs;
  j["max_windows"] = c.max_windows;
  j["actor_lr"] = c.actor_lr;
  j["critic_lr"] = c.critic_lr;
  j["alpha_phi"] = c.alpha_phi;
  j["contact_threshold"] = c.contact_threshold;
  j["horizon_sign"] = c.horizon_sign;
  j["grad_norm"] = c.grad_norm;
  j["log_std_init"] = c.log_std_init;
  j["actor_layers"] = c.actor_layers;
  j["critic_layers"] = c.critic_layers;
  j["critic_heads"] = c.critic_heads;
  j["critic_minibatch"] = c.critic_minibatch;
  j["critic_max_iters"] = c.critic_max_iters;
  j["critic_tol"] = c.critic_tol;
  j["critic_until_convergence"] = c.critic_until_convergence;
  j["critic_fixed_iters"] = c.critic_fixed_iters;
  j["use_critic"] = c.use_critic;
  j["stiff_norm"] = c.stiff_norm;
  j["record_wall_time"] = c.record_wall_time;
  j["episode_length"] = c.episode_length;
  j["action_scale"] = c.action_scale;
  j["reset_noise_scale"] = c.reset_noise_scale;
  j["contact_k_n"] = c.contact_k_n;
  j["contact_k_d"] = c.contact_k_d;
  j["contact_mu"] = c.contact_mu;
  j["contact_nu"] = c.contact_nu;
  j["script_stiff_from"] = c.script_stiff_from;
  j["script_period"] = c.script_period;
  j["script_high"] = c.script_high;
  j["theta"] = c.theta;
  j["nu"] = c.nu;
  j["sigma"] = c.sigma;
  j["n_grid"] = c.n_grid;
  j["reps"] = c.reps;
  j["ball_n"] = c.ball_n;
  j["ball_h"] = c.ball_h;
  j["ball_sigma"] = c.ball_sigma;
  j["ball_theta"] = c.ball_theta;
  j["ball_seeds"] = c.ball_seeds;
  j["h_grid"] = c.h_grid;
  j["h_converged"] = c.h_converged;
  j["_overrides"] = c.overrides_applied;
  return j;
}

void apply_env_overrides(ExperimentConfig& cfg) {
  for (const auto& [key, setter] : setters()) {
    std::string var = "DIFFRL_" + key;
    const char* raw = std::getenv(var.c_str());
    if (!raw) continue;
    json v;
    try {
      v = json::parse(raw);
    } catch (const json::exception&) {
      v = std::string(raw);  // unquoted strings (algo names, paths)
    }
    setter(cfg, v);
    cfg.overrides_applied.push_back(key + "=" + std::string(raw));
  }
}

void run_parallel(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  int count = std::min(workers, n);
  pool.reserve(size_t(count));
  for (int w = 0; w < count; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write " + path);
  out << text;
}

void write_echo(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir + "/config.json", config_echo(cfg) + "\n");
}

std::string curve_file(const std::string& dir, uint64_t seed) {
  return dir + "/curve_seed" + std::to_string(seed) + ".csv";
}

const std::vector<std::string> kCurveColumns = {
    "iteration",  "env_steps",    "wall_time_s",  "episode_reward",
    "horizon",    "sum_phi",      "critic_loss",  "critic_iters",
    "truncation_count", "seed"};

void write_curve(const std::string& path, const learn::TrainResult& res,
                 uint64_t seed) {
  Table t;
  t.columns = kCurveColumns;
  for (const auto& r : res.curve) {
    t.rows.push_back({std::to_string(r.iteration), std::to_string(r.env_steps),
                      format_double(r.wall_time_s),
                      format_double(r.episode_reward), format_double(r.horizon),
                      format_double(r.sum_phi), format_double(r.critic_loss),
                      std::to_string(r.critic_iters),
                      std::to_string(r.truncation_count),
                      std::to_string(seed)});
  }
  write_csv(t, path);
}

struct SeedRuns {
  std::vector<learn::TrainResult> results;
  std::vector<double> finals;  // non-aborted final episode rewards
  int aborted = 0;
};

SeedRuns run_seeds(const ExperimentConfig& cfg, const learn::TrainConfig& tc,
                   const std::string& dir) {
  fs::create_directories(dir);
  auto env = make_env(cfg);
  SeedRuns out;
  out.results.resize(cfg.seeds.size());
  run_parallel(int(cfg.seeds.size()), cfg.workers, [&](int i) {
    out.results[size_t(i)] = learn::train(*env, tc, cfg.seeds[size_t(i)]);
  });
  for (size_t i = 0; i < cfg.seeds.size(); ++i) {
    const auto& res = out.results[i];
    write_curve(curve_file(dir, cfg.seeds[i]), res, cfg.seeds[i]);
    if (res.aborted || res.curve.empty())
      ++out.aborted;
    else
      out.finals.push_back(res.curve.back().episode_reward);
  }
  return out;
}

void write_summary(const std::string& dir, const ExperimentConfig& cfg,
                   const SeedRuns& runs) {
  Table per_seed;
  per_seed.columns = {"seed", "status", "final_reward"};
  for (size_t i = 0; i < cfg.seeds.size(); ++i) {
    const auto& res = runs.results[i];
    bool ok = !res.aborted && !res.curve.empty();
    per_seed.rows.push_back(
        {std::to_string(cfg.seeds[i]), ok ? "ok" : "aborted",
         ok ? format_double(res.curve.back().episode_reward) : "nan"});
  }
  write_csv(per_seed, dir + "/summary.csv");

  Table agg;
  agg.columns = {"stat", "value"};
  if (!runs.finals.empty()) {
    CiResult ci = bootstrap_iqm_ci(runs.finals);
    agg.rows.push_back({"final_reward_iqm", format_double(ci.point)});
    agg.rows.push_back({"final_reward_ci_lo", format_double(ci.lo)});
    agg.rows.push_back({"final_reward_ci_hi", format_double(ci.hi)});
  }
  agg.rows.push_back({"n_seeds", std::to_string(cfg.seeds.size())});
  agg.rows.push_back({"n_aborted", std::to_string(runs.aborted)});
  write_csv(agg, dir + "/aggregate.csv");
}

}  // namespace

learn::TrainConfig ExperimentConfig::to_train_config() const {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw ConfigError("gamma must be in (0, 1]");
  if (!(td_lambda >= 0.0 && td_lambda <= 1.0))
    throw ConfigError("lambda must be in [0, 1]");
  auto a = learn::algo_from_name(algo);
  if (!a) throw ConfigError("unknown algorithm '" + algo + "'");
  learn::TrainConfig tc;
  tc.algo = *a;
  tc.horizon = horizon;
  tc.h_min = h_min;
  tc.h_max = h_max;
  tc.num_envs = num_envs;
  tc.max_windows = max_windows;
  tc.gamma = gamma;
  tc.td_lambda = td_lambda;
  tc.actor_lr = actor_lr;
  tc.critic_lr = critic_lr;
  tc.alpha_phi = alpha_phi;
  tc.contact_threshold = contact_threshold;
  tc.horizon_sign = horizon_sign;
  tc.grad_norm = grad_norm;
  tc.log_std_init = log_std_init;
  tc.actor_layers = actor_layers;
  tc.critic_layers = critic_layers;
  tc.critic_heads = critic_heads;
  tc.critic.minibatch = critic_minibatch;
  tc.critic.max_iters = critic_max_iters;
  tc.critic.tol = critic_tol;
  tc.critic.until_convergence = critic_until_convergence;
  tc.critic.fixed_iters = critic_fixed_iters;
  tc.critic.grad_norm = grad_norm;
  tc.use_critic = use_critic;
  if (stiff_norm == "frobenius")
    tc.stiff_norm = ad::JacNorm::Frobenius;
  else if (stiff_norm == "operator2")
    tc.stiff_norm = ad::JacNorm::Operator2;
  else
    throw ConfigError("stiff_norm must be 'frobenius' or 'operator2'");
  tc.record_wall_time = record_wall_time;
  return tc;
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  ExperimentConfig cfg;
  const auto& table = setters();
  for (const auto& [key, value] : j.items()) {
    auto it = table.find(key);
    if (it == table.end())
      throw ConfigError("unknown config key '" + key + "'");
    it->second(cfg, value);
  }
  apply_env_overrides(cfg);
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_echo(const ExperimentConfig& cfg) {
  return to_json(cfg).dump(2);
}

std::unique_ptr<envs::Env> make_env(const ExperimentConfig& cfg) {
  auto apply = [&cfg](envs::EnvConfig& ec, envs::ContactParams& cp) {
    if (cfg.episode_length > 0) ec.h_max = cfg.episode_length;
    if (cfg.action_scale > 0.0) ec.action_scale = cfg.action_scale;
    if (cfg.reset_noise_scale >= 0.0)
      ec.reset_noise_scale = cfg.reset_noise_scale;
    if (cfg.contact_k_n > 0.0) cp.k_n = cfg.contact_k_n;
    if (cfg.contact_k_d >= 0.0) cp.k_d = cfg.contact_k_d;
    if (cfg.contact_mu >= 0.0) cp.mu = cfg.contact_mu;
    if (cfg.contact_nu > 0.0) cp.nu = cfg.contact_nu;
  };
  if (cfg.env == "hopper") {
    auto env = std::make_unique<envs::HopperEnv>();
    apply(env->mutable_config(), env->mutable_contact());
    return env;
  }
  if (cfg.env == "ball") {
    auto env = std::make_unique<envs::BallEnv>();
    apply(env->mutable_config(), env->mutable_contact());
    return env;
  }
  if (cfg.env == "scripted") {
    return std::make_unique<envs::ScriptedStiffEnv>(
        cfg.script_stiff_from, cfg.script_period, cfg.script_high);
  }
  throw ConfigError("unknown env '" + cfg.env + "'");
}

// ---------------------------------------------------------------------------

double iqm(std::vector<double> values, double fraction) {
  if (values.empty()) throw ad::ArityError("iqm of empty input");
  std::sort(values.begin(), values.end());
  double n = double(values.size());
  double lo = n * (1.0 - fraction) / 2.0;
  double hi = n - lo;
  double acc = 0.0, wsum = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    double w = std::clamp(std::min(double(i) + 1.0, hi) -
                              std::max(double(i), lo),
                          0.0, 1.0);
    acc += w * values[i];
    wsum += w;
  }
  return acc / wsum;
}

CiResult bootstrap_iqm_ci(const std::vector<double>& values, int resamples,
                          uint64_t seed) {
  CiResult out;
  out.point = iqm(values);
  size_t n = values.size();
  std::vector<double> stats(size_t(resamples), 0.0);
  for (int r = 0; r < resamples; ++r) {
    RngStream rs(seed, 11, uint64_t(r));
    std::vector<double> sample(n, 0.0);
    for (size_t i = 0; i < n; ++i) sample[i] = values[rs.below(n)];
    stats[size_t(r)] = iqm(std::move(sample));
  }
  std::sort(stats.begin(), stats.end());
  auto pct = [&](double q) {
    double pos = q * double(resamples - 1);
    size_t i = size_t(pos);
    double f = pos - double(i);
    return i + 1 < stats.size() ? (1.0 - f) * stats[i] + f * stats[i + 1]
                                : stats[i];
  };
  out.lo = pct(0.025);
  out.hi = pct(0.975);
  return out;
}

// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

void write_csv(const Table& t, const std::string& path) {
  std::string s;
  for (size_t c = 0; c < t.columns.size(); ++c) {
    if (c) s += ',';
    s += t.columns[c];
  }
  s += '\n';
  for (const auto& row : t.rows) {
    for (size_t c = 0; c < row.size(); ++c) {
      if (c) s += ',';
      s += row[c];
    }
    s += '\n';
  }
  write_text(path, s);
}

Table read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot read " + path);
  Table t;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (header) {
      t.columns = cells;
      header = false;
    } else {
      t.rows.push_back(cells);
    }
  }
  return t;
}

void emit_svg_chart(const std::vector<Series>& series, const ChartOptions& opt,
                    const std::string& path) {
  if (series.empty()) throw ad::ArityError("chart needs at least one series");
  auto tx = [&](double x) { return opt.log_x ? std::log10(x) : x; };
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      double x = tx(s.x[i]), y = s.y[i];
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;

  const double ml = 60, mr = 20, mt = 20, mb = 45;
  double pw = opt.width - ml - mr, ph = opt.height - mt - mb;
  auto px = [&](double x) { return ml + (tx(x) - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) {
    return mt + (1.0 - (y - ymin) / (ymax - ymin)) * ph;
  };
  auto f2 = [](double v) {
    char b[32];
    std::snprintf(b, sizeof(b), "%.2f", v);
    return std::string(b);
  };
  auto f4 = [](double v) {
    char b[40];
    std::snprintf(b, sizeof(b), "%.4g", v);
    return std::string(b);
  };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
       std::to_string(opt.width) + "\" height=\"" +
       std::to_string(opt.height) + "\" viewBox=\"0 0 " +
       std::to_string(opt.width) + " " + std::to_string(opt.height) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  s += "<line x1=\"" + f2(ml) + "\" y1=\"" + f2(mt + ph) + "\" x2=\"" +
       f2(ml + pw) + "\" y2=\"" + f2(mt + ph) +
       "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  s += "<line x1=\"" + f2(ml) + "\" y1=\"" + f2(mt) + "\" x2=\"" + f2(ml) +
       "\" y2=\"" + f2(mt + ph) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  // axis labels and extents
  s += "<text x=\"" + f2(ml + pw / 2) + "\" y=\"" +
       f2(double(opt.height) - 8) +
       "\" font-size=\"13\" text-anchor=\"middle\">" + opt.x_label +
       (opt.log_x ? " (log10)" : "") + "</text>\n";
  s += "<text x=\"14\" y=\"" + f2(mt + ph / 2) +
       "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
       f2(mt + ph / 2) + ")\">" + opt.y_label + "</text>\n";
  s += "<text x=\"" + f2(ml) + "\" y=\"" + f2(mt + ph + 16) +
       "\" font-size=\"11\">" + f4(opt.log_x ? std::pow(10, xmin) : xmin) +
       "</text>\n";
  s += "<text x=\"" + f2(ml + pw) + "\" y=\"" + f2(mt + ph + 16) +
       "\" font-size=\"11\" text-anchor=\"end\">" +
       f4(opt.log_x ? std::pow(10, xmax) : xmax) + "</text>\n";
  s += "<text x=\"" + f2(ml - 4) + "\" y=\"" + f2(mt + ph) +
       "\" font-size=\"11\" text-anchor=\"end\">" + f4(ymin) + "</text>\n";
  s += "<text x=\"" + f2(ml - 4) + "\" y=\"" + f2(mt + 10) +
       "\" font-size=\"11\" text-anchor=\"end\">" + f4(ymax) + "</text>\n";

  for (size_t k = 0; k < series.size(); ++k) {
    const auto& ser = series[k];
    std::string pts;
    for (size_t i = 0; i < ser.x.size(); ++i) {
      double x = tx(ser.x[i]);
      if (!std::isfinite(x) || !std::isfinite(ser.y[i])) continue;
      if (!pts.empty()) pts += ' ';
      pts += f2(px(ser.x[i])) + "," + f2(py(ser.y[i]));
    }
    const char* color = palette[k % 6];
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
         "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    s += "<text x=\"" + f2(ml + pw - 4) + "\" y=\"" +
         f2(mt + 14 + 14 * double(k)) + "\" font-size=\"12\" fill=\"" + color +
         "\" text-anchor=\"end\">" + ser.name + "</text>\n";
  }
  s += "</svg>\n";
  write_text(path, s);
}

// ---------------------------------------------------------------------------

int run_heaviside_study(const ExperimentConfig& cfg) {
  write_echo(cfg);
  double truth = est::heaviside_true_grad(cfg.theta, cfg.nu, cfg.sigma);
  est::HeavisideProblem prob(cfg.nu, cfg.sigma);
  std::vector<double> theta = {cfg.theta};

  Table t;
  t.columns = {"method", "N", "rep", "abs_error"};
  std::map<std::pair<std::string, int>, std::vector<double>> errs;
  for (int n : cfg.n_grid) {
    for (int rep = 0; rep < cfg.reps; ++rep) {
      uint64_t seed = RngStream(4242, uint64_t(n), uint64_t(rep)).next_u64();
      est::GradientReport f = est::fobg(prob, theta, n, seed);
      est::GradientReport z = est::zobg(prob, theta, n, seed);
      double ef = std::abs(f.mean_grad[0] - truth);
      double ez = std::abs(z.mean_grad[0] - truth);
      t.rows.push_back({"fobg", std::to_string(n), std::to_string(rep),
                        format_double(ef)});
      t.rows.push_back({"zobg", std::to_string(n), std::to_string(rep),
                        format_double(ez)});
      errs[{"fobg", n}].push_back(ef);
      errs[{"zobg", n}].push_back(ez);
    }
  }
  write_csv(t, cfg.out_dir + "/heaviside.csv");

  Series sf{"fobg", {}, {}}, sz{"zobg", {}, {}};
  for (int n : cfg.n_grid) {
    sf.x.push_back(double(n));
    sf.y.push_back(median(errs[{"fobg", n}]));
    sz.x.push_back(double(n));
    sz.y.push_back(median(errs[{"zobg", n}]));
  }
  ChartOptions opt;
  opt.x_label = "N";
  opt.y_label = "median abs_error";
  opt.log_x = true;
  emit_svg_chart({sf, sz}, opt, cfg.out_dir + "/heaviside.svg");
  return 0;
}

int run_ball_study(const ExperimentConfig& cfg) {
  write_echo(cfg);
  envs::BallEnv base;
  if (cfg.contact_k_n > 0.0) base.mutable_contact().k_n = cfg.contact_k_n;
  if (cfg.contact_k_d >= 0.0) base.mutable_contact().k_d = cfg.contact_k_d;
  if (cfg.contact_mu >= 0.0) base.mutable_contact().mu = cfg.contact_mu;
  if (cfg.contact_nu > 0.0) base.mutable_contact().nu = cfg.contact_nu;

  struct Row {
    double b, ef, ez, cf;
  };
  std::vector<Row> rows(size_t(cfg.ball_h));
  std::vector<double> theta = {cfg.ball_theta};

  run_parallel(cfg.ball_h, cfg.workers, [&](int i) {
    int h = i + 1;
    est::BallProblem prob(base, h, cfg.ball_sigma);
    std::vector<double> bs, efs, ezs, cfs;
    for (int s = 0; s < cfg.ball_seeds; ++s) {
      uint64_t seed = RngStream(777, uint64_t(h), uint64_t(s)).next_u64();
      double cfrac = 0.0;
      est::GradientReport f = est::fobg(prob, theta, cfg.ball_n, seed, &cfrac);
      est::GradientReport z = est::zobg(prob, theta, cfg.ball_n, seed);
      bs.push_back(est::sample_error(f, z));
      efs.push_back(f.esnr);
      ezs.push_back(z.esnr);
      cfs.push_back(cfrac);
    }
    rows[size_t(i)] = {median(bs), median(efs), median(ezs), median(cfs)};
  });

  Table t;
  t.columns = {"h", "B", "esnr_fobg", "esnr_zobg", "contact_fraction"};
  Series sb{"B", {}, {}};
  for (int i = 0; i < cfg.ball_h; ++i) {
    const Row& r = rows[size_t(i)];
    t.rows.push_back({std::to_string(i + 1), format_double(r.b),
                      format_double(r.ef), format_double(r.ez),
                      format_double(r.cf)});
    sb.x.push_back(double(i + 1));
    sb.y.push_back(r.b);
  }
  write_csv(t, cfg.out_dir + "/ball.csv");
  ChartOptions opt;
  opt.x_label = "h";
  opt.y_label = "sample error B";
  emit_svg_chart({sb}, opt, cfg.out_dir + "/ball.svg");
  return 0;
}

int run_training(const ExperimentConfig& cfg) {
  write_echo(cfg);
  SeedRuns runs = run_seeds(cfg, cfg.to_train_config(), cfg.out_dir);
  write_summary(cfg.out_dir, cfg, runs);
  return runs.aborted;
}

int run_horizon_ablation(const ExperimentConfig& cfg) {
  write_echo(cfg);
  Table t;
  t.columns = {"h", "iqm", "ci_lo", "ci_hi", "variance", "n_aborted"};
  int total_aborted = 0;
  for (int h : cfg.h_grid) {
    ExperimentConfig sub = cfg;
    sub.algo = "shac";
    sub.horizon = h;
    learn::TrainConfig tc = sub.to_train_config();
    SeedRuns runs = run_seeds(sub, tc, cfg.out_dir + "/h" + std::to_string(h));
    total_aborted += runs.aborted;
    double var = 0.0;
    if (runs.finals.size() >= 2) {
      double m = 0.0;
      for (double v : runs.finals) m += v;
      m /= double(runs.finals.size());
      for (double v : runs.finals) var += (v - m) * (v - m);
      var /= double(runs.finals.size() - 1);
    }
    if (runs.finals.empty()) {
      t.rows.push_back({std::to_string(h), "nan", "nan", "nan", "nan",
                        std::to_string(runs.aborted)});
    } else {
      CiResult ci = bootstrap_iqm_ci(runs.finals);
      t.rows.push_back({std::to_string(h), format_double(ci.point),
                        format_double(ci.lo), format_double(ci.hi),
                        format_double(var), std::to_string(runs.aborted)});
    }
  }
  write_csv(t, cfg.out_dir + "/horizon_ablation.csv");
  return total_aborted;
}

int run_component_ablation(const ExperimentConfig& cfg) {
  write_echo(cfg);
  struct Variant {
    std::string name;
    std::function<void(ExperimentConfig&)> tweak;
  };
  std::vector<Variant> variants = {
      {"shac_baseline",
       [](ExperimentConfig& c) {
         c.algo = "shac";
         c.critic_heads = 1;
         c.critic_until_convergence = false;
       }},
      {"shac_h_conv",
       [](ExperimentConfig& c) {
         c.algo = "shac";
         c.critic_heads = 1;
         c.critic_until_convergence = false;
         c.horizon = c.h_converged;
       }},
      {"adaptive_objective",
       [](ExperimentConfig& c) {
         c.algo = "ahac";
         c.critic_heads = 1;
         c.critic_until_convergence = false;
         c.h_min = c.horizon;  // multipliers adapt, horizon frozen
         c.h_max = c.horizon;
       }},
      {"adaptive_horizon",
       [](ExperimentConfig& c) {
         c.algo = "ahac";
         c.critic_heads = 1;
         c.critic_until_convergence = false;
       }},
      {"iterative_critic",
       [](ExperimentConfig& c) {
         c.algo = "shac";
         c.critic_heads = 1;
         c.critic_until_convergence = true;
       }},
      {"double_critic",
       [](ExperimentConfig& c) {
         c.algo = "shac";
         c.critic_heads = 2;
         c.critic_until_convergence = false;
       }},
      {"ahac",
       [](ExperimentConfig& c) {
         c.algo = "ahac";
         c.critic_heads = 2;
         c.critic_until_convergence = true;
       }},
  };

  Table t;
  t.columns = {"variant", "iqm", "ci_lo", "ci_hi", "n_aborted"};
  int total_aborted = 0;
  for (const auto& v : variants) {
    ExperimentConfig sub = cfg;
    v.tweak(sub);
    learn::TrainConfig tc = sub.to_train_config();
    SeedRuns runs = run_seeds(sub, tc, cfg.out_dir + "/" + v.name);
    total_aborted += runs.aborted;
    if (runs.finals.empty()) {
      t.rows.push_back({v.name, "nan", "nan", "nan",
                        std::to_string(runs.aborted)});
    } else {
      CiResult ci = bootstrap_iqm_ci(runs.finals);
      t.rows.push_back({v.name, format_double(ci.point), format_double(ci.lo),
                        format_double(ci.hi), std::to_string(runs.aborted)});
    }
  }
  write_csv(t, cfg.out_dir + "/component_ablation.csv");
  return total_aborted;
}

Table summarize_curves(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string name = e.path().filename().string();
    if (name.rfind("curve_seed", 0) == 0 && name.size() > 4 &&
        name.substr(name.size() - 4) == ".csv")
      files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  std::vector<double> finals;
  for (const auto& f : files) {
    Table t = read_csv(f);
    if (t.rows.empty()) continue;
    auto it = std::find(t.columns.begin(), t.columns.end(), "episode_reward");
    if (it == t.columns.end()) continue;
    size_t col = size_t(it - t.columns.begin());
    finals.push_back(std::stod(t.rows.back()[col]));
  }
  Table out;
  out.columns = {"stat", "value"};
  if (!finals.empty()) {
    CiResult ci = bootstrap_iqm_ci(finals);
    out.rows.push_back({"final_reward_iqm", format_double(ci.point)});
    out.rows.push_back({"final_reward_ci_lo", format_double(ci.lo)});
    out.rows.push_back({"final_reward_ci_hi", format_double(ci.hi)});
  }
  out.rows.push_back({"n_curves", std::to_string(finals.size())});
  return out;
}

}  // namespace diffrl::harness
