#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "diffrl/harness.hpp"

namespace {

using diffrl::harness::ExperimentConfig;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string algo;
  std::string env;
  std::vector<uint64_t> seeds;
  int64_t seed = -1;
  int workers = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--algo", f.algo, "algorithm id");
  cmd->add_option("--env", f.env, "environment id");
  cmd->add_option("--seeds", f.seeds, "seed list")->delimiter(',');
  cmd->add_option("--seed", f.seed, "single seed");
  cmd->add_option("--workers", f.workers, "worker thread count");
}

ExperimentConfig resolve(const CommonFlags& f, const std::string& experiment) {
  ExperimentConfig cfg = f.config_path.empty()
                             ? diffrl::harness::parse_config("{}")
                             : diffrl::harness::load_config_file(f.config_path);
  cfg.experiment = experiment;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (!f.algo.empty()) cfg.algo = f.algo;
  if (!f.env.empty()) cfg.env = f.env;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (f.seed >= 0) cfg.seeds = {uint64_t(f.seed)};
  if (f.workers > 0) cfg.workers = f.workers;
  return cfg;
}

// 0 success, 2 config error, 3 all seeds aborted numerically.
int guard(const std::function<int()>& body, size_t n_seeds) {
  try {
    int aborted = body();
    if (n_seeds > 0 && size_t(aborted) >= n_seeds) {
      std::cerr << "error: all seeds aborted numerically\n";
      return 3;
    }
    return 0;
  } catch (const diffrl::harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const diffrl::harness::IOError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable-simulation policy learning lab"};
  app.require_subcommand(1);

  CommonFlags heav_f, ball_f, train_f, abh_f, abc_f;
  auto* heav = app.add_subcommand("heaviside", "gradient-estimator study on the soft Heaviside problem");
  add_common(heav, heav_f);
  auto* ball = app.add_subcommand("ball", "sample-error/ESNR study on the ball environment");
  add_common(ball, ball_f);
  auto* train = app.add_subcommand("train", "train a policy and emit learning curves");
  add_common(train, train_f);
  auto* abh = app.add_subcommand("ablate-horizon", "sweep the rollout horizon");
  add_common(abh, abh_f);
  auto* abc = app.add_subcommand("ablate-components", "run the component ablation variants");
  add_common(abc, abc_f);

  std::string plot_in, plot_out, plot_x, plot_y;
  bool plot_logx = false;
  auto* plot = app.add_subcommand("plot", "render a CSV column pair as an SVG line chart");
  plot->add_option("--config", plot_in, "input CSV file")->required();
  plot->add_option("--out", plot_out, "output SVG file")->required();
  plot->add_option("--x", plot_x, "x column name")->required();
  plot->add_option("--y", plot_y, "y column name")->required();
  plot->add_flag("--log-x", plot_logx, "log-scaled x axis");

  std::string summ_dir;
  auto* summ = app.add_subcommand("summarize", "recompute the final-reward summary from curve files");
  summ->add_option("--out", summ_dir, "directory containing curve_seed*.csv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*heav) {
      ExperimentConfig cfg = resolve(heav_f, "heaviside");
      return guard([&] { return diffrl::harness::run_heaviside_study(cfg); }, 0);
    }
    if (*ball) {
      ExperimentConfig cfg = resolve(ball_f, "ball");
      return guard([&] { return diffrl::harness::run_ball_study(cfg); }, 0);
    }
    if (*train) {
      ExperimentConfig cfg = resolve(train_f, "train");
      return guard([&] { return diffrl::harness::run_training(cfg); },
                   cfg.seeds.size());
    }
    if (*abh) {
      ExperimentConfig cfg = resolve(abh_f, "ablate-horizon");
      return guard([&] { return diffrl::harness::run_horizon_ablation(cfg); },
                   cfg.seeds.size() * std::max<size_t>(cfg.h_grid.size(), 1));
    }
    if (*abc) {
      ExperimentConfig cfg = resolve(abc_f, "ablate-components");
      return guard([&] { return diffrl::harness::run_component_ablation(cfg); },
                   cfg.seeds.size() * 7);
    }
    if (*plot) {
      diffrl::harness::Table t = diffrl::harness::read_csv(plot_in);
      auto col = [&](const std::string& name) {
        for (size_t i = 0; i < t.columns.size(); ++i)
          if (t.columns[i] == name) return i;
        throw diffrl::harness::ConfigError("no column '" + name + "' in " + plot_in);
      };
      size_t cx = col(plot_x), cy = col(plot_y);
      diffrl::harness::Series s{plot_y, {}, {}};
      for (const auto& row : t.rows) {
        s.x.push_back(std::stod(row[cx]));
        s.y.push_back(std::stod(row[cy]));
      }
      diffrl::harness::ChartOptions opt;
      opt.x_label = plot_x;
      opt.y_label = plot_y;
      opt.log_x = plot_logx;
      diffrl::harness::emit_svg_chart({s}, opt, plot_out);
      return 0;
    }
    if (*summ) {
      diffrl::harness::Table t = diffrl::harness::summarize_curves(summ_dir);
      for (const auto& row : t.rows)
        std::cout << row[0] << "," << row[1] << "\n";
      return 0;
    }
  } catch (const diffrl::harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
