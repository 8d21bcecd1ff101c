// Batch front end: dataset generation, MFVI / TSVD / RLM runs, VINet
// training and inference, and report emission.
//
// Exit codes: 0 success, 2 configuration error, 3 solver failure,
// 4 threshold failure in `bench --assert-median-relerr`.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "vinet/classical.hpp"
#include "vinet/data.hpp"
#include "vinet/errors.hpp"
#include "vinet/mfvi.hpp"
#include "vinet/net/train.hpp"
#include "vinet/prior.hpp"
#include "vinet/report.hpp"

using namespace vinet;
namespace fs = std::filesystem;

namespace {

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

std::vector<int> parse_grids(const std::string& grids_flag, int fallback) {
  std::vector<int> out;
  if (grids_flag.empty()) {
    out.push_back(fallback);
    return out;
  }
  std::size_t pos = 0;
  while (pos < grids_flag.size()) {
    std::size_t comma = grids_flag.find(',', pos);
    if (comma == std::string::npos) comma = grids_flag.size();
    out.push_back(std::stoi(grids_flag.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// The prior handed to MFVI: the generating statistics when available
// (elliptic GRF), otherwise the spectral prior from the config.
prior::GaussianMeasure mfvi_prior(const data::DatasetConfig& dcfg, const nlohmann::json& mc,
                                  const grid::Grid& g) {
  const std::string kind = mc.value("prior", dcfg.experiment == "elliptic" ? "grf" : "spectral");
  if (kind == "grf") {
    const grid::GridFunction mean =
        grid::sample(g, [&](double, double) { return dcfg.grf_mean; });
    const grid::GridFunction a =
        grid::sample(g, [&](double, double) { return dcfg.grf_alpha_amp; });
    auto cov = std::make_shared<prior::StencilCovariance>(
        a, dcfg.grf_alpha_amp, dcfg.grf_alpha_amp * 0.5, dcfg.grf_alpha_amp * 2.0,
        dcfg.grf_theta_x, dcfg.grf_theta_y);
    return prior::GaussianMeasure(mean, cov);
  }
  const double c = mc.value("c", 5.0);
  const double delta = mc.value("delta", 0.2);
  const double mean_v = mc.value("mean", 0.0);
  return prior::GaussianMeasure(grid::sample(g, [&](double, double) { return mean_v; }),
                                std::make_shared<prior::SpectralCovariance>(g, c, delta));
}

bayes::IGParams hyperprior(const nlohmann::json& mc, std::size_t nd) {
  const double a0 = mc.contains("alpha0") ? mc.at("alpha0").get<double>()
                                          : mc.value("ig0_alpha", 2.0);
  const double b0 = mc.contains("beta0") ? mc.at("beta0").get<double>()
                                         : mc.value("ig0_beta", 0.01);
  return bayes::IGParams::constant(a0, b0, nd);
}

struct MethodResult {
  grid::GridFunction estimate;
  double seconds = 0.0;
};

report::RunReport run_items(const std::string& method, int grid_n,
                            const data::Dataset& ds, const nlohmann::json& cfg_for_hash,
                            const std::function<MethodResult(const data::Item&)>& run,
                            const std::string& out_dir, double max_fail_fraction = 0.1) {
  report::RunReport rep;
  rep.method = method;
  rep.grid_n = grid_n;
  rep.config_hash = report::config_hash(cfg_for_hash);
  std::size_t failures = 0;
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    try {
      const MethodResult r = run(ds.items[i]);
      rep.relative_errors.push_back(report::relative_error(r.estimate, ds.items[i].u_truth));
      rep.seconds.push_back(r.seconds);
      if (i == 0 && !out_dir.empty())
        report::write_field_images(r.estimate,
                                   out_dir + "/" + method + "_n" + std::to_string(grid_n) +
                                       "_item0_mean");
    } catch (const SolverError& e) {
      ++failures;
      std::fprintf(stderr, "[%s] item %zu failed: %s\n", method.c_str(), i, e.what());
      if (failures > max_fail_fraction * ds.items.size())
        throw SolverError(method + ": more than 10% of items failed");
    }
  }
  return rep;
}

int cmd_datagen(const std::string& config, std::uint64_t seed, const std::string& out) {
  const auto j = load_config(config);
  data::DatasetConfig dcfg = data::DatasetConfig::from_json(
      j.contains("dataset") ? j.at("dataset") : j);
  const data::Dataset ds = data::build_dataset(dcfg, seed);
  data::save_dataset(ds, out);
  std::printf("datagen: wrote %zu items (experiment=%s, fine=%d, inv=%d) to %s\n",
              ds.items.size(), dcfg.experiment.c_str(), dcfg.fine_n, dcfg.inv_n, out.c_str());
  return 0;
}

int cmd_tsvd(const std::string& config, const std::string& dataset, const std::string& out,
             const std::string& grids_flag, double lambda_rel) {
  const auto j = load_config(config);
  const auto tc = j.value("tsvd", nlohmann::json::object());
  const data::Dataset ds = data::load_dataset(dataset);
  fs::create_directories(out);
  const int rank = tc.value("rank", 80);
  const int oversample = tc.value("oversample", 10);
  if (lambda_rel <= 0.0) lambda_rel = tc.value("lambda_rel", 1e-3);

  std::vector<report::RunReport> reports;
  for (int n : parse_grids(grids_flag, ds.config.inv_n)) {
    auto H = data::make_forward(ds.config, n);
    const auto action = [&](const grid::GridFunction& f) { return H->adjoint(H->apply(f)); };
    Rng rng(ds.master_seed ^ 0x7351u);
    const auto eig =
        classical::randomized_eig(action, H->domain_grid(), rank, oversample, rng);
    const double cut = lambda_rel * eig.values[0];
    auto rep = run_items(
        "tsvd", n, ds, tc,
        [&](const data::Item& item) {
          const double t0 = now_seconds();
          MethodResult r{classical::tsvd_invert(item.d_noisy, eig, *H, cut), 0.0};
          r.seconds = now_seconds() - t0;
          return r;
        },
        out);
    reports.push_back(std::move(rep));
    std::printf("tsvd n=%d lambda_rel=%g mean relerr %.4f median %.4f\n", n, lambda_rel,
                reports.back().mean_error(), reports.back().median_error());
  }
  report::write_report_csv(reports, out + "/tsvd_report.csv");
  nlohmann::json out_json = nlohmann::json::array();
  for (const auto& r : reports) out_json.push_back(r.to_json());
  std::ofstream(out + "/tsvd_report.json") << out_json.dump(2) << "\n";
  return 0;
}

int cmd_rlm(const std::string& config, const std::string& dataset, const std::string& out,
            const std::string& grids_flag, int inner, const std::string& kappas_flag) {
  const auto j = load_config(config);
  const auto rc = j.value("rlm", nlohmann::json::object());
  const data::Dataset ds = data::load_dataset(dataset);
  if (ds.config.experiment != "helmholtz") throw ConfigError("rlm: needs a helmholtz dataset");
  fs::create_directories(out);

  classical::RlmConfig cfg;
  cfg.kappas = rc.value("kappas", ds.config.kappas);
  if (!kappas_flag.empty()) {
    cfg.kappas.clear();
    std::size_t pos = 0;
    while (pos < kappas_flag.size()) {
      std::size_t c2 = kappas_flag.find(',', pos);
      if (c2 == std::string::npos) c2 = kappas_flag.size();
      cfg.kappas.push_back(std::stod(kappas_flag.substr(pos, c2 - pos)));
      pos = c2 + 1;
    }
  }
  cfg.inner = inner > 0 ? inner : rc.value("inner", 5);

  std::vector<report::RunReport> reports;
  for (int n : parse_grids(grids_flag, ds.config.inv_n)) {
    data::DatasetConfig dc = ds.config;
    dc.inv_n = n;
    auto H = std::dynamic_pointer_cast<forward::HelmholtzForward>(data::make_inv_forward(dc));
    auto rep = run_items(
        "rlm", n, ds, rc,
        [&](const data::Item& item) {
          const double t0 = now_seconds();
          // restrict the data to the schedule
          std::vector<double> d;
          for (double k : cfg.kappas) {
            std::size_t pos = 0;
            for (; pos < ds.config.kappas.size(); ++pos)
              if (ds.config.kappas[pos] == k) break;
            if (pos == ds.config.kappas.size())
              throw ConfigError("rlm: schedule kappa missing from the dataset");
            const std::size_t bs = 2 * static_cast<std::size_t>(ds.config.boundary_sensors);
            d.insert(d.end(), item.d_noisy.begin() + pos * bs,
                     item.d_noisy.begin() + (pos + 1) * bs);
          }
          const auto res = classical::rlm_invert(d, *H, cfg);
          MethodResult r{res.estimate, now_seconds() - t0};
          return r;
        },
        out);
    reports.push_back(std::move(rep));
    std::printf("rlm n=%d mean relerr %.4f median %.4f\n", n, reports.back().mean_error(),
                reports.back().median_error());
  }
  report::write_report_csv(reports, out + "/rlm_report.csv");
  nlohmann::json out_json = nlohmann::json::array();
  for (const auto& r : reports) out_json.push_back(r.to_json());
  std::ofstream(out + "/rlm_report.json") << out_json.dump(2) << "\n";
  return 0;
}

int cmd_mfvi(const std::string& config, const std::string& dataset, const std::string& out,
             const std::string& grids_flag, int item_limit) {
  const auto j = load_config(config);
  const auto mc = j.value("mfvi", nlohmann::json::object());
  data::Dataset ds = data::load_dataset(dataset);
  fs::create_directories(out);
  if (item_limit > 0 && static_cast<std::size_t>(item_limit) < ds.items.size())
    ds.items.resize(item_limit);

  mfvi::MfviOptions opt;
  opt.tol = mc.value("tol", 1e-3);
  opt.k_max = mc.value("k_max", 50);

  std::vector<report::RunReport> reports;
  for (int n : parse_grids(grids_flag, ds.config.inv_n)) {
    data::DatasetConfig dc = ds.config;
    dc.inv_n = n;
    auto H = data::make_inv_forward(dc);
    const prior::GaussianMeasure pr = mfvi_prior(ds.config, mc, H->domain_grid());
    const auto ig0 = hyperprior(mc, H->data_dim());

    bool wrote_bundle = false;
    auto rep = run_items(
        "mfvi", n, ds, mc,
        [&](const data::Item& item) {
          const double t0 = now_seconds();
          const auto res = mfvi::run_mfvi(H, item.d_noisy, pr, ig0, opt);
          MethodResult r{res.post.mean, now_seconds() - t0};
          if (!wrote_bundle) {
            wrote_bundle = true;
            const std::string stem = out + "/mfvi_n" + std::to_string(n) + "_item0";
            grid::save(res.post.mean, stem + "_mean");
            const auto var = mfvi::posterior_diag_variance(res.post);
            grid::save(var, stem + "_variance");
            report::write_field_images(var, stem + "_variance");
            nlohmann::json ab{{"alpha", res.ig.alpha}, {"beta", res.ig.beta}};
            std::ofstream(stem + "_ig.json") << ab.dump(2) << "\n";
            std::ofstream tr(stem + "_trace.csv");
            tr << "iter,mean_change,sigma_change,seconds\n";
            for (std::size_t k = 0; k < res.trace.mean_change.size(); ++k)
              tr << k << ',' << res.trace.mean_change[k] << ',' << res.trace.sigma_change[k]
                 << ',' << res.trace.seconds[k] << "\n";
          }
          return r;
        },
        out);
    reports.push_back(std::move(rep));
    std::printf("mfvi n=%d mean relerr %.4f median %.4f median s/item %.3f\n", n,
                reports.back().mean_error(), reports.back().median_error(),
                reports.back().median_seconds());
  }
  report::write_report_csv(reports, out + "/mfvi_report.csv");
  nlohmann::json out_json = nlohmann::json::array();
  for (const auto& r : reports) out_json.push_back(r.to_json());
  std::ofstream(out + "/mfvi_report.json") << out_json.dump(2) << "\n";
  return 0;
}

int cmd_train(const std::string& config, const std::string& dataset, const std::string& out) {
  const auto j = load_config(config);
  const data::Dataset ds = data::load_dataset(dataset);
  fs::create_directories(out);
  net::VINetConfig mcfg = net::VINetConfig::from_json(j.value("model", nlohmann::json::object()));
  net::TrainConfig tcfg = net::TrainConfig::from_json(j.value("train", nlohmann::json::object()));

  net::VINet model(mcfg, ds.config);
  const auto trace = net::train(model, ds, tcfg);
  model.save(out + "/model");

  std::ofstream tr(out + "/train_trace.csv");
  tr << "stage,epoch,loss\n";
  for (std::size_t e = 0; e < trace.stage1_epoch_loss.size(); ++e)
    tr << "1," << e << ',' << trace.stage1_epoch_loss[e] << "\n";
  for (std::size_t e = 0; e < trace.stage2_epoch_loss.size(); ++e)
    tr << "2," << e << ',' << trace.stage2_epoch_loss[e] << "\n";
  if (!trace.stage2_epoch_loss.empty())
    std::printf("train: stage2 loss %f -> %f\n", trace.stage2_epoch_loss.front(),
                trace.stage2_epoch_loss.back());
  return 0;
}

int cmd_infer(const std::string& model_base, const std::string& dataset, int item,
              const std::string& out, const std::string& grids_flag) {
  std::ifstream mf(model_base + ".json");
  if (!mf) throw ConfigError("infer: missing model manifest " + model_base + ".json");
  const nlohmann::json manifest = nlohmann::json::parse(mf);
  const auto mcfg = net::VINetConfig::from_json(manifest.at("config"));
  const auto dcfg = data::DatasetConfig::from_json(manifest.at("data_config"));
  net::VINet model(mcfg, dcfg);
  model.load(model_base);

  const data::Dataset ds = data::load_dataset(dataset);
  if (item < 0 || static_cast<std::size_t>(item) >= ds.items.size())
    throw ConfigError("infer: item index out of range");
  fs::create_directories(out);

  for (int n : parse_grids(grids_flag, dcfg.inv_n)) {
    const double t0 = now_seconds();
    const auto summary = net::infer(model, ds.items[item].d_noisy, grid::unit_square(n));
    const double dt = now_seconds() - t0;
    const std::string stem = out + "/infer_n" + std::to_string(n);
    grid::save(summary.mean, stem + "_mean");
    grid::save(summary.a, stem + "_a");
    grid::save(summary.pointwise_std, stem + "_std");
    report::write_field_images(summary.mean, stem + "_mean");
    report::write_field_images(summary.pointwise_std, stem + "_std");
    nlohmann::json meta{{"seconds", dt},
                        {"alpha", summary.sigma_alpha},
                        {"beta", summary.sigma_beta},
                        {"noise_variance", summary.noise_variance_estimate},
                        {"relative_error",
                         report::relative_error(summary.mean, ds.items[item].u_truth)}};
    std::ofstream(stem + "_summary.json") << meta.dump(2) << "\n";
    std::printf("infer n=%d relerr %.4f (%.3f s)\n", n,
                meta.at("relative_error").get<double>(), dt);
  }
  return 0;
}

int cmd_bench(const std::string& config, const std::string& dataset,
              const std::string& model_base, const std::string& out,
              const std::string& grids_flag, const std::string& methods_flag,
              double assert_median) {
  const auto j = load_config(config);
  const data::Dataset ds = data::load_dataset(dataset);
  fs::create_directories(out);
  std::vector<report::RunReport> reports;

  std::vector<std::string> methods;
  {
    std::size_t pos = 0;
    while (pos < methods_flag.size()) {
      std::size_t comma = methods_flag.find(',', pos);
      if (comma == std::string::npos) comma = methods_flag.size();
      methods.push_back(methods_flag.substr(pos, comma - pos));
      pos = comma + 1;
    }
  }
  if (methods.empty()) throw ConfigError("bench: no methods given");

  for (const std::string& method : methods) {
    if (method == "tsvd") {
      const auto tc = j.value("tsvd", nlohmann::json::object());
      const std::vector<double> levels =
          tc.value("levels", std::vector<double>{2.0, 1.5, 1.0, 0.5, 0.1});
      const double base = tc.value("level_base", 1e-3);
      for (int n : parse_grids(grids_flag, ds.config.inv_n)) {
        auto H = data::make_forward(ds.config, n);
        const auto action = [&](const grid::GridFunction& f) {
          return H->adjoint(H->apply(f));
        };
        Rng rng(ds.master_seed ^ 0x7351u);
        const auto eig = classical::randomized_eig(action, H->domain_grid(),
                                                   tc.value("rank", 80),
                                                   tc.value("oversample", 10), rng);
        for (double level : levels) {
          const double cut = level * base * eig.values[0];
          auto rep = run_items(
              "tsvd_l" + std::to_string(level), n, ds, tc,
              [&](const data::Item& item) {
                const double t0 = now_seconds();
                MethodResult r{classical::tsvd_invert(item.d_noisy, eig, *H, cut), 0.0};
                r.seconds = now_seconds() - t0;
                return r;
              },
              out);
          std::printf("bench tsvd n=%d level=%.2f mean relerr %.4f\n", n, level,
                      rep.mean_error());
          reports.push_back(std::move(rep));
        }
      }
    } else if (method == "vinet") {
      std::ifstream mf(model_base + ".json");
      if (!mf) throw ConfigError("bench: vinet method needs --model");
      const nlohmann::json manifest = nlohmann::json::parse(mf);
      net::VINet model(net::VINetConfig::from_json(manifest.at("config")),
                       data::DatasetConfig::from_json(manifest.at("data_config")));
      model.load(model_base);
      for (int n : parse_grids(grids_flag, ds.config.inv_n)) {
        auto rep = run_items(
            "vinet", n, ds, manifest.at("config"),
            [&](const data::Item& item) {
              const double t0 = now_seconds();
              const auto s = net::infer(model, item.d_noisy, grid::unit_square(n));
              return MethodResult{s.mean, now_seconds() - t0};
            },
            out);
        std::printf("bench vinet n=%d mean relerr %.4f median s/item %.4f\n", n,
                    rep.mean_error(), rep.median_seconds());
        reports.push_back(std::move(rep));
      }
    } else if (method == "mfvi" || method == "rlm") {
      throw ConfigError("bench: use the dedicated '" + method + "' subcommand");
    } else {
      throw ConfigError("bench: unknown method '" + method + "'");
    }
  }

  report::write_report_csv(reports, out + "/bench_report.csv");
  nlohmann::json out_json = nlohmann::json::array();
  for (const auto& r : reports) out_json.push_back(r.to_json());
  std::ofstream(out + "/bench_report.json") << out_json.dump(2) << "\n";

  if (assert_median > 0.0) {
    double best = 1e300;
    for (const auto& r : reports) best = std::min(best, r.median_error());
    if (!(best <= assert_median)) {
      std::fprintf(stderr, "bench --assert: best median relerr %.4f > %.4f\n", best,
                   assert_median);
      return 4;
    }
  }
  return 0;
}

int cmd_report(const std::string& in_dir, const std::string& out) {
  std::vector<report::RunReport> reports;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    if (entry.path().extension() != ".json") continue;
    if (entry.path().filename().string().find("report") == std::string::npos) continue;
    std::ifstream f(entry.path());
    nlohmann::json arr = nlohmann::json::parse(f);
    if (!arr.is_array()) continue;
    for (const auto& rj : arr) {
      report::RunReport r;
      r.method = rj.value("method", "?");
      r.grid_n = rj.value("grid", 0);
      r.config_hash = rj.value("config_hash", "");
      r.relative_errors = rj.value("relative_errors", std::vector<double>{});
      r.seconds = rj.value("seconds", std::vector<double>{});
      reports.push_back(std::move(r));
    }
  }
  report::write_report_csv(reports, out);
  std::printf("report: merged %zu runs into %s\n", reports.size(), out.c_str());
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale Bayesian inversion workbench"};
  app.require_subcommand(1);

  std::string config, out = "out", dataset, model_base, grids, methods = "tsvd";
  std::uint64_t seed = 0;
  int item = 0, inner = 0, item_limit = 0;
  double lambda_rel = 0.0, assert_median = 0.0;

  app.add_option("--config", config, "JSON config file")->capture_default_str();
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out, "output directory");
  app.add_option("--grids", grids, "comma-separated inversion grid sizes (e.g. 33,65)");

  auto* datagen = app.add_subcommand("datagen", "generate a synthetic dataset");
  auto* tsvd = app.add_subcommand("tsvd", "truncated-SVD inversion over a dataset");
  tsvd->add_option("--dataset", dataset, "dataset directory")->required();
  tsvd->add_option("--lambda-rel", lambda_rel, "truncation level relative to lambda_1");
  auto* rlm = app.add_subcommand("rlm", "recursive linearization over a dataset");
  rlm->add_option("--dataset", dataset, "dataset directory")->required();
  rlm->add_option("--inner", inner, "inner iterations per frequency");
  std::string kappas_flag;
  rlm->add_option("--kappas", kappas_flag, "comma-separated marching schedule");
  auto* mfvi_cmd = app.add_subcommand("mfvi", "mean-field variational inference");
  mfvi_cmd->add_option("--dataset", dataset, "dataset directory")->required();
  mfvi_cmd->add_option("--items", item_limit, "limit the number of items");
  auto* train = app.add_subcommand("train", "train the amortized posterior");
  train->add_option("--dataset", dataset, "dataset directory")->required();
  auto* infer = app.add_subcommand("infer", "single-pass posterior inference");
  infer->add_option("--model", model_base, "model checkpoint base path")->required();
  infer->add_option("--dataset", dataset, "dataset directory")->required();
  infer->add_option("--item", item, "item index");
  auto* bench = app.add_subcommand("bench", "benchmark methods over a dataset");
  bench->add_option("--dataset", dataset, "dataset directory")->required();
  bench->add_option("--model", model_base, "model checkpoint base (for vinet)");
  bench->add_option("--methods", methods, "comma-separated methods (tsvd,vinet)");
  bench->add_option("--assert-median-relerr", assert_median,
                    "exit 4 if the best median relative error exceeds this");
  auto* rep = app.add_subcommand("report", "merge run reports into one CSV");
  std::string report_in = ".";
  rep->add_option("--in", report_in, "directory of *_report.json files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (datagen->parsed()) return cmd_datagen(config, seed, out);
    if (tsvd->parsed()) return cmd_tsvd(config, dataset, out, grids, lambda_rel);
    if (rlm->parsed()) return cmd_rlm(config, dataset, out, grids, inner, kappas_flag);
    if (mfvi_cmd->parsed()) return cmd_mfvi(config, dataset, out, grids, item_limit);
    if (train->parsed()) return cmd_train(config, dataset, out);
    if (infer->parsed()) return cmd_infer(model_base, dataset, item, out, grids);
    if (bench->parsed())
      return cmd_bench(config, dataset, model_base, out, grids, methods, assert_median);
    if (rep->parsed()) return cmd_report(report_in, out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const SolverError& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
