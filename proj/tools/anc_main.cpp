// Command-line front end: RIR generation, dataset generation, autoencoder
// training, step-size tuning, and full experiment runs.
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "anc/acoustics.hpp"
#include "anc/anc_core.hpp"
#include "anc/errors.hpp"
#include "anc/experiment.hpp"
#include "anc/latent_anc.hpp"
#include "anc/metrics.hpp"
#include "anc/neural.hpp"
#include "anc/rng.hpp"
#include "anc/training.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitTuning = 4;

nlohmann::json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw anc::ConfigError("cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw anc::ConfigError(std::string("JSON parse error in ") + path + ": " + e.what());
  }
  return j;
}

int cmd_gen_rirs(const std::string& config_path, const std::string& out_path) {
  const auto j = load_json(config_path);
  anc::RoomSpec room = anc::room_from_json(j.value("room", nlohmann::json::object()));
  const anc::Vec3 mic = anc::vec3_from_json(j.at("mic"));
  const std::size_t trim = j.value("onset_trim", 0ull);
  anc::RoomSpec sim_room = room;
  sim_room.rir_length += trim;

  std::vector<anc::Vec3> positions;
  if (j.contains("positions")) {
    for (const auto& p : j["positions"]) positions.push_back(anc::vec3_from_json(p));
  } else {
    const anc::Vec3 a = anc::vec3_from_json(j.at("segment")[0]);
    const anc::Vec3 b = anc::vec3_from_json(j.at("segment")[1]);
    positions = anc::sample_segment(a, b, j.value("n_positions", 16ull));
  }
  std::vector<anc::ImpulseResponse> rirs;
  rirs.reserve(positions.size());
  for (const auto& pos : positions) {
    auto ir = anc::trim_onset(anc::simulate_rir(sim_room, pos, mic), trim);
    ir.taps.resize(room.rir_length);
    rirs.push_back(std::move(ir));
  }
  anc::save_rir_bank(out_path, rirs, positions);
  std::cout << "wrote " << rirs.size() << " RIRs to " << out_path << "\n";
  return 0;
}

int cmd_gen_dataset(const std::string& config_path, const std::string& out_path) {
  const auto j = load_json(config_path);
  anc::DatasetGenConfig cfg;
  cfg.room = anc::room_from_json(j.value("room", nlohmann::json::object()));
  if (j.contains("segment")) {
    cfg.segment_a = anc::vec3_from_json(j["segment"][0]);
    cfg.segment_b = anc::vec3_from_json(j["segment"][1]);
  }
  if (j.contains("mic")) cfg.mic = anc::vec3_from_json(j["mic"]);
  if (j.contains("secondary_source")) cfg.secondary = anc::vec3_from_json(j["secondary_source"]);
  cfg.n_positions = j.value("n_positions", cfg.n_positions);
  cfg.onset_trim = j.value("onset_trim", 0ull);
  if (j.contains("noise")) cfg.noise = anc::noise_from_json(j["noise"]);
  cfg.mu = j.value("mu", cfg.mu);
  cfg.block_size = j.value("block_size", cfg.block_size);
  cfg.stop.max_blocks = j.value("max_blocks", cfg.stop.max_blocks);
  cfg.stop.tol = j.value("tol", cfg.stop.tol);
  cfg.seed = j.value("seed", 0ull);
  cfg.threads = j.value("threads", 0);
  cfg.g_hat_perturb = j.value("g_hat_perturb", 0.0);
  const auto ds = anc::generate_dataset(cfg);
  anc::save_dataset(out_path, ds);
  std::cout << "wrote dataset: " << ds.rows() << " filters of length " << ds.filter_len
            << ", scale " << ds.scale << "\n";
  return 0;
}

int cmd_train(const std::string& dataset_path, const std::string& variant_name, bool mixup,
              std::size_t hidden, std::size_t latent, std::size_t epochs, double lr,
              std::uint64_t seed, const std::string& out_path) {
  const auto ds = anc::load_dataset(dataset_path);
  const anc::Variant variant = anc::variant_from_name(variant_name);
  auto model = anc::init_model(ds.filter_len, hidden, latent, variant, seed);
  anc::TrainingConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = lr;
  tc.seed = anc::Rng::derive(seed, 1);
  tc.weights = anc::default_weights(variant, mixup);
  const auto history = anc::train(model, ds, tc);
  nlohmann::json meta;
  meta["dataset_scale"] = ds.scale;
  meta["mixup"] = mixup;
  meta["epochs"] = epochs;
  if (!history.empty()) {
    meta["final_recon"] = history.back().train.recon;
    meta["final_validation_recon"] = history.back().validation_recon;
  }
  anc::save_model(out_path, model, meta.dump());
  std::cout << "trained " << variant_name << (mixup ? "+mixup" : "") << ": final recon "
            << (history.empty() ? 0.0 : history.back().train.recon) << ", validation "
            << (history.empty() ? 0.0 : history.back().validation_recon) << "\n";
  return 0;
}

int cmd_tune_step(const std::string& config_path) {
  const auto cfg = anc::load_experiment_config(config_path);
  const std::size_t len = cfg.room.rir_length;
  anc::RoomSpec sim_room = cfg.room;
  sim_room.rir_length = len + cfg.onset_trim;
  anc::ImpulseResponse g =
      anc::trim_onset(anc::simulate_rir(sim_room, cfg.secondary, cfg.mic), cfg.onset_trim);
  g.taps.resize(len);

  anc::TuneScenario sc;
  sc.g = g;
  sc.g_hat = g;
  sc.noise = cfg.noise;
  sc.n_blocks = std::min<std::size_t>(cfg.n_blocks, 150);
  sc.block_size = cfg.block_size;
  sc.probe_seeds = {anc::Rng::derive(cfg.master_seed, 901), anc::Rng::derive(cfg.master_seed, 902)};
  const auto grid_pos = anc::sample_segment(cfg.segment_a, cfg.segment_b, 11);
  anc::ImpulseResponse p0 =
      anc::trim_onset(anc::simulate_rir(sim_room, grid_pos[3], cfg.mic), cfg.onset_trim);
  p0.taps.resize(len);
  anc::ImpulseResponse p1 =
      anc::trim_onset(anc::simulate_rir(sim_room, grid_pos[7], cfg.mic), cfg.onset_trim);
  p1.taps.resize(len);
  sc.p_schedule = {{0, p0}, {sc.n_blocks / 2, p1}};

  const double mu = anc::tune_step_size(
      [&](double m) { return std::make_unique<anc::FxlmsController>(len, m, cfg.epsilon); }, sc,
      cfg.fxlms_grid);
  std::cout << "fxlms step size: " << mu << "\n";
  return 0;
}

int cmd_run(const std::string& config_path) {
  const auto cfg = anc::load_experiment_config(config_path);
  const auto rep = anc::run_experiment(cfg);
  std::cout << anc::report_table(rep);
  std::cout << "report written to " << cfg.out_dir << "/report.json\n";
  if (cfg.acceptance && !rep.acceptance_passed) return 1;
  return 0;
}

int cmd_report(const std::string& report_path) {
  const auto j = load_json(report_path);
  for (const auto& c : j.value("controllers", nlohmann::json::array())) {
    std::cout << c.value("name", "?") << ": conv " << c.value("mean_conv_initial", 0.0) << "/"
              << c.value("mean_conv_post", 0.0) << " blocks, gain "
              << c.value("mean_gain_db", 0.0) << " dB\n";
  }
  for (const auto& a : j.value("acceptance", nlohmann::json::array())) {
    std::cout << (a.value("passed", false) ? "PASS" : "FAIL")
              << (a.value("gating", true) ? "      " : " info ") << a.value("name", "?") << "  "
              << a.value("detail", "") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"active noise control simulation toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, dataset_path, report_path;
  std::string variant = "plain", mixup_flag = "off";
  std::size_t hidden = 256, latent = 32, epochs = 500;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  auto* gen_rirs = app.add_subcommand("gen-rirs", "simulate a bank of room impulse responses");
  gen_rirs->add_option("--config", config_path)->required();
  gen_rirs->add_option("--out", out_path)->required();

  auto* gen_ds = app.add_subcommand("gen-dataset", "build a control-filter dataset");
  gen_ds->add_option("--config", config_path)->required();
  gen_ds->add_option("--out", out_path)->required();

  auto* train = app.add_subcommand("train", "train an autoencoder on a dataset");
  train->add_option("--dataset", dataset_path)->required();
  train->add_option("--variant", variant)->check(CLI::IsMember({"plain", "vae", "infovae"}));
  train->add_option("--mixup", mixup_flag)->check(CLI::IsMember({"on", "off"}));
  train->add_option("--hidden", hidden);
  train->add_option("--latent", latent);
  train->add_option("--epochs", epochs);
  train->add_option("--lr", lr);
  train->add_option("--seed", seed);
  train->add_option("--out", out_path)->required();

  auto* tune = app.add_subcommand("tune-step", "grid-search a stable step size");
  tune->add_option("--config", config_path)->required();

  auto* run = app.add_subcommand("run", "run a full experiment from a config");
  run->add_option("--config", config_path)->required();

  auto* report = app.add_subcommand("report", "summarize an existing report file");
  report->add_option("--report", report_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_rirs->parsed()) return cmd_gen_rirs(config_path, out_path);
    if (gen_ds->parsed()) return cmd_gen_dataset(config_path, out_path);
    if (train->parsed()) {
      return cmd_train(dataset_path, variant, mixup_flag == "on", hidden, latent, epochs, lr,
                       seed, out_path);
    }
    if (tune->parsed()) return cmd_tune_step(config_path);
    if (run->parsed()) return cmd_run(config_path);
    if (report->parsed()) return cmd_report(report_path);
  } catch (const anc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const anc::TuningError& e) {
    std::cerr << "tuning error: " << e.what() << "\n";
    return kExitTuning;
  } catch (const anc::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
