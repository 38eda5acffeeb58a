// Command-line entry point: synth, train, track, eval, verify.
//
// Exit codes: 0 success, 1 failure (verification or runtime), 2 usage or
// parse error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "uma/checkpoint.hpp"
#include "uma/config.hpp"
#include "uma/errors.hpp"
#include "uma/metrics.hpp"
#include "uma/mot_io.hpp"
#include "uma/network.hpp"
#include "uma/synthetic.hpp"
#include "uma/tracker.hpp"
#include "uma/training.hpp"
#include "uma/verify.hpp"

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> assignments;
  std::optional<std::uint64_t> seed;

  uma::RunConfig load() const {
    uma::RunConfig config = config_path.empty() ? uma::RunConfig() : uma::RunConfig::from_file(config_path);
    for (const auto& a : assignments) config.set_assignment(a);
    if (seed) config.set("seed", std::to_string(*seed));
    return config;
  }
};

void add_common(CLI::App* app, Common& common) {
  app->add_option("--config", common.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", common.assignments, "override one key, e.g. --set tracker.alpha=0.7");
  app->add_option("--seed", common.seed, "seed for every random draw (overrides the config)");
  app->footer("\nConfiguration keys:\n" + uma::config_help());
}

void print_suite(const uma::SuiteReport& report) {
  std::cout << "[" << report.name << "]\n";
  for (const auto& line : report.lines) std::cout << line << "\n";
  std::cout << report.name << ": " << (report.passed ? "PASS" : "FAIL") << "\n";
}

int run_synth(const std::string& spec_path, const std::string& out_dir, std::optional<std::uint64_t> seed) {
  auto spec = uma::SyntheticSpec::from_file(spec_path);
  if (seed) spec.seed = *seed;
  spec.validate();
  const auto seq = uma::gen_synthetic_sequence(spec);
  uma::write_sequence(seq, out_dir);
  std::cout << "wrote " << seq.meta.length << " frames, " << seq.gt.size() << " gt rows, " << seq.det.size()
            << " detections to " << out_dir << "\n";
  return 0;
}

int run_train(const uma::RunConfig& config, const std::string& data_dir, const std::string& out,
              const std::string& loss_csv) {
  if (!std::filesystem::is_directory(data_dir)) {
    std::cerr << "error: data directory not found: " << data_dir << "\n";
    return 1;
  }
  uma::TrainOptions options;
  options.net = uma::NetworkConfig::from_run_config(config);
  options.loss = uma::LossConfig::from_run_config(config);
  options.train = uma::TrainConfig::from_run_config(config);
  options.seed = config.seed();
  options.checkpoint_path = out;
  options.loss_csv_path = loss_csv.empty() ? std::filesystem::path(out).replace_extension(".loss.csv")
                                           : std::filesystem::path(loss_csv);
  const auto data = uma::Dataset::load(data_dir, options.train.frame_limit);
  const std::size_t per_epoch = options.train.steps_per_epoch;
  options.on_step = [per_epoch](const uma::LossRecord& r) {
    if (r.step == per_epoch) {
      std::printf("epoch %zu  L_sot %.5f  L_rank %.5f  L_iden %.5f  L_total %.5f\n", r.epoch, r.l_sot, r.l_rank,
                  r.l_iden, r.l_total);
      std::fflush(stdout);
    }
  };
  const auto result = uma::train(data, options);
  std::cout << "trained " << result.log.size() << " steps; checkpoint " << out << ", loss log "
            << options.loss_csv_path.string() << "\n";
  return 0;
}

int run_track(const uma::RunConfig& config, const std::string& model, const std::string& seq_dir,
              const std::string& out, const std::string& overlay) {
  const auto net = uma::NetworkConfig::from_run_config(config);
  const auto params = uma::load_checkpoint(model);
  uma::check_params(net, params);
  const auto tracker = uma::TrackerConfig::from_run_config(config);
  const auto seq = uma::load_sequence(seq_dir);
  uma::TrackOptions options;
  if (!overlay.empty()) options.overlay_dir = overlay;
  const auto rows = uma::track_sequence(seq, net, params, tracker, options);
  uma::write_results(rows, out);
  std::cout << "wrote " << rows.size() << " rows to " << out << "\n";
  return 0;
}

int run_eval(const uma::RunConfig& config, const std::string& gt_path, const std::string& result_path,
             const std::string& csv_path, const std::string& name) {
  const auto gt = uma::parse_det_file(gt_path);
  const auto hyp = uma::parse_det_file(result_path);
  const auto report = uma::evaluate(name, gt, hyp, config.get_double("eval.iou_threshold"));
  std::cout << uma::report_table({report});
  if (!csv_path.empty()) {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + csv_path);
    f << uma::report_csv({report});
  }
  return 0;
}

int run_verify(const uma::RunConfig& config, const std::string& suite, const std::string& workdir) {
  uma::SuiteReport report;
  if (suite == "grad") {
    report = uma::verify_grad();
  } else if (suite == "hungarian") {
    report = uma::verify_hungarian();
  } else if (suite == "metrics") {
    report = uma::verify_metrics();
  } else {
    report = uma::verify_e2e(config, workdir);
  }
  print_suite(report);
  return report.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UMA: unified motion and affinity tracking"};
  app.require_subcommand(1);
  app.footer("\nConfiguration keys:\n" + uma::config_help());

  Common common;
  std::optional<std::uint64_t> top_seed;
  app.add_option("--seed", top_seed, "seed for every random draw");

  auto* synth = app.add_subcommand("synth", "render a synthetic sequence from a JSON spec");
  std::string spec_path, synth_out;
  synth->add_option("spec", spec_path, "synthetic sequence spec (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("out", synth_out, "output sequence directory")->required();
  add_common(synth, common);

  auto* train = app.add_subcommand("train", "train the network on gt-annotated sequences");
  std::string data_dir, model_out, loss_csv;
  train->add_option("data", data_dir, "sequence directory or directory of sequences")->required();
  train->add_option("out", model_out, "output checkpoint")->required();
  train->add_option("--loss-csv", loss_csv, "loss log (default: <out>.loss.csv)");
  add_common(train, common);

  auto* track = app.add_subcommand("track", "track one sequence with a trained checkpoint");
  std::string model_in, seq_dir, track_out, overlay;
  track->add_option("model", model_in, "checkpoint")->required()->check(CLI::ExistingFile);
  track->add_option("sequence", seq_dir, "sequence directory")->required()->check(CLI::ExistingDirectory);
  track->add_option("out", track_out, "MOT result file")->required();
  track->add_option("--overlay", overlay, "write annotated frames to this directory");
  add_common(track, common);

  auto* eval = app.add_subcommand("eval", "score a result file against ground truth");
  std::string gt_path, result_path, csv_path, seq_name = "sequence";
  eval->add_option("gt", gt_path, "ground-truth MOT file")->required()->check(CLI::ExistingFile);
  eval->add_option("result", result_path, "result MOT file")->required()->check(CLI::ExistingFile);
  eval->add_option("--csv", csv_path, "also write the report as CSV");
  eval->add_option("--name", seq_name, "sequence name in the report");
  add_common(eval, common);

  auto* verify = app.add_subcommand("verify", "run one verification suite");
  std::string suite, workdir = "uma_verify_work";
  verify->add_option("suite", suite, "grad | hungarian | metrics | e2e")
      ->required()
      ->check(CLI::IsMember(uma::verify_suite_names()));
  verify->add_option("--workdir", workdir, "scratch directory for the e2e suite");
  add_common(verify, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (top_seed && !common.seed) common.seed = top_seed;

  try {
    if (synth->parsed()) return run_synth(spec_path, synth_out, common.seed);
    const auto config = common.load();
    if (train->parsed()) return run_train(config, data_dir, model_out, loss_csv);
    if (track->parsed()) return run_track(config, model_in, seq_dir, track_out, overlay);
    if (eval->parsed()) return run_eval(config, gt_path, result_path, csv_path, seq_name);
    if (verify->parsed()) return run_verify(config, suite, workdir);
  } catch (const uma::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
