// Command-line front end: batch analysis of one device and the HTTP service.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "isoex/error.hpp"
#include "isoex/pipeline.hpp"
#include "isoex/rules.hpp"
#include "isoex/service.hpp"
#include "isoex/text.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

int exit_code(isoex::ErrorKind kind) {
  switch (kind) {
    case isoex::ErrorKind::kIo:
    case isoex::ErrorKind::kNotFound:
      return kExitIo;
    default:
      return kExitValidation;
  }
}

isoex::rules::RuleConfig resolve_config(const std::string& path) {
  if (!path.empty()) return isoex::rules::load_config_file(path);
  if (const char* env = std::getenv("ISOEX_CONFIG"); env && *env) return isoex::rules::load_config_file(env);
  return isoex::rules::default_config();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"isoex: unsupervised anomaly scoring and explanation of process events"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "Rule configuration JSON (falls back to ISOEX_CONFIG)");

  auto* analyze = app.add_subcommand("analyze", "Score and explain one device's events");
  std::string input, out, scores_csv, attributions_out, matrix_csv;
  std::optional<std::string> images;
  isoex::report::AnalysisParams params;
  std::optional<int> max_depth, window_days, threads;
  bool serial = false;
  analyze->add_option("--input", input, "Process events (CSV or JSONL, optionally .gz)")->required();
  analyze->add_option("--images", images, "Image load events (CSV or JSONL)");
  analyze->add_option("--config", config_path, "Rule configuration JSON");
  analyze->add_option("--seed", params.seed, "Random seed")->capture_default_str();
  analyze->add_option("--tau", params.tau, "Activation threshold for augmentation, 0 disables")
      ->check(CLI::Range(0.0, 0.999999))
      ->capture_default_str();
  analyze->add_option("--trees", params.trees, "Number of isolation trees")->check(CLI::Range(1, 10000))->capture_default_str();
  analyze->add_option("--subsample", params.subsample, "Rows per tree")->check(CLI::Range(2, 1 << 20))->capture_default_str();
  analyze->add_option("--max-depth", max_depth, "Override the tree height limit")->check(CLI::Range(0, 64));
  analyze->add_option("--window-days", window_days, "Keep only the last N days")->check(CLI::Range(1, 36500));
  analyze->add_option("--top-k", params.top_k, "Contributors listed per event")->capture_default_str();
  analyze->add_option("--out", out, "Report JSON path")->required();
  analyze->add_option("--scores-csv", scores_csv, "Ranked scores CSV path");
  analyze->add_option("--attributions", attributions_out, "Full attribution JSON path");
  analyze->add_option("--matrix-csv", matrix_csv, "Feature matrix CSV path");
  analyze->add_flag("--serial", serial, "Use the serial reference kernels");
  analyze->add_option("--threads", threads, "OpenMP thread count")->check(CLI::Range(1, 1024));

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string data_dir = "isoex-data";
  std::optional<std::string> token;
  std::size_t max_upload_mb = 64;
  serve->add_option("--port", port, "Listen port")->check(CLI::Range(0, 65535))->capture_default_str();
  serve->add_option("--host", host, "Listen address")->capture_default_str();
  serve->add_option("--data-dir", data_dir, "Storage directory")->capture_default_str();
  serve->add_option("--config", config_path, "Rule configuration JSON");
  serve->add_option("--token", token, "Require this value in X-IsoEx-Token");
  serve->add_option("--max-upload-mb", max_upload_mb, "Upload size cap")->capture_default_str();

  auto* print_config = app.add_subcommand("default-config", "Print the built-in rule configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (print_config->parsed()) {
      std::cout << isoex::rules::default_config_json();
      return 0;
    }
    const auto config = resolve_config(config_path);
    if (threads) isoex::kernels::set_threads(*threads);

    if (analyze->parsed()) {
      params.max_depth = max_depth;
      params.window_days = window_days;
      params.exec = serial ? isoex::kernels::Execution::kSerial : isoex::kernels::Execution::kParallel;
      auto dataset = isoex::pipeline::load_dataset(input, images);
      const auto report = isoex::pipeline::analyze_device(std::move(dataset), config, params);
      isoex::text::write_file(out, isoex::report::to_json(report).dump(2) + "\n");
      if (!scores_csv.empty()) isoex::text::write_file(scores_csv, isoex::report::scored_csv(report));
      if (!attributions_out.empty()) {
        isoex::text::write_file(attributions_out, isoex::report::attributions_json(report).dump() + "\n");
      }
      if (!matrix_csv.empty()) isoex::text::write_file(matrix_csv, isoex::features::export_matrix_csv(report.matrix));
      std::cerr << "analyzed " << report.dataset.events.size() << " events for device "
                << (report.dataset.device_id.empty() ? "(unnamed)" : report.dataset.device_id) << "\n";
      return 0;
    }

    if (serve->parsed()) {
      isoex::service::ServiceOptions options;
      options.data_dir = data_dir;
      options.token = token;
      options.max_upload_bytes = max_upload_mb << 20;
      options.config = config;
      isoex::service::Service service(options);
      if (service.bind(host, port) < 0) {
        std::cerr << "error: cannot bind " << host << ":" << port << "\n";
        return kExitIo;
      }
      std::cerr << "listening on http://" << host << ":" << port << "/api/v1\n";
      return service.run() ? 0 : kExitIo;
    }
  } catch (const isoex::Error& e) {
    std::cerr << "error (" << isoex::error_kind_name(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
