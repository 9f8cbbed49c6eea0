#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>

#include "isoex/report.hpp"
#include "isoex/rules.hpp"

namespace isoex::service {

struct ServiceOptions {
  std::string data_dir;
  std::size_t max_upload_bytes = 64u << 20;
  // When set, every /api request must carry it in X-IsoEx-Token.
  std::optional<std::string> token;
  std::string cors_origin = "*";
  rules::RuleConfig config = rules::default_config();
  report::AnalysisParams defaults;
};

// HTTP/JSON API over stored datasets and analysis sessions. Routes are served
// under both /api/v1 and /api.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Returns the bound port, or -1.
  int bind(const std::string& host, int port);
  int bind_any_port(const std::string& host);
  // Blocks until stop().
  bool run();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace isoex::service
