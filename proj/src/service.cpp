#include "isoex/service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <charconv>
#include <cmath>

#include "httplib.h"
#include "isoex/error.hpp"
#include "isoex/pipeline.hpp"
#include "isoex/text.hpp"
#include "json.hpp"

namespace isoex::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::regex kIdPattern(R"([A-Za-z0-9._-]{1,128})");

bool valid_id(const std::string& id) { return std::regex_match(id, kIdPattern) && id != "." && id != ".."; }

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kTooLarge: return 413;
    case ErrorKind::kIo: return 500;
    default: return 400;
  }
}

json error_body(ErrorKind kind, const std::string& message, const std::string& field = {}) {
  json e = {{"kind", error_kind_name(kind)}, {"message", message}};
  if (!field.empty()) e["field"] = field;
  return {{"error", e}};
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  std::string field;
  if (const auto* v = dynamic_cast<const ValidationError*>(&e)) field = v->field();
  if (const auto* s = dynamic_cast<const SchemaError*>(&e)) field = s->column();
  send_json(res, error_body(e.kind(), e.what(), field), http_status(e.kind()));
}

std::int64_t query_int(const httplib::Request& req, const std::string& name, std::int64_t fallback, std::int64_t lo,
                       std::int64_t hi) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ValidationError(name, "must be an integer");
  if (out < lo || out > hi) {
    throw ValidationError(name, "must be between " + std::to_string(lo) + " and " + std::to_string(hi));
  }
  return out;
}

ingest::Format sniff_format(std::string_view body, const std::string& content_type, const std::string& declared) {
  if (declared == "jsonl") return ingest::Format::kJsonl;
  if (declared == "csv") return ingest::Format::kCsv;
  if (!declared.empty()) throw ValidationError("format", "must be csv or jsonl");
  if (content_type.find("ndjson") != std::string::npos || content_type.find("jsonl") != std::string::npos) {
    return ingest::Format::kJsonl;
  }
  const auto trimmed = text::trim(body);
  return !trimmed.empty() && trimmed.front() == '{' ? ingest::Format::kJsonl : ingest::Format::kCsv;
}

std::string extension(ingest::Format f) { return f == ingest::Format::kJsonl ? "jsonl" : "csv"; }

// Immutable once published.
struct Session {
  std::string session_id;
  std::string device_id;
  json meta;
  json report;
  json attributions;
  ingest::DeviceDataset dataset;
  lineage::ProcessForest forest;
  std::map<std::string, double> scores;
  std::map<std::string, std::size_t> rank_index;  // event_id -> position in report events
  std::map<std::string, std::size_t> attribution_index;
  std::map<std::string, std::int64_t> timestamp_ns;
};

report::AnalysisParams parse_params(const std::string& body, report::AnalysisParams p) {
  if (text::trim(body).empty()) return p;
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ValidationError("body", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("body", "must be a JSON object");
  auto number = [&](const char* key) -> const json& {
    const json& v = j[key];
    if (!v.is_number()) throw ValidationError(key, "must be a number");
    return v;
  };
  auto integer = [&](const char* key, std::int64_t lo, std::int64_t hi) {
    const json& v = number(key);
    if (!v.is_number_integer()) throw ValidationError(key, "must be an integer");
    const auto n = v.get<std::int64_t>();
    if (n < lo || n > hi) {
      throw ValidationError(key, "must be between " + std::to_string(lo) + " and " + std::to_string(hi));
    }
    return n;
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<std::int64_t>() >= 0)) {
        throw ValidationError("seed", "must be a non-negative integer");
      }
      p.seed = value.get<std::uint64_t>();
    } else if (key == "tau") {
      const double t = number("tau").get<double>();
      if (!(t >= 0.0 && t < 1.0)) throw ValidationError("tau", "must be in [0, 1)");
      p.tau = t;
    } else if (key == "trees") {
      p.trees = static_cast<int>(integer("trees", 1, 10000));
    } else if (key == "subsample") {
      p.subsample = static_cast<int>(integer("subsample", 2, 1 << 20));
    } else if (key == "max_depth") {
      p.max_depth = static_cast<int>(integer("max_depth", 0, 64));
    } else if (key == "window_days") {
      if (value.is_null()) {
        p.window_days.reset();
      } else {
        p.window_days = static_cast<int>(integer("window_days", 1, 36500));
      }
    } else if (key == "top_k") {
      p.top_k = static_cast<std::size_t>(integer("top_k", 1, 1000));
    } else {
      throw ValidationError(key, "unknown parameter");
    }
  }
  return p;
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;
  std::mutex registry_mutex;  // guards device_locks and sessions
  std::map<std::string, std::shared_ptr<std::mutex>> device_locks;
  std::map<std::string, std::shared_ptr<const Session>> sessions;

  explicit Impl(ServiceOptions o) : options(std::move(o)) {
    fs::create_directories(fs::path(options.data_dir) / "devices");
    fs::create_directories(fs::path(options.data_dir) / "sessions");
    server.set_payload_max_length(options.max_upload_bytes);
    server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                                {"Access-Control-Allow-Headers", "Content-Type, X-IsoEx-Token"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_json(res, error_body(ErrorKind::kIo, e.what()), 500);
      }
    });
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (req.method == "OPTIONS") return httplib::Server::HandlerResponse::Unhandled;
      if (options.token && req.path.rfind("/api", 0) == 0 && req.get_header_value("X-IsoEx-Token") != *options.token) {
        send_json(res, {{"error", {{"kind", "unauthorized"}, {"message", "missing or invalid X-IsoEx-Token"}}}}, 401);
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      if (res.status == 413) {
        send_json(res, error_body(ErrorKind::kTooLarge, "upload exceeds the configured size limit"), 413);
      } else if (res.status == 404) {
        send_json(res, error_body(ErrorKind::kNotFound, "no such route"), 404);
      }
    });
    for (const std::string prefix : {"/api/v1", "/api"}) routes(prefix);
  }

  void routes(const std::string& p) {
    server.Options(p + R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Get(p + "/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, {{"status", "ok"}, {"schema_version", report::kSchemaVersion}});
    });
    server.Post(p + R"(/devices/([^/]+)/events)",
                [this](const httplib::Request& req, httplib::Response& res) { upload(req, res); });
    server.Post(p + R"(/devices/([^/]+)/analyze)",
                [this](const httplib::Request& req, httplib::Response& res) { analyze(req, res); });
    server.Get(p + "/sessions", [this](const httplib::Request&, httplib::Response& res) { list_sessions(res); });
    server.Get(p + R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, session(req.matches[1])->meta);
    });
    server.Get(p + R"(/sessions/([^/]+)/events)",
               [this](const httplib::Request& req, httplib::Response& res) { list_events(req, res); });
    server.Get(p + R"(/sessions/([^/]+)/events/([^/]+)/explanation)",
               [this](const httplib::Request& req, httplib::Response& res) { explanation(req, res); });
    server.Get(p + R"(/sessions/([^/]+)/events/([^/]+)/tree)",
               [this](const httplib::Request& req, httplib::Response& res) { tree(req, res); });
    server.Get(p + R"(/sessions/([^/]+)/clusters)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto s = session(req.matches[1]);
      send_json(res, {{"session_id", s->session_id},
                      {"summary", s->report["clusters"]["summary"]},
                      {"templates", s->report["clusters"]["templates"]}});
    });
    server.Get(p + R"(/sessions/([^/]+)/importance)",
               [this](const httplib::Request& req, httplib::Response& res) { importance(req, res); });
  }

  fs::path device_dir(const std::string& id) const { return fs::path(options.data_dir) / "devices" / id; }
  fs::path session_dir(const std::string& id) const { return fs::path(options.data_dir) / "sessions" / id; }

  static std::string checked_id(const std::string& id, const char* field) {
    if (!valid_id(id)) throw ValidationError(field, "must match [A-Za-z0-9._-]{1,128}");
    return id;
  }

  std::shared_ptr<std::mutex> device_lock(const std::string& device) {
    std::lock_guard<std::mutex> guard(registry_mutex);
    auto& slot = device_locks[device];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
  }

  // Replaces a file atomically with respect to readers of the final path.
  static void write_atomic(const fs::path& path, std::string_view content) {
    const fs::path tmp = path.string() + ".tmp";
    text::write_file(tmp.string(), content);
    fs::rename(tmp, path);
  }

  void upload(const httplib::Request& req, httplib::Response& res) {
    const std::string device = checked_id(req.matches[1], "device_id");
    struct Part {
      std::string kind;
      std::string body;
      std::string content_type;
    };
    std::vector<Part> parts;
    if (req.is_multipart_form_data()) {
      if (req.has_file("events")) {
        const auto f = req.get_file_value("events");
        parts.push_back({"events", f.content, f.content_type});
      }
      if (req.has_file("images")) {
        const auto f = req.get_file_value("images");
        parts.push_back({"images", f.content, f.content_type});
      }
      if (parts.empty()) throw ValidationError("events", "multipart upload needs an 'events' or 'images' part");
    } else {
      const std::string kind = req.has_param("kind") ? req.get_param_value("kind") : "events";
      if (kind != "events" && kind != "images") throw ValidationError("kind", "must be events or images");
      parts.push_back({kind, req.body, req.get_header_value("Content-Type")});
    }

    const auto lock = device_lock(device);
    std::lock_guard<std::mutex> guard(*lock);
    fs::create_directories(device_dir(device));
    json out = {{"device_id", device}};
    for (const auto& part : parts) {
      const std::string declared = req.has_param("format") ? req.get_param_value("format") : "";
      const auto format = sniff_format(part.body, part.content_type, declared);
      if (part.kind == "events") {
        const auto ds = ingest::parse_events(part.body, format);
        for (const auto* ext : {"csv", "jsonl"}) fs::remove(device_dir(device) / (std::string("events.") + ext));
        write_atomic(device_dir(device) / ("events." + extension(format)), part.body);
        out["events"] = {{"accepted", ds.events.size()},
                         {"dropped_rows", ds.counters.dropped_rows},
                         {"duplicate_ids", ds.counters.duplicate_ids},
                         {"foreign_device_rows", ds.counters.foreign_device_rows}};
      } else {
        const auto images = ingest::parse_image_events(part.body, format);
        for (const auto* ext : {"csv", "jsonl"}) fs::remove(device_dir(device) / (std::string("images.") + ext));
        write_atomic(device_dir(device) / ("images." + extension(format)), part.body);
        out["images"] = {{"accepted", images.size()}};
      }
    }
    send_json(res, out, 201);
  }

  std::optional<fs::path> stored(const std::string& device, const std::string& stem) const {
    for (const auto* ext : {"csv", "jsonl"}) {
      const auto p = device_dir(device) / (stem + "." + ext);
      if (fs::exists(p)) return p;
    }
    return std::nullopt;
  }

  void analyze(const httplib::Request& req, httplib::Response& res) {
    const std::string device = checked_id(req.matches[1], "device_id");
    const auto params = parse_params(req.body, options.defaults);
    const auto lock = device_lock(device);
    std::unique_lock<std::mutex> guard(*lock, std::try_to_lock);
    if (!guard.owns_lock()) {
      send_json(res, error_body(ErrorKind::kValidation, "an analysis is already running for this device", "device_id"),
                409);
      return;
    }
    const auto events = stored(device, "events");
    if (!events) throw NotFoundError("no events uploaded for device " + device);
    const auto images = stored(device, "images");
    auto dataset = pipeline::load_dataset(events->string(), images ? std::optional(images->string()) : std::nullopt);
    if (dataset.device_id.empty()) dataset.device_id = device;
    auto r = pipeline::analyze_device(std::move(dataset), options.config, params);

    auto s = std::make_shared<Session>();
    s->device_id = device;
    s->report = report::to_json(r);
    s->attributions = report::attributions_json(r);
    {
      std::lock_guard<std::mutex> reg(registry_mutex);
      std::size_t seq = 1;
      while (fs::exists(session_dir(device + "-" + std::to_string(seq)))) ++seq;
      s->session_id = device + "-" + std::to_string(seq);
      fs::create_directories(session_dir(s->session_id));
    }
    const auto created = std::chrono::duration_cast<std::chrono::nanoseconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
    s->meta = {{"session_id", s->session_id},
               {"device_id", device},
               {"status", "complete"},
               {"created_at", format_timestamp(created, 3)},
               {"event_count", r.dataset.events.size()},
               {"parameters", s->report["parameters"]}};
    const auto dir = session_dir(s->session_id);
    text::write_file((dir / "events.csv").string(), ingest::serialize_csv(r.dataset));
    text::write_file((dir / "attributions.json").string(), s->attributions.dump());
    text::write_file((dir / "report.json").string(), s->report.dump(2));
    write_atomic(dir / "session.json", s->meta.dump(2));

    s->dataset = std::move(r.dataset);
    index(*s);
    {
      std::lock_guard<std::mutex> reg(registry_mutex);
      sessions[s->session_id] = s;
    }
    send_json(res, s->meta, 201);
  }

  static void index(Session& s) {
    s.forest = lineage::build_forest(s.dataset);
    for (const auto& ev : s.dataset.events) s.timestamp_ns[ev.event_id] = ev.timestamp.ns;
    const auto& events = s.report["events"];
    for (std::size_t k = 0; k < events.size(); ++k) {
      const auto id = events[k]["event_id"].get<std::string>();
      s.scores[id] = events[k]["score"].get<double>();
      s.rank_index[id] = k;
    }
    const auto& rows = s.attributions["attributions"];
    for (std::size_t k = 0; k < rows.size(); ++k) s.attribution_index[rows[k]["event_id"].get<std::string>()] = k;
  }

  std::shared_ptr<const Session> session(const std::string& sid) {
    if (!valid_id(sid)) throw NotFoundError("unknown session " + sid);
    {
      std::lock_guard<std::mutex> reg(registry_mutex);
      const auto it = sessions.find(sid);
      if (it != sessions.end()) return it->second;
    }
    const auto dir = session_dir(sid);
    if (!fs::exists(dir / "session.json")) throw NotFoundError("unknown session " + sid);
    auto s = std::make_shared<Session>();
    s->session_id = sid;
    s->meta = json::parse(text::read_file((dir / "session.json").string()));
    s->device_id = s->meta.value("device_id", "");
    s->report = json::parse(text::read_file((dir / "report.json").string()));
    report::validate_report(s->report);
    s->attributions = json::parse(text::read_file((dir / "attributions.json").string()));
    s->dataset = ingest::parse_events(text::read_file((dir / "events.csv").string()), ingest::Format::kCsv);
    index(*s);
    std::lock_guard<std::mutex> reg(registry_mutex);
    return sessions.emplace(sid, s).first->second;
  }

  void list_sessions(httplib::Response& res) {
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(fs::path(options.data_dir) / "sessions")) {
      if (fs::exists(entry.path() / "session.json")) ids.push_back(entry.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    json out = json::array();
    for (const auto& id : ids) out.push_back(session(id)->meta);
    send_json(res, {{"sessions", out}});
  }

  void list_events(const httplib::Request& req, httplib::Response& res) {
    const auto s = session(req.matches[1]);
    const auto& events = s->report["events"];
    const std::string sort = req.has_param("sort") ? req.get_param_value("sort") : "score";
    static const std::set<std::string> kSorts = {"score", "rank", "timestamp", "event_id", "file_name"};
    if (!kSorts.count(sort)) throw ValidationError("sort", "must be one of score, rank, timestamp, event_id, file_name");
    const std::string order = req.has_param("order") ? req.get_param_value("order")
                                                     : (sort == "score" ? "desc" : "asc");
    if (order != "asc" && order != "desc") throw ValidationError("order", "must be asc or desc");
    const auto offset = query_int(req, "offset", 0, 0, INT64_MAX);
    const auto limit = query_int(req, "limit", 50, 1, 1000);
    std::optional<std::int64_t> template_id;
    if (req.has_param("template_id")) template_id = query_int(req, "template_id", 0, 0, INT64_MAX);
    std::optional<double> min_score;
    if (req.has_param("min_score")) {
      const std::string v = req.get_param_value("min_score");
      char* end = nullptr;
      const double d = std::strtod(v.c_str(), &end);
      if (v.empty() || *end != '\0' || !std::isfinite(d)) throw ValidationError("min_score", "must be a number");
      min_score = d;
    }
    const std::string needle = req.has_param("text") ? text::to_lower(req.get_param_value("text")) : "";

    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < events.size(); ++k) {
      const auto& e = events[k];
      if (template_id && e["template_id"].get<std::int64_t>() != *template_id) continue;
      if (min_score && e["score"].get<double>() < *min_score) continue;
      if (!needle.empty() && !text::contains_ci(text::to_lower(e["command_line"].get<std::string>()), needle)) continue;
      keep.push_back(k);
    }
    // Rank position breaks every tie, so pages are stable.
    if (sort != "score" && sort != "rank") {
      std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
        if (sort == "timestamp") {
          const auto ta = s->timestamp_ns.at(events[a]["event_id"].get<std::string>());
          const auto tb = s->timestamp_ns.at(events[b]["event_id"].get<std::string>());
          return order == "asc" ? ta < tb : tb < ta;
        }
        const auto& ka = events[a][sort];
        const auto& kb = events[b][sort];
        return order == "asc" ? ka < kb : kb < ka;
      });
    } else if ((sort == "score") != (order == "desc")) {
      std::reverse(keep.begin(), keep.end());
    }
    json page = json::array();
    for (auto k = static_cast<std::size_t>(std::min<std::int64_t>(offset, static_cast<std::int64_t>(keep.size())));
         k < keep.size() && page.size() < static_cast<std::size_t>(limit); ++k) {
      json e = events[keep[k]];
      page.push_back(std::move(e));
    }
    send_json(res, {{"session_id", s->session_id},
                    {"total", keep.size()},
                    {"offset", offset},
                    {"limit", limit},
                    {"sort", sort},
                    {"order", order},
                    {"events", std::move(page)}});
  }

  void explanation(const httplib::Request& req, httplib::Response& res) {
    const auto s = session(req.matches[1]);
    const std::string eid = req.matches[2];
    const auto it = s->attribution_index.find(eid);
    if (it == s->attribution_index.end()) throw NotFoundError("unknown event " + eid);
    json a = s->attributions["attributions"][it->second];
    a["feature_ids"] = s->attributions["feature_ids"];
    const auto& e = s->report["events"][s->rank_index.at(eid)];
    a["score"] = e["score"];
    a["rank"] = e["rank"];
    a["file_name"] = e["file_name"];
    a["command_line"] = e["command_line"];
    send_json(res, a);
  }

  void tree(const httplib::Request& req, httplib::Response& res) {
    const auto s = session(req.matches[1]);
    const auto radius = query_int(req, "radius", 2, 0, 1000);
    send_json(res, lineage::subtree_view(s->forest, s->dataset, s->scores, req.matches[2], static_cast<int>(radius)));
  }

  void importance(const httplib::Request& req, httplib::Response& res) {
    const auto s = session(req.matches[1]);
    json scatter = json::array();
    for (const auto& fi : s->report["global_importance"]) {
      if (fi["kind"] != "boolean") continue;
      scatter.push_back({{"feature_id", fi["feature_id"]},
                         {"family", fi["family"]},
                         {"activation_rate", fi["activation_rate"]},
                         {"mean_abs_phi", fi["mean_abs_phi"]}});
    }
    send_json(res, {{"session_id", s->session_id},
                    {"features", s->report["global_importance"]},
                    {"scatter", std::move(scatter)},
                    {"augmentation", s->report["augmentation"]}});
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}
Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port) ? port : -1; }
int Service::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool Service::run() { return impl_->server.listen_after_bind(); }
void Service::stop() {
  if (impl_) impl_->server.stop();
}
void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace isoex::service
