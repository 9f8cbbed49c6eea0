#include "isoex/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_map>
#include <unordered_set>

#include "isoex/error.hpp"
#include "isoex/text.hpp"
#include "json.hpp"

namespace isoex::ingest {

using nlohmann::json;

IntegrityLevel parse_integrity(std::string_view s) {
  const std::string v = text::to_lower(text::trim(s));
  if (v == "untrusted") return IntegrityLevel::kUntrusted;
  if (v == "low") return IntegrityLevel::kLow;
  if (v == "medium") return IntegrityLevel::kMedium;
  if (v == "high") return IntegrityLevel::kHigh;
  if (v == "system") return IntegrityLevel::kSystem;
  if (v == "installer") return IntegrityLevel::kInstaller;
  return IntegrityLevel::kUnknown;
}

std::string_view integrity_name(IntegrityLevel level) {
  switch (level) {
    case IntegrityLevel::kUntrusted: return "Untrusted";
    case IntegrityLevel::kLow: return "Low";
    case IntegrityLevel::kMedium: return "Medium";
    case IntegrityLevel::kHigh: return "High";
    case IntegrityLevel::kSystem: return "System";
    case IntegrityLevel::kInstaller: return "Installer";
    case IntegrityLevel::kUnknown: return "Unknown";
  }
  return "Unknown";
}

namespace {

struct FieldInfo {
  Field field;
  std::string_view key;
  std::string_view defender_column;
};

constexpr FieldInfo kFields[] = {
    {Field::kEventId, "event_id", "ReportId"},
    {Field::kTimestamp, "timestamp", "Timestamp"},
    {Field::kDeviceId, "device_id", "DeviceId"},
    {Field::kFileName, "file_name", "FileName"},
    {Field::kFolderPath, "folder_path", "FolderPath"},
    {Field::kCommandLine, "command_line", "ProcessCommandLine"},
    {Field::kProcessId, "process_id", "ProcessId"},
    {Field::kProcessCreationTime, "process_creation_time", "ProcessCreationTime"},
    {Field::kIntegrityLevel, "integrity_level", "ProcessIntegrityLevel"},
    {Field::kAccountName, "account_name", "AccountName"},
    {Field::kParentFileName, "parent_file_name", "InitiatingProcessFileName"},
    {Field::kParentFolderPath, "parent_folder_path", "InitiatingProcessFolderPath"},
    {Field::kParentCommandLine, "parent_command_line", "InitiatingProcessCommandLine"},
    {Field::kParentProcessId, "parent_process_id", "InitiatingProcessId"},
    {Field::kParentCreationTime, "parent_creation_time", "InitiatingProcessCreationTime"},
    {Field::kEndTime, "end_time", "ProcessEndTime"},
};

constexpr Field kMandatory[] = {Field::kTimestamp, Field::kCommandLine, Field::kParentCommandLine};

// One source row, whatever the container format.
class RowView {
 public:
  virtual ~RowView() = default;
  virtual std::optional<std::string> get(const std::string& column) const = 0;
};

class CsvRow : public RowView {
 public:
  CsvRow(const std::unordered_map<std::string, std::size_t>& index, const std::vector<std::string>& cells)
      : index_(index), cells_(cells) {}
  std::optional<std::string> get(const std::string& column) const override {
    auto it = index_.find(column);
    if (it == index_.end() || it->second >= cells_.size()) return std::nullopt;
    return cells_[it->second];
  }

 private:
  const std::unordered_map<std::string, std::size_t>& index_;
  const std::vector<std::string>& cells_;
};

class JsonRow : public RowView {
 public:
  explicit JsonRow(const json& obj) : obj_(obj) {}
  std::optional<std::string> get(const std::string& column) const override {
    auto it = obj_.find(column);
    if (it == obj_.end() || it->is_null()) return std::nullopt;
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
    if (it->is_number_unsigned()) return std::to_string(it->get<std::uint64_t>());
    if (it->is_number_float()) return text::format_double(it->get<double>());
    if (it->is_boolean()) return std::string(it->get<bool>() ? "true" : "false");
    return it->dump();
  }

 private:
  const json& obj_;
};

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = text::trim(s);
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::string> non_empty(std::optional<std::string> v) {
  if (v && text::trim(*v).empty()) return std::nullopt;
  return v;
}

// Defender's FolderPath carries the file name; strip it so the field is a
// directory in every source.
std::string normalize_folder(std::string folder, std::string_view file_name) {
  if (folder.empty() || file_name.empty()) return folder;
  const auto pos = folder.find_last_of("\\/");
  const std::string_view last = pos == std::string::npos ? std::string_view(folder)
                                                         : std::string_view(folder).substr(pos + 1);
  if (text::to_lower(last) == text::to_lower(file_name)) {
    folder.resize(pos == std::string::npos ? 0 : pos);
  }
  return folder;
}

// First executable-like token of a command line, honoring a leading quote.
std::string_view first_token(std::string_view cmd) {
  cmd = text::trim(cmd);
  if (cmd.empty()) return cmd;
  if (cmd.front() == '"') {
    const auto end = cmd.find('"', 1);
    return end == std::string_view::npos ? cmd.substr(1) : cmd.substr(1, end - 1);
  }
  const auto end = cmd.find_first_of(" \t");
  return end == std::string_view::npos ? cmd : cmd.substr(0, end);
}

std::optional<ProcessEvent> build_event(const RowView& row, const SchemaMap& schema, std::size_t row_number) {
  auto col = [&](Field f) { return row.get(schema.column(f)); };

  auto ts_text = col(Field::kTimestamp);
  auto cmd = col(Field::kCommandLine);
  if (!ts_text || !cmd) return std::nullopt;
  auto ts = parse_timestamp(*ts_text);
  if (!ts) return std::nullopt;

  ProcessEvent ev;
  ev.timestamp = std::move(*ts);
  ev.command_line = std::move(*cmd);
  ev.event_id = non_empty(col(Field::kEventId)).value_or("row-" + std::to_string(row_number));
  ev.device_id = col(Field::kDeviceId).value_or("");
  ev.file_name = non_empty(col(Field::kFileName)).value_or(text::basename(first_token(ev.command_line)));
  ev.folder_path = normalize_folder(col(Field::kFolderPath).value_or(""), ev.file_name);
  ev.process_id = parse_int(col(Field::kProcessId).value_or("")).value_or(0);
  ev.process_creation_ns = ev.timestamp.ns;
  if (auto c = col(Field::kProcessCreationTime)) {
    if (auto t = parse_timestamp(*c)) ev.process_creation_ns = t->ns;
  }
  ev.integrity_level = parse_integrity(col(Field::kIntegrityLevel).value_or(""));
  ev.account_name = non_empty(col(Field::kAccountName));
  ev.parent_file_name = non_empty(col(Field::kParentFileName));
  ev.parent_command_line = non_empty(col(Field::kParentCommandLine));
  if (!ev.parent_file_name && ev.parent_command_line) {
    auto derived = text::basename(first_token(*ev.parent_command_line));
    if (!derived.empty()) ev.parent_file_name = derived;
  }
  if (auto pf = non_empty(col(Field::kParentFolderPath))) {
    ev.parent_folder_path = normalize_folder(*pf, ev.parent_file_name.value_or(""));
  }
  ev.parent_process_id = parse_int(col(Field::kParentProcessId).value_or(""));
  if (auto c = col(Field::kParentCreationTime)) {
    if (auto t = parse_timestamp(*c)) ev.parent_creation_ns = t->ns;
  }
  if (auto c = col(Field::kEndTime)) {
    if (auto t = parse_timestamp(*c)) ev.end_time = std::move(*t);
  }
  return ev;
}

void admit(DeviceDataset& ds, std::optional<ProcessEvent> ev, const std::optional<std::string>& forced_device) {
  if (!ev) {
    ++ds.counters.dropped_rows;
    return;
  }
  if (ds.device_id.empty()) ds.device_id = forced_device.value_or(ev->device_id);
  if (!ev->device_id.empty() && !ds.device_id.empty() && ev->device_id != ds.device_id) {
    ++ds.counters.foreign_device_rows;
    return;
  }
  if (ev->device_id.empty()) ev->device_id = ds.device_id;
  ds.events.push_back(std::move(*ev));
}

}  // namespace

std::string_view field_key(Field f) {
  for (const auto& info : kFields) {
    if (info.field == f) return info.key;
  }
  return "";
}

SchemaMap SchemaMap::defender() {
  SchemaMap m;
  for (const auto& info : kFields) m.columns_[info.field] = std::string(info.defender_column);
  return m;
}

SchemaMap SchemaMap::from_json(std::string_view json_text) {
  SchemaMap m = defender();
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("schema map: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("schema_map", "must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    bool known = false;
    for (const auto& info : kFields) {
      if (info.key == it.key()) {
        if (!it->is_string() || it->get<std::string>().empty()) {
          throw ValidationError("schema_map." + it.key(), "column name must be a non-empty string");
        }
        m.columns_[info.field] = it->get<std::string>();
        known = true;
      }
    }
    if (!known) throw ValidationError("schema_map." + it.key(), "unknown field");
  }
  return m;
}

const std::string& SchemaMap::column(Field f) const { return columns_.at(f); }

void SchemaMap::set(Field f, std::string column) { columns_[f] = std::move(column); }

Format format_from_path(std::string_view path) {
  std::string p = text::to_lower(path);
  if (p.size() > 3 && p.ends_with(".gz")) p.resize(p.size() - 3);
  if (p.ends_with(".jsonl") || p.ends_with(".ndjson") || p.ends_with(".json")) return Format::kJsonl;
  return Format::kCsv;
}

void finalize(DeviceDataset& ds) {
  std::stable_sort(ds.events.begin(), ds.events.end(), [](const ProcessEvent& a, const ProcessEvent& b) {
    if (a.timestamp.ns != b.timestamp.ns) return a.timestamp.ns < b.timestamp.ns;
    return a.event_id < b.event_id;
  });
  std::unordered_set<std::string> seen;
  std::vector<ProcessEvent> kept;
  kept.reserve(ds.events.size());
  for (auto& ev : ds.events) {
    if (!seen.insert(ev.event_id).second) {
      ++ds.counters.duplicate_ids;
      continue;
    }
    kept.push_back(std::move(ev));
  }
  ds.events = std::move(kept);
  if (!ds.events.empty()) {
    ds.window_start_ns = ds.events.front().timestamp.ns;
    ds.window_end_ns = ds.events.back().timestamp.ns;
  }
}

DeviceDataset parse_events(std::string_view source, Format format, const SchemaMap& schema,
                           std::optional<std::string> device_id) {
  const std::string clean = text::sanitize_utf8(source);
  DeviceDataset ds;
  if (device_id) ds.device_id = *device_id;

  if (format == Format::kCsv) {
    auto rows = text::parse_csv(clean);
    if (rows.empty()) throw EmptyDatasetError("no rows in CSV source");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < rows[0].size(); ++i) {
      std::string name(text::trim(rows[0][i]));
      // Strip a UTF-8 byte-order mark on the first header.
      if (i == 0 && name.rfind("\xEF\xBB\xBF", 0) == 0) name.erase(0, 3);
      index.emplace(std::move(name), i);
    }
    for (Field f : kMandatory) {
      if (!index.contains(schema.column(f))) {
        throw SchemaError(schema.column(f), "missing mandatory column '" + schema.column(f) + "' (" +
                                                std::string(field_key(f)) + ")");
      }
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
      CsvRow row(index, rows[r]);
      admit(ds, build_event(row, schema, r), device_id);
    }
  } else {
    std::vector<json> objects;
    std::size_t line_no = 0;
    std::size_t start = 0;
    std::unordered_set<std::string> keys_seen;
    std::vector<std::pair<std::size_t, std::size_t>> object_lines;
    while (start <= clean.size()) {
      auto end = clean.find('\n', start);
      if (end == std::string::npos) end = clean.size();
      std::string_view line = text::trim(std::string_view(clean).substr(start, end - start));
      ++line_no;
      if (!line.empty()) {
        try {
          json obj = json::parse(line);
          if (obj.is_object()) {
            for (auto it = obj.begin(); it != obj.end(); ++it) keys_seen.insert(it.key());
            object_lines.emplace_back(objects.size(), line_no);
            objects.push_back(std::move(obj));
          } else {
            ++ds.counters.dropped_rows;
          }
        } catch (const json::exception&) {
          ++ds.counters.dropped_rows;
        }
      }
      if (end == clean.size()) break;
      start = end + 1;
    }
    if (objects.empty()) throw EmptyDatasetError("no JSON objects in JSONL source");
    for (Field f : kMandatory) {
      if (!keys_seen.contains(schema.column(f))) {
        throw SchemaError(schema.column(f), "missing mandatory column '" + schema.column(f) + "' (" +
                                                std::string(field_key(f)) + ")");
      }
    }
    for (auto [idx, ln] : object_lines) {
      JsonRow row(objects[idx]);
      admit(ds, build_event(row, schema, ln), device_id);
    }
  }

  finalize(ds);
  if (ds.events.empty()) throw EmptyDatasetError("no parsable rows (" + std::to_string(ds.counters.dropped_rows) + " dropped)");
  return ds;
}

std::vector<ImageLoadEvent> parse_image_events(std::string_view source, Format format, const ImageSchemaMap& schema) {
  const std::string clean = text::sanitize_utf8(source);
  std::vector<ImageLoadEvent> out;

  auto build = [&](const RowView& row) -> std::optional<ImageLoadEvent> {
    auto name = non_empty(row.get(schema.file_name));
    auto ts_text = row.get(schema.timestamp);
    if (!name || !ts_text) return std::nullopt;
    auto ts = parse_timestamp(*ts_text);
    if (!ts) return std::nullopt;
    ImageLoadEvent ev;
    ev.timestamp = std::move(*ts);
    ev.image_file_name = std::string(text::trim(*name));
    ev.device_id = row.get(schema.device_id).value_or("");
    ev.image_folder_path = normalize_folder(row.get(schema.folder_path).value_or(""), ev.image_file_name);
    ev.loading_process_id = parse_int(row.get(schema.process_id).value_or("")).value_or(0);
    ev.loading_process_creation_ns = ev.timestamp.ns;
    if (auto c = row.get(schema.process_creation_time)) {
      if (auto t = parse_timestamp(*c)) ev.loading_process_creation_ns = t->ns;
    }
    ev.hash = non_empty(row.get(schema.hash));
    return ev;
  };

  if (format == Format::kCsv) {
    auto rows = text::parse_csv(clean);
    if (rows.empty()) return out;
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < rows[0].size(); ++i) index.emplace(std::string(text::trim(rows[0][i])), i);
    if (!index.contains(schema.file_name)) {
      throw SchemaError(schema.file_name, "missing image file name column '" + schema.file_name + "'");
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
      CsvRow row(index, rows[r]);
      if (auto ev = build(row)) out.push_back(std::move(*ev));
    }
  } else {
    std::size_t start = 0;
    while (start < clean.size()) {
      auto end = clean.find('\n', start);
      if (end == std::string::npos) end = clean.size();
      std::string_view line = text::trim(std::string_view(clean).substr(start, end - start));
      if (!line.empty()) {
        try {
          json obj = json::parse(line);
          if (obj.is_object()) {
            JsonRow row(obj);
            if (auto ev = build(row)) out.push_back(std::move(*ev));
          }
        } catch (const json::exception&) {
        }
      }
      start = end + 1;
    }
  }
  return out;
}

DeviceDataset preprocess_raw_logs(const std::vector<std::string>& lines, std::string device_id) {
  DeviceDataset ds;
  ds.device_id = std::move(device_id);
  std::size_t line_no = 0;
  for (const auto& raw : lines) {
    ++line_no;
    const std::string clean = text::sanitize_utf8(raw);
    std::string_view line = text::trim(clean);
    if (line.empty()) continue;
    const auto sep = line.find_first_of(" \t");
    if (sep == std::string_view::npos) {
      ++ds.counters.skipped_lines;
      continue;
    }
    auto ts = parse_timestamp(line.substr(0, sep));
    std::string_view rest = text::trim(line.substr(sep));
    if (!ts || rest.empty()) {
      ++ds.counters.skipped_lines;
      continue;
    }
    ProcessEvent ev;
    ev.event_id = "line-" + std::to_string(line_no);
    ev.timestamp = std::move(*ts);
    ev.device_id = ds.device_id;
    ev.command_line = std::string(rest);
    const std::string_view exe = first_token(rest);
    ev.file_name = text::basename(exe);
    const auto slash = exe.find_last_of("\\/");
    if (slash != std::string_view::npos) ev.folder_path = std::string(exe.substr(0, slash));
    ev.process_creation_ns = ev.timestamp.ns;
    ds.events.push_back(std::move(ev));
  }
  finalize(ds);
  if (ds.events.empty()) throw EmptyDatasetError("no well-formed log lines (" + std::to_string(ds.counters.skipped_lines) + " skipped)");
  return ds;
}

DeviceDataset preprocess_raw_logs(std::string_view text, std::string device_id) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.emplace_back(text.substr(start, end - start));
    if (end == text.size()) break;
    start = end + 1;
  }
  return preprocess_raw_logs(lines, std::move(device_id));
}

DeviceDataset join_image_events(DeviceDataset dataset, std::vector<ImageLoadEvent> images) {
  struct KeyHash {
    std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& k) const {
      return std::hash<std::int64_t>()(k.first) * 1000003u ^ std::hash<std::int64_t>()(k.second);
    }
  };
  std::unordered_map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>, KeyHash> by_key;
  for (std::size_t i = 0; i < dataset.events.size(); ++i) {
    auto& ev = dataset.events[i];
    ev.loaded_images.clear();
    by_key[{ev.process_id, ev.process_creation_ns}].push_back(i);
  }
  std::stable_sort(images.begin(), images.end(), [](const ImageLoadEvent& a, const ImageLoadEvent& b) {
    if (a.timestamp.ns != b.timestamp.ns) return a.timestamp.ns < b.timestamp.ns;
    return a.image_file_name < b.image_file_name;
  });
  for (const auto& img : images) {
    auto it = by_key.find({img.loading_process_id, img.loading_process_creation_ns});
    if (it == by_key.end()) continue;
    for (std::size_t idx : it->second) {
      dataset.events[idx].loaded_images.push_back({img.image_file_name, img.image_folder_path, img.timestamp.ns});
    }
  }
  dataset.image_events = std::move(images);
  return dataset;
}

DeviceDataset filter_window(DeviceDataset dataset, int days) {
  if (days <= 0 || dataset.events.empty()) return dataset;
  const std::int64_t cutoff = dataset.window_end_ns - static_cast<std::int64_t>(days) * kNanosPerDay;
  std::erase_if(dataset.events, [&](const ProcessEvent& ev) { return ev.timestamp.ns < cutoff; });
  std::erase_if(dataset.image_events, [&](const ImageLoadEvent& ev) { return ev.timestamp.ns < cutoff; });
  finalize(dataset);
  return dataset;
}

std::string serialize_csv(const DeviceDataset& dataset) {
  std::string out;
  bool first = true;
  for (const auto& info : kFields) {
    if (!first) out.push_back(',');
    out.append(info.defender_column);
    first = false;
  }
  out.push_back('\n');
  auto ts9 = [](std::int64_t ns) { return format_timestamp(ns, 9); };
  for (const auto& ev : dataset.events) {
    std::vector<std::string> cells = {
        ev.event_id,
        ev.timestamp.text.empty() ? format_timestamp(ev.timestamp.ns, ev.timestamp.fraction_digits) : ev.timestamp.text,
        ev.device_id,
        ev.file_name,
        ev.folder_path,
        ev.command_line,
        std::to_string(ev.process_id),
        ts9(ev.process_creation_ns),
        std::string(integrity_name(ev.integrity_level)),
        ev.account_name.value_or(""),
        ev.parent_file_name.value_or(""),
        ev.parent_folder_path.value_or(""),
        ev.parent_command_line.value_or(""),
        ev.parent_process_id ? std::to_string(*ev.parent_process_id) : "",
        ev.parent_creation_ns ? ts9(*ev.parent_creation_ns) : "",
        ev.end_time ? (ev.end_time->text.empty() ? ts9(ev.end_time->ns) : ev.end_time->text) : "",
    };
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out.push_back(',');
      out += text::csv_escape(cells[i]);
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace isoex::ingest
