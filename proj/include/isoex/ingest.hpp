#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "isoex/timestamp.hpp"

namespace isoex::ingest {

enum class IntegrityLevel : std::uint8_t {
  kUntrusted = 0,
  kLow = 1,
  kMedium = 2,
  kHigh = 3,
  kSystem = 4,
  kInstaller = 5,
  kUnknown = 6,
};

// Case-insensitive; anything unrecognized maps to kUnknown.
IntegrityLevel parse_integrity(std::string_view s);
std::string_view integrity_name(IntegrityLevel level);

struct LoadedImage {
  std::string file_name;
  std::string folder_path;
  std::int64_t timestamp_ns = 0;

  bool operator==(const LoadedImage&) const = default;
};

struct ProcessEvent {
  std::string event_id;
  Timestamp timestamp;
  std::string device_id;
  std::string file_name;
  std::string folder_path;
  std::string command_line;
  std::int64_t process_id = 0;
  std::int64_t process_creation_ns = 0;
  IntegrityLevel integrity_level = IntegrityLevel::kUnknown;
  std::optional<std::string> account_name;
  std::optional<std::string> parent_file_name;
  std::optional<std::string> parent_folder_path;
  std::optional<std::string> parent_command_line;
  std::optional<std::int64_t> parent_process_id;
  std::optional<std::int64_t> parent_creation_ns;
  std::optional<Timestamp> end_time;

  // Filled by join_image_events, ordered by load timestamp.
  std::vector<LoadedImage> loaded_images;

  bool operator==(const ProcessEvent&) const = default;

  bool has_parent_key() const { return parent_process_id.has_value() && parent_creation_ns.has_value(); }
};

struct ImageLoadEvent {
  Timestamp timestamp;
  std::string device_id;
  std::string image_file_name;
  std::string image_folder_path;
  std::int64_t loading_process_id = 0;
  std::int64_t loading_process_creation_ns = 0;
  std::optional<std::string> hash;
};

struct IngestCounters {
  std::size_t dropped_rows = 0;
  std::size_t skipped_lines = 0;
  std::size_t duplicate_ids = 0;
  std::size_t foreign_device_rows = 0;
};

struct DeviceDataset {
  std::string device_id;
  std::vector<ProcessEvent> events;
  std::vector<ImageLoadEvent> image_events;
  std::int64_t window_start_ns = 0;
  std::int64_t window_end_ns = 0;
  IngestCounters counters;
};

enum class Format { kCsv, kJsonl };

// Logical ProcessEvent fields that a source column can be mapped onto.
enum class Field {
  kEventId,
  kTimestamp,
  kDeviceId,
  kFileName,
  kFolderPath,
  kCommandLine,
  kProcessId,
  kProcessCreationTime,
  kIntegrityLevel,
  kAccountName,
  kParentFileName,
  kParentFolderPath,
  kParentCommandLine,
  kParentProcessId,
  kParentCreationTime,
  kEndTime,
};

std::string_view field_key(Field f);

// Maps logical fields to source column names. Defaults follow the Defender
// DeviceProcessEvents headers ("Timestamp", "ProcessCommandLine",
// "InitiatingProcess*").
class SchemaMap {
 public:
  static SchemaMap defender();
  // JSON object keyed by field_key() names; unspecified fields keep defaults.
  static SchemaMap from_json(std::string_view json_text);

  const std::string& column(Field f) const;
  void set(Field f, std::string column);

 private:
  std::map<Field, std::string> columns_;
};

// Image-load tables use their own column set (DeviceImageLoadEvents).
struct ImageSchemaMap {
  std::string timestamp = "Timestamp";
  std::string device_id = "DeviceId";
  std::string file_name = "FileName";
  std::string folder_path = "FolderPath";
  std::string process_id = "InitiatingProcessId";
  std::string process_creation_time = "InitiatingProcessCreationTime";
  std::string hash = "SHA1";
};

Format format_from_path(std::string_view path);

// Parses process events. Throws SchemaError when timestamp, command line or
// parent command line columns are absent, EmptyDatasetError when no row
// survives. Rows with an unparseable timestamp are dropped and counted.
DeviceDataset parse_events(std::string_view source, Format format,
                           const SchemaMap& schema = SchemaMap::defender(),
                           std::optional<std::string> device_id = std::nullopt);

std::vector<ImageLoadEvent> parse_image_events(std::string_view source, Format format,
                                               const ImageSchemaMap& schema = {});

// Raw "timestamp executable args..." lines.
DeviceDataset preprocess_raw_logs(const std::vector<std::string>& lines,
                                  std::string device_id = "raw");
DeviceDataset preprocess_raw_logs(std::string_view text, std::string device_id = "raw");

// Attaches each image load to every event with the same
// (process id, creation time). Existing lists are rebuilt, so the operation
// is idempotent.
DeviceDataset join_image_events(DeviceDataset dataset, std::vector<ImageLoadEvent> images);

// Keeps events whose timestamp lies within `days` of the latest event.
DeviceDataset filter_window(DeviceDataset dataset, int days);

// Canonical Defender-header CSV of every populated field.
std::string serialize_csv(const DeviceDataset& dataset);

// Sorts, deduplicates ids and recomputes the observation window.
void finalize(DeviceDataset& dataset);

}  // namespace isoex::ingest
