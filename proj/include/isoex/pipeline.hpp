#pragma once

#include <optional>
#include <string>

#include "isoex/ingest.hpp"
#include "isoex/report.hpp"
#include "isoex/rules.hpp"

namespace isoex::pipeline {

// Runs features, augmentation, fitting, scoring, attribution, clustering and
// lineage. Errors keep their kind and gain a "<stage>: " message prefix.
report::DeviceReport analyze_device(ingest::DeviceDataset dataset, const rules::RuleConfig& config,
                                    const report::AnalysisParams& params);

// Reads an events file (CSV or JSONL by extension) and optionally an image
// load file, then joins them.
ingest::DeviceDataset load_dataset(const std::string& events_path, const std::optional<std::string>& images_path);

}  // namespace isoex::pipeline
