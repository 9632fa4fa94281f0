#pragma once

#include <string>
#include <vector>

#include "mfair/pipeline/config.hpp"

namespace mfair::pipeline {

struct RunOutput {
  std::string hash;
  std::vector<std::string> files;
};

RunOutput run_simulate(const RunConfig& cfg, const std::string& out_dir);
RunOutput run_generate(const RunConfig& cfg, const std::string& out_dir);
RunOutput run_audit(const RunConfig& cfg, const std::string& out_dir);
// Recomputes summary, Gini and quantile-bin tables from a decisions file.
RunOutput run_report(const RunConfig& cfg, const std::string& out_dir);
RunOutput run_sensitivity(const RunConfig& cfg, const std::string& out_dir);

}  // namespace mfair::pipeline
