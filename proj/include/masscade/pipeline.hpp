#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "masscade/config.hpp"

namespace masscade {

/// Where a stage reads and writes. Stage inputs come from
/// `in_root / <previous stage>`, outputs go to `out_root / <stage>`; the
/// dataset is only read by `preprocess`.
struct StageContext {
  PipelineConfig config;
  std::filesystem::path data_dir;
  std::filesystem::path in_root;
  std::filesystem::path out_root;
  int jobs = 1;
};

/// preprocess, sift, candidates, features, train, predict, froc, heatmap.
const std::vector<std::string>& stage_names();

/// Writes config.synth.n_cases phantoms plus manifest.json under `out_dir`.
void cmd_synth(const PipelineConfig& config, const std::filesystem::path& out_dir, int jobs);

/// Runs one named stage. Errors carry the stage name and, for per-case work,
/// the case id; their type (DataError / PipelineError) is preserved.
void run_stage(const std::string& stage, const StageContext& ctx);

/// All stages in order, each reading the previous stage's files from out_root.
void cmd_run(const StageContext& ctx);

/// Runs fn(0..n-1) on up to `jobs` threads. If any calls throw, the exception
/// of the lowest index is rethrown after all threads finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace masscade
