#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tos/solvers.hpp"

namespace tos {

// Shortest representation that round-trips the double exactly.
std::string csv_double(double v);

// One file per run: a comment line identifying (algorithm, seed, config
// hash), a header row, then epoch,k,objective,gap,psnr,seconds. The gap and
// psnr cells are empty when the run recorded no value for them.
std::string format_run_csv(const RunRecord<double>& rec);
void write_run_csv(const std::filesystem::path& path, const RunRecord<double>& rec);

// Row-wise aggregate across seeds, grouped by algorithm in first-appearance
// order. All records of one algorithm must share the same (epoch, k)
// schedule. Stddev is the sample estimate; a single seed reports 0.
std::string format_summary_csv(const std::vector<RunRecord<double>>& recs);
void write_summary_csv(const std::filesystem::path& path, const std::vector<RunRecord<double>>& recs);

}  // namespace tos
