#pragma once

// File formats: numeric CSV matrices, JSONL chains, and report tables.

#include "covshare/experiments.hpp"
#include "covshare/gibbs.hpp"
#include "covshare/posterior_summary.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace covshare::io {

struct CsvMatrix {
  Matrix values;
  std::vector<std::string> header;  // empty when the file had no header row
};

/// Reads a numeric CSV. A first row that does not parse as numbers is taken
/// as a header. Ragged rows and non-numeric cells fail with the offending
/// line and column.
CsvMatrix read_csv_matrix(const std::filesystem::path& path);
CsvMatrix parse_csv_matrix(std::istream& in, const std::string& source = "<stream>");

void write_csv_matrix(const std::filesystem::path& path, const Eigen::Ref<const Matrix>& m,
                      const std::vector<std::string>& header = {});
void write_csv_matrix(std::ostream& out, const Eigen::Ref<const Matrix>& m,
                      const std::vector<std::string>& header = {});

/// Shortest round-trip representation of a double.
std::string format_double(double x);

/// One JSON object per draw: {"iteration", "sigma2", "omega", "o"} with o
/// stored column-major.
void write_chain_jsonl(const std::filesystem::path& path, const GibbsChain& chain);
std::vector<GroupSpikeParams> read_chain_jsonl(const std::filesystem::path& path);

void write_angle_ratio_csv(const std::filesystem::path& path, std::span<const AngleRatioSummary> rows);
void write_region_csv(const std::filesystem::path& path, const PosteriorRegion& region);

/// One row per report row: key columns, replication, value columns.
void write_report_csv(const std::filesystem::path& path, const sim::ExperimentReport& report);
/// Cell summaries plus run metadata.
void write_report_json(const std::filesystem::path& path, const sim::ExperimentReport& report);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace covshare::io
