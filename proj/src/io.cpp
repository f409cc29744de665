#include "covshare/io.hpp"

#include "covshare/error.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

namespace covshare::io {

namespace {

using json = nlohmann::json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::invalid_input, "cannot open for writing: " + path.string());
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

CsvMatrix parse_csv_matrix(std::istream& in, const std::string& source) {
  CsvMatrix out;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_row(line);
    std::vector<double> row(cells.size());
    bool numeric = true;
    std::size_t bad_col = 0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (!parse_number(cells[j], row[j])) {
        numeric = false;
        bad_col = j + 1;
        break;
      }
    }
    if (!numeric) {
      if (rows.empty() && out.header.empty()) {
        out.header = cells;
        width = cells.size();
        continue;
      }
      fail(ErrorKind::invalid_input, source + ": line " + std::to_string(line_no) + ", column " +
                                         std::to_string(bad_col) + ": not a number: '" + cells[bad_col - 1] + "'");
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      fail(ErrorKind::invalid_input, source + ": line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(width) + " columns, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::invalid_input, source + ": no numeric rows");
  out.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) out.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return out;
}

CsvMatrix read_csv_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::invalid_input, "cannot open: " + path.string());
  return parse_csv_matrix(in, path.string());
}

void write_csv_matrix(std::ostream& out, const Eigen::Ref<const Matrix>& m, const std::vector<std::string>& header) {
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

void write_csv_matrix(const std::filesystem::path& path, const Eigen::Ref<const Matrix>& m,
                      const std::vector<std::string>& header) {
  auto out = open_out(path);
  write_csv_matrix(out, m, header);
}

void write_chain_jsonl(const std::filesystem::path& path, const GibbsChain& chain) {
  auto out = open_out(path);
  const ChainConfig& c = chain.config;
  for (std::size_t i = 0; i < chain.draws.size(); ++i) {
    const GroupSpikeParams& d = chain.draws[i];
    json j;
    j["iteration"] = c.burn_in + static_cast<int>(i + 1) * c.thin - 1;
    j["sigma2"] = d.sigma2();
    j["omega"] = std::vector<double>(d.omega().data(), d.omega().data() + d.omega().size());
    j["rows"] = d.eigvecs().rows();
    j["o"] = std::vector<double>(d.eigvecs().data(), d.eigvecs().data() + d.eigvecs().size());
    out << j.dump() << '\n';
  }
}

std::vector<GroupSpikeParams> read_chain_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::invalid_input, "cannot open: " + path.string());
  std::vector<GroupSpikeParams> draws;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    const auto omega = j.at("omega").get<std::vector<double>>();
    const auto o = j.at("o").get<std::vector<double>>();
    const Index rows = j.at("rows").get<Index>();
    const Index cols = static_cast<Index>(omega.size());
    draws.emplace_back(j.at("sigma2").get<double>(), Eigen::Map<const Matrix>(o.data(), rows, cols),
                       Eigen::Map<const Vector>(omega.data(), cols), 1e-9);
  }
  return draws;
}

void write_angle_ratio_csv(const std::filesystem::path& path, std::span<const AngleRatioSummary> rows) {
  auto out = open_out(path);
  out << "draw,angle,log_ratio\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    out << i << ',' << format_double(rows[i].angle) << ',' << format_double(rows[i].log_ratio) << '\n';
}

void write_region_csv(const std::filesystem::path& path, const PosteriorRegion& region) {
  auto out = open_out(path);
  out << "angle,log_ratio\n";
  for (const auto& v : region.vertices) out << format_double(v.x) << ',' << format_double(v.y) << '\n';
}

void write_report_csv(const std::filesystem::path& path, const sim::ExperimentReport& report) {
  auto out = open_out(path);
  for (const auto& k : report.key_columns) out << k << ',';
  out << "replication";
  for (const auto& v : report.value_columns) out << ',' << v;
  out << '\n';
  for (const auto& row : report.rows) {
    for (const auto& k : row.key) out << k << ',';
    out << row.replication;
    for (double v : row.values) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_report_json(const std::filesystem::path& path, const sim::ExperimentReport& report) {
  json j;
  j["experiment"] = report.name;
  j["replications"] = report.replications;
  j["seed"] = report.seed;
  j["wall_seconds"] = report.wall_seconds;
  j["key_columns"] = report.key_columns;
  j["value_columns"] = report.value_columns;
  json cells = json::array();
  for (const auto& c : report.cells) {
    json cell;
    cell["key"] = c.key;
    cell["count"] = c.count;
    cell["mean"] = c.mean;
    cell["q025"] = c.q025;
    cell["q975"] = c.q975;
    cell["std_error"] = c.std_error;
    for (const auto& [name, v] : c.extra_means) cell["mean_" + name] = v;
    cells.push_back(std::move(cell));
  }
  j["cells"] = std::move(cells);
  write_text(path, j.dump(2) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

}  // namespace covshare::io
