#include "csem/data_io.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "csem/errors.hpp"

namespace csem {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_cell(const std::string& cell, long row, const std::string& column) {
  if (cell.empty() || cell == "NA")
    return std::numeric_limits<double>::quiet_NaN();
  const char* start = cell.c_str();
  char* stop = nullptr;
  double v = std::strtod(start, &stop);
  if (stop == start || *stop != '\0')
    throw NonNumericCell("row " + std::to_string(row) + ", column " + column +
                         ": cannot read '" + cell + "' as a number");
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw Error(path + " is empty");
  Dataset data;
  data.columns = split_csv_line(line);
  if (data.columns.empty()) throw Error(path + " has no header columns");
  const size_t p = data.columns.size();

  std::vector<std::vector<double>> rows;
  long row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != p)
      throw Error(path + " row " + std::to_string(row_no) + " has " +
                  std::to_string(cells.size()) + " cells, expected " + std::to_string(p));
    std::vector<double> row(p);
    for (size_t j = 0; j < p; ++j) row[j] = parse_cell(cells[j], row_no, data.columns[j]);
    rows.push_back(std::move(row));
  }

  data.values.resize(static_cast<long>(rows.size()), static_cast<long>(p));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < p; ++j) data.values(static_cast<long>(i), static_cast<long>(j)) = rows[i][j];
  return data;
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (size_t j = 0; j < data.columns.size(); ++j) {
    if (j) out << ",";
    out << data.columns[j];
  }
  out << "\n";
  out.precision(17);
  for (long i = 0; i < data.values.rows(); ++i) {
    for (long j = 0; j < data.values.cols(); ++j) {
      if (j) out << ",";
      out << data.values(i, j);
    }
    out << "\n";
  }
}

Dataset listwise_complete(const Dataset& data, const std::vector<std::string>& columns) {
  std::vector<int> check;
  if (columns.empty()) {
    for (size_t j = 0; j < data.columns.size(); ++j) check.push_back(static_cast<int>(j));
  } else {
    for (const auto& name : columns) {
      int j = data.column_index(name);
      if (j < 0) throw MissingColumn("data has no column " + name);
      check.push_back(j);
    }
  }

  std::vector<long> keep;
  for (long i = 0; i < data.values.rows(); ++i) {
    bool complete = true;
    for (int j : check)
      if (std::isnan(data.values(i, j))) {
        complete = false;
        break;
      }
    if (complete) keep.push_back(i);
  }

  Dataset out;
  out.columns = data.columns;
  out.values.resize(static_cast<long>(keep.size()), data.values.cols());
  for (size_t i = 0; i < keep.size(); ++i) out.values.row(static_cast<long>(i)) = data.values.row(keep[i]);
  return out;
}

Dataset zscore(const Dataset& data) {
  const long n = data.values.rows();
  if (n < 2) throw TooFewRows("need at least 2 rows to standardize, got " + std::to_string(n));
  Dataset out = data;
  for (long j = 0; j < out.values.cols(); ++j) {
    double mean = out.values.col(j).mean();
    double ss = (out.values.col(j).array() - mean).square().sum();
    double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd <= 0.0)
      throw ZeroVariance("column " + data.columns[static_cast<size_t>(j)] +
                         " has zero variance");
    out.values.col(j) = (out.values.col(j).array() - mean) / sd;
  }
  return out;
}

SampleMoments moments_from_data(const Dataset& data, const std::vector<std::string>& columns) {
  const long n = data.values.rows();
  const int p = static_cast<int>(columns.size());
  if (n < 2) throw TooFewRows("need at least 2 rows, got " + std::to_string(n));

  Eigen::MatrixXd x(n, p);
  for (int j = 0; j < p; ++j) {
    int col = data.column_index(columns[j]);
    if (col < 0) throw MissingColumn("data has no column " + columns[j]);
    x.col(j) = data.values.col(col);
  }
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean;

  SampleMoments m;
  m.s = centered.transpose() * centered / static_cast<double>(n - 1);
  m.n = n;
  m.order = columns;
  return m;
}

SampleMoments load_covariance_csv(const std::string& path, long n) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  if (n < 2) throw TooFewRows("covariance input needs a sample size of at least 2");

  std::string line;
  if (!std::getline(in, line)) throw Error(path + " is empty");
  std::vector<std::string> header = split_csv_line(line);
  if (!header.empty() && header.front().empty()) header.erase(header.begin());
  const size_t p = header.size();
  if (p == 0) throw Error(path + " has no header columns");

  SampleMoments m;
  m.order = header;
  m.n = n;
  m.s.resize(static_cast<long>(p), static_cast<long>(p));

  size_t r = 0;
  long row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    if (r >= p) throw Error(path + " has more rows than header columns");
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() == p + 1 && cells.front() == header[r]) cells.erase(cells.begin());
    if (cells.size() != p)
      throw Error(path + " row " + std::to_string(row_no) + " has " +
                  std::to_string(cells.size()) + " cells, expected " + std::to_string(p));
    for (size_t j = 0; j < p; ++j) {
      double v = parse_cell(cells[j], row_no, header[j]);
      if (std::isnan(v))
        throw NonNumericCell("row " + std::to_string(row_no) + ", column " + header[j] +
                             ": covariance entries cannot be missing");
      m.s(static_cast<long>(r), static_cast<long>(j)) = v;
    }
    ++r;
  }
  if (r != p) throw Error(path + " has " + std::to_string(r) + " rows, expected " +
                          std::to_string(p));
  m.s = ((m.s + m.s.transpose()) / 2.0).eval();
  return m;
}

}  // namespace csem
