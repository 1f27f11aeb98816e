#include "krls/dataset.hpp"

#include "krls/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace krls {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_double(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* first = cell.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size();
}

bool parse_integer(const std::string& s, long long& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

std::string shortest_repr(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::vector<std::size_t>> Dataset::class_members() const {
  std::vector<std::vector<std::size_t>> out(classes());
  for (std::size_t j = 0; j < labels.size(); ++j) out.at(labels[j]).push_back(j);
  return out;
}

Dataset parse_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split(line);
      break;
    }
  }
  if (header.empty()) throw ParseError(source + ": empty file");

  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) throw ParseError(source + ": no column named 'label'");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  Dataset d;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != label_col) d.feature_names.push_back(header[c]);
  const std::size_t n = d.feature_names.size();
  if (n == 0) throw ParseError(source + ": no feature columns");

  std::vector<double> values;
  std::vector<std::string> raw_labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> cells = split(line);
    const std::string where = source + ": row " + std::to_string(row) + " (line " +
                              std::to_string(line_no) + ")";
    if (cells.size() != header.size())
      throw ParseError(where + " has " + std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_col) {
        if (cells[c].empty()) throw ParseError(where + ": empty label");
        raw_labels.push_back(cells[c]);
        continue;
      }
      double v = 0.0;
      if (!parse_double(cells[c], v))
        throw ParseError(where + ": column '" + header[c] + "' is not numeric: '" + cells[c] + "'");
      if (!std::isfinite(v))
        throw ParseError(where + ": column '" + header[c] + "' is not finite");
      values.push_back(v);
    }
  }
  if (row == 0) throw ParseError(source + ": no data rows");

  d.samples = Eigen::Map<const Eigen::MatrixXd>(values.data(), static_cast<Eigen::Index>(n),
                                                static_cast<Eigen::Index>(row));

  std::vector<std::string> names = raw_labels;
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  bool numeric = true;
  std::vector<long long> as_int(names.size());
  for (std::size_t i = 0; i < names.size() && numeric; ++i) numeric = parse_integer(names[i], as_int[i]);
  if (numeric) {
    std::vector<std::size_t> order(names.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return as_int[a] < as_int[b]; });
    std::vector<std::string> sorted;
    for (std::size_t i : order) sorted.push_back(names[i]);
    names = std::move(sorted);
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < names.size(); ++i) index[names[i]] = i;
  d.label_names = names;
  d.labels.reserve(raw_labels.size());
  for (const std::string& s : raw_labels) d.labels.push_back(index.at(s));
  return d;
}

Dataset ingest_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path.string());
}

std::string format_csv(const Dataset& data) {
  if (data.labels.size() != static_cast<std::size_t>(data.samples.cols()))
    throw DimensionMismatch("write_csv: one label per sample required");
  std::string out;
  for (Eigen::Index i = 0; i < data.samples.rows(); ++i) {
    out += static_cast<std::size_t>(i) < data.feature_names.size()
               ? data.feature_names[static_cast<std::size_t>(i)]
               : "f" + std::to_string(i);
    out += ',';
  }
  out += "label\n";
  for (Eigen::Index j = 0; j < data.samples.cols(); ++j) {
    for (Eigen::Index i = 0; i < data.samples.rows(); ++i) {
      out += shortest_repr(data.samples(i, j));
      out += ',';
    }
    out += data.label_names.at(data.labels[static_cast<std::size_t>(j)]);
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  const std::string text = format_csv(data);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

Dataset planted_dictionary_dataset(const PlantedOptions& o) {
  if (o.classes < 1 || o.dim < 1 || o.atoms < 1 || o.per_class < 1)
    throw InvalidArgument("planted dataset: sizes must be positive");
  if (o.sparsity < 1 || o.sparsity > o.atoms)
    throw InvalidArgument("planted dataset: sparsity must lie in [1, atoms]");

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(o.dim);
  const auto q = static_cast<Eigen::Index>(o.atoms);

  std::vector<Eigen::MatrixXd> dicts;
  for (std::size_t c = 0; c < o.classes; ++c) {
    Eigen::MatrixXd a(n, q);
    for (Eigen::Index j = 0; j < q; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) a(i, j) = gauss(rng);
      a.col(j).normalize();
    }
    dicts.push_back(std::move(a));
  }

  Dataset d;
  const std::size_t total = o.classes * o.per_class;
  d.samples.resize(n, static_cast<Eigen::Index>(total));
  d.labels.resize(total);
  std::vector<std::size_t> atom_ids(o.atoms);
  for (std::size_t t = 0; t < total; ++t) {
    const std::size_t c = t % o.classes;
    std::iota(atom_ids.begin(), atom_ids.end(), std::size_t{0});
    std::shuffle(atom_ids.begin(), atom_ids.end(), rng);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < o.sparsity; ++k)
      x += gauss(rng) * dicts[c].col(static_cast<Eigen::Index>(atom_ids[k]));
    for (Eigen::Index i = 0; i < n; ++i) x(i) += o.noise * gauss(rng);
    d.samples.col(static_cast<Eigen::Index>(t)) = x;
    d.labels[t] = c;
  }
  for (std::size_t c = 0; c < o.classes; ++c) d.label_names.push_back(std::to_string(c));
  for (std::size_t i = 0; i < o.dim; ++i) d.feature_names.push_back("f" + std::to_string(i));
  return d;
}

}  // namespace krls
