#include "krls/error.hpp"
#include "krls/profile.hpp"

#include <fstream>

namespace krls {

namespace {

using nlohmann::json;

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_array(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::MatrixXd read_matrix(const json& doc, const char* key, Eigen::Index rows, Eigen::Index cols) {
  if (!doc.contains(key)) throw ParseError(std::string("profile snapshot: missing '") + key + "'");
  const json& a = doc.at(key);
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != rows)
    throw ParseError(std::string("profile snapshot: '") + key + "' must have " +
                     std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = a[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ParseError(std::string("profile snapshot: row ") + std::to_string(i) + " of '" + key +
                       "' must have " + std::to_string(cols) + " entries");
    for (Eigen::Index j = 0; j < cols; ++j) {
      const json& x = row[static_cast<std::size_t>(j)];
      if (!x.is_number()) throw ParseError(std::string("profile snapshot: non-numeric entry in '") + key + "'");
      m(i, j) = x.get<double>();
    }
  }
  return m;
}

Eigen::VectorXd read_vector(const json& doc, const char* key, Eigen::Index n) {
  if (!doc.contains(key)) throw ParseError(std::string("profile snapshot: missing '") + key + "'");
  const json& a = doc.at(key);
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != n)
    throw ParseError(std::string("profile snapshot: '") + key + "' must have length " + std::to_string(n));
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& x = a[static_cast<std::size_t>(i)];
    if (!x.is_number()) throw ParseError(std::string("profile snapshot: non-numeric entry in '") + key + "'");
    v(i) = x.get<double>();
  }
  return v;
}

double read_number(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc.at(key).is_number())
    throw ParseError(std::string("profile snapshot: missing number '") + key + "'");
  return doc.at(key).get<double>();
}

}  // namespace

nlohmann::json profile_to_json(const Profile& p) {
  json doc;
  doc["format"] = "krls-profile";
  doc["version"] = kProfileFormatVersion;
  doc["dims"] = {{"N", p.input_dim()}, {"L", p.size()}, {"Q", p.atoms()}};
  doc["kernel"] = p.kernel().to_string();
  doc["gamma"] = p.base_regularizer();
  doc["xi"] = p.regularizer();
  doc["reg_scale"] = vector_array(p.regularizer_scale());
  doc["lam"] = vector_array(p.sample_weights());
  doc["X"] = matrix_rows(p.samples());
  doc["K"] = matrix_rows(p.kernel_matrix());
  doc["W"] = matrix_rows(p.codes());
  doc["C"] = matrix_rows(p.inverse_code_gram());
  doc["U"] = matrix_rows(p.atom_weights());
  doc["Psi"] = matrix_rows(p.atom_gram());
  return doc;
}

Profile profile_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", std::string{}) != "krls-profile")
    throw ParseError("profile snapshot: not a krls-profile document");
  if (!doc.contains("version") || !doc.at("version").is_number_integer() ||
      doc.at("version").get<int>() != kProfileFormatVersion)
    throw ParseError("profile snapshot: unsupported version");
  if (!doc.contains("dims") || !doc.at("dims").is_object())
    throw ParseError("profile snapshot: missing 'dims'");
  const json& dims = doc.at("dims");
  auto dim = [&](const char* k) {
    if (!dims.contains(k) || !dims.at(k).is_number_integer() || dims.at(k).get<long long>() < 0)
      throw ParseError(std::string("profile snapshot: bad dimension '") + k + "'");
    return static_cast<Eigen::Index>(dims.at(k).get<long long>());
  };
  const Eigen::Index n = dim("N");
  const Eigen::Index l = dim("L");
  const Eigen::Index q = dim("Q");
  if (!doc.contains("kernel") || !doc.at("kernel").is_string())
    throw ParseError("profile snapshot: missing 'kernel'");

  Profile p = Profile::from_parts(
      Kernel::parse(doc.at("kernel").get<std::string>()), read_matrix(doc, "X", n, l),
      read_matrix(doc, "K", l, l), read_matrix(doc, "W", q, l), read_matrix(doc, "C", q, q),
      read_matrix(doc, "U", q, l), read_matrix(doc, "Psi", q, q), read_vector(doc, "lam", l),
      read_number(doc, "xi"), read_number(doc, "gamma"),
      doc.contains("reg_scale") ? read_vector(doc, "reg_scale", q) : Eigen::VectorXd::Ones(q));
  p.validate();
  return p;
}

void save_profile(const Profile& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << profile_to_json(p).dump() << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

Profile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("profile snapshot " + path.string() + ": " + e.what());
  }
  return profile_from_json(doc);
}

}  // namespace krls
