#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace krls {

/// Labeled samples, one per column.
struct Dataset {
  Eigen::MatrixXd samples;               ///< N x L_tot
  std::vector<std::size_t> labels;       ///< in 0..C-1
  std::vector<std::string> label_names;  ///< original label of each class index
  std::vector<std::string> feature_names;

  std::size_t classes() const { return label_names.size(); }

  /// Column indices of each class, in file order.
  std::vector<std::vector<std::size_t>> class_members() const;

  bool operator==(const Dataset&) const = default;
};

/// Reads a CSV with a header row and a column named `label`; every other
/// column must be numeric. Class indices follow the sorted label values
/// (numeric order when all labels are integers). Errors cite 1-based data
/// row numbers.
Dataset ingest_csv(const std::filesystem::path& path);
Dataset parse_csv(const std::string& text, const std::string& source = "<memory>");

/// Writes features then `label`; doubles are printed in shortest round-trip form.
void write_csv(const Dataset& data, const std::filesystem::path& path);
std::string format_csv(const Dataset& data);

/// Shortest decimal form that parses back to the same double.
std::string shortest_repr(double v);

struct PlantedOptions {
  std::size_t classes = 3;
  std::size_t dim = 20;
  std::size_t atoms = 10;
  std::size_t per_class = 600;
  std::size_t sparsity = 3;
  double noise = 0.05;
  std::uint64_t seed = 7;
};

/// Each class draws its own dictionary of unit-norm Gaussian atoms; a sample
/// is a random `sparsity`-term combination of its class atoms with Gaussian
/// coefficients plus isotropic Gaussian noise. Samples are interleaved by class.
Dataset planted_dictionary_dataset(const PlantedOptions& options);

}  // namespace krls
