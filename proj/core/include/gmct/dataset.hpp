#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace gmct {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rows of (x0..x{k-1}, y). Values are finite; construction through
// `make_dataset` or `load_csv` enforces that.
struct TabularDataset {
  std::string id;
  Eigen::MatrixXd xs;  // n_rows x n_vars
  std::vector<double> y;
  std::optional<std::string> source_skeleton;

  int n_rows() const noexcept { return static_cast<int>(y.size()); }
  int n_vars() const noexcept { return static_cast<int>(xs.cols()); }
};

TabularDataset make_dataset(std::string id, Eigen::MatrixXd xs, std::vector<double> y,
                            std::optional<std::string> skeleton = std::nullopt);
void validate(const TabularDataset& ds);

// y / max(max|y|, 1), with the maximum taken over the whole column.
double y_scale(const TabularDataset& ds) noexcept;
std::vector<double> scale_y(const TabularDataset& ds);

// Stable ascending sort by y; first ceil(n/2) rows go to the first half.
std::pair<TabularDataset, TabularDataset> sort_split(const TabularDataset& ds);

TabularDataset load_csv(const std::filesystem::path& path, std::string id = {});
void save_csv(const TabularDataset& ds, const std::filesystem::path& path);

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  std::string skeleton;
  std::vector<double> constants;
};

struct DatasetManifest {
  std::string grammar;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
};

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace gmct
