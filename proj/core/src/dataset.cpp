#include "gmct/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace gmct {

TabularDataset make_dataset(std::string id, Eigen::MatrixXd xs, std::vector<double> y,
                            std::optional<std::string> skeleton) {
  TabularDataset ds{std::move(id), std::move(xs), std::move(y), std::move(skeleton)};
  validate(ds);
  return ds;
}

void validate(const TabularDataset& ds) {
  if (ds.xs.rows() != static_cast<Eigen::Index>(ds.y.size())) {
    throw DatasetError("dataset '" + ds.id + "': x row count does not match y length");
  }
  if (ds.xs.cols() < 1) throw DatasetError("dataset '" + ds.id + "': needs at least one variable");
  if (!ds.xs.allFinite() || !std::all_of(ds.y.begin(), ds.y.end(), [](double v) { return std::isfinite(v); })) {
    throw DatasetError("dataset '" + ds.id + "': contains non-finite values");
  }
}

double y_scale(const TabularDataset& ds) noexcept {
  double m = 0.0;
  for (double v : ds.y) m = std::max(m, std::abs(v));
  return std::max(m, 1.0);
}

std::vector<double> scale_y(const TabularDataset& ds) {
  const double s = y_scale(ds);
  std::vector<double> out(ds.y.size());
  std::transform(ds.y.begin(), ds.y.end(), out.begin(), [s](double v) { return v / s; });
  return out;
}

std::pair<TabularDataset, TabularDataset> sort_split(const TabularDataset& ds) {
  const int n = ds.n_rows();
  if (n < 2) throw DatasetError("sort_split: dataset '" + ds.id + "' needs at least two rows");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return ds.y[static_cast<std::size_t>(a)] < ds.y[static_cast<std::size_t>(b)];
  });
  const int first = (n + 1) / 2;
  auto take = [&](int begin, int end) {
    TabularDataset part;
    part.id = ds.id;
    part.source_skeleton = ds.source_skeleton;
    part.xs.resize(end - begin, ds.xs.cols());
    part.y.reserve(static_cast<std::size_t>(end - begin));
    for (int i = begin; i < end; ++i) {
      int src = order[static_cast<std::size_t>(i)];
      part.xs.row(i - begin) = ds.xs.row(src);
      part.y.push_back(ds.y[static_cast<std::size_t>(src)]);
    }
    return part;
  };
  return {take(0, first), take(first, n)};
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t b = cell.find_first_not_of(' ');
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell, const std::filesystem::path& path, int line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) {
    throw DatasetError(path.string() + ":" + std::to_string(line) + ": malformed value '" + cell + "'");
  }
  if (!std::isfinite(v)) {
    throw DatasetError(path.string() + ":" + std::to_string(line) + ": non-finite value '" + cell + "'");
  }
  return v;
}

}  // namespace

TabularDataset load_csv(const std::filesystem::path& path, std::string id) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DatasetError(path.string() + ": missing header");
  auto header = split_csv(line);
  if (header.size() < 2 || header.back() != "y") {
    throw DatasetError(path.string() + ": header must be x0,...,x{k-1},y");
  }
  const int n_vars = static_cast<int>(header.size()) - 1;
  for (int i = 0; i < n_vars; ++i) {
    if (header[static_cast<std::size_t>(i)] != "x" + std::to_string(i)) {
      throw DatasetError(path.string() + ": header must be x0,...,x{k-1},y");
    }
  }

  std::vector<double> values;
  std::vector<double> y;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    if (static_cast<int>(cells.size()) != n_vars + 1) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                         std::to_string(n_vars + 1) + " columns");
    }
    for (int i = 0; i < n_vars; ++i) values.push_back(parse_cell(cells[static_cast<std::size_t>(i)], path, line_no));
    y.push_back(parse_cell(cells.back(), path, line_no));
  }
  Eigen::MatrixXd xs(static_cast<Eigen::Index>(y.size()), n_vars);
  for (std::size_t r = 0; r < y.size(); ++r) {
    for (int c = 0; c < n_vars; ++c) xs(static_cast<Eigen::Index>(r), c) = values[r * static_cast<std::size_t>(n_vars) + static_cast<std::size_t>(c)];
  }
  if (id.empty()) id = path.stem().string();
  return make_dataset(std::move(id), std::move(xs), std::move(y));
}

void save_csv(const TabularDataset& ds, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw DatasetError("cannot write dataset: " + path.string());
  for (int c = 0; c < ds.n_vars(); ++c) std::fprintf(f, "x%d,", c);
  std::fprintf(f, "y\n");
  for (int r = 0; r < ds.n_rows(); ++r) {
    for (int c = 0; c < ds.n_vars(); ++c) std::fprintf(f, "%.17g,", ds.xs(r, c));
    std::fprintf(f, "%.17g\n", ds.y[static_cast<std::size_t>(r)]);
  }
  std::fclose(f);
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j;
  j["grammar"] = manifest.grammar;
  j["seed"] = manifest.seed;
  j["datasets"] = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    j["datasets"].push_back({{"id", e.id}, {"path", e.path}, {"skeleton", e.skeleton}, {"constants", e.constants}});
  }
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write manifest: " + path.string());
  out << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.grammar = j.value("grammar", "");
  m.seed = j.value("seed", std::uint64_t{0});
  for (const auto& d : j.at("datasets")) {
    ManifestEntry e;
    e.id = d.at("id").get<std::string>();
    e.path = d.at("path").get<std::string>();
    e.skeleton = d.value("skeleton", "");
    e.constants = d.value("constants", std::vector<double>{});
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace gmct
