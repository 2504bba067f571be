#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "orthoview/geometry.hpp"

namespace orthoview {

enum class SplitRole { train, validation, test };

inline std::string_view to_string(SplitRole r) {
  switch (r) {
    case SplitRole::train: return "train";
    case SplitRole::validation: return "validation";
    case SplitRole::test: return "test";
  }
  return "?";
}

struct DatasetSplit {
  std::vector<PointCloud> clouds;
  std::vector<std::string> class_names;
  SplitRole role = SplitRole::train;

  std::size_t size() const { return clouds.size(); }
  std::size_t num_classes() const { return class_names.size(); }
};

inline void validate(const DatasetSplit& split) {
  if (split.class_names.empty()) throw std::invalid_argument("dataset: no class names");
  std::set<std::string> unique(split.class_names.begin(), split.class_names.end());
  if (unique.size() != split.class_names.size())
    throw std::invalid_argument("dataset: duplicate class names");
  for (const auto& c : split.clouds)
    if (!c.label || *c.label < 0 || static_cast<std::size_t>(*c.label) >= split.class_names.size())
      throw std::invalid_argument("dataset: cloud " + std::to_string(c.id) + " has a label out of range");
}

inline std::vector<std::string> shape_class_names() {
  std::vector<std::string> names;
  for (ShapeKind k : kAllShapes) names.emplace_back(to_string(k));
  return names;
}

struct SyntheticDatasetOptions {
  std::size_t per_class = 100;
  std::size_t points = 1024;
  // Each shape dimension is multiplied by U[1 - jitter, 1 + jitter].
  double size_jitter = 0.2;
  // Each instance is turned about a random axis by U[0, orientation] radians
  // before fitting; 0 keeps every shape in its canonical pose.
  double orientation = 0.0;
};

// One split of the 8-class shape dataset. Object ids are unique across roles,
// and every cloud is fitted to the unit cube.
inline DatasetSplit make_synthetic_split(const SyntheticDatasetOptions& opt, SplitRole role,
                                         std::uint64_t seed) {
  DatasetSplit split;
  split.role = role;
  split.class_names = shape_class_names();
  const std::uint64_t base = static_cast<std::uint64_t>(role) * 10'000'000ull;
  for (std::size_t k = 0; k < kAllShapes.size(); ++k) {
    const ShapeKind kind = kAllShapes[k];
    for (std::size_t i = 0; i < opt.per_class; ++i) {
      const std::uint64_t id = base + k * opt.per_class + i;
      RandomStream rng(seed, "instance-params", id);
      ShapeParams params = default_shape_params(kind);
      for (int d = 0; d < shape_dim_count(kind); ++d)
        params.dims[d] *= rng.uniform(1.0 - opt.size_jitter, 1.0 + opt.size_jitter);
      PointCloud cloud = synth_shape(kind, opt.points, derive_seed(seed, "instance", id), params);
      if (opt.orientation > 0.0) {
        const Vec3 axis = random_unit_vector(rng);
        cloud = transformed(cloud, axis_angle(axis, rng.uniform(0.0, opt.orientation)));
      }
      cloud = normalize_unit_cube(cloud);
      cloud.label = static_cast<int>(k);
      cloud.id = id;
      split.clouds.push_back(std::move(cloud));
    }
  }
  return split;
}

// Class-stratified subset keeping round(fraction * count) objects per class
// (at least one), chosen by a seeded permutation; original order is kept.
inline DatasetSplit stratified_subset(const DatasetSplit& split, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("stratified_subset: fraction must lie in (0, 1]");
  if (fraction == 1.0) return split;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < split.size(); ++i) by_class[*split.clouds[i].label].push_back(i);
  std::vector<std::size_t> keep;
  for (auto& [label, idx] : by_class) {
    RandomStream rng(seed, "subset", static_cast<std::uint64_t>(label));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * idx.size())));
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(k, idx.size())));
  }
  std::sort(keep.begin(), keep.end());
  DatasetSplit out;
  out.class_names = split.class_names;
  out.role = split.role;
  for (std::size_t i : keep) out.clouds.push_back(split.clouds[i]);
  return out;
}

// Corrupts every cloud and refits it to the unit cube.
inline DatasetSplit corrupt_split(const DatasetSplit& split, const CorruptionSpec& spec, std::uint64_t seed) {
  DatasetSplit out = split;
  for (PointCloud& c : out.clouds) c = normalize_unit_cube(corrupt(c, spec, seed));
  return out;
}

// ---------------------------------------------------------------------------
// .xyz files: one "x y z" line per point, '#' starts a comment line.

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline PointCloud parse_xyz(std::istream& in, const std::string& source = "<stream>") {
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    Vec3 p;
    const char* cur = line.data();
    const char* end = line.data() + line.size();
    for (int axis = 0; axis < 3; ++axis) {
      if (axis > 0) {
        if (cur == end || *cur != ' ') throw ParseError(source, lineno, "expected three space-separated numbers");
        ++cur;
      }
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cur, end, v);
      if (ec != std::errc() || ptr == cur) throw ParseError(source, lineno, "malformed number");
      if (!std::isfinite(v)) throw ParseError(source, lineno, "non-finite coordinate");
      p[axis] = v;
      cur = ptr;
    }
    if (cur != end) throw ParseError(source, lineno, "trailing characters after third coordinate");
    cloud.points.push_back(p);
  }
  if (cloud.empty()) throw ParseError(source, lineno, "file contains no points");
  return cloud;
}

inline PointCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_xyz(in, path.string());
}

inline void write_xyz(std::ostream& out, const PointCloud& cloud) {
  char buf[128];
  for (Vec3 p : cloud.points) {
    for (int axis = 0; axis < 3; ++axis) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, p[axis]);  // shortest round-trip form
      if (axis > 0) out << ' ';
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
}

// Writes to a sibling temp file and renames it into place.
template <class Writer>
void write_atomically(const std::filesystem::path& path, Writer&& write, bool binary = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    write(out);
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void save_xyz(const PointCloud& cloud, const std::filesystem::path& path) {
  write_atomically(path, [&](std::ostream& out) { write_xyz(out, cloud); });
}

// ---------------------------------------------------------------------------
// Dataset directories: <root>/classes.txt and <root>/<class_name>/<id>.xyz

inline void save_dataset(const DatasetSplit& split, const std::filesystem::path& root) {
  validate(split);
  write_atomically(root / "classes.txt", [&](std::ostream& out) {
    for (const auto& name : split.class_names) out << name << '\n';
  });
  for (const auto& cloud : split.clouds)
    save_xyz(cloud, root / split.class_names[*cloud.label] / (std::to_string(cloud.id) + ".xyz"));
}

inline DatasetSplit load_dataset(const std::filesystem::path& root, SplitRole role) {
  namespace fs = std::filesystem;
  std::ifstream classes(root / "classes.txt");
  if (!classes) throw std::runtime_error("missing dataset: " + (root / "classes.txt").string());
  DatasetSplit split;
  split.role = role;
  for (std::string line; std::getline(classes, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) split.class_names.push_back(line);
  }
  for (std::size_t k = 0; k < split.class_names.size(); ++k) {
    const fs::path dir = root / split.class_names[k];
    if (!fs::is_directory(dir)) continue;
    std::vector<std::pair<std::uint64_t, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() != ".xyz") continue;
      const std::string stem = entry.path().stem().string();
      std::uint64_t id = 0;
      auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), id);
      if (ec != std::errc() || ptr != stem.data() + stem.size())
        throw std::runtime_error("dataset: file name is not a numeric id: " + entry.path().string());
      files.emplace_back(id, entry.path());
    }
    std::sort(files.begin(), files.end());
    for (auto& [id, path] : files) {
      PointCloud cloud = load_xyz(path);
      cloud.label = static_cast<int>(k);
      cloud.id = id;
      split.clouds.push_back(std::move(cloud));
    }
  }
  validate(split);
  return split;
}

}  // namespace orthoview
