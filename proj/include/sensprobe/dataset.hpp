#ifndef SENSPROBE_DATASET_HPP
#define SENSPROBE_DATASET_HPP

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "sensprobe/error.hpp"
#include "sensprobe/random.hpp"

namespace sensprobe {

struct Sample {
  std::vector<double> x;
  int label = 0;
  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Binary-labelled samples with features in [0,1].
struct Dataset {
  std::size_t dim = 0;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  std::size_t count_label(int label) const {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.label == label;
    return n;
  }

  Dataset filter_label(int label) const {
    Dataset d{dim, {}};
    for (const auto& s : samples)
      if (s.label == label) d.samples.push_back(s);
    return d;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Two clusters split by a random hyperplane through the centre of the unit
/// cube. Every sample lies at distance >= margin/2 from the plane, so the gap
/// between the classes is `margin`.
inline Dataset gen_synthetic(std::size_t dim, std::size_t per_class, double margin, std::uint64_t seed) {
  if (dim < 2) throw InvalidInput("gen_synthetic: need at least 2 features");
  if (per_class < 1) throw InvalidInput("gen_synthetic: per_class must be >= 1");
  if (!(margin > 0.0 && margin < 0.5)) throw InvalidInput("gen_synthetic: margin must lie in (0, 0.5)");

  Rng rng(seed);
  std::vector<double> normal(dim);
  double norm = 0;
  for (auto& v : normal) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : normal) v /= norm;

  Dataset d{dim, {}};
  std::size_t have[2] = {0, 0};
  while (have[0] < per_class || have[1] < per_class) {
    std::vector<double> x(dim);
    double proj = 0;
    for (std::size_t i = 0; i < dim; ++i) {
      x[i] = rng.uniform();
      proj += normal[i] * (x[i] - 0.5);
    }
    int label;
    if (proj >= margin / 2) {
      label = 1;
    } else if (proj <= -margin / 2) {
      label = 0;
    } else {
      continue;
    }
    if (have[label] == per_class) continue;
    ++have[label];
    d.samples.push_back({std::move(x), label});
  }
  return d;
}

inline void save_csv(const Dataset& d, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidInput("cannot write " + path);
  for (std::size_t i = 0; i < d.dim; ++i) f << 'f' << i << ',';
  f << "label\n";
  char buf[64];
  for (const auto& s : d.samples) {
    for (double v : s.x) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
      f.write(buf, end - buf);
      f << ',';
    }
    f << s.label << '\n';
  }
}

/// Reads `f0,...,f{n-1},label` CSV. Rows are numbered from 1 after the header.
inline Dataset load_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot read " + path);
  std::string line;
  if (!std::getline(f, line)) throw InvalidInput(path + ": missing header");
  std::size_t cols = 1;
  for (char c : line) cols += c == ',';
  if (cols < 2 || line.rfind(",label") != line.size() - 6)
    throw InvalidInput(path + ": header must be f0,...,f{n-1},label");

  Dataset d{cols - 1, {}};
  std::size_t row = 0;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    auto fail = [&](const std::string& why) {
      return InvalidInput(path + ": row " + std::to_string(row) + ": " + why);
    };
    std::vector<double> values;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      std::string_view cell(line.data() + start, (comma == std::string::npos ? line.size() : comma) - start);
      double v = 0;
      auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || end != cell.data() + cell.size()) throw fail("non-numeric value '" + std::string(cell) + "'");
      values.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (values.size() != cols) throw fail("expected " + std::to_string(cols) + " columns");
    const double lab = values.back();
    values.pop_back();
    if (lab != 0.0 && lab != 1.0) throw fail("label must be 0 or 1");
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!(values[i] >= 0.0 && values[i] <= 1.0))
        throw fail("feature f" + std::to_string(i) + " outside [0,1]");
    d.samples.push_back({std::move(values), static_cast<int>(lab)});
  }
  return d;
}

}  // namespace sensprobe

#endif  // SENSPROBE_DATASET_HPP
