#include "ivgae/graphdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <tuple>

#include "ivgae/errors.hpp"

namespace ivgae {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

int parse_year(std::string_view s, const std::filesystem::path& path, std::size_t line) {
  int year = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), year);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(where(path, line) + "bad year '" + std::string(s) + "'");
  }
  return year;
}

double parse_number(std::string_view s, const char* what, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError(where(path, line) + "bad " + what + " '" + std::string(s) + "'");
  }
  return v;
}

std::ifstream open_csv(const std::filesystem::path& path, std::string_view header) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open");
  std::string first;
  if (!std::getline(in, first)) throw ParseError(where(path, 1) + "empty file");
  if (!first.empty() && static_cast<unsigned char>(first[0]) == 0xEF && first.size() >= 3) first.erase(0, 3);  // BOM
  if (trim(first) != header) {
    throw ParseError(where(path, 1) + "expected header '" + std::string(header) + "'");
  }
  return in;
}

std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---- CountryIndex --------------------------------------------------------------

std::size_t CountryIndex::add(const std::string& code) {
  if (auto it = lookup_.find(code); it != lookup_.end()) return it->second;
  codes_.push_back(code);
  lookup_.emplace(code, codes_.size() - 1);
  return codes_.size() - 1;
}

std::optional<std::size_t> CountryIndex::find(const std::string& code) const {
  if (auto it = lookup_.find(code); it != lookup_.end()) return it->second;
  return std::nullopt;
}

// ---- edges -------------------------------------------------------------------

EdgeLoad load_edges(const std::filesystem::path& path, CountryIndex& index) {
  std::ifstream in = open_csv(path, "year,exporter_iso3,importer_iso3,tonnes");
  // (year, exporter, importer) -> tonnes; indices stay valid as the index grows.
  std::map<std::tuple<int, std::size_t, std::size_t>, double> flows;
  std::optional<int> first_year, last_year;
  EdgeLoad out;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 4) {
      throw ParseError(where(path, lineno) + "expected 4 columns, got " + std::to_string(cells.size()));
    }
    const int year = parse_year(cells[0], path, lineno);
    if (cells[1].empty() || cells[2].empty()) throw ParseError(where(path, lineno) + "empty country code");
    const double tonnes = parse_number(cells[3], "tonnes", path, lineno);
    if (tonnes < 0) throw ParseError(where(path, lineno) + "negative tonnes");
    const std::size_t i = index.add(std::string(cells[1]));
    const std::size_t j = index.add(std::string(cells[2]));
    first_year = std::min(first_year.value_or(year), year);
    last_year = std::max(last_year.value_or(year), year);
    if (i == j) {
      ++out.self_loops_dropped;
      continue;
    }
    if (tonnes > 0) flows[{year, i, j}] += tonnes;
  }
  if (!first_year) return out;

  const auto n = static_cast<Eigen::Index>(index.size());
  for (int y = *first_year; y <= *last_year; ++y) {
    out.years.push_back({y, Mat::Zero(n, n), Mat::Zero(n, n)});
  }
  for (const auto& [key, tonnes] : flows) {
    const auto& [year, i, j] = key;
    YearEdges& ye = out.years[static_cast<std::size_t>(year - *first_year)];
    ye.adjacency(i, j) = 1.0;
    ye.trade(i, j) = tonnes;
  }
  return out;
}

// ---- features ----------------------------------------------------------------

FeatureTable::FeatureTable(std::size_t countries, std::vector<int> years)
    : countries_(countries),
      years_(std::move(years)),
      values_(countries_ * years_.size() * kFeatureCount, 0.0),
      missing_(countries_ * years_.size() * kFeatureCount, true),
      unobserved_(countries_ * kFeatureCount, false) {}

std::optional<std::size_t> FeatureTable::year_slot(int year) const {
  const auto it = std::find(years_.begin(), years_.end(), year);
  if (it == years_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - years_.begin());
}

void FeatureTable::set(std::size_t c, std::size_t y, std::size_t a, double v) {
  values_[at(c, y, a)] = v;
  missing_[at(c, y, a)] = false;
}

void FeatureTable::clear(std::size_t c, std::size_t y, std::size_t a) {
  values_[at(c, y, a)] = 0.0;
  missing_[at(c, y, a)] = true;
}

FeatureTable load_features(const std::filesystem::path& path, const CountryIndex& index, std::vector<int> years) {
  std::ifstream in = open_csv(path, "year,iso3,gdp,agri_employment_ratio,population,production");
  FeatureTable table(index.size(), std::move(years));
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 2 + kFeatureCount) {
      throw ParseError(where(path, lineno) + "expected 6 columns, got " + std::to_string(cells.size()));
    }
    const int year = parse_year(cells[0], path, lineno);
    const std::string code(cells[1]);
    const auto c = index.find(code);
    if (!c) {
      if (std::find(table.skipped_codes.begin(), table.skipped_codes.end(), code) == table.skipped_codes.end()) {
        table.skipped_codes.push_back(code);
      }
      continue;
    }
    const auto y = table.year_slot(year);
    if (!y) continue;
    for (std::size_t a = 0; a < kFeatureCount; ++a) {
      if (cells[2 + a].empty()) continue;
      table.set(*c, *y, a, parse_number(cells[2 + a], kFeatureNames[a], path, lineno));
    }
  }
  return table;
}

FeatureTable interpolate_missing(const FeatureTable& table) {
  FeatureTable out = table;
  const auto& years = table.years();
  for (std::size_t c = 0; c < table.countries(); ++c) {
    for (std::size_t a = 0; a < kFeatureCount; ++a) {
      std::vector<std::size_t> seen;
      for (std::size_t y = 0; y < years.size(); ++y) {
        if (!table.missing(c, y, a)) seen.push_back(y);
      }
      if (seen.empty()) {
        for (std::size_t y = 0; y < years.size(); ++y) out.set(c, y, a, 0.0);
        out.set_unobserved(c, a);
        continue;
      }
      for (std::size_t y = 0; y < years.size(); ++y) {
        if (!table.missing(c, y, a)) continue;
        const auto hi = std::lower_bound(seen.begin(), seen.end(), y);
        double v;
        if (hi == seen.begin()) {
          v = table.value(c, *hi, a);
        } else if (hi == seen.end()) {
          v = table.value(c, seen.back(), a);
        } else {
          const std::size_t y1 = *hi, y0 = *(hi - 1);
          const double t = static_cast<double>(years[y] - years[y0]) / static_cast<double>(years[y1] - years[y0]);
          v = table.value(c, y0, a) + t * (table.value(c, y1, a) - table.value(c, y0, a));
        }
        out.set(c, y, a, v);
      }
    }
  }
  return out;
}

std::vector<Mat> normalize_per_year(const FeatureTable& table) {
  const std::size_t n = table.countries();
  std::vector<Mat> out;
  out.reserve(table.years().size());
  for (std::size_t y = 0; y < table.years().size(); ++y) {
    Mat x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kFeatureCount));
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t a = 0; a < kFeatureCount; ++a) x(c, a) = table.value(c, y, a);
    }
    if (n > 0) {
      for (Eigen::Index a = 0; a < x.cols(); ++a) {
        const double mean = x.col(a).mean();
        x.col(a).array() -= mean;
        const double sd = std::sqrt(x.col(a).squaredNorm() / static_cast<double>(n));
        // Relative threshold: a constant column leaves only rounding residue.
        if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
          x.col(a).setZero();
        } else {
          x.col(a) /= sd;
        }
      }
    }
    out.push_back(std::move(x));
  }
  return out;
}

// ---- dataset -----------------------------------------------------------------

namespace {

// Registers every code of the features file, in order of first appearance.
void scan_feature_codes(const std::filesystem::path& path, CountryIndex& index) {
  std::ifstream in = open_csv(path, "year,iso3,gdp,agri_employment_ratio,population,production");
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() < 2 || cells[1].empty()) throw ParseError(where(path, lineno) + "missing country code");
    index.add(std::string(cells[1]));
  }
}

}  // namespace

TemporalDataset load_dataset(const std::filesystem::path& edges, const std::filesystem::path& features) {
  TemporalDataset ds;
  // The country universe is the union of both files; feature order comes first
  // so a written dataset reloads with the same node order.
  scan_feature_codes(features, ds.countries);
  EdgeLoad load = load_edges(edges, ds.countries);
  if (load.years.empty()) throw ParseError(edges.string() + ": no edge rows");
  std::vector<int> years;
  for (const auto& y : load.years) years.push_back(y.year);
  const FeatureTable raw = load_features(features, ds.countries, years);
  const std::vector<Mat> xs = normalize_per_year(interpolate_missing(raw));
  for (std::size_t t = 0; t < load.years.size(); ++t) {
    ds.snapshots.push_back(
        {load.years[t].year, std::move(load.years[t].adjacency), std::move(load.years[t].trade), xs[t]});
  }
  return ds;
}

void write_dataset(const TemporalDataset& ds, const std::filesystem::path& edges,
                   const std::filesystem::path& features) {
  std::ofstream e(edges);
  if (!e) throw std::runtime_error(edges.string() + ": cannot write");
  e << "year,exporter_iso3,importer_iso3,tonnes\n";
  for (const auto& s : ds.snapshots) {
    for (Eigen::Index i = 0; i < s.adjacency.rows(); ++i) {
      for (Eigen::Index j = 0; j < s.adjacency.cols(); ++j) {
        if (s.adjacency(i, j) != 0.0) {
          e << s.year << ',' << ds.countries.code(i) << ',' << ds.countries.code(j) << ','
            << format_exact(s.trade(i, j)) << '\n';
        }
      }
    }
  }
  std::ofstream f(features);
  if (!f) throw std::runtime_error(features.string() + ": cannot write");
  f << "year,iso3,gdp,agri_employment_ratio,population,production\n";
  for (const auto& s : ds.snapshots) {
    for (Eigen::Index c = 0; c < s.features.rows(); ++c) {
      f << s.year << ',' << ds.countries.code(c);
      for (Eigen::Index a = 0; a < s.features.cols(); ++a) f << ',' << format_exact(s.features(c, a));
      f << '\n';
    }
  }
  if (!e || !f) throw std::runtime_error("write_dataset: I/O error");
}

std::vector<WindowSample> build_windows(const TemporalDataset& ds, std::size_t window) {
  const std::size_t s = ds.size();
  if (window < 1 || window >= s) {
    throw ConfigError("window " + std::to_string(window) + " needs at least " + std::to_string(window + 1) +
                      " snapshots, dataset has " + std::to_string(s));
  }
  std::vector<WindowSample> out;
  out.reserve(s - window);
  const std::span<const GraphSnapshot> all(ds.snapshots);
  for (std::size_t j = 0; j + window < s; ++j) {
    out.push_back({all.subspan(j, window), &ds.snapshots[j + window]});
  }
  return out;
}

// ---- synthetic data ------------------------------------------------------------

namespace {

std::string synth_code(std::size_t i) {
  std::string code(3, 'A');
  for (int k = 2; k >= 0; --k) {
    code[static_cast<std::size_t>(k)] = static_cast<char>('A' + i % 26);
    i /= 26;
  }
  return code;
}

void require_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must be in [0,1]");
}

}  // namespace

TemporalDataset synth_generate(std::uint64_t seed, const SynthOptions& o) {
  if (o.nodes < 4) throw ConfigError("synth: nodes must be >= 4");
  if (o.nodes > 26 * 26 * 26) throw ConfigError("synth: too many nodes for three-letter codes");
  if (o.years < 3) throw ConfigError("synth: years must be >= 3");
  require_probability(o.p_backbone, "p_backbone");
  require_probability(o.p_churn, "p_churn");
  if (!(o.feature_noise >= 0.0) || !std::isfinite(o.feature_noise)) {
    throw ConfigError("synth: feature_noise must be >= 0");
  }

  const Rng root = Rng(seed).split({stream::kSynth});
  const auto n = static_cast<Eigen::Index>(o.nodes);
  TemporalDataset ds;
  for (std::size_t i = 0; i < o.nodes; ++i) ds.countries.add(synth_code(i));

  // Gravity-style latents: export mass, import mass and a 2-D position per
  // country. The backbone is the top-K ordered pairs by
  // a_i + b_j - |u_i - u_j| + Gumbel noise, i.e. K draws without replacement
  // with probability proportional to exp(a_i + b_j - |u_i - u_j|).
  Rng lrng = root.split({0});
  Mat latent(n, static_cast<Eigen::Index>(kFeatureCount));  // a, u_x, b, u_y
  for (Eigen::Index i = 0; i < latent.size(); ++i) latent.data()[i] = lrng.normal();
  const auto pair_count = static_cast<std::size_t>(n * (n - 1));
  const auto k = static_cast<std::size_t>(std::llround(o.p_backbone * static_cast<double>(pair_count)));
  std::vector<std::pair<double, Eigen::Index>> ranked;
  ranked.reserve(pair_count);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dist = std::hypot(latent(i, 1) - latent(j, 1), latent(i, 3) - latent(j, 3));
      const double gumbel = -std::log(-std::log(std::max(lrng.uniform(), 1e-300)));
      ranked.emplace_back(latent(i, 0) + latent(j, 2) - dist + gumbel, i * n + j);
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  Mat backbone = Mat::Zero(n, n);
  for (std::size_t r = 0; r < k; ++r) backbone.data()[ranked[r].second] = 1.0;

  // Features observe the latents through per-country random walks.
  Mat walk = Mat::Zero(n, static_cast<Eigen::Index>(kFeatureCount));

  std::vector<Mat> raw_features;
  for (std::size_t t = 0; t < o.years; ++t) {
    Rng yrng = root.split({2, t});
    GraphSnapshot s;
    s.year = o.first_year + static_cast<int>(t);
    s.adjacency = Mat::Zero(n, n);
    s.trade = Mat::Zero(n, n);
    const double p_transient = o.p_churn * o.p_backbone;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        // Always draw both variates so the stream layout is independent of the graph.
        const double u = yrng.uniform();
        const double w = yrng.normal();
        const bool present = backbone(i, j) != 0.0 ? u >= o.p_churn : u < p_transient;
        if (present) {
          s.adjacency(i, j) = 1.0;
          s.trade(i, j) = std::exp(2.0 + 0.5 * (latent(i, 0) + latent(j, 2)) + w);
        }
      }
    }
    if (t > 0) {
      for (Eigen::Index i = 0; i < walk.size(); ++i) walk.data()[i] += o.feature_noise * yrng.normal();
    }
    raw_features.push_back(latent + walk);
    ds.snapshots.push_back(std::move(s));
  }

  FeatureTable ft(o.nodes, [&] {
    std::vector<int> ys;
    for (const auto& s : ds.snapshots) ys.push_back(s.year);
    return ys;
  }());
  for (std::size_t t = 0; t < o.years; ++t) {
    for (std::size_t c = 0; c < o.nodes; ++c) {
      for (std::size_t a = 0; a < kFeatureCount; ++a) ft.set(c, t, a, raw_features[t](c, a));
    }
  }
  std::vector<Mat> xs = normalize_per_year(ft);
  for (std::size_t t = 0; t < o.years; ++t) ds.snapshots[t].features = std::move(xs[t]);
  return ds;
}

double edge_persistence(const TemporalDataset& ds) {
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t t = 0; t + 1 < ds.size(); ++t) {
    const Mat& a = ds.snapshots[t].adjacency;
    const Mat& b = ds.snapshots[t + 1].adjacency;
    const double edges = a.sum();
    if (edges == 0.0) continue;
    total += a.cwiseProduct(b).sum() / edges;
    ++counted;
  }
  return counted == 0 ? 1.0 : total / static_cast<double>(counted);
}

void check_snapshot(const GraphSnapshot& s) {
  const std::string at = "snapshot " + std::to_string(s.year) + ": ";
  const Eigen::Index n = s.adjacency.rows();
  if (s.adjacency.cols() != n || s.trade.rows() != n || s.trade.cols() != n || s.features.rows() != n) {
    throw ConfigError(at + "inconsistent shapes");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (s.adjacency(i, i) != 0.0) throw ConfigError(at + "self-loop at " + std::to_string(i));
    for (Eigen::Index j = 0; j < n; ++j) {
      const double a = s.adjacency(i, j);
      if (a != 0.0 && a != 1.0) throw ConfigError(at + "adjacency is not binary");
      if (!(s.trade(i, j) >= 0.0) || !std::isfinite(s.trade(i, j))) throw ConfigError(at + "invalid trade weight");
      if ((s.trade(i, j) > 0.0) != (a == 1.0)) throw ConfigError(at + "trade weight and adjacency disagree");
    }
  }
  if (!s.features.allFinite()) throw ConfigError(at + "non-finite features");
}

}  // namespace ivgae
