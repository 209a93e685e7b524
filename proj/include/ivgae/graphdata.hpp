#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ivgae/autodiff.hpp"
#include "ivgae/rng.hpp"

namespace ivgae {

/// Ordered set of ISO-3166 alpha-3 codes; index order is insertion order.
class CountryIndex {
 public:
  /// Returns the index of `code`, inserting it if new.
  std::size_t add(const std::string& code);
  std::optional<std::size_t> find(const std::string& code) const;
  const std::string& code(std::size_t i) const { return codes_.at(i); }
  const std::vector<std::string>& codes() const { return codes_; }
  std::size_t size() const { return codes_.size(); }

 private:
  std::vector<std::string> codes_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

inline constexpr std::size_t kFeatureCount = 4;
inline constexpr const char* kFeatureNames[kFeatureCount] = {"gdp", "agri_employment_ratio", "population",
                                                              "production"};

/// One year of the network. adjacency[i, j] = 1 iff i exported to j.
struct GraphSnapshot {
  int year = 0;
  Mat adjacency;
  Mat trade;
  Mat features;

  std::size_t nodes() const { return static_cast<std::size_t>(adjacency.rows()); }
};

struct TemporalDataset {
  CountryIndex countries;
  std::vector<GraphSnapshot> snapshots;

  std::size_t nodes() const { return countries.size(); }
  std::size_t size() const { return snapshots.size(); }
};

/// Window over a dataset: inputs are snapshots [start, start + length), the
/// target is snapshot start + length. Refers into the dataset it came from.
struct WindowSample {
  std::span<const GraphSnapshot> inputs;
  const GraphSnapshot* target = nullptr;
};

// ---- edges -------------------------------------------------------------------

struct YearEdges {
  int year = 0;
  Mat adjacency;
  Mat trade;
};

struct EdgeLoad {
  /// One entry per year from the first to the last year in the file, sorted;
  /// years without rows are empty graphs.
  std::vector<YearEdges> years;
  std::size_t self_loops_dropped = 0;
};

/// Reads `year,exporter_iso3,importer_iso3,tonnes`. Extends `index` with every
/// code seen. Duplicate (year, i, j) rows are summed; zero-tonne rows are
/// ignored. Throws ParseError with the line number on malformed rows.
EdgeLoad load_edges(const std::filesystem::path& path, CountryIndex& index);

// ---- features ----------------------------------------------------------------

/// (country, year) -> 4 attributes with explicit missing flags.
class FeatureTable {
 public:
  FeatureTable(std::size_t countries, std::vector<int> years);

  std::size_t countries() const { return countries_; }
  const std::vector<int>& years() const { return years_; }
  std::optional<std::size_t> year_slot(int year) const;

  double value(std::size_t c, std::size_t y, std::size_t a) const { return values_[at(c, y, a)]; }
  bool missing(std::size_t c, std::size_t y, std::size_t a) const { return missing_[at(c, y, a)]; }
  void set(std::size_t c, std::size_t y, std::size_t a, double v);
  void clear(std::size_t c, std::size_t y, std::size_t a);

  /// Series with no observation at all, filled with zeros by interpolation.
  bool unobserved(std::size_t c, std::size_t a) const { return unobserved_[c * kFeatureCount + a]; }
  void set_unobserved(std::size_t c, std::size_t a) { unobserved_[c * kFeatureCount + a] = true; }

  /// Codes present in the file but absent from the fixed country index.
  std::vector<std::string> skipped_codes;

 private:
  std::size_t at(std::size_t c, std::size_t y, std::size_t a) const {
    return (c * years_.size() + y) * kFeatureCount + a;
  }
  std::size_t countries_;
  std::vector<int> years_;
  std::vector<double> values_;
  std::vector<bool> missing_;
  std::vector<bool> unobserved_;
};

/// Reads `year,iso3,gdp,agri_employment_ratio,population,production`. Empty
/// cells are missing. Rows for years outside `years` are ignored.
FeatureTable load_features(const std::filesystem::path& path, const CountryIndex& index, std::vector<int> years);

/// Linear interpolation between observed years, flat extrapolation at both
/// ends, zeros (flagged unobserved) for series with no observation.
FeatureTable interpolate_missing(const FeatureTable& table);

/// Per-year, per-attribute z-scores across countries (population std).
/// Zero-variance columns become zeros. One N x 4 matrix per year.
std::vector<Mat> normalize_per_year(const FeatureTable& table);

// ---- dataset -----------------------------------------------------------------

/// Loads both CSVs and applies interpolation and normalization.
TemporalDataset load_dataset(const std::filesystem::path& edges, const std::filesystem::path& features);

/// Writes the two CSV formats; values round-trip exactly (17 significant digits).
void write_dataset(const TemporalDataset& ds, const std::filesystem::path& edges,
                   const std::filesystem::path& features);

/// S - w samples; the last one is the held-out evaluation sample.
std::vector<WindowSample> build_windows(const TemporalDataset& ds, std::size_t window);

// ---- synthetic data ------------------------------------------------------------

struct SynthOptions {
  std::size_t nodes = 60;
  std::size_t years = 10;
  double p_backbone = 0.06;
  double p_churn = 0.02;
  double feature_noise = 0.1;
  int first_year = 2012;
};

// Gravity-style backbone plus yearly churn. Each country has latent export
// and import masses and a 2-D position; the backbone holds round(p_backbone *
// n(n-1)) ordered pairs drawn without replacement with weight
// exp(a_i + b_j - |u_i - u_j|). Each year every backbone edge is independently
// absent with probability p_churn, and every other pair appears as a transient
// edge with probability p_churn * p_backbone. Trade weights are log-normal and
// grow with the masses. Features are the latents plus per-country random walks,
// normalized per year. Pure function of `seed`.
TemporalDataset synth_generate(std::uint64_t seed, const SynthOptions& options = {});

/// Mean over consecutive years of |E_t and E_t+1| / |E_t| (years with no edges skipped).
double edge_persistence(const TemporalDataset& ds);

/// Validates the snapshot invariants (binary A, zero diagonal, T > 0 iff A = 1,
/// finite X). Throws ConfigError describing the first violation.
void check_snapshot(const GraphSnapshot& s);

}  // namespace ivgae
