#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lattle/errors.hpp"

namespace lattle {

enum class ColKind { Numeric, Categorical };

struct Column {
  std::string name;  // original casing; identity is case-insensitive
  ColKind kind = ColKind::Categorical;
};

struct Schema {
  std::vector<Column> columns;  // feature columns only, label excluded
  std::string label_column;
  std::vector<std::string> classes;  // sorted label values

  int n_features() const { return static_cast<int>(columns.size()); }
  int n_classes() const { return static_cast<int>(classes.size()); }
  int class_index(const std::string& value) const;  // -1 when absent
  void validate() const;
};

struct Cell {
  bool missing = false;
  double num = 0.0;      // Numeric columns
  std::string cat;       // Categorical columns
};

struct TabularDataset {
  Schema schema;
  std::vector<std::vector<Cell>> rows;  // rows[i][f] follows schema.columns
  std::vector<int> labels;              // index into schema.classes

  std::size_t n() const { return rows.size(); }
};

struct SplitAssignment {
  std::uint64_t seed = 0;
  std::vector<int> train, val, test;
};

struct Normalizer {
  // Per feature column; entries for categorical columns are unused.
  std::vector<double> mean, stddev;
};

std::string lower_str(const std::string& s);

// RFC-style CSV: comma separated, double-quoted fields may contain commas,
// newlines and doubled quotes. `""` and `?` cells are treated as missing.
// A column is Numeric iff every non-missing value parses fully as a float.
TabularDataset load_csv(const std::string& path, const std::string& label_column);
void save_csv(const TabularDataset& ds, const std::string& path);

// Sidecar: one `name,kind` line per column (kind in {numeric,categorical})
// plus a final `label,<name>` line.
void save_schema(const Schema& schema, const std::string& path);
// Returns (feature name, kind) pairs and the label column name; class list is
// recovered from the data on load.
Schema load_schema(const std::string& path);

// Stratified 70/10/20 split, deterministic per seed. Falls back to an
// unstratified split (with a warning) when any class has < 3 samples.
SplitAssignment split(const TabularDataset& ds, std::uint64_t seed);

// Train-fold statistics only; population std with a 1e-8 floor.
Normalizer fit_normalizer(const TabularDataset& ds, const std::vector<int>& train_indices);
// Z-scores numeric columns, imputes missing numerics with the train mean
// (normalized 0) and maps missing categoricals to the "missing" category.
TabularDataset apply_normalizer(const TabularDataset& ds, const Normalizer& nz);

// "<Name> is <value>." per feature, schema order, joined by single spaces.
// Numerics render with up to 6 significant digits, trailing zeros trimmed.
std::string serialize_row(const std::vector<Cell>& row, const Schema& schema);
std::string format_numeric(double v);

// Errors when any case-normalized feature name appears in both schemas.
void check_disjoint(const Schema& source, const Schema& target);

}  // namespace lattle
