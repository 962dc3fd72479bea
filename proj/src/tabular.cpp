#include "lattle/tabular.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "lattle/log.hpp"
#include "lattle/rng.hpp"

namespace lattle {

std::string lower_str(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

int Schema::class_index(const std::string& value) const {
  for (int i = 0; i < n_classes(); ++i)
    if (classes[i] == value) return i;
  return -1;
}

void Schema::validate() const {
  std::set<std::string> seen;
  for (const auto& col : columns) {
    if (col.name.empty()) throw DataError("schema: empty column name");
    if (!seen.insert(lower_str(col.name)).second)
      throw DataError("schema: duplicate column name '" + lower_str(col.name) + "'");
    if (lower_str(col.name) == lower_str(label_column))
      throw DataError("schema: label column '" + label_column + "' listed as a feature");
  }
}

namespace {

bool is_missing_text(const std::string& s) { return s.empty() || s == "?"; }

bool parse_as_number(const std::string& raw, double* out) {
  std::size_t b = raw.find_first_not_of(" \t");
  if (b == std::string::npos) return false;
  std::size_t e = raw.find_last_not_of(" \t");
  std::string s = raw.substr(b, e - b + 1);
  if (s.empty()) return false;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

// Full-file CSV record parser with quoted-field support.
std::vector<std::vector<std::string>> parse_csv_text(const std::string& text,
                                                     const std::string& path) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;  // true once any char (or quote) seen in record
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto end_field = [&] {
    fields.push_back(field);
    field.clear();
  };
  auto end_record = [&] {
    end_field();
    records.push_back(fields);
    fields.clear();
    field_started = false;
  };
  while (i < n) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      ++i;
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        ++i;
        break;
      case ',':
        end_field();
        field_started = true;
        ++i;
        break;
      case '\r':
        ++i;
        break;
      case '\n':
        if (field_started || !field.empty() || !fields.empty()) end_record();
        ++i;
        break;
      default:
        field.push_back(c);
        field_started = true;
        ++i;
        break;
    }
  }
  if (in_quotes) throw DataError("load_csv: unterminated quoted field in " + path);
  if (field_started || !field.empty() || !fields.empty()) end_record();
  return records;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

TabularDataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("load_csv: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  auto records = parse_csv_text(ss.str(), path);
  if (records.empty()) throw DataError("load_csv: missing header in " + path);

  const auto& header = records[0];
  const int n_cols = static_cast<int>(header.size());
  int label_idx = -1;
  for (int c = 0; c < n_cols; ++c)
    if (lower_str(header[c]) == lower_str(label_column)) label_idx = c;
  if (label_idx < 0)
    throw DataError("load_csv: label column '" + label_column + "' absent from " + path);
  if (records.size() == 1) throw DataError("load_csv: no rows in " + path);

  for (std::size_t r = 1; r < records.size(); ++r)
    if (static_cast<int>(records[r].size()) != n_cols)
      throw DataError("load_csv: ragged row " + std::to_string(r + 1) + " in " + path + " (" +
                      std::to_string(records[r].size()) + " fields, expected " +
                      std::to_string(n_cols) + ")");

  TabularDataset ds;
  for (int c = 0; c < n_cols; ++c) {
    if (c == label_idx) continue;
    Column col;
    col.name = header[c];
    col.kind = ColKind::Numeric;
    double tmp;
    bool any_value = false;
    for (std::size_t r = 1; r < records.size(); ++r) {
      const std::string& cell = records[r][c];
      if (is_missing_text(cell)) continue;
      any_value = true;
      if (!parse_as_number(cell, &tmp)) {
        col.kind = ColKind::Categorical;
        break;
      }
    }
    if (!any_value) col.kind = ColKind::Categorical;
    ds.schema.columns.push_back(col);
  }
  ds.schema.label_column = header[label_idx];

  std::set<std::string> class_set;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const std::string& lab = records[r][label_idx];
    if (is_missing_text(lab))
      throw DataError("load_csv: missing label at row " + std::to_string(r + 1));
    class_set.insert(lab);
  }
  ds.schema.classes.assign(class_set.begin(), class_set.end());
  ds.schema.validate();

  for (std::size_t r = 1; r < records.size(); ++r) {
    std::vector<Cell> row;
    int fi = 0;
    for (int c = 0; c < n_cols; ++c) {
      if (c == label_idx) continue;
      const std::string& raw = records[r][c];
      Cell cell;
      if (is_missing_text(raw)) {
        cell.missing = true;
      } else if (ds.schema.columns[fi].kind == ColKind::Numeric) {
        parse_as_number(raw, &cell.num);
      } else {
        cell.cat = raw;
      }
      row.push_back(std::move(cell));
      ++fi;
    }
    ds.rows.push_back(std::move(row));
    ds.labels.push_back(ds.schema.class_index(records[r][label_idx]));
  }
  return ds;
}

std::string format_numeric(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void save_csv(const TabularDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("save_csv: cannot open " + path);
  for (const auto& col : ds.schema.columns) f << csv_quote(col.name) << ',';
  f << csv_quote(ds.schema.label_column) << '\n';
  for (std::size_t r = 0; r < ds.n(); ++r) {
    for (int c = 0; c < ds.schema.n_features(); ++c) {
      const Cell& cell = ds.rows[r][c];
      if (!cell.missing) {
        if (ds.schema.columns[c].kind == ColKind::Numeric)
          f << format_numeric(cell.num);
        else
          f << csv_quote(cell.cat);
      }
      f << ',';
    }
    f << csv_quote(ds.schema.classes[ds.labels[r]]) << '\n';
  }
  if (!f) throw DataError("save_csv: write failed for " + path);
}

void save_schema(const Schema& schema, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("save_schema: cannot open " + path);
  for (const auto& col : schema.columns)
    f << col.name << ',' << (col.kind == ColKind::Numeric ? "numeric" : "categorical") << '\n';
  f << "label," << schema.label_column << '\n';
  if (!f) throw DataError("save_schema: write failed for " + path);
}

Schema load_schema(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("load_schema: cannot open " + path);
  Schema schema;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw DataError("load_schema: malformed line " + std::to_string(line_no) + " in " + path);
    std::string name = line.substr(0, comma);
    std::string kind = line.substr(comma + 1);
    if (lower_str(name) == "label") {
      schema.label_column = kind;
    } else if (kind == "numeric") {
      schema.columns.push_back({name, ColKind::Numeric});
    } else if (kind == "categorical") {
      schema.columns.push_back({name, ColKind::Categorical});
    } else {
      throw DataError("load_schema: unknown kind '" + kind + "' at line " +
                      std::to_string(line_no));
    }
  }
  if (schema.label_column.empty())
    throw DataError("load_schema: no label line in " + path);
  return schema;
}

namespace {

// Largest-remainder apportionment of n into the 70/10/20 fractions.
std::array<int, 3> fold_counts(int n) {
  const double frac[3] = {0.7, 0.1, 0.2};
  std::array<int, 3> base{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int f = 0; f < 3; ++f) {
    double t = frac[f] * n;
    base[f] = static_cast<int>(t);
    rem[f] = t - base[f];
    assigned += base[f];
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    return a < b;
  });
  for (int i = 0; i < n - assigned; ++i) ++base[order[i]];
  return base;
}

}  // namespace

SplitAssignment split(const TabularDataset& ds, std::uint64_t seed) {
  const int n = static_cast<int>(ds.n());
  if (n < 10) throw DataError("split: need at least 10 rows, have " + std::to_string(n));

  const int n_classes = ds.schema.n_classes();
  std::vector<std::vector<int>> by_class(n_classes);
  for (int i = 0; i < n; ++i) by_class[ds.labels[i]].push_back(i);

  bool stratified = true;
  for (int c = 0; c < n_classes; ++c)
    if (static_cast<int>(by_class[c].size()) < 3) stratified = false;

  SplitAssignment out;
  out.seed = seed;
  Rng root(seed);
  const auto global = fold_counts(n);

  if (!stratified) {
    log_info("split: class with < 3 samples; falling back to unstratified split");
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    root.shuffle(idx);
    out.train.assign(idx.begin(), idx.begin() + global[0]);
    out.val.assign(idx.begin() + global[0], idx.begin() + global[0] + global[1]);
    out.test.assign(idx.begin() + global[0] + global[1], idx.end());
  } else {
    const double frac[3] = {0.7, 0.1, 0.2};
    // Per-class floors, then hand out per-class remainder units by largest
    // fractional remainder under the global fold capacities, keeping every
    // class within +-1 of its ideal count per fold.
    std::vector<std::array<int, 3>> counts(n_classes);
    std::vector<int> needs(n_classes, 0);
    std::array<int, 3> cap{};
    for (int f = 0; f < 3; ++f) cap[f] = global[f];
    struct Unit {
      double rem;
      int cls, fold;
    };
    std::vector<Unit> units;
    for (int c = 0; c < n_classes; ++c) {
      const int nc = static_cast<int>(by_class[c].size());
      int floor_sum = 0;
      for (int f = 0; f < 3; ++f) {
        double t = frac[f] * nc;
        counts[c][f] = static_cast<int>(t);
        floor_sum += counts[c][f];
        cap[f] -= counts[c][f];
        units.push_back({t - counts[c][f], c, f});
      }
      needs[c] = nc - floor_sum;
    }
    std::sort(units.begin(), units.end(), [](const Unit& a, const Unit& b) {
      if (a.rem != b.rem) return a.rem > b.rem;
      if (a.cls != b.cls) return a.cls < b.cls;
      return a.fold < b.fold;
    });
    for (const Unit& u : units)
      if (needs[u.cls] > 0 && cap[u.fold] > 0) {
        ++counts[u.cls][u.fold];
        --needs[u.cls];
        --cap[u.fold];
      }
    for (int c = 0; c < n_classes; ++c)  // capacity-starved leftovers
      while (needs[c] > 0)
        for (int f = 0; f < 3 && needs[c] > 0; ++f)
          if (cap[f] > 0) {
            ++counts[c][f];
            --needs[c];
            --cap[f];
          }

    for (int c = 0; c < n_classes; ++c) {
      Rng sub = root.fork();
      auto idx = by_class[c];
      sub.shuffle(idx);
      int pos = 0;
      for (int f = 0; f < 3; ++f) {
        auto& fold = f == 0 ? out.train : f == 1 ? out.val : out.test;
        fold.insert(fold.end(), idx.begin() + pos, idx.begin() + pos + counts[c][f]);
        pos += counts[c][f];
      }
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

Normalizer fit_normalizer(const TabularDataset& ds, const std::vector<int>& train_indices) {
  const int F = ds.schema.n_features();
  Normalizer nz;
  nz.mean.assign(F, 0.0);
  nz.stddev.assign(F, 1.0);
  for (int c = 0; c < F; ++c) {
    if (ds.schema.columns[c].kind != ColKind::Numeric) continue;
    double sum = 0.0;
    long long count = 0;
    for (int i : train_indices) {
      const Cell& cell = ds.rows[i][c];
      if (cell.missing) continue;
      sum += cell.num;
      ++count;
    }
    const double mean = count > 0 ? sum / count : 0.0;
    double var = 0.0;
    for (int i : train_indices) {
      const Cell& cell = ds.rows[i][c];
      if (cell.missing) continue;
      var += (cell.num - mean) * (cell.num - mean);
    }
    var = count > 0 ? var / count : 0.0;  // population variance
    nz.mean[c] = mean;
    nz.stddev[c] = std::max(std::sqrt(var), 1e-8);
  }
  return nz;
}

TabularDataset apply_normalizer(const TabularDataset& ds, const Normalizer& nz) {
  if (nz.mean.size() != static_cast<std::size_t>(ds.schema.n_features()))
    throw DataError("apply_normalizer: statistics cover " + std::to_string(nz.mean.size()) +
                    " columns, dataset has " + std::to_string(ds.schema.n_features()));
  TabularDataset out = ds;
  for (auto& row : out.rows) {
    for (int c = 0; c < out.schema.n_features(); ++c) {
      Cell& cell = row[c];
      if (out.schema.columns[c].kind == ColKind::Numeric) {
        const double raw = cell.missing ? nz.mean[c] : cell.num;
        cell.num = (raw - nz.mean[c]) / nz.stddev[c];
        cell.missing = false;
      } else if (cell.missing) {
        cell.cat = "missing";
        cell.missing = false;
      }
    }
  }
  return out;
}

std::string serialize_row(const std::vector<Cell>& row, const Schema& schema) {
  if (row.size() != static_cast<std::size_t>(schema.n_features()))
    throw DataError("serialize_row: row has " + std::to_string(row.size()) +
                    " cells, schema expects " + std::to_string(schema.n_features()));
  std::string out;
  for (int c = 0; c < schema.n_features(); ++c) {
    if (c > 0) out.push_back(' ');
    out += schema.columns[c].name;
    out += " is ";
    const Cell& cell = row[c];
    if (cell.missing)
      out += "missing";
    else if (schema.columns[c].kind == ColKind::Numeric)
      out += format_numeric(cell.num);
    else
      out += cell.cat;
    out.push_back('.');
  }
  return out;
}

void check_disjoint(const Schema& source, const Schema& target) {
  std::set<std::string> src;
  for (const auto& col : source.columns) src.insert(lower_str(col.name));
  std::vector<std::string> shared;
  for (const auto& col : target.columns)
    if (src.count(lower_str(col.name))) shared.push_back(lower_str(col.name));
  if (!shared.empty()) {
    std::string msg = "check_disjoint: feature names shared between schemas:";
    for (const auto& s : shared) msg += " " + s;
    throw DataError(msg);
  }
}

}  // namespace lattle
