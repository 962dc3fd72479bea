#include "lattle/gftt.hpp"

namespace lattle {

std::vector<GfttRow> prepare_gftt_rows(const TabularDataset& normalized, const Vocabulary& v,
                                       const Schema& expected) {
  const Schema& got = normalized.schema;
  if (got.n_features() != expected.n_features())
    throw DataError("gftt: dataset has " + std::to_string(got.n_features()) +
                    " features, model expects " + std::to_string(expected.n_features()));
  for (int c = 0; c < expected.n_features(); ++c) {
    if (lower_str(got.columns[c].name) != lower_str(expected.columns[c].name))
      throw DataError("gftt: column '" + got.columns[c].name + "' where '" +
                      expected.columns[c].name + "' was expected");
    if (got.columns[c].kind != expected.columns[c].kind)
      throw DataError("gftt: column '" + got.columns[c].name + "' has the wrong kind");
  }

  std::vector<GfttRow> rows;
  rows.reserve(normalized.n());
  for (std::size_t r = 0; r < normalized.n(); ++r) {
    GfttRow row;
    row.label = normalized.labels[r];
    for (int c = 0; c < got.n_features(); ++c) {
      const Cell& cell = normalized.rows[r][c];
      FeatSpec f;
      if (got.columns[c].kind == ColKind::Numeric) {
        f.factor = cell.missing ? 0.0 : cell.num;
        f.ids = encode(v, got.columns[c].name);
      } else {
        f.factor = 1.0;
        f.ids = encode(v, got.columns[c].name + " " +
                              (cell.missing ? std::string("missing") : cell.cat));
      }
      row.feats.push_back(std::move(f));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

template struct Gftt<float>;
template struct Gftt<double>;

}  // namespace lattle
