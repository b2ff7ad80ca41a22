#pragma once

// Ingestion of screening databases from CSV, driven by a JSON schema that
// names the feature/score columns, per-column transforms, costs and budget.

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "screenbo/csv.hpp"
#include "screenbo/dataset.hpp"
#include "screenbo/errors.hpp"
#include "screenbo/rng.hpp"

namespace screenbo {

enum class ColumnTransform { identity, log };

struct SchemaConfig {
  std::vector<std::string> feature_columns;
  std::string cheap_column;
  std::string expensive_column;
  std::map<std::string, ColumnTransform> transforms;  // default identity
  bool standardize_features = false;
  std::optional<int> subsample;  // nullopt = all rows
  std::uint64_t subsample_seed = 0;
  std::string id_column;  // empty = use row numbers
  double cost_cheap = 1.0;
  double cost_expensive = 1.0;
  std::optional<double> single_test_cost_expensive;  // override for single-test scoring
  double budget = 0.0;
  int top_n = 1;

  ColumnTransform transform_of(const std::string& column) const {
    auto it = transforms.find(column);
    return it == transforms.end() ? ColumnTransform::identity : it->second;
  }
};

inline SchemaConfig schema_from_json(const nlohmann::json& j) {
  SchemaConfig s;
  try {
    s.feature_columns = j.at("features").get<std::vector<std::string>>();
    s.cheap_column = j.at("cheap_column").get<std::string>();
    s.expensive_column = j.at("expensive_column").get<std::string>();
    if (j.contains("transforms")) {
      for (auto& [col, name] : j.at("transforms").items()) {
        const std::string t = name.get<std::string>();
        if (t == "identity")
          s.transforms[col] = ColumnTransform::identity;
        else if (t == "log")
          s.transforms[col] = ColumnTransform::log;
        else
          throw SchemaError("unknown transform '" + t + "' for column '" + col + "'");
      }
    }
    s.standardize_features = j.value("standardize_features", false);
    if (j.contains("subsample") && !j.at("subsample").is_string())
      s.subsample = j.at("subsample").get<int>();
    s.subsample_seed = j.value("subsample_seed", std::uint64_t{0});
    s.id_column = j.value("id_column", std::string{});
    s.cost_cheap = j.value("cost_cheap", 1.0);
    s.cost_expensive = j.value("cost_expensive", 1.0);
    if (j.contains("single_test_cost_expensive"))
      s.single_test_cost_expensive = j.at("single_test_cost_expensive").get<double>();
    s.budget = j.value("budget", 0.0);
    s.top_n = j.value("top_n", 1);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad schema: ") + e.what());
  }
  return s;
}

inline SchemaConfig load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("cannot parse schema '" + path + "': " + e.what());
  }
  return schema_from_json(j);
}

namespace detail {

inline double apply_transform(double v, ColumnTransform t, const std::string& column,
                              const std::string& row_id) {
  if (t == ColumnTransform::log) {
    if (!(v > 0.0))
      throw DataError("log transform of non-positive value " + format_double(v) +
                      " in column '" + column + "' at row id '" + row_id + "'");
    return std::log(v);
  }
  return v;
}

}  // namespace detail

// Parse, transform, optionally standardize features and subsample. Row
// alignment between features and both score columns is preserved throughout.
inline Dataset load_dataset(const std::string& path, const SchemaConfig& schema) {
  const CsvTable table = read_csv(path);

  auto require_column = [&](const std::string& name) {
    const int c = table.column(name);
    if (c < 0) throw SchemaError("column '" + name + "' not found in '" + path + "'");
    return c;
  };

  std::vector<int> feature_cols;
  feature_cols.reserve(schema.feature_columns.size());
  for (const auto& name : schema.feature_columns) feature_cols.push_back(require_column(name));
  const int cheap_col = require_column(schema.cheap_column);
  const int expensive_col = require_column(schema.expensive_column);
  const int id_col = schema.id_column.empty() ? -1 : require_column(schema.id_column);

  const auto n_all = static_cast<Eigen::Index>(table.rows.size());
  const auto d = static_cast<Eigen::Index>(feature_cols.size());

  std::vector<int> keep(static_cast<std::size_t>(n_all));
  std::iota(keep.begin(), keep.end(), 0);
  if (schema.subsample && *schema.subsample < n_all) {
    Rng rng(derive_seed(schema.subsample_seed, 5));
    keep = rng.sample_without_replacement(static_cast<int>(n_all), *schema.subsample);
    std::sort(keep.begin(), keep.end());
  }

  Dataset out;
  const auto n = static_cast<Eigen::Index>(keep.size());
  out.features.resize(n, d);
  out.cheap_scores.resize(n);
  out.expensive_scores.resize(n);
  out.ids.reserve(static_cast<std::size_t>(n));

  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(keep[static_cast<std::size_t>(r)])];
    const std::string row_id =
        id_col >= 0 ? row[static_cast<std::size_t>(id_col)]
                    : std::to_string(keep[static_cast<std::size_t>(r)]);
    out.ids.push_back(row_id);
    for (Eigen::Index c = 0; c < d; ++c) {
      const auto& name = schema.feature_columns[static_cast<std::size_t>(c)];
      double v = parse_double(row[static_cast<std::size_t>(feature_cols[static_cast<std::size_t>(c)])],
                              "column '" + name + "' row id '" + row_id + "'");
      out.features(r, c) = detail::apply_transform(v, schema.transform_of(name), name, row_id);
    }
    double yc = parse_double(row[static_cast<std::size_t>(cheap_col)],
                             "column '" + schema.cheap_column + "' row id '" + row_id + "'");
    out.cheap_scores[r] =
        detail::apply_transform(yc, schema.transform_of(schema.cheap_column),
                                schema.cheap_column, row_id);
    double ye = parse_double(row[static_cast<std::size_t>(expensive_col)],
                             "column '" + schema.expensive_column + "' row id '" + row_id + "'");
    out.expensive_scores[r] =
        detail::apply_transform(ye, schema.transform_of(schema.expensive_column),
                                schema.expensive_column, row_id);
  }

  if (schema.standardize_features && n > 1) {
    for (Eigen::Index c = 0; c < d; ++c) {
      const double mean = out.features.col(c).mean();
      const double sd = std::sqrt((out.features.col(c).array() - mean).square().sum() /
                                  static_cast<double>(n - 1));
      if (sd > 0.0)
        out.features.col(c) = (out.features.col(c).array() - mean) / sd;
      else
        out.features.col(c).array() -= mean;
    }
  }

  out.validate();
  return out;
}

// Write a dataset in the canonical layout gen-synth produces:
// id, f0..f{d-1}, cheap, expensive.
inline void write_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "id";
  for (Eigen::Index c = 0; c < data.dim(); ++c) out << ",f" << c;
  out << ",cheap,expensive\n";
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    out << data.ids[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < data.dim(); ++c) out << ',' << format_double(data.features(r, c));
    out << ',' << format_double(data.cheap_scores[r]) << ','
        << format_double(data.expensive_scores[r]) << '\n';
  }
}

// Schema matching write_dataset output.
inline SchemaConfig canonical_schema(Eigen::Index dim) {
  SchemaConfig s;
  for (Eigen::Index c = 0; c < dim; ++c) s.feature_columns.push_back("f" + std::to_string(c));
  s.cheap_column = "cheap";
  s.expensive_column = "expensive";
  s.id_column = "id";
  return s;
}

}  // namespace screenbo
