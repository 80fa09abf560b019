#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "tabseq/data.h"
#include "tabseq/error.h"

namespace tabseq::data {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool is_na(std::string_view cell, const CsvFormat& format) {
  const auto s = strip(cell);
  for (const auto& token : format.na_tokens) {
    if (s == token) return true;
  }
  return false;
}

double parse_number(std::string_view cell) {
  auto s = strip(cell);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) return kMissing;
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

CsvDocument parse_csv(std::string_view text, const CsvFormat& format, std::size_t skip_lines) {
  std::size_t pos = 0;
  for (std::size_t i = 0; i < skip_lines && pos < text.size(); ++i) {
    const auto nl = text.find('\n', pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
  }

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, was_quoted = false, in_quotes = false;
  std::size_t line = skip_lines + 1;

  auto end_field = [&] {
    if (format.trim && !was_quoted) field = std::string(strip(field));
    record.push_back(std::move(field));
    field.clear();
    quoted = was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) records.push_back(std::move(record));
    record.clear();
  };

  for (; pos < text.size(); ++pos) {
    const char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field.push_back('"');
          ++pos;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !quoted && strip(field).empty()) {
      field.clear();
      in_quotes = quoted = was_quoted = true;
    } else if (c == format.delimiter) {
      end_field();
    } else if (c == '\n') {
      end_record();
      ++line;
    } else if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') {
      continue;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) throw SchemaError("unterminated quoted field near line " + std::to_string(line));
  if (!field.empty() || !record.empty()) end_record();

  CsvDocument doc;
  std::size_t first = 0;
  if (format.header) {
    if (records.empty()) throw SchemaError("csv has no header row");
    doc.header = std::move(records[0]);
    first = 1;
  } else {
    if (format.columns.empty()) throw SchemaError("headerless csv needs declared column names");
    doc.header = format.columns;
  }
  std::unordered_set<std::string> names;
  for (const auto& h : doc.header) {
    if (!names.insert(h).second) throw SchemaError("duplicate column name '" + h + "'");
  }
  for (std::size_t r = first; r < records.size(); ++r) {
    if (records[r].size() != doc.header.size()) {
      throw SchemaError("record " + std::to_string(r + 1 - first) + " has " + std::to_string(records[r].size()) +
                        " fields, expected " + std::to_string(doc.header.size()));
    }
    doc.rows.push_back(std::move(records[r]));
  }
  return doc;
}

RawTable table_from_csv(const CsvDocument& doc, const DatasetMeta& meta) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < doc.header.size(); ++i) index.emplace(doc.header[i], i);
  auto column = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw SchemaError("dataset '" + meta.name + "' is missing column '" + name + "'");
    return it->second;
  };

  RawTable t;
  t.task = meta.task;
  t.categorical_names = meta.categorical;
  t.numerical_names = meta.numerical;
  t.target_name = meta.target;
  const std::size_t target_col = column(meta.target);
  std::vector<std::size_t> cat_cols, num_cols;
  for (const auto& n : meta.categorical) cat_cols.push_back(column(n));
  for (const auto& n : meta.numerical) num_cols.push_back(column(n));

  const std::size_t n = doc.rows.size();
  t.categorical.assign(cat_cols.size(), {});
  t.numerical.assign(num_cols.size(), {});
  for (auto& c : t.categorical) c.reserve(n);
  for (auto& c : t.numerical) c.reserve(n);
  t.target.reserve(n);

  for (const auto& row : doc.rows) {
    for (std::size_t j = 0; j < cat_cols.size(); ++j) {
      const auto& cell = row[cat_cols[j]];
      if (is_na(cell, meta.format)) t.categorical[j].emplace_back();
      else t.categorical[j].emplace_back(std::string(strip(cell)));
    }
    for (std::size_t j = 0; j < num_cols.size(); ++j) {
      const auto& cell = row[num_cols[j]];
      t.numerical[j].push_back(is_na(cell, meta.format) ? kMissing : parse_number(cell));
    }
    const auto& cell = row[target_col];
    if (is_na(cell, meta.format)) {
      t.target.push_back(kMissing);
    } else if (meta.task == Task::kBinary && !meta.positive_labels.empty()) {
      const auto label = strip(cell);
      bool positive = false;
      for (const auto& p : meta.positive_labels) positive = positive || label == p;
      t.target.push_back(positive ? 1.0 : 0.0);
    } else {
      double v = parse_number(cell);
      if (meta.task == Task::kBinary && v != 0.0 && v != 1.0) v = kMissing;
      t.target.push_back(v);
    }
  }
  return t;
}

RawTable load_csv(const std::filesystem::path& path, const DatasetMeta& meta, std::size_t source) {
  const Source* src = source < meta.sources.size() ? &meta.sources[source] : nullptr;
  auto doc = parse_csv(read_file(path), meta.format, src ? src->skip_lines : 0);
  if (src) {
    for (const auto& [name, value] : src->constants) {
      for (const auto& h : doc.header) {
        if (h == name) throw SchemaError("constant column '" + name + "' already exists in " + path.string());
      }
      doc.header.push_back(name);
      for (auto& row : doc.rows) row.push_back(value);
    }
  }
  return table_from_csv(doc, meta);
}

RawTable load_dataset(const DatasetMeta& meta, const std::filesystem::path& cache_dir) {
  if (meta.sources.empty()) throw ConfigError("dataset '" + meta.name + "' has no sources");
  RawTable out;
  for (std::size_t s = 0; s < meta.sources.size(); ++s) {
    const auto path = cache_dir / meta.sources[s].file;
    if (!std::filesystem::exists(path)) {
      throw IoError("dataset file " + path.string() + " is not in the cache; run fetch first");
    }
    auto part = load_csv(path, meta, s);
    if (s == 0) {
      out = std::move(part);
      continue;
    }
    for (std::size_t j = 0; j < out.categorical.size(); ++j) {
      out.categorical[j].insert(out.categorical[j].end(), part.categorical[j].begin(), part.categorical[j].end());
    }
    for (std::size_t j = 0; j < out.numerical.size(); ++j) {
      out.numerical[j].insert(out.numerical[j].end(), part.numerical[j].begin(), part.numerical[j].end());
    }
    out.target.insert(out.target.end(), part.target.begin(), part.target.end());
  }
  return out;
}

DropReport drop_missing(const RawTable& table) {
  const std::size_t n = table.rows();
  std::vector<char> keep(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(table.target[i])) keep[i] = 0;
    for (const auto& c : table.numerical) {
      if (!std::isfinite(c[i])) keep[i] = 0;
    }
    for (const auto& c : table.categorical) {
      if (!c[i]) keep[i] = 0;
    }
  }
  DropReport r;
  r.table.task = table.task;
  r.table.categorical_names = table.categorical_names;
  r.table.numerical_names = table.numerical_names;
  r.table.target_name = table.target_name;
  r.table.categorical.assign(table.categorical.size(), {});
  r.table.numerical.assign(table.numerical.size(), {});
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) {
      ++r.dropped;
      continue;
    }
    for (std::size_t j = 0; j < table.categorical.size(); ++j) r.table.categorical[j].push_back(table.categorical[j][i]);
    for (std::size_t j = 0; j < table.numerical.size(); ++j) r.table.numerical[j].push_back(table.numerical[j][i]);
    r.table.target.push_back(table.target[i]);
  }
  if (r.table.rows() == 0) {
    throw DataError("no rows left after dropping missing values (" + std::to_string(n) + " dropped)");
  }
  return r;
}

encoding::TabularColumns to_columns(const RawTable& table) {
  encoding::TabularColumns c;
  c.categorical_names = table.categorical_names;
  c.numerical_names = table.numerical_names;
  c.numerical = table.numerical;
  c.target = table.target;
  c.categorical.resize(table.categorical.size());
  for (std::size_t j = 0; j < table.categorical.size(); ++j) {
    c.categorical[j].reserve(table.rows());
    for (const auto& v : table.categorical[j]) {
      if (!v) throw DataError("column '" + table.categorical_names[j] + "' has missing cells; drop them first");
      c.categorical[j].push_back(*v);
    }
  }
  for (std::size_t j = 0; j < c.numerical.size(); ++j) {
    for (double v : c.numerical[j]) {
      if (!std::isfinite(v)) {
        throw DataError("column '" + table.numerical_names[j] + "' has missing cells; drop them first");
      }
    }
  }
  for (double v : c.target) {
    if (!std::isfinite(v)) throw DataError("target '" + table.target_name + "' has missing cells; drop them first");
  }
  return c;
}

}  // namespace tabseq::data
