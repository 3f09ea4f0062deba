#include "farcon/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "farcon/errors.hpp"
#include "farcon/kernels.hpp"
#include "farcon/rng.hpp"

namespace farcon {

namespace {

std::string kind_name(ColumnKind k) {
  switch (k) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::binary: return "binary";
    case ColumnKind::categorical: return "categorical";
  }
  return "?";
}

ColumnKind kind_from_name(const std::string& s) {
  if (s == "continuous") return ColumnKind::continuous;
  if (s == "binary") return ColumnKind::binary;
  if (s == "categorical") return ColumnKind::categorical;
  throw DataError("schema: unknown column kind '" + s + "'");
}

std::string trim(std::string_view v) {
  std::size_t b = 0, e = v.size();
  while (b < e && std::isspace(static_cast<unsigned char>(v[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(v[e - 1]))) --e;
  return std::string(v.substr(b, e - b));
}

// Minimal RFC-4180 style splitter: commas, optional double quotes, "" escapes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string s_key(const Tensor& S, std::size_t r) {
  std::string key;
  for (double v : S.row(r)) key += v != 0.0 ? '1' : '0';
  return key;
}

}  // namespace

// Schema ------------------------------------------------------------------

TabularSchema TabularSchema::from_json(const nlohmann::json& j) {
  TabularSchema s;
  try {
    for (const auto& c : j.at("columns")) s.columns.push_back({c.at("name").get<std::string>(), kind_from_name(c.at("kind"))});
    s.sensitive = j.at("sensitive").get<std::string>();
    s.target = j.at("target").get<std::string>();
    if (j.contains("positive")) s.positive = j.at("positive").get<std::map<std::string, std::string>>();
    if (j.contains("missing")) s.missing = j.at("missing").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("schema: ") + e.what());
  }
  auto has = [&](const std::string& name) {
    return std::any_of(s.columns.begin(), s.columns.end(), [&](const ColumnSpec& c) { return c.name == name; });
  };
  if (!has(s.sensitive)) throw DataError("schema: sensitive column '" + s.sensitive + "' not declared");
  if (!has(s.target)) throw DataError("schema: target column '" + s.target + "' not declared");
  if (s.sensitive == s.target) throw DataError("schema: sensitive and target must differ");
  return s;
}

TabularSchema TabularSchema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("schema " + path + ": " + e.what());
  }
}

nlohmann::json TabularSchema::to_json() const {
  nlohmann::json j;
  j["columns"] = nlohmann::json::array();
  for (const auto& c : columns) j["columns"].push_back({{"name", c.name}, {"kind", kind_name(c.kind)}});
  j["sensitive"] = sensitive;
  j["target"] = target;
  if (!positive.empty()) j["positive"] = positive;
  if (!missing.empty()) j["missing"] = missing;
  return j;
}

// Dataset -----------------------------------------------------------------

std::vector<bool> Dataset::x_binary_mask() const {
  std::vector<bool> mask;
  mask.reserve(x_columns.size());
  for (const auto& c : x_columns) mask.push_back(c.binary);
  return mask;
}

Tensor Dataset::y_column() const { return Y.reshaped({Y.size(), 1}); }

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset d;
  d.X = X.select_rows(rows);
  d.S = S.select_rows(rows);
  d.Y = Y.select_rows(rows).reshaped({rows.size()});
  d.x_columns = x_columns;
  d.s_columns = s_columns;
  return d;
}

Dataset Dataset::concat(const Dataset& a, const Dataset& b) {
  if (a.x_dim() != b.x_dim() || a.s_dim() != b.s_dim()) throw DimensionError("Dataset::concat: column mismatch");
  auto stack = [](const Tensor& p, const Tensor& q, std::size_t cols) {
    std::vector<double> v(p.data().begin(), p.data().end());
    v.insert(v.end(), q.data().begin(), q.data().end());
    const std::size_t n = p.rows() + q.rows();
    return Tensor({n, cols}, std::move(v));
  };
  Dataset d;
  d.X = stack(a.X, b.X, a.x_dim());
  d.S = stack(a.S, b.S, a.s_dim());
  d.Y = stack(a.Y.reshaped({a.size(), 1}), b.Y.reshaped({b.size(), 1}), 1).reshaped({a.size() + b.size()});
  d.x_columns = a.x_columns;
  d.s_columns = a.s_columns;
  return d;
}

// Loading -----------------------------------------------------------------

Dataset load_tabular(const std::string& csv_path, const TabularSchema& schema, LoadStats* stats) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open data file " + csv_path);

  std::string line;
  if (!std::getline(in, line)) throw DataError(csv_path + ": empty file, header row expected");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);

  std::vector<std::size_t> col_index(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), schema.columns[c].name);
    if (it == header.end()) throw DataError(csv_path + ": column '" + schema.columns[c].name + "' missing from header");
    col_index[c] = static_cast<std::size_t>(it - header.begin());
  }

  // First pass: collect raw cells of kept rows.
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> line_no;
  LoadStats st;
  std::size_t lineno = 1;
  const std::set<std::string> missing(schema.missing.begin(), schema.missing.end());
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++st.rows_read;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError(csv_path + ": line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    std::vector<std::string> row;
    row.reserve(col_index.size());
    bool drop = false;
    for (std::size_t c = 0; c < col_index.size(); ++c) {
      row.push_back(fields[col_index[c]]);
      if (missing.count(row.back())) drop = true;
    }
    if (drop) {
      ++st.rows_dropped;
      continue;
    }
    cells.push_back(std::move(row));
    line_no.push_back(lineno);
  }
  if (stats) *stats = st;

  auto fail = [&](std::size_t r, std::size_t c, const std::string& why) -> DataError {
    return DataError(csv_path + ": line " + std::to_string(line_no[r]) + ", column '" + schema.columns[c].name +
                     "': " + why);
  };

  // Encoders per column. A binary column maps its positive value (or numeric 1,
  // or the lexicographically larger of two labels) to 1.
  const std::size_t n = cells.size();
  struct Encoded {
    std::vector<std::string> names;
    std::vector<bool> binary;
    std::vector<double> values;  // n x names.size()
  };
  auto encode = [&](std::size_t c) {
    const ColumnSpec& spec = schema.columns[c];
    Encoded e;
    if (spec.kind == ColumnKind::continuous) {
      e.names = {spec.name};
      e.binary = {false};
      e.values.resize(n);
      for (std::size_t r = 0; r < n; ++r)
        if (!parse_double(cells[r][c], e.values[r])) throw fail(r, c, "cannot parse '" + cells[r][c] + "' as a number");
      return e;
    }
    std::set<std::string> levels;
    for (std::size_t r = 0; r < n; ++r) {
      if (cells[r][c].empty()) throw fail(r, c, "empty cell");
      levels.insert(cells[r][c]);
    }
    if (spec.kind == ColumnKind::binary) {
      std::string positive;
      if (auto it = schema.positive.find(spec.name); it != schema.positive.end()) {
        positive = it->second;
      } else if (std::all_of(levels.begin(), levels.end(), [](const std::string& v) { return v == "0" || v == "1"; })) {
        positive = "1";
      } else {
        if (levels.size() > 2) throw DataError(csv_path + ": binary column '" + spec.name + "' has more than two values");
        positive = *levels.rbegin();
      }
      if (levels.size() > 2) throw DataError(csv_path + ": binary column '" + spec.name + "' has more than two values");
      e.names = {spec.name};
      e.binary = {true};
      e.values.resize(n);
      for (std::size_t r = 0; r < n; ++r) e.values[r] = cells[r][c] == positive ? 1.0 : 0.0;
      return e;
    }
    const std::vector<std::string> lv(levels.begin(), levels.end());
    for (const auto& l : lv) {
      e.names.push_back(spec.name + "=" + l);
      e.binary.push_back(true);
    }
    e.values.assign(n * lv.size(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const auto k = static_cast<std::size_t>(std::lower_bound(lv.begin(), lv.end(), cells[r][c]) - lv.begin());
      e.values[r * lv.size() + k] = 1.0;
    }
    return e;
  };

  Dataset d;
  std::vector<Encoded> x_parts;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const ColumnSpec& spec = schema.columns[c];
    if (spec.name == schema.target) {
      if (spec.kind != ColumnKind::binary) throw DataError("schema: target '" + spec.name + "' must be binary");
      Encoded e = encode(c);
      d.Y = Tensor({n}, std::move(e.values));
    } else if (spec.name == schema.sensitive) {
      if (spec.kind == ColumnKind::continuous) throw DataError("schema: sensitive '" + spec.name + "' must be binary or categorical");
      Encoded e = encode(c);
      d.s_columns = e.names;
      d.S = Tensor({n, e.names.size()}, std::move(e.values));
    } else {
      x_parts.push_back(encode(c));
    }
  }
  std::size_t x_dim = 0;
  for (const auto& p : x_parts) x_dim += p.names.size();
  d.X = Tensor({n, x_dim});
  std::size_t offset = 0;
  for (const auto& p : x_parts) {
    const std::size_t w = p.names.size();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t k = 0; k < w; ++k) d.X(r, offset + k) = p.values[r * w + k];
    for (std::size_t k = 0; k < w; ++k) d.x_columns.push_back({p.names[k], p.binary[k]});
    offset += w;
  }
  return d;
}

void save_tabular(const Dataset& data, const std::string& csv_path, const std::string& schema_path,
                  const std::string& target_name) {
  if (data.s_dim() != 1) throw DataError("save_tabular: only a single sensitive column is supported");
  std::ofstream out(csv_path);
  if (!out) throw DataError("cannot write " + csv_path);
  TabularSchema schema;
  for (const auto& c : data.x_columns) {
    out << c.name << ',';
    schema.columns.push_back({c.name, c.binary ? ColumnKind::binary : ColumnKind::continuous});
  }
  out << data.s_columns[0] << ',' << target_name << '\n';
  schema.columns.push_back({data.s_columns[0], ColumnKind::binary});
  schema.columns.push_back({target_name, ColumnKind::binary});
  schema.sensitive = data.s_columns[0];
  schema.target = target_name;
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (double v : data.X.row(r)) out << fmt(v) << ',';
    out << fmt(data.S(r, 0)) << ',' << fmt(data.Y[r]) << '\n';
  }
  if (!out) throw DataError("write failed: " + csv_path);
  std::ofstream sj(schema_path);
  if (!sj) throw DataError("cannot write " + schema_path);
  sj << schema.to_json().dump(2) << '\n';
}

// Standardizer --------------------------------------------------------------

Standardizer Standardizer::fit(const Dataset& train) {
  Standardizer st;
  const std::size_t n = train.size();
  for (std::size_t c = 0; c < train.x_dim(); ++c) {
    if (train.x_columns[c].binary) continue;
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += train.X(r, c);
    mean = n ? mean / static_cast<double>(n) : 0.0;
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (train.X(r, c) - mean) * (train.X(r, c) - mean);
    var = n ? var / static_cast<double>(n) : 0.0;
    const double sd = std::sqrt(var);
    st.columns.push_back(c);
    st.mean.push_back(mean);
    st.scale.push_back(sd > 1e-12 ? sd : 1.0);
  }
  return st;
}

void Standardizer::apply(Dataset& data) const {
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const std::size_t c = columns[k];
    if (c >= data.x_dim()) throw DimensionError("Standardizer::apply: column index out of range");
    for (std::size_t r = 0; r < data.size(); ++r) data.X(r, c) = (data.X(r, c) - mean[k]) / scale[k];
  }
}

// Pairing -------------------------------------------------------------------

std::string to_string(PairStrategy s) { return s == PairStrategy::matched_neighbor ? "matched_neighbor" : "s_flip"; }

PairStrategy pair_strategy_from_string(const std::string& name) {
  if (name == "matched_neighbor") return PairStrategy::matched_neighbor;
  if (name == "s_flip") return PairStrategy::s_flip;
  throw ConfigError("unknown pairing strategy '" + name + "'");
}

void PairBatch::validate() const {
  const std::size_t n = x.rows();
  if (s.rows() != n || y.rows() != n || x_cf.rows() != n || s_cf.rows() != n)
    throw DimensionError("PairBatch: misaligned rows (x " + x.shape_string() + ", s " + s.shape_string() + ", y " +
                         y.shape_string() + ", x_cf " + x_cf.shape_string() + ", s_cf " + s_cf.shape_string() + ")");
  if (x.cols() != x_cf.cols() || s.cols() != s_cf.cols()) throw DimensionError("PairBatch: original/counterfactual widths differ");
  if (y.cols() != 1) throw DimensionError("PairBatch: y must be [B x 1]");
}

PairBatch PairedDataset::batch(std::span<const std::size_t> rows) const {
  PairBatch b;
  b.x = original.X.select_rows(rows);
  b.s = original.S.select_rows(rows);
  b.y = original.Y.select_rows(rows).reshaped({rows.size(), 1});
  b.x_cf = X_cf.select_rows(rows);
  b.s_cf = S_cf.select_rows(rows);
  b.source.reserve(rows.size());
  for (std::size_t r : rows) b.source.push_back(source[r]);
  return b;
}

PairedDataset PairedDataset::self_paired(const Dataset& data) {
  PairedDataset p;
  p.original = data;
  p.X_cf = data.X;
  p.S_cf = data.S;
  p.source.assign(data.size(), PairSource::s_flip);
  p.partner.resize(data.size());
  std::iota(p.partner.begin(), p.partner.end(), std::size_t{0});
  return p;
}

PairedDataset build_counterfactual_pairs(const Dataset& data, PairStrategy strategy) {
  const std::size_t n = data.size();
  if (n == 0) throw DataError("build_counterfactual_pairs: empty dataset");
  PairedDataset p;
  p.original = data;
  p.X_cf = data.X;
  p.S_cf = data.S;
  for (double& v : p.S_cf.data()) v = 1.0 - v;
  p.source.assign(n, PairSource::s_flip);
  p.partner.resize(n);
  std::iota(p.partner.begin(), p.partner.end(), std::size_t{0});
  if (strategy == PairStrategy::s_flip) return p;

  // Group rows by (y, s pattern); a group's candidates are all rows with the
  // same y in the other groups.
  std::map<std::pair<int, std::string>, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < n; ++r) groups[{static_cast<int>(data.Y[r]), s_key(data.S, r)}].push_back(r);
  for (const auto& [key, members] : groups) {
    std::vector<std::size_t> candidates;
    for (const auto& [other, rows] : groups)
      if (other.first == key.first && other.second != key.second) candidates.insert(candidates.end(), rows.begin(), rows.end());
    if (candidates.empty()) continue;
    std::sort(candidates.begin(), candidates.end());
    const std::vector<std::size_t> nearest = kernels::nearest_rows(data.X, members, candidates);
    for (std::size_t i = 0; i < members.size(); ++i) {
      const std::size_t r = members[i], q = nearest[i];
      for (std::size_t c = 0; c < data.x_dim(); ++c) p.X_cf(r, c) = data.X(q, c);
      for (std::size_t c = 0; c < data.s_dim(); ++c) p.S_cf(r, c) = data.S(q, c);
      p.source[r] = PairSource::matched_neighbor;
      p.partner[r] = q;
    }
  }
  return p;
}

// Corruption ----------------------------------------------------------------

Dataset corrupt_sensitive(const Dataset& data, double epsilon, std::uint64_t seed) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("corrupt_sensitive: epsilon must lie in [0, 1]");
  for (double v : data.S.data())
    if (v != 0.0 && v != 1.0) throw DataError("corrupt_sensitive: s must be binary");
  const std::size_t n = data.size();
  const auto k = static_cast<std::size_t>(std::llround(epsilon * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  Dataset out = data;
  for (std::size_t i = 0; i < k; ++i)
    for (double& v : out.S.row(order[i])) v = 1.0 - v;
  return out;
}

// Synthetic -----------------------------------------------------------------

namespace {

Dataset synth_split(const SyntheticSpec& spec, double corr, Rng& rng) {
  if (!(corr >= 0.0 && corr <= 1.0)) throw ConfigError("make_synthetic_spurious: correlations must lie in [0, 1]");
  const std::size_t n = spec.n;
  const std::size_t d = spec.core_dim + spec.spurious_dim;
  Dataset ds;
  ds.X = Tensor({n, d});
  ds.S = Tensor({n, 1});
  ds.Y = Tensor({n});
  for (std::size_t r = 0; r < n; ++r) {
    const double y = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double s = rng.bernoulli(corr) ? y : 1.0 - y;
    for (std::size_t c = 0; c < spec.core_dim; ++c) ds.X(r, c) = (2.0 * y - 1.0) * spec.core_shift + rng.normal();
    for (std::size_t c = 0; c < spec.spurious_dim; ++c)
      ds.X(r, spec.core_dim + c) = 2.0 * s - 1.0;
    ds.S(r, 0) = s;
    ds.Y[r] = y;
  }
  for (std::size_t c = 0; c < spec.core_dim; ++c) ds.x_columns.push_back({"core_" + std::to_string(c), false});
  for (std::size_t c = 0; c < spec.spurious_dim; ++c) ds.x_columns.push_back({"spur_" + std::to_string(c), false});
  ds.s_columns = {"s"};
  return ds;
}

}  // namespace

SyntheticSplits make_synthetic_spurious(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.n < 100) throw ConfigError("make_synthetic_spurious: n must be at least 100");
  Rng train_rng(Rng::derive(seed, 0));
  Rng test_rng(Rng::derive(seed, 1));
  SyntheticSplits out;
  out.train = synth_split(spec, spec.corr_train, train_rng);
  out.test = synth_split(spec, spec.corr_test, test_rng);
  return out;
}

SyntheticSplits make_synthetic_spurious(std::size_t n, double corr_train, double corr_test, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n = n;
  spec.corr_train = corr_train;
  spec.corr_test = corr_test;
  return make_synthetic_spurious(spec, seed);
}

// Splitting -----------------------------------------------------------------

SplitResult split(const Dataset& data, const std::array<double, 3>& fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("split: fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");
  const std::size_t n = data.size();

  // Largest-remainder target sizes.
  std::array<std::size_t, 3> target{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = fractions[k] * static_cast<double>(n);
    target[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - static_cast<double>(target[k]);
    assigned += target[k];
  }
  while (assigned < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (rem[k] > rem[best]) best = k;
    ++target[best];
    rem[best] = -1.0;
    ++assigned;
  }

  // Shuffle within each stratum, lay strata end to end, then walk the order
  // giving each row to the split furthest behind its target share. Every
  // stratum's allocation stays within one row of proportional.
  std::map<std::pair<int, std::string>, std::vector<std::size_t>> strata;
  for (std::size_t r = 0; r < n; ++r) strata[{static_cast<int>(data.Y[r]), s_key(data.S, r)}].push_back(r);
  Rng rng(seed);
  std::vector<std::size_t> order;
  order.reserve(n);
  for (auto& [key, rows] : strata) {
    rng.shuffle(std::span<std::size_t>(rows));
    order.insert(order.end(), rows.begin(), rows.end());
  }

  SplitResult out;
  std::array<std::vector<std::size_t>*, 3> dest{&out.train_rows, &out.valid_rows, &out.test_rows};
  std::array<std::size_t, 3> count{};
  std::vector<int> which(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double seen = static_cast<double>(i + 1);
    int best = -1;
    double best_deficit = 0.0;
    for (int k = 0; k < 3; ++k) {
      if (count[k] >= target[k]) continue;
      const double deficit = seen * static_cast<double>(target[k]) / static_cast<double>(n) - static_cast<double>(count[k]);
      if (best < 0 || deficit > best_deficit) {
        best = k;
        best_deficit = deficit;
      }
    }
    dest[best]->push_back(order[i]);
    which[order[i]] = best;
    ++count[best];
  }

  const std::array<const char*, 3> names{"train", "valid", "test"};
  for (const auto& [key, rows] : strata) {
    for (int k = 0; k < 3; ++k) {
      if (target[k] == 0) continue;
      const bool present = std::any_of(rows.begin(), rows.end(), [&](std::size_t r) { return which[r] == k; });
      if (!present)
        out.warnings.push_back("stratum (y=" + std::to_string(key.first) + ", s=" + key.second + ") with " +
                               std::to_string(rows.size()) + " rows has no rows in the " + names[k] + " split");
    }
  }
  for (auto* v : dest) std::sort(v->begin(), v->end());
  out.train = data.subset(out.train_rows);
  out.valid = data.subset(out.valid_rows);
  out.test = data.subset(out.test_rows);
  return out;
}

}  // namespace farcon
