#include "bfvae/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "bfvae/error.hpp"

namespace bfvae::data {

Standardization Standardization::fit(const Tensor2& x, std::span<const std::size_t> rows,
                                     std::span<const std::string> names) {
  Standardization s;
  const std::size_t p = x.cols();
  s.mean.assign(p, 0.0);
  s.stddev.assign(p, 0.0);
  if (rows.empty()) {
    std::fill(s.stddev.begin(), s.stddev.end(), 1.0);
    return s;
  }
  const double n = static_cast<double>(rows.size());
  std::vector<std::string> zero;
  std::vector<double> col(rows.size());
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < rows.size(); ++i) col[i] = x(rows[i], j);
    const double m = pairwise_sum(col) / n;
    for (double& v : col) v = (v - m) * (v - m);
    const double sd = std::sqrt(pairwise_sum(col) / n);
    s.mean[j] = m;
    s.stddev[j] = sd;
    if (!(sd > 1e-12 * std::max(1.0, std::abs(m)))) zero.push_back(j < names.size() ? names[j] : "column " + std::to_string(j));
  }
  if (!zero.empty()) {
    std::string msg = "standardization: zero standard deviation in";
    for (const auto& z : zero) msg += " '" + z + "'";
    throw ConfigError(msg);
  }
  return s;
}

Tensor2 Standardization::apply(const Tensor2& raw) const {
  if (raw.cols() != mean.size()) throw DimensionError("Standardization::apply: column count mismatch");
  Tensor2 out(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.rows(); ++i)
    for (std::size_t j = 0; j < raw.cols(); ++j) out(i, j) = (raw(i, j) - mean[j]) / stddev[j];
  return out;
}

Tensor2 Standardization::invert(const Tensor2& standardized) const {
  if (standardized.cols() != mean.size()) throw DimensionError("Standardization::invert: column count mismatch");
  Tensor2 out(standardized.rows(), standardized.cols());
  for (std::size_t i = 0; i < standardized.rows(); ++i)
    for (std::size_t j = 0; j < standardized.cols(); ++j) out(i, j) = standardized(i, j) * stddev[j] + mean[j];
  return out;
}

std::optional<std::size_t> FactorGroundTruth::factor_of(std::size_t feature) const {
  for (std::size_t f = 0; f < blocks.size(); ++f)
    if (std::find(blocks[f].begin(), blocks[f].end(), feature) != blocks[f].end()) return f;
  return std::nullopt;
}

std::vector<double> TabularDataset::train_y() const {
  if (!y) throw ConfigError("dataset has no label column");
  std::vector<double> out;
  out.reserve(train_rows.size());
  for (auto r : train_rows) out.push_back((*y)[r]);
  return out;
}

void FaConfig::validate() const {
  if (n_train > n) throw ConfigError("FaConfig: n_train exceeds n");
  if (blocks.empty()) throw ConfigError("FaConfig: need at least one factor block");
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (std::size_t f = 0; f < blocks.size(); ++f) {
    if (blocks[f].empty()) throw ConfigError("FaConfig: block " + std::to_string(f) + " is empty");
    for (auto j : blocks[f]) {
      if (j >= p) throw ConfigError("FaConfig: block " + std::to_string(f) + " references feature " + std::to_string(j) + " >= p");
      if (!seen.insert(j).second) throw ConfigError("FaConfig: overlapping blocks at feature " + std::to_string(j));
    }
    total += blocks[f].size();
  }
  if (total > p) throw ConfigError("FaConfig: blocks exceed p");
  if (!(loading_lo > 0.0 && loading_hi >= loading_lo)) throw ConfigError("FaConfig: invalid loading range");
  if (!(noise_std >= 0.0)) throw ConfigError("FaConfig: noise_std must be non-negative");
  if (label) {
    if (label->feature_a >= p || label->feature_b >= p) throw ConfigError("FaConfig: label features out of range");
    if (n_train < 2) throw ConfigError("FaConfig: label requires at least two training rows");
  }
}

std::optional<Preset> parse_preset(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "fa15") return Preset::FA15;
  if (s == "fa24") return Preset::FA24;
  if (s == "fa100") return Preset::FA100;
  if (s == "winelike" || s == "wine-like") return Preset::WineLike;
  return std::nullopt;
}

std::string preset_name(Preset p) {
  switch (p) {
    case Preset::FA15:
      return "fa15";
    case Preset::FA24:
      return "fa24";
    case Preset::FA100:
      return "fa100";
    case Preset::WineLike:
      return "winelike";
  }
  return "custom";
}

std::vector<std::vector<std::size_t>> contiguous_blocks(std::span<const std::size_t> sizes) {
  std::vector<std::vector<std::size_t>> blocks;
  std::size_t next = 0;
  for (auto s : sizes) {
    std::vector<std::size_t> b(s);
    std::iota(b.begin(), b.end(), next);
    next += s;
    blocks.push_back(std::move(b));
  }
  return blocks;
}

FaConfig preset(Preset p, std::uint64_t seed) {
  FaConfig c;
  c.name = preset_name(p);
  c.seed = seed;
  switch (p) {
    case Preset::FA15: {
      const std::size_t sizes[] = {4, 4, 4, 3};
      c.n = 1000;
      c.n_train = 800;
      c.p = 15;
      c.blocks = contiguous_blocks(sizes);
      break;
    }
    case Preset::FA24: {
      const std::size_t sizes[] = {4, 4, 4, 4, 4, 4};
      c.n = 10000;
      c.n_train = 8000;
      c.p = 24;
      c.blocks = contiguous_blocks(sizes);
      break;
    }
    case Preset::FA100: {
      const std::size_t sizes[] = {17, 17, 17, 17, 16, 16};
      c.n = 50000;
      c.n_train = 40000;
      c.p = 100;
      c.blocks = contiguous_blocks(sizes);
      break;
    }
    case Preset::WineLike: {
      // Three factor blocks plus two free features that drive the label.
      const std::size_t sizes[] = {3, 3, 3};
      c.n = 2000;
      c.n_train = 1600;
      c.p = 11;
      c.blocks = contiguous_blocks(sizes);
      c.label = SyntheticLabel{9, 10, 1.0, 1.0, 0.1};
      break;
    }
  }
  return c;
}

std::pair<TabularDataset, FactorGroundTruth> gen_fa(const FaConfig& config) {
  config.validate();
  Rng rng(config.seed);
  FactorGroundTruth truth;
  truth.num_factors = config.blocks.size();
  truth.blocks = config.blocks;
  truth.noise_std = config.noise_std;
  truth.loadings = Tensor2(config.p, truth.num_factors);
  std::uniform_real_distribution<double> mag(config.loading_lo, config.loading_hi);
  std::bernoulli_distribution sign(0.5);
  for (std::size_t f = 0; f < truth.num_factors; ++f)
    for (auto j : config.blocks[f]) {
      const double s = config.random_sign && !sign(rng) ? -1.0 : 1.0;
      truth.loadings(j, f) = s * mag(rng);
    }

  Tensor2 factors = standard_normal(config.n, truth.num_factors, rng);
  Tensor2 raw(config.n, config.p);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < config.n; ++i) {
    for (std::size_t j = 0; j < config.p; ++j) {
      double v = 0.0;
      for (std::size_t f = 0; f < truth.num_factors; ++f) v += truth.loadings(j, f) * factors(i, f);
      raw(i, j) = v + config.noise_std * noise(rng);
    }
  }

  TabularDataset ds;
  for (std::size_t j = 0; j < config.p; ++j) ds.feature_names.push_back("x" + std::to_string(j + 1));
  ds.train_rows.resize(config.n_train);
  std::iota(ds.train_rows.begin(), ds.train_rows.end(), 0);
  for (std::size_t i = config.n_train; i < config.n; ++i) ds.test_rows.push_back(i);
  if (config.n_train == 0) {
    ds.standardization.mean.assign(config.p, 0.0);
    ds.standardization.stddev.assign(config.p, 1.0);
  } else {
    ds.standardization = Standardization::fit(raw, ds.train_rows, ds.feature_names);
  }
  ds.x = ds.standardization.apply(raw);

  if (config.label) {
    const auto& lab = *config.label;
    std::vector<double> y(config.n);
    std::normal_distribution<double> ln(0.0, lab.noise_std);
    for (std::size_t i = 0; i < config.n; ++i)
      y[i] = lab.weight_a * ds.x(i, lab.feature_a) + lab.weight_b * ds.x(i, lab.feature_b) + ln(rng);
    Tensor2 ycol(config.n, 1, y);
    const std::string nm[] = {"y"};
    const auto ys = Standardization::fit(ycol, ds.train_rows, nm);
    ds.label_mean = ys.mean[0];
    ds.label_std = ys.stddev[0];
    for (double& v : y) v = (v - ds.label_mean) / ds.label_std;
    ds.y = std::move(y);
    ds.label_name = "y";
  }
  return {std::move(ds), std::move(truth)};
}

Tensor2 FactorSampler::sample(const Tensor2& factors, Rng& rng) const {
  if (factors.cols() != truth.num_factors) throw DimensionError("FactorSampler: factor matrix width mismatch");
  const std::size_t p = truth.num_features();
  std::normal_distribution<double> noise(0.0, 1.0);
  Tensor2 raw(factors.rows(), p);
  for (std::size_t i = 0; i < factors.rows(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double v = 0.0;
      for (std::size_t f = 0; f < truth.num_factors; ++f) v += truth.loadings(j, f) * factors(i, f);
      raw(i, j) = v + truth.noise_std * noise(rng);
    }
  }
  return standardization.apply(raw);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("line " + std::to_string(line_no) + ": unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::pair<std::vector<std::string>, Tensor2> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line, line_no);
    if (header.empty()) {
      for (auto& f : fields) header.push_back(trim(f));
      continue;
    }
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string f = trim(fields[c]);
      double v = 0.0;
      const auto* end = f.data() + f.size();
      auto [ptr, ec] = std::from_chars(f.data(), end, v);
      if (f.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw ParseError("line " + std::to_string(line_no) + ": non-numeric cell '" + f + "' in column '" +
                         header[c] + "'");
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (header.empty()) throw ParseError("line 1: empty CSV file");
  if (rows == 0) throw ParseError("line " + std::to_string(line_no + 1) + ": CSV has a header but no data rows");
  const std::size_t cols = values.size() / rows;
  return {std::move(header), Tensor2(rows, cols, std::move(values))};
}

std::pair<std::vector<std::string>, Tensor2> read_csv_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_csv(buf.str());
}

TabularDataset make_dataset(std::span<const std::string> header, const Tensor2& table,
                            std::optional<std::size_t> label_column, std::vector<std::size_t> train_rows) {
  if (header.size() != table.cols()) throw DimensionError("dataset: header width does not match the table");
  if (label_column && *label_column >= header.size()) throw ConfigError("dataset: label column out of range");
  TabularDataset ds;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (!label_column || c != *label_column) feature_cols.push_back(c);
  if (feature_cols.empty()) throw ConfigError("dataset: no feature columns");
  Tensor2 raw(table.rows(), feature_cols.size());
  for (std::size_t i = 0; i < table.rows(); ++i)
    for (std::size_t c = 0; c < feature_cols.size(); ++c) raw(i, c) = table(i, feature_cols[c]);
  for (auto c : feature_cols) ds.feature_names.push_back(header[c]);

  std::sort(train_rows.begin(), train_rows.end());
  std::vector<bool> is_train(table.rows(), false);
  for (auto r : train_rows) {
    if (r >= table.rows() || is_train[r]) throw ConfigError("dataset: invalid training row index");
    is_train[r] = true;
  }
  ds.train_rows = std::move(train_rows);
  for (std::size_t i = 0; i < table.rows(); ++i)
    if (!is_train[i]) ds.test_rows.push_back(i);

  ds.standardization = Standardization::fit(raw, ds.train_rows, ds.feature_names);
  ds.x = ds.standardization.apply(raw);
  if (label_column) {
    Tensor2 ycol(table.rows(), 1);
    for (std::size_t i = 0; i < table.rows(); ++i) ycol(i, 0) = table(i, *label_column);
    const std::string nm[] = {header[*label_column]};
    const auto ys = Standardization::fit(ycol, ds.train_rows, nm);
    ds.label_mean = ys.mean[0];
    ds.label_std = ys.stddev[0];
    std::vector<double> y(table.rows());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = (ycol(i, 0) - ds.label_mean) / ds.label_std;
    ds.y = std::move(y);
    ds.label_name = header[*label_column];
  }
  return ds;
}

TabularDataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> label_column,
                        double split_fraction, std::uint64_t seed) {
  if (!(split_fraction > 0.0 && split_fraction <= 1.0)) throw ConfigError("load_csv: split_fraction must be in (0,1]");
  auto [header, table] = read_csv_file(path);
  std::vector<std::size_t> order(table.rows());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(split_fraction * static_cast<double>(table.rows())));
  order.resize(n_train);
  return make_dataset(header, table, label_column, std::move(order));
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_csv(const std::filesystem::path& path, std::span<const std::string> header, const Tensor2& values) {
  if (header.size() != values.cols()) throw DimensionError("write_csv: header width mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << csv_field(header[c]);
  out << '\n';
  for (std::size_t i = 0; i < values.rows(); ++i) {
    for (std::size_t c = 0; c < values.cols(); ++c) out << (c ? "," : "") << format_double(values(i, c));
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

Tensor2 raw_table(const TabularDataset& ds, bool with_label) {
  Tensor2 raw = ds.standardization.invert(ds.x);
  if (!with_label || !ds.y) return raw;
  Tensor2 out(raw.rows(), raw.cols() + 1);
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t j = 0; j < raw.cols(); ++j) out(i, j) = raw(i, j);
    out(i, raw.cols()) = (*ds.y)[i] * ds.label_std + ds.label_mean;
  }
  return out;
}

nlohmann::json standardization_to_json(const Standardization& s) {
  return {{"mean", s.mean}, {"std", s.stddev}};
}

Standardization standardization_from_json(const nlohmann::json& j) {
  Standardization s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("std").get<std::vector<double>>();
  if (s.mean.size() != s.stddev.size()) throw IntegrityError("standardization record: length mismatch");
  return s;
}

nlohmann::json truth_to_json(const FactorGroundTruth& t) {
  std::vector<std::vector<double>> lam(t.loadings.rows());
  for (std::size_t j = 0; j < t.loadings.rows(); ++j) {
    auto r = t.loadings.row(j);
    lam[j].assign(r.begin(), r.end());
  }
  return {{"num_factors", t.num_factors}, {"blocks", t.blocks}, {"loadings", lam}, {"noise_std", t.noise_std}};
}

FactorGroundTruth truth_from_json(const nlohmann::json& j) {
  FactorGroundTruth t;
  t.num_factors = j.at("num_factors").get<std::size_t>();
  t.blocks = j.at("blocks").get<std::vector<std::vector<std::size_t>>>();
  t.noise_std = j.at("noise_std").get<double>();
  const auto lam = j.at("loadings").get<std::vector<std::vector<double>>>();
  t.loadings = Tensor2(lam.size(), t.num_factors);
  for (std::size_t r = 0; r < lam.size(); ++r) {
    if (lam[r].size() != t.num_factors) throw IntegrityError("ground truth: loading row width mismatch");
    for (std::size_t c = 0; c < t.num_factors; ++c) t.loadings(r, c) = lam[r][c];
  }
  return t;
}

nlohmann::json manifest_json(const FaConfig& config, const TabularDataset& ds, const FactorGroundTruth& truth) {
  nlohmann::json j;
  j["format"] = "bfvae-dataset-manifest";
  j["version"] = 1;
  j["preset"] = config.name;
  j["seed"] = config.seed;
  j["n"] = config.n;
  j["n_train"] = config.n_train;
  j["p"] = config.p;
  j["loading_range"] = {config.loading_lo, config.loading_hi};
  j["feature_names"] = ds.feature_names;
  j["ground_truth"] = truth_to_json(truth);
  j["standardization"] = standardization_to_json(ds.standardization);
  j["train_rows"] = ds.train_rows.size();
  if (ds.y) {
    j["label"] = {{"name", ds.label_name}, {"column", config.p}, {"mean", ds.label_mean}, {"std", ds.label_std}};
  }
  return j;
}

}  // namespace bfvae::data
