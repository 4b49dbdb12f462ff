#include "bfvae/bundle.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "bfvae/error.hpp"

namespace bfvae::bundle {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IntegrityError("bundle: missing file " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string dump(const json& j) { return j.dump(1) + "\n"; }

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

class Writer {
 public:
  explicit Writer(fs::path root) : root_(std::move(root)) {}

  void put(const std::string& rel, const std::string& content) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("bundle: cannot write " + p.string());
    f << content;
    if (!f) throw Error("bundle: write failed for " + p.string());
    hashes_[rel] = exp::fnv1a_hex(content);
  }
  void put_json(const std::string& rel, const json& j) { put(rel, dump(j)); }

  json index() const {
    json files = json::object();
    for (const auto& [k, v] : hashes_) files[k] = v;
    return {{"format", "bfvae-bundle"}, {"version", 1}, {"files", files}};
  }

 private:
  fs::path root_;
  std::map<std::string, std::string> hashes_;
};

json dataset_json(const exp::ExperimentResult& res, const exp::LoadedDataset& ds) {
  json j;
  j["fingerprint"] = ds.fingerprint;
  j["description"] = ds.description;
  j["feature_names"] = ds.data.feature_names;
  j["n"] = ds.data.x.rows();
  j["train_rows"] = ds.data.train_rows.size();
  j["standardization"] = data::standardization_to_json(ds.data.standardization);
  j["ground_truth"] = ds.truth ? data::truth_to_json(*ds.truth) : json(nullptr);
  if (ds.data.y) j["label"] = {{"name", ds.data.label_name}, {"mean", ds.data.label_mean}, {"std", ds.data.label_std}};
  (void)res;
  return j;
}

json dbsr_json(const dbsr::DbsrRun& r) {
  return {{"magnitude", association_to_json(r.magnitude)},
          {"signed", association_to_json(r.signed_d)},
          {"iterations", r.solution.iterations},
          {"converged", r.solution.converged},
          {"objective_trace_last", r.solution.objective_trace.back()}};
}

std::string run_dir(std::size_t r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "runs/run_%03zu/", r);
  return buf;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot write " + tmp.string());
    f << content;
    if (!f) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_bundle(const fs::path& dir, const exp::ExperimentResult& res, const exp::LoadedDataset& ds) {
  const fs::path target = fs::absolute(dir);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path staging = target;
  staging += ".partial-" + std::to_string(::getpid());
  fs::remove_all(staging);
  fs::create_directories(staging);

  Writer w(staging);
  w.put_json("config.json", exp::config_to_json(res.config));
  w.put_json("dataset.json", dataset_json(res, ds));
  w.put_json("metrics.json", res.metrics);

  json timing = {{"total_seconds", res.seconds}, {"runs", json::array()}};
  for (const auto& run : res.runs) {
    const auto d = run_dir(run.index);
    timing["runs"].push_back({{"run", run.index},
                              {"train", run.timing.train},
                              {"fvh_lt", run.timing.fvh_lt},
                              {"dbsr", run.timing.dbsr},
                              {"quality", run.timing.quality},
                              {"higgins", run.timing.higgins}});
    json status = {{"run", run.index}, {"seed", run.seed}, {"ok", run.ok()}};
    if (!run.ok()) status["failed_stage"] = run.failed_stage, status["error"] = run.error;
    if (run.higgins) status["higgins"] = metrics::score_to_json(*run.higgins);
    w.put_json(d + "status.json", status);
    if (run.trained) {
      w.put_json(d + "checkpoint.json", vae::checkpoint_to_json(*run.trained));
      w.put_json(d + "posterior.json", metrics::kl_summary_to_json(metrics::kl_summary(run.trained->stats)));
    }
    if (run.fvh) w.put_json(d + "fvh_lt.json", association_to_json(*run.fvh));
    if (run.dbsr) w.put_json(d + "dbsr.json", dbsr_json(*run.dbsr));
    if (run.quality) w.put_json(d + "quality.json", json{{"variance", *run.quality}});
  }
  w.put_json("timing.json", timing);

  if (res.fvh_mapping) {
    json m = gas::mapping_to_json(*res.fvh_mapping);
    m["source_runs"] = res.aligned_runs;
    w.put_json("alignment/fvh_lt.json", m);
  }
  if (res.fvh_aggregate) w.put_json("aggregate/fvh_lt.json", association_to_json(*res.fvh_aggregate));
  if (res.dbsr_aggregate) {
    json m = gas::mapping_to_json(res.dbsr_aggregate->mapping);
    m["source_runs"] = res.aligned_runs;
    w.put_json("alignment/dbsr_ls.json", m);
    w.put_json("aggregate/dbsr_magnitude.json", association_to_json(res.dbsr_aggregate->magnitude));
    w.put_json("aggregate/dbsr_signed.json", association_to_json(res.dbsr_aggregate->signed_d));
  }
  if (res.quality_aggregate) {
    json q = {{"variance", *res.quality_aggregate}, {"feature_names", res.feature_names}};
    w.put_json("aggregate/quality.json", q);
  }
  {
    std::ofstream f(staging / "bundle.json", std::ios::binary);
    f << dump(w.index());
    if (!f) throw Error("bundle: cannot write index");
  }

  fs::path old = target;
  old += ".old-" + std::to_string(::getpid());
  const bool existed = fs::exists(target);
  if (existed) fs::rename(target, old);
  fs::rename(staging, target);
  if (existed) fs::remove_all(old);
}

std::string Bundle::label() const {
  if (config.contains("name")) return config["name"].get<std::string>();
  return dir.filename().string();
}

Bundle read_bundle(const fs::path& dir) {
  Bundle b;
  b.dir = dir;
  if (!fs::is_directory(dir)) throw IntegrityError("bundle: " + dir.string() + " is not a directory");
  json index;
  try {
    index = json::parse(read_file(dir / "bundle.json"));
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("bundle: unreadable index: ") + e.what());
  }
  if (index.value("format", "") != "bfvae-bundle" || index.value("version", 0) != 1)
    throw IntegrityError("bundle: unrecognized index format");
  std::map<std::string, json> parsed;
  for (const auto& [rel, hash] : index.at("files").items()) {
    const auto content = read_file(dir / rel);
    if (exp::fnv1a_hex(content) != hash.get<std::string>()) throw IntegrityError("bundle: checksum mismatch in " + rel);
    if (rel.find("checkpoint.json") != std::string::npos) continue;
    try {
      parsed[rel] = json::parse(content);
    } catch (const json::exception& e) {
      throw IntegrityError("bundle: " + rel + " is not valid JSON");
    }
  }
  auto need = [&](const std::string& rel) -> const json& {
    auto it = parsed.find(rel);
    if (it == parsed.end()) throw IntegrityError("bundle: index lacks " + rel);
    return it->second;
  };
  try {
    b.config = need("config.json");
    b.dataset = need("dataset.json");
    b.metrics = need("metrics.json");
    b.feature_names = b.dataset.at("feature_names").get<std::vector<std::string>>();
    if (parsed.count("aggregate/fvh_lt.json")) b.fvh_lt = association_from_json(parsed["aggregate/fvh_lt.json"]);
    if (parsed.count("aggregate/dbsr_magnitude.json"))
      b.dbsr_magnitude = association_from_json(parsed["aggregate/dbsr_magnitude.json"]);
    if (parsed.count("aggregate/dbsr_signed.json"))
      b.dbsr_signed = association_from_json(parsed["aggregate/dbsr_signed.json"]);
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("bundle: malformed content: ") + e.what());
  } catch (const DimensionError& e) {
    throw IntegrityError(std::string("bundle: malformed matrix: ") + e.what());
  }
  return b;
}

std::string association_csv(const AssociationMatrix& a, std::span<const std::string> names) {
  if (names.size() != a.feature_dim()) throw DimensionError("association_csv: feature name count mismatch");
  std::string out = "latent,kind";
  for (const auto& n : names) out += "," + n;
  out += ",mean_kl,informative\n";
  const auto kind = association_kind_name(a.kind);
  for (std::size_t k = 0; k < a.latent_dim(); ++k) {
    out += std::to_string(k) + "," + kind;
    for (std::size_t j = 0; j < a.feature_dim(); ++j) out += "," + data::format_double(a.values(k, j));
    out += "," + data::format_double(a.mean_kl[k]) + "," + (a.is_informative(k) ? "1" : "0") + "\n";
  }
  return out;
}

std::string heatmap_svg(const AssociationMatrix& a, std::span<const std::string> names, const std::string& title) {
  if (names.size() != a.feature_dim()) throw DimensionError("heatmap_svg: feature name count mismatch");
  const std::size_t K = a.latent_dim(), p = a.feature_dim();
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a.mean_kl[x] > a.mean_kl[y]; });
  double vmax = 0.0;
  for (double v : a.values.data()) vmax = std::max(vmax, std::abs(v));

  const int cell = 28, left = 130, top = 40, bottom = 70;
  const int width = left + static_cast<int>(p) * cell + 20;
  const int height = top + static_cast<int>(K) * cell + bottom;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
    << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  s << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">" << xml_escape(title) << "</text>\n";
  for (std::size_t r = 0; r < K; ++r) {
    const std::size_t k = order[r];
    const int y = top + static_cast<int>(r) * cell;
    s << "<text x=\"" << left - 6 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">z" << k << " (KL "
      << fmt(a.mean_kl[k], 2) << ")</text>\n";
    for (std::size_t j = 0; j < p; ++j) {
      const double v = vmax > 0.0 ? std::abs(a.values(k, j)) / vmax : 0.0;
      const int g = static_cast<int>(std::lround(255.0 * (1.0 - v)));
      char color[8];
      std::snprintf(color, sizeof color, "#%02x%02x%02x", g, g, g);
      s << "<rect x=\"" << left + static_cast<int>(j) * cell << "\" y=\"" << y << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\"" << color << "\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n";
    }
  }
  const int ly = top + static_cast<int>(K) * cell + 8;
  for (std::size_t j = 0; j < p; ++j) {
    const int x = left + static_cast<int>(j) * cell + cell / 2;
    s << "<text x=\"" << x << "\" y=\"" << ly << "\" transform=\"rotate(60 " << x << ' ' << ly << ")\">"
      << xml_escape(names[j]) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

namespace {

std::string cell(const json& m, std::initializer_list<const char*> path, int digits = 3) {
  const json* cur = &m;
  for (const char* k : path) {
    if (!cur->is_object() || !cur->contains(k) || (*cur)[k].is_null()) return "-";
    cur = &(*cur)[k];
  }
  return cur->is_number() ? fmt(cur->get<double>(), digits) : "-";
}

std::string informative_cell(const json& m) {
  if (!m.contains("informative_counts")) return "-";
  std::vector<std::size_t> counts;
  for (const auto& c : m["informative_counts"])
    if (!c.is_null()) counts.push_back(c.get<std::size_t>());
  if (counts.empty()) return "-";
  std::map<std::size_t, std::size_t> hist;
  for (auto c : counts) ++hist[c];
  std::string out;
  for (const auto& [c, n] : hist) {
    if (!out.empty()) out += " ";
    out += std::to_string(c) + "x" + std::to_string(n);
  }
  return out;
}

}  // namespace

std::string summary_table(std::span<const Bundle> bundles) {
  std::vector<std::string> header{"metric"};
  for (const auto& b : bundles) header.push_back(b.label());
  std::vector<std::vector<std::string>> rows;
  auto add = [&](std::string name, auto&& f) {
    std::vector<std::string> row{std::move(name)};
    for (const auto& b : bundles) row.push_back(f(b.metrics));
    rows.push_back(std::move(row));
  };
  add("objective", [](const json& m) { return m.value("variant", std::string("-")); });
  add("LSDI (FVH-LT)", [](const json& m) { return cell(m, {"lsdi", "fvh_lt", "value"}); });
  add("LSDI (DBSR-LS)", [](const json& m) { return cell(m, {"lsdi", "dbsr_ls", "value"}); });
  add("Disentanglement score", [](const json& m) { return cell(m, {"higgins", "mean"}); });
  add("FDR (FVH-LT)", [](const json& m) { return cell(m, {"fdr", "fvh_lt", "fdr"}); });
  add("Recall (FVH-LT)", [](const json& m) { return cell(m, {"fdr", "fvh_lt", "recall"}); });
  add("FDR (DBSR-LS)", [](const json& m) { return cell(m, {"fdr", "dbsr_ls", "fdr"}); });
  add("Informative dims (count x runs)", [](const json& m) { return informative_cell(m); });
  add("Runs aligned", [](const json& m) {
    return m.contains("aligned_runs") ? std::to_string(m["aligned_runs"].size()) + "/" + std::to_string(m.value("runs", 0))
                                      : std::string("-");
  });

  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& r) {
    std::string out;
    for (std::size_t c = 0; c < r.size(); ++c) {
      std::string v = r[c];
      v.resize(width[c], ' ');
      out += (c ? "  " : "") + v;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

std::optional<ReportFormat> parse_format(const std::string& name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "svg") return ReportFormat::Svg;
  if (name == "json") return ReportFormat::Json;
  if (name == "all") return ReportFormat::All;
  return std::nullopt;
}

std::vector<fs::path> render_report(const Bundle& b, ReportFormat format, const fs::path& out_dir) {
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    write_file_atomic(out_dir / name, content);
    written.push_back(out_dir / name);
  };
  const bool csv = format == ReportFormat::Csv || format == ReportFormat::All;
  const bool svg = format == ReportFormat::Svg || format == ReportFormat::All;
  const bool js = format == ReportFormat::Json || format == ReportFormat::All;
  const std::string label = b.label();
  struct Item {
    const std::optional<AssociationMatrix>* m;
    const char* stem;
    const char* title;
  };
  const Item items[] = {{&b.fvh_lt, "fvh_lt", "FVH-LT variance"},
                        {&b.dbsr_magnitude, "dbsr_magnitude", "DBSR-LS |D|"},
                        {&b.dbsr_signed, "dbsr_signed", "DBSR-LS signed D"}};
  for (const auto& it : items) {
    if (!*it.m) continue;
    if (csv) emit(std::string(it.stem) + ".csv", association_csv(**it.m, b.feature_names));
    if (svg && std::string(it.stem) != "dbsr_signed")
      emit(std::string(it.stem) + ".svg", heatmap_svg(**it.m, b.feature_names, label + ": " + it.title));
  }
  if (js) emit("metrics.json", dump(b.metrics));
  const Bundle one[] = {b};
  emit("summary.txt", summary_table(one));
  return written;
}

std::string compare(std::span<const Bundle> bundles) {
  if (bundles.empty()) throw ConfigError("compare: no bundles given");
  const auto& ref = bundles.front();
  const auto fp = ref.dataset.value("fingerprint", std::string{});
  const auto k = ref.metrics.value("latent_dim", std::size_t{0});
  for (const auto& b : bundles.subspan(1)) {
    if (b.dataset.value("fingerprint", std::string{}) != fp)
      throw ConfigError("compare: '" + b.label() + "' was run on dataset " + b.dataset.value("description", "?") +
                        " [" + b.dataset.value("fingerprint", "") + "] but '" + ref.label() + "' on " +
                        ref.dataset.value("description", "?") + " [" + fp + "]; bundles must share the dataset");
    if (b.metrics.value("latent_dim", std::size_t{0}) != k)
      throw ConfigError("compare: '" + b.label() + "' uses K=" + std::to_string(b.metrics.value("latent_dim", 0)) +
                        " but '" + ref.label() + "' uses K=" + std::to_string(k) + "; bundles must share K");
  }
  return summary_table(bundles);
}

}  // namespace bfvae::bundle
