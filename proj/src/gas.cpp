#include "bfvae/gas.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bfvae/error.hpp"
#include "bfvae/rng.hpp"

namespace bfvae::gas {

InformativeSplit split_informative(std::span<const double> mean_kl) {
  const std::size_t k = mean_kl.size();
  if (k < 2) throw ConfigError("split_informative: need at least 2 latent dims");
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean_kl[a] < mean_kl[b]; });

  InformativeSplit out;
  const double lo = mean_kl[order.front()];
  const double hi = mean_kl[order.back()];
  if (hi - lo <= 1e-6) {
    out.low_centroid = out.high_centroid = std::accumulate(mean_kl.begin(), mean_kl.end(), 0.0) / static_cast<double>(k);
    return out;
  }

  std::vector<double> sorted(k);
  for (std::size_t i = 0; i < k; ++i) sorted[i] = mean_kl[order[i]];
  auto cost = [&](std::size_t b, std::size_t e, double& centroid) {
    const double m = std::accumulate(sorted.begin() + b, sorted.begin() + e, 0.0) / static_cast<double>(e - b);
    double c = 0.0;
    for (std::size_t i = b; i < e; ++i) c += (sorted[i] - m) * (sorted[i] - m);
    centroid = m;
    return c;
  };
  double best = INFINITY;
  std::size_t best_split = 0;
  for (std::size_t s = 1; s < k; ++s) {
    if (!(sorted[s - 1] < sorted[s])) continue;  // never split equal values
    double cl = 0.0, ch = 0.0;
    const double c = cost(0, s, cl) + cost(s, k, ch);
    if (c < best) {
      best = c;
      best_split = s;
      out.low_centroid = cl;
      out.high_centroid = ch;
    }
  }
  for (std::size_t i = best_split; i < k; ++i) out.informative.push_back(order[i]);
  std::sort(out.informative.begin(), out.informative.end());
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("pearson: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

namespace {

void check_shapes(std::span<const AssociationMatrix> runs) {
  if (runs.empty()) throw ConfigError("alignment: at least one run is required");
  for (const auto& r : runs) {
    r.validate();
    if (r.values.rows() != runs.front().values.rows() || r.values.cols() != runs.front().values.cols())
      throw DimensionError("alignment: runs have inconsistent shapes");
  }
}

}  // namespace

AlignmentMapping greedy_align(std::span<const AssociationMatrix> runs, double rho, std::uint64_t seed) {
  check_shapes(runs);
  const std::size_t k = runs.front().latent_dim();
  AlignmentMapping m;
  for (const auto& r : runs) m.splits.push_back(k >= 2 ? split_informative(r.mean_kl) : InformativeSplit{});
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (m.splits[r].informative.size() > m.splits[m.reference_run].informative.size()) m.reference_run = r;

  const std::size_t ref = m.reference_run;
  const auto& ref_inf = m.splits[ref].informative;
  m.maps.resize(runs.size());
  m.matches.resize(runs.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    auto& map = m.maps[r];
    auto& matches = m.matches[r];
    if (r == ref) {
      map.resize(k);
      std::iota(map.begin(), map.end(), 0);
      for (std::size_t j = 0; j < k; ++j) matches.push_back({j, j, MatchKind::Identity, 1.0});
      continue;
    }
    const auto& run_inf = m.splits[r].informative;
    std::vector<std::vector<double>> corr(ref_inf.size(), std::vector<double>(run_inf.size()));
    for (std::size_t a = 0; a < ref_inf.size(); ++a)
      for (std::size_t b = 0; b < run_inf.size(); ++b)
        corr[a][b] = pearson(runs[ref].values.row(ref_inf[a]), runs[r].values.row(run_inf[b]));

    map.assign(k, k);
    std::vector<bool> ref_used(k, false);
    std::vector<bool> row_done(ref_inf.size(), false), col_done(run_inf.size(), false);
    while (true) {
      double best = rho;
      std::size_t ba = 0, bb = 0;
      bool found = false;
      for (std::size_t a = 0; a < ref_inf.size(); ++a) {
        if (row_done[a]) continue;
        for (std::size_t b = 0; b < run_inf.size(); ++b) {
          if (col_done[b]) continue;
          if (corr[a][b] > best) {
            best = corr[a][b];
            ba = a;
            bb = b;
            found = true;
          }
        }
      }
      if (!found) break;
      // Rows come in reference index order, which equals lexicographic (i, j).
      row_done[ba] = col_done[bb] = true;
      map[run_inf[bb]] = ref_inf[ba];
      ref_used[ref_inf[ba]] = true;
      matches.push_back({run_inf[bb], ref_inf[ba], MatchKind::Correlation, best});
    }

    std::vector<std::size_t> free_run, free_ref;
    for (std::size_t j = 0; j < k; ++j) {
      if (map[j] == k) free_run.push_back(j);
      if (!ref_used[j]) free_ref.push_back(j);
    }
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
    std::shuffle(free_run.begin(), free_run.end(), rng);
    for (std::size_t t = 0; t < free_run.size(); ++t) {
      map[free_run[t]] = free_ref[t];
      matches.push_back({free_run[t], free_ref[t], MatchKind::Random, 0.0});
    }
    std::sort(matches.begin(), matches.end(), [](const MatchEntry& x, const MatchEntry& y) { return x.from < y.from; });
  }
  return m;
}

std::vector<std::size_t> invert_mapping(std::span<const std::size_t> map) {
  std::vector<std::size_t> inv(map.size(), map.size());
  for (std::size_t j = 0; j < map.size(); ++j) {
    if (map[j] >= map.size() || inv[map[j]] != map.size()) throw ConfigError("mapping is not a bijection");
    inv[map[j]] = j;
  }
  return inv;
}

AssociationMatrix apply_mapping(const AssociationMatrix& a, std::span<const std::size_t> map) {
  a.validate();
  if (map.size() != a.latent_dim()) throw ConfigError("mapping length does not match latent dim");
  invert_mapping(map);  // validates bijectivity
  AssociationMatrix out;
  out.kind = a.kind;
  out.values = Tensor2(a.values.rows(), a.values.cols());
  out.mean_kl.assign(a.mean_kl.size(), 0.0);
  for (std::size_t j = 0; j < map.size(); ++j) {
    std::copy(a.values.row(j).begin(), a.values.row(j).end(), out.values.row(map[j]).begin());
    out.mean_kl[map[j]] = a.mean_kl[j];
  }
  for (auto j : a.informative) out.informative.push_back(map[j]);
  std::sort(out.informative.begin(), out.informative.end());
  return out;
}

AssociationMatrix aggregate_aligned(std::span<const AssociationMatrix> runs, const AlignmentMapping& mapping) {
  check_shapes(runs);
  if (mapping.maps.size() != runs.size()) throw ConfigError("aggregate: mapping does not cover every run");
  const std::size_t k = runs.front().latent_dim();
  const std::size_t p = runs.front().feature_dim();
  std::vector<AssociationMatrix> aligned;
  for (std::size_t r = 0; r < runs.size(); ++r) aligned.push_back(apply_mapping(runs[r], mapping.maps[r]));

  AssociationMatrix out;
  out.kind = runs.front().kind;
  out.values = Tensor2(k, p);
  out.mean_kl.assign(k, 0.0);
  const double inv_r = 1.0 / static_cast<double>(runs.size());
  std::vector<double> buf(runs.size());
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t r = 0; r < runs.size(); ++r) buf[r] = aligned[r].values(a, j);
      out.values(a, j) = pairwise_sum(buf) * inv_r;
    }
    for (std::size_t r = 0; r < runs.size(); ++r) buf[r] = aligned[r].mean_kl[a];
    out.mean_kl[a] = pairwise_sum(buf) * inv_r;
  }
  if (runs.size() == 1) {
    out.informative = aligned.front().informative;
  } else if (k >= 2) {
    out.informative = split_informative(out.mean_kl).informative;
  }
  return out;
}

namespace {

std::string kind_name(MatchKind k) {
  switch (k) {
    case MatchKind::Identity:
      return "identity";
    case MatchKind::Correlation:
      return "correlation";
    case MatchKind::Random:
      return "random";
  }
  return "unknown";
}

MatchKind parse_kind(const std::string& s) {
  if (s == "identity") return MatchKind::Identity;
  if (s == "correlation") return MatchKind::Correlation;
  if (s == "random") return MatchKind::Random;
  throw IntegrityError("mapping: unknown match kind '" + s + "'");
}

}  // namespace

nlohmann::json mapping_to_json(const AlignmentMapping& m) {
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t r = 0; r < m.maps.size(); ++r) {
    nlohmann::json matches = nlohmann::json::array();
    for (const auto& e : m.matches[r]) {
      nlohmann::json je = {{"from", e.from}, {"to", e.to}, {"kind", kind_name(e.kind)}};
      if (e.kind == MatchKind::Correlation) je["correlation"] = e.correlation;
      matches.push_back(je);
    }
    runs.push_back({{"run", r},
                    {"map", m.maps[r]},
                    {"informative", m.splits[r].informative},
                    {"kl_centroids", {m.splits[r].low_centroid, m.splits[r].high_centroid}},
                    {"matches", matches}});
  }
  return {{"reference_run", m.reference_run}, {"runs", runs}};
}

AlignmentMapping mapping_from_json(const nlohmann::json& j) {
  AlignmentMapping m;
  m.reference_run = j.at("reference_run").get<std::size_t>();
  for (const auto& jr : j.at("runs")) {
    m.maps.push_back(jr.at("map").get<std::vector<std::size_t>>());
    InformativeSplit s;
    s.informative = jr.at("informative").get<std::vector<std::size_t>>();
    const auto c = jr.at("kl_centroids").get<std::vector<double>>();
    if (c.size() != 2) throw IntegrityError("mapping: kl_centroids must have two entries");
    s.low_centroid = c[0];
    s.high_centroid = c[1];
    m.splits.push_back(std::move(s));
    std::vector<MatchEntry> matches;
    for (const auto& je : jr.at("matches"))
      matches.push_back({je.at("from").get<std::size_t>(), je.at("to").get<std::size_t>(),
                         parse_kind(je.at("kind").get<std::string>()), je.value("correlation", 0.0)});
    m.matches.push_back(std::move(matches));
    invert_mapping(m.maps.back());
  }
  if (m.reference_run >= m.maps.size()) throw IntegrityError("mapping: reference run out of range");
  return m;
}

}  // namespace bfvae::gas
