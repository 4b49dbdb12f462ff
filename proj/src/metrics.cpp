#include "bfvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bfvae/error.hpp"

namespace bfvae::metrics {

std::string degenerate_name(Degenerate d) {
  switch (d) {
    case Degenerate::None:
      return "none";
    case Degenerate::AllZero:
      return "all-zero";
    case Degenerate::DominantRow:
      return "dominant-row";
  }
  return "unknown";
}

LsdiReport lsdi(const Tensor2& a) {
  const std::size_t k = a.rows();
  const std::size_t p = a.cols();
  if (k < 2) throw ConfigError("lsdi: needs at least 2 latent rows");
  std::vector<double> row_norm(k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (double v : a.row(i)) row_norm[i] += std::abs(v);

  LsdiReport r;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < p; ++c) d += std::abs(std::abs(a(i, c)) - std::abs(a(j, c)));
      const double s = row_norm[i] + row_norm[j];
      num += d;
      den += s;
      r.pair_contributions.push_back(s > 0.0 ? d / s : 0.0);
    }
  }
  r.ratio = den > 0.0 ? num / den : 0.0;

  if (den == 0.0) {
    r.degenerate = Degenerate::AllZero;
    return r;
  }
  for (std::size_t i = 0; i < k; ++i) {
    bool dominant = true;
    for (std::size_t j = 0; j < k && dominant; ++j) {
      if (j == i) continue;
      for (std::size_t c = 0; c < p; ++c) {
        if (std::abs(a(i, c)) < std::abs(a(j, c))) {
          dominant = false;
          break;
        }
      }
    }
    if (dominant) {
      r.degenerate = Degenerate::DominantRow;
      return r;
    }
  }
  r.value = r.ratio;
  return r;
}

LinearClassifier LinearClassifier::fit(const Tensor2& features, std::span<const std::size_t> labels,
                                       std::size_t classes, std::size_t max_iters, double learning_rate) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (labels.size() != n) throw DimensionError("classifier: label count does not match rows");
  if (n == 0 || classes < 2) throw ConfigError("classifier: need data and at least 2 classes");
  LinearClassifier c;
  c.mean.assign(d, 0.0);
  c.scale.assign(d, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += features(i, j);
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (features(i, j) - m) * (features(i, j) - m);
    v /= static_cast<double>(n);
    c.mean[j] = m;
    c.scale[j] = v > 1e-24 ? std::sqrt(v) : 1.0;
  }
  Eigen::MatrixXd x(n, d + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = (features(i, j) - c.mean[j]) / c.scale[j];
    x(i, d) = 1.0;
  }
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, classes);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= classes) throw ConfigError("classifier: label out of range");
    y(i, labels[i]) = 1.0;
  }
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d + 1, classes);
  for (std::size_t it = 0; it < max_iters; ++it) {
    Eigen::MatrixXd logits = x * w;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double m = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - m).exp().matrix();
      logits.row(i) /= logits.row(i).sum();
    }
    const Eigen::MatrixXd grad = x.transpose() * (logits - y) / static_cast<double>(n);
    w -= learning_rate * grad;
    if (grad.cwiseAbs().maxCoeff() < 1e-7) break;
  }
  c.weights = Tensor2(d + 1, classes);
  for (std::size_t a = 0; a <= d; ++a)
    for (std::size_t b = 0; b < classes; ++b) c.weights(a, b) = w(a, b);
  return c;
}

std::vector<std::size_t> LinearClassifier::predict(const Tensor2& features) const {
  const std::size_t d = mean.size();
  if (features.cols() != d) throw DimensionError("classifier: feature width mismatch");
  std::vector<std::size_t> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    std::size_t best = 0;
    double best_v = -INFINITY;
    for (std::size_t b = 0; b < weights.cols(); ++b) {
      double v = weights(d, b);
      for (std::size_t j = 0; j < d; ++j) v += (features(i, j) - mean[j]) / scale[j] * weights(j, b);
      if (v > best_v) {
        best_v = v;
        best = b;
      }
    }
    out[i] = best;
  }
  return out;
}

ScoreReport higgins_score(const data::FactorSampler& sampler, const Encoder& encoder, const HigginsOptions& options) {
  const std::size_t factors = sampler.truth.num_factors;
  if (factors < 2) throw UnsupportedDatasetError("higgins score: generator must control at least 2 factors");
  if (options.train_votes == 0 || options.train_votes >= options.votes || options.pairs_per_vote == 0)
    throw ConfigError("higgins score: need 0 < train votes < votes and at least one pair per vote");
  Rng rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, factors - 1);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t m = options.pairs_per_vote;

  Tensor2 votes;
  std::vector<std::size_t> labels(options.votes);
  for (std::size_t v = 0; v < options.votes; ++v) {
    const std::size_t f = pick(rng);
    labels[v] = f;
    Tensor2 fac(2 * m, factors);
    for (std::size_t q = 0; q < m; ++q) {
      for (std::size_t c = 0; c < factors; ++c) {
        fac(2 * q, c) = nd(rng);
        fac(2 * q + 1, c) = nd(rng);
      }
      fac(2 * q + 1, f) = fac(2 * q, f);
    }
    const Tensor2 z = encoder(sampler.sample(fac, rng));
    if (z.rows() != 2 * m) throw DimensionError("higgins score: encoder changed the row count");
    if (v == 0) votes = Tensor2(options.votes, z.cols());
    for (std::size_t c = 0; c < z.cols(); ++c) {
      double s = 0.0;
      for (std::size_t q = 0; q < m; ++q) s += std::abs(z(2 * q, c) - z(2 * q + 1, c));
      votes(v, c) = s / static_cast<double>(m);
    }
  }

  const Tensor2 train = votes.slice_rows(0, options.train_votes);
  const Tensor2 test = votes.slice_rows(options.train_votes, options.votes - options.train_votes);
  const auto clf = LinearClassifier::fit(
      train, std::span<const std::size_t>(labels.data(), options.train_votes), factors, options.max_iters,
      options.learning_rate);
  const auto pred = clf.predict(test);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[options.train_votes + i];

  ScoreReport r;
  r.train_votes = options.train_votes;
  r.test_votes = pred.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  r.chance = 1.0 / static_cast<double>(factors);
  return r;
}

ScoreReport higgins_score(const data::FactorSampler& sampler, const vae::VaeModel& model, const HigginsOptions& options) {
  if (model.conditional) throw UnsupportedDatasetError("higgins score: conditional models are not supported");
  Encoder enc = [&model](const Tensor2& x) {
    Rng unused(0);
    return vae::encode(model, x, std::nullopt, true, unused).mu;
  };
  return higgins_score(sampler, enc, options);
}

FdrReport informative_fdr(const AssociationMatrix& a, const data::FactorGroundTruth& truth) {
  a.validate();
  if (truth.num_features() != a.feature_dim()) throw DimensionError("fdr: ground truth and matrix disagree on p");
  FdrReport r;
  r.assignment.assign(a.latent_dim(), std::nullopt);
  const std::size_t factors = truth.num_factors;
  auto score = [&](std::size_t k, std::size_t f) {
    double s = 0.0;
    for (auto j : truth.blocks[f]) s += std::abs(a.values(k, j));
    return s;
  };
  for (auto k : a.informative) {
    std::size_t best = 0;
    double best_v = -1.0;
    for (std::size_t f = 0; f < factors; ++f) {
      const double v = score(k, f);
      if (v > best_v) {
        best_v = v;
        best = f;
      }
    }
    if (factors > 0) r.assignment[k] = best;
  }
  std::vector<bool> covered(factors, false);
  for (auto k : a.informative) {
    if (!r.assignment[k]) {
      ++r.false_positives;
      continue;
    }
    const std::size_t f = *r.assignment[k];
    const double mine = score(k, f);
    bool unique_best = true;
    for (auto other : a.informative) {
      if (other == k || r.assignment[other] != f) continue;
      if (score(other, f) >= mine) unique_best = false;
    }
    if (unique_best) {
      ++r.true_positives;
      covered[f] = true;
    } else {
      ++r.false_positives;
    }
  }
  r.fdr = static_cast<double>(r.false_positives) / static_cast<double>(std::max<std::size_t>(1, r.false_positives + r.true_positives));
  r.recall = factors == 0 ? 0.0
                          : static_cast<double>(std::count(covered.begin(), covered.end(), true)) / static_cast<double>(factors);
  return r;
}

Histogram histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram: need at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  if (values.empty()) return h;
  h.lo = *std::min_element(values.begin(), values.end());
  h.hi = *std::max_element(values.begin(), values.end());
  if (h.hi - h.lo <= 0.0) {
    h.lo -= 0.5;
    h.hi += 0.5;
  }
  const double width = (h.hi - h.lo) / static_cast<double>(bins);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - h.lo) / width);
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

KlSummary kl_summary(const vae::PosteriorStats& stats, std::size_t bins) {
  KlSummary s;
  s.mean_kl = stats.mean_kl();
  const std::size_t n = stats.mu.rows();
  std::vector<double> col(n);
  for (std::size_t k = 0; k < stats.mu.cols(); ++k) {
    for (std::size_t i = 0; i < n; ++i) col[i] = stats.mu(i, k);
    s.mu.push_back(histogram(col, bins));
    for (std::size_t i = 0; i < n; ++i) col[i] = std::exp(stats.log_var(i, k));
    s.variance.push_back(histogram(col, bins));
  }
  return s;
}

nlohmann::json lsdi_to_json(const LsdiReport& r) {
  return {{"value", r.value}, {"degenerate", degenerate_name(r.degenerate)}, {"ratio", r.ratio}};
}

nlohmann::json score_to_json(const ScoreReport& r) {
  return {{"accuracy", r.accuracy}, {"chance", r.chance}, {"train_votes", r.train_votes}, {"test_votes", r.test_votes}};
}

nlohmann::json fdr_to_json(const FdrReport& r) {
  nlohmann::json assign = nlohmann::json::array();
  for (const auto& a : r.assignment) assign.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
  return {{"fdr", r.fdr},
          {"recall", r.recall},
          {"true_positives", r.true_positives},
          {"false_positives", r.false_positives},
          {"assignment", assign}};
}

nlohmann::json kl_summary_to_json(const KlSummary& s) {
  auto hist = [](const std::vector<Histogram>& hs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& h : hs) arr.push_back({{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}});
    return arr;
  };
  return {{"mean_kl", s.mean_kl}, {"mu_histograms", hist(s.mu)}, {"variance_histograms", hist(s.variance)}};
}

}  // namespace bfvae::metrics
