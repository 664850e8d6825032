//
// Copyright 2026 The flmarket Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "flmarket/fl.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "flmarket/allin.h"
#include "flmarket/errors.h"
#include "flmarket/rng.h"

namespace flmarket::fl {
namespace {

// Fisher-Yates with our own RNG so the permutation is library independent.
std::vector<Eigen::Index> Permutation(Eigen::Index n, uint64_t seed) {
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(seed);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng.UniformIndex(static_cast<uint64_t>(i + 1)));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

std::vector<std::string> SplitCsvLine(const std::string& line, size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::optional<double> ParseNumber(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

Partition Dataset::PooledTraining() const {
  Eigen::Index rows = 0;
  for (const Partition& p : owners) rows += p.features.rows();
  Partition pooled{Matrix(rows, dim()), Vector(rows)};
  Eigen::Index r = 0;
  for (const Partition& p : owners) {
    pooled.features.middleRows(r, p.features.rows()) = p.features;
    pooled.labels.segment(r, p.labels.size()) = p.labels;
    r += p.features.rows();
  }
  return pooled;
}

void Dataset::Validate() const {
  if (owners.empty()) throw DomainError("dataset has no owners");
  const Eigen::Index rows = owners.front().features.rows();
  for (const Partition& p : owners) {
    if (p.features.rows() != rows || p.labels.size() != rows) {
      throw ShapeError("owner partitions must have equal sizes");
    }
    if (p.features.cols() != dim()) throw ShapeError("partition dimensions differ");
  }
}

Dataset PartitionRows(const Matrix& features, const Vector& labels, int n_owners, uint64_t seed,
                      double test_fraction) {
  if (n_owners < 1) throw DomainError("need at least one owner");
  if (!(test_fraction >= 0 && test_fraction < 1)) throw DomainError("test fraction must be in [0, 1)");
  if (features.rows() != labels.size()) throw ShapeError("one label per row is required");
  const auto perm = Permutation(features.rows(), seed);
  const auto test_rows =
      static_cast<Eigen::Index>(std::floor(test_fraction * static_cast<double>(features.rows())));
  const Eigen::Index per_owner = (features.rows() - test_rows) / n_owners;
  if (per_owner < 1) throw DomainError("not enough rows for one row per owner");

  Dataset data;
  data.test = Partition{Matrix(test_rows, features.cols()), Vector(test_rows)};
  for (Eigen::Index r = 0; r < test_rows; ++r) {
    data.test.features.row(r) = features.row(perm[r]);
    data.test.labels[r] = labels[perm[r]];
  }
  Eigen::Index next = test_rows;
  for (int o = 0; o < n_owners; ++o) {
    Partition p{Matrix(per_owner, features.cols()), Vector(per_owner)};
    for (Eigen::Index r = 0; r < per_owner; ++r, ++next) {
      p.features.row(r) = features.row(perm[next]);
      p.labels[r] = labels[perm[next]];
    }
    data.owners.push_back(std::move(p));
  }
  return data;
}

Dataset SyntheticBlobs(int rows, int dim, double separation, int n_owners, uint64_t seed,
                       double test_fraction) {
  if (rows < 1 || dim < 1) throw DomainError("synthetic data needs rows >= 1 and dim >= 1");
  Rng rng(DeriveSeed(seed, {0xb10b}));
  Matrix x(rows, dim + 1);
  Vector y(rows);
  for (int r = 0; r < rows; ++r) {
    y[r] = static_cast<double>(r % 2);
    const double centre = (y[r] > 0 ? 0.5 : -0.5) * separation;
    for (int j = 0; j < dim; ++j) x(r, j) = centre + rng.Gaussian();
    x(r, dim) = 1.0;
  }
  return PartitionRows(x, y, n_owners, DeriveSeed(seed, {0x5917}), test_fraction);
}

Dataset ParseCsvDataset(std::istream& in, std::string_view label_column, int n_owners,
                        uint64_t seed, double test_fraction) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: missing CSV header");
  const std::vector<std::string> header = SplitCsvLine(line, 1);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw ParseError("label column '" + std::string(label_column) + "' not in header");
  }
  const size_t label_idx = static_cast<size_t>(label_it - header.begin());

  std::vector<std::vector<std::string>> rows;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = SplitCsvLine(line, line_no);
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    if (fields[label_idx].empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty label");
    }
    rows.push_back(std::move(fields));
  }
  if (rows.empty()) throw ParseError("CSV has no data rows");

  // Labels.
  Vector labels(static_cast<Eigen::Index>(rows.size()));
  std::set<std::string> distinct;
  for (const auto& r : rows) distinct.insert(r[label_idx]);
  bool numeric_labels = true;
  for (const auto& v : distinct) {
    const auto x = ParseNumber(v);
    numeric_labels = numeric_labels && x && (*x == 0.0 || *x == 1.0);
  }
  if (!numeric_labels && distinct.size() != 2) {
    throw ParseError("label column must be 0/1 or hold exactly two distinct values");
  }
  for (size_t r = 0; r < rows.size(); ++r) {
    const std::string& v = rows[r][label_idx];
    labels[static_cast<Eigen::Index>(r)] =
        numeric_labels ? *ParseNumber(v) : (v == *distinct.rbegin() ? 1.0 : 0.0);
  }

  // Features: numeric columns are min-max scaled, the rest one-hot encoded.
  std::vector<std::vector<double>> columns;
  for (size_t c = 0; c < header.size(); ++c) {
    if (c == label_idx) continue;
    bool numeric = true;
    for (const auto& r : rows) numeric = numeric && ParseNumber(r[c]).has_value();
    if (numeric) {
      std::vector<double> col(rows.size());
      for (size_t r = 0; r < rows.size(); ++r) col[r] = *ParseNumber(rows[r][c]);
      const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
      const double min = *lo;
      const double span = *hi - *lo;
      for (double& v : col) v = span > 0 ? (v - min) / span : 0.0;
      columns.push_back(std::move(col));
    } else {
      std::map<std::string, size_t> levels;
      for (const auto& r : rows) levels.emplace(r[c], 0);
      size_t k = 0;
      for (auto& [name, index] : levels) index = k++;
      std::vector<std::vector<double>> onehot(levels.size(), std::vector<double>(rows.size(), 0.0));
      for (size_t r = 0; r < rows.size(); ++r) onehot[levels.at(rows[r][c])][r] = 1.0;
      for (auto& col : onehot) columns.push_back(std::move(col));
    }
  }

  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()) + 1);
  for (size_t c = 0; c < columns.size(); ++c) {
    for (size_t r = 0; r < rows.size(); ++r) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = columns[c][r];
    }
  }
  x.col(x.cols() - 1).setOnes();
  return PartitionRows(x, labels, n_owners, seed, test_fraction);
}

Dataset LoadCsvDataset(const std::string& path, std::string_view label_column, int n_owners,
                       uint64_t seed, double test_fraction) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset '" + path + "'");
  return ParseCsvDataset(in, label_column, n_owners, seed, test_fraction);
}

double Sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double LogisticLoss(const Vector& w, const Matrix& x, const Vector& y) {
  if (x.rows() == 0) throw DomainError("empty partition");
  if (x.cols() != w.size() || x.rows() != y.size()) throw ShapeError("logistic shapes differ");
  const Vector z = x * w;
  double loss = 0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    // log(1 + e^z) - y z, computed stably.
    const double softplus = z[j] > 0 ? z[j] + std::log1p(std::exp(-z[j])) : std::log1p(std::exp(z[j]));
    loss += softplus - y[j] * z[j];
  }
  return loss / static_cast<double>(z.size());
}

Vector LogisticLossGradient(const Vector& w, const Matrix& x, const Vector& y) {
  if (x.rows() == 0) throw DomainError("empty partition");
  if (x.cols() != w.size() || x.rows() != y.size()) throw ShapeError("logistic shapes differ");
  Vector residual = x * w;
  for (Eigen::Index j = 0; j < residual.size(); ++j) residual[j] = Sigmoid(residual[j]) - y[j];
  return x.transpose() * residual / static_cast<double>(x.rows());
}

GradientVector LogisticGradient(const Vector& w, const Matrix& x, const Vector& y,
                                ClipBound bound) {
  return ClipGradient(LogisticLossGradient(w, x, y), bound);
}

double Accuracy(const Vector& w, const Matrix& x, const Vector& y) {
  if (x.rows() == 0) throw DomainError("accuracy on empty data");
  if (x.cols() != w.size() || x.rows() != y.size()) throw ShapeError("accuracy shapes differ");
  const Vector z = x * w;
  Eigen::Index correct = 0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double predicted = Sigmoid(z[j]) >= 0.5 ? 1.0 : 0.0;
    correct += predicted == y[j] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(z.size());
}

std::string_view AuctionName(AuctionKind a) { return a == AuctionKind::kAllIn ? "allin" : "murba"; }

AuctionKind ParseAuction(std::string_view name) {
  if (name == "allin") return AuctionKind::kAllIn;
  if (name == "murba") return AuctionKind::kMurba;
  throw ParseError("auction must be 'allin' or 'murba', got '" + std::string(name) + "'");
}

void SimConfig::Validate() const {
  if (rounds < 1) throw DomainError("need at least one round");
  if (!(learning_rate >= 0)) throw DomainError("learning rate must be non-negative");
  ClipBound{clip};
  market.Validate();
  if (auction == AuctionKind::kMurba) {
    if (mbr_model == nullptr) throw DomainError("MURBA needs a trained MBR model");
    if (mbr_model->n() != market.n) {
      throw DomainError("MBR model was trained for n = " + std::to_string(mbr_model->n()) +
                        ", market has n = " + std::to_string(market.n));
    }
  }
}

uint64_t PerturbationSeed(uint64_t seed, int round, size_t owner) {
  return DeriveSeed(seed, {0x401e, static_cast<uint64_t>(round), owner});
}

RoundResult RunTradingRound(const Vector& weights, const Dataset& data, const BidProfile& profile,
                            const SimConfig& cfg, int round) {
  const ClipBound bound(cfg.clip);
  const size_t n = profile.size();
  if (static_cast<size_t>(data.num_owners()) != n) {
    throw ShapeError("dataset has a different number of owners than the profile");
  }
  RoundResult result;
  if (cfg.noiseless) {
    result.outcome = AuctionOutcome{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    for (size_t i = 0; i < n; ++i) result.outcome.epsilons[i] = profile[i].privacy_budget;
    result.weights = AggregationWeights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
    std::vector<GradientVector> grads;
    for (size_t i = 0; i < n; ++i) {
      grads.push_back(LogisticGradient(weights, data.owners[i].features, data.owners[i].labels, bound));
    }
    result.global_gradient = Aggregate(*result.weights, grads);
    result.err_bound = 0.0;
    return result;
  }

  switch (cfg.auction) {
    case AuctionKind::kAllIn:
      result.outcome = AllIn(ToSingleMinded(profile), cfg.market.budget);
      break;
    case AuctionKind::kMurba:
      result.outcome = MurbaAuction(*cfg.mbr_model, profile, cfg.market.budget);
      break;
  }
  if (result.outcome.empty_winner_set()) return result;

  std::vector<GradientVector> noisy(n, GradientVector::Zero(data.dim()));
  for (size_t i = 0; i < n; ++i) {
    const double eps = result.outcome.epsilons[i];
    if (eps <= 0) continue;
    Rng noise(PerturbationSeed(cfg.seed, round, i));
    const GradientVector g =
        LogisticGradient(weights, data.owners[i].features, data.owners[i].labels, bound);
    noisy[i] = LaplacePerturb(g, eps, bound, noise);
  }
  result.weights = ComputeWeights(cfg.aggregator, result.outcome.epsilons);
  result.global_gradient = Aggregate(*result.weights, noisy);
  result.err_bound = ErrBound(*result.weights, result.outcome.epsilons, bound);
  return result;
}

SimResult RunFl(const SimConfig& cfg, const Dataset& data) {
  cfg.Validate();
  data.Validate();
  if (data.num_owners() != cfg.market.n) {
    throw ShapeError("dataset was partitioned for a different number of owners");
  }
  Rng bid_rng(DeriveSeed(cfg.seed, {0xb1d5}));
  SimResult result{{}, 0, 0, Vector::Zero(data.dim()), GenerateBidProfile(cfg.market, bid_rng)};
  result.initial_accuracy = Accuracy(result.weights, data.test.features, data.test.labels);
  for (int r = 0; r < cfg.rounds; ++r) {
    const RoundResult round = RunTradingRound(result.weights, data, result.profile, cfg, r);
    RoundMetrics m;
    m.round = r;
    m.err_bound = round.err_bound;
    m.total_payment = round.outcome.TotalPayment();
    m.skipped = !round.global_gradient.has_value();
    if (round.global_gradient) result.weights -= cfg.learning_rate * *round.global_gradient;
    m.accuracy = Accuracy(result.weights, data.test.features, data.test.labels);
    result.rounds.push_back(m);
  }
  result.final_accuracy = result.rounds.back().accuracy;
  return result;
}

std::string MetricsHeader() {
  return "run_id,round,budget,mechanism,aggregator,err_bound,total_payment,accuracy,seed";
}

std::string MetricsRows(const SimConfig& cfg, const SimResult& result) {
  std::ostringstream os;
  os.precision(17);
  for (const RoundMetrics& m : result.rounds) {
    os << cfg.run_id << ',' << m.round << ',' << cfg.market.budget << ','
       << (cfg.noiseless ? "noiseless" : AuctionName(cfg.auction)) << ','
       << AggregatorName(cfg.aggregator) << ',' << m.err_bound.ToString() << ','
       << m.total_payment << ',' << m.accuracy << ',' << cfg.seed << '\n';
  }
  return os.str();
}

}  // namespace flmarket::fl
