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

#ifndef FLMARKET_FL_H_
#define FLMARKET_FL_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "flmarket/aggregation.h"
#include "flmarket/extended_real.h"
#include "flmarket/ldp.h"
#include "flmarket/market.h"
#include "flmarket/murba.h"

namespace flmarket::fl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Partition {
  Matrix features;  // rows x d
  Vector labels;    // 0/1
};

// Equal-size owner partitions plus a held-out evaluation split. Loaders
// append a constant 1 column, so the last weight acts as the intercept.
struct Dataset {
  std::vector<Partition> owners;
  Partition test;

  int num_owners() const { return static_cast<int>(owners.size()); }
  Eigen::Index dim() const { return test.features.cols(); }
  // All owner rows stacked, in owner order.
  Partition PooledTraining() const;
  void Validate() const;
};

// Shuffles (seeded), holds out floor(test_fraction * rows) for evaluation,
// truncates the rest to a multiple of n_owners and splits it evenly.
// Rows of `features` must already include any intercept column.
Dataset PartitionRows(const Matrix& features, const Vector& labels, int n_owners,
                      uint64_t seed, double test_fraction);

// Two unit-variance Gaussian blobs in `dim` dimensions centred at
// +-(separation / 2) on every coordinate, balanced labels.
Dataset SyntheticBlobs(int rows, int dim, double separation, int n_owners, uint64_t seed,
                       double test_fraction = 0.2);

// CSV with a header row, comma-delimited. The label column may hold 0/1 or
// exactly two distinct strings (mapped in sorted order to 0 and 1).
// Numeric columns are min-max scaled to [0, 1] (constant columns become 0),
// other columns are one-hot encoded. Throws ParseError naming the line on
// malformed rows.
Dataset LoadCsvDataset(const std::string& path, std::string_view label_column, int n_owners,
                       uint64_t seed, double test_fraction = 0.2);
Dataset ParseCsvDataset(std::istream& in, std::string_view label_column, int n_owners,
                        uint64_t seed, double test_fraction = 0.2);

double Sigmoid(double z);

// Mean log-loss over the rows.
double LogisticLoss(const Vector& w, const Matrix& x, const Vector& y);

// Unclipped mean log-loss gradient, mean_j (sigmoid(w.x_j) - y_j) x_j.
Vector LogisticLossGradient(const Vector& w, const Matrix& x, const Vector& y);

// Local gradient an owner uploads: the mean gradient clipped to L.
GradientVector LogisticGradient(const Vector& w, const Matrix& x, const Vector& y,
                                ClipBound bound);

// Fraction of rows where (sigmoid(w.x) >= 0.5) matches the label.
double Accuracy(const Vector& w, const Matrix& x, const Vector& y);

enum class AuctionKind { kAllIn, kMurba };
std::string_view AuctionName(AuctionKind a);
AuctionKind ParseAuction(std::string_view name);

struct SimConfig {
  int rounds = 10;
  double learning_rate = 0.01;
  double clip = 1.0;
  AuctionKind auction = AuctionKind::kAllIn;
  Aggregator aggregator = Aggregator::kVarOpt;
  MarketConfig market;
  // Required when auction == kMurba.
  const murba::MbrModel* mbr_model = nullptr;
  // Every owner wins, no perturbation, uniform weights.
  bool noiseless = false;
  uint64_t seed = 0;
  std::string run_id = "run";

  void Validate() const;
};

struct RoundResult {
  // Empty when nobody won; the model is then left unchanged.
  std::optional<GradientVector> global_gradient;
  AuctionOutcome outcome;
  std::optional<AggregationWeights> weights;
  ExtendedReal err_bound = kPositiveInfinity;
};

// Seed of the Laplace noise stream for owner `owner` in round `round`.
uint64_t PerturbationSeed(uint64_t seed, int round, size_t owner);

// Auction, clip + perturb for winners, weights, weighted aggregate.
// Perturbation noise for owner i in round r is drawn from a stream derived
// from (seed, r, i), so runs that differ only in the aggregator see the
// same noise.
RoundResult RunTradingRound(const Vector& weights, const Dataset& data,
                            const BidProfile& profile, const SimConfig& cfg, int round);

struct RoundMetrics {
  int round = 0;
  ExtendedReal err_bound;
  double total_payment = 0;
  double accuracy = 0;
  bool skipped = false;
};

struct SimResult {
  std::vector<RoundMetrics> rounds;
  double initial_accuracy = 0;
  double final_accuracy = 0;
  Vector weights;
  BidProfile profile;
};

// The owners' bids are drawn once per run from cfg.market with a stream
// derived from cfg.seed and stay fixed over the rounds.
SimResult RunFl(const SimConfig& cfg, const Dataset& data);

std::string MetricsHeader();
// One CSV line per round.
std::string MetricsRows(const SimConfig& cfg, const SimResult& result);

}  // namespace flmarket::fl

#endif  // FLMARKET_FL_H_
