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

#ifndef FLMARKET_MURBA_H_
#define FLMARKET_MURBA_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flmarket/aggregation.h"
#include "flmarket/market.h"
#include "flmarket/nn.h"

namespace flmarket::murba {

using nn::Matrix;
using nn::Vector;

// Sub-bid m of an owner: the privacy parameter budget/m offered at the
// reported valuation of that parameter.
struct SubBid {
  double valuation;
  double privacy;
};

// Splits every reported bid into M sub-bids (m = 1..M).
std::vector<std::vector<SubBid>> TransformBids(const BidProfile& profile, int num_sub_bids);

// Divisors mapping raw inputs into the network's range. Valuations,
// privacy budgets and the financial budget are each divided by the largest
// value the market can produce.
struct InputScaling {
  double valuation = 1.0;
  double privacy_budget = 1.0;
  double financial_budget = 1.0;
};

// Raw network input for one profile, laid out as
//   [v_1(e_1/1) .. v_1(e_1/M), e_1, ..., v_n(e_n/1) .. v_n(e_n/M), e_n, B].
class MbrInput {
 public:
  MbrInput(int n, int num_sub_bids);
  static MbrInput FromProfile(const BidProfile& profile, double budget, int num_sub_bids);

  int n() const { return n_; }
  int num_sub_bids() const { return m_; }
  Eigen::Index dim() const { return raw_.size(); }

  double& valuation(int owner, int m) { return raw_[owner * (m_ + 1) + (m - 1)]; }
  double& privacy_budget(int owner) { return raw_[owner * (m_ + 1) + m_]; }
  double& financial_budget() { return raw_[raw_.size() - 1]; }
  const Vector& raw() const { return raw_; }
  Vector& raw() { return raw_; }

  // Offsets into the flat layout.
  static Eigen::Index SliceOffset(int owner, int num_sub_bids) {
    return static_cast<Eigen::Index>(owner) * (num_sub_bids + 1);
  }

 private:
  int n_;
  int m_;
  Vector raw_;
};

struct MbrArchitecture {
  int n = 5;
  int num_sub_bids = 5;
  std::vector<int> hidden = {128, 128};
};

// Allocation network: n (M + 1) outputs, softmax per owner over a dummy
// "lose" slot followed by the M sub-bid slots. Payment network: n outputs
// with a softmax over owners; payment_i = fraction_i * B.
class MbrModel {
 public:
  MbrModel(MbrArchitecture arch, InputScaling scaling, Rng& init_rng);
  MbrModel(MbrArchitecture arch, InputScaling scaling, nn::DenseNetwork allocation,
           nn::DenseNetwork payment);

  int n() const { return arch_.n; }
  int num_sub_bids() const { return arch_.num_sub_bids; }
  Eigen::Index input_dim() const { return static_cast<Eigen::Index>(n()) * (num_sub_bids() + 1) + 1; }
  const MbrArchitecture& architecture() const { return arch_; }
  const InputScaling& scaling() const { return scaling_; }

  nn::DenseNetwork& allocation() { return allocation_; }
  const nn::DenseNetwork& allocation() const { return allocation_; }
  nn::DenseNetwork& payment() { return payment_; }
  const nn::DenseNetwork& payment() const { return payment_; }

  // Column-wise divisors applied to raw inputs.
  const Vector& input_divisors() const { return divisors_; }

  friend bool operator==(const MbrModel& a, const MbrModel& b);

 private:
  void BuildDivisors();

  MbrArchitecture arch_;
  InputScaling scaling_;
  nn::DenseNetwork allocation_;
  nn::DenseNetwork payment_;
  Vector divisors_;
};

// Largest raw values a market can produce, used as input divisors.
InputScaling ScalingForMarket(const MarketConfig& market, double max_financial_budget);

struct MbrOutput {
  // z(i, m-1): probability that owner i wins with sub-bid m. Rows sum to at
  // most one; the dummy slot holds the rest.
  Matrix allocation;
  Vector payments;
};

MbrOutput MbrForward(const MbrModel& model, const MbrInput& input);

// Runs the networks on the transformed bids. eps_i = sum_m z_im e_i / m.
AuctionOutcome MurbaAuction(const MbrModel& model, const BidProfile& profile, double budget);

// K true profiles with their financial budgets.
struct ProfileBatch {
  std::vector<BidProfile> profiles;
  std::vector<double> budgets;

  size_t size() const { return profiles.size(); }
};

struct BestResponseParams {
  int iterations = 25;  // R
  double step = 0.1;    // gamma
};

// Test hook: shifts every payment by a constant after the forward pass.
struct EvalOptions {
  double payment_shift = 0.0;
};

// Projected gradient ascent on owner i's utility over its (M + 1) input
// slice, starting from the truthful slice. Valuations are projected onto the
// non-negative, non-increasing-in-m cone and the budget onto [0, true
// budget]. Returns the best iterate found (raw units).
Vector BestResponse(const MbrModel& model, const BidProfile& profile, double budget,
                    int owner, const BestResponseParams& params,
                    const EvalOptions& options = {});

// Best responses for every (profile, owner) pair. Row k * n + i holds
// profile k's truthful input with owner i's slice replaced.
Matrix FindMisreports(const MbrModel& model, const ProfileBatch& batch,
                      const BestResponseParams& params, const EvalOptions& options = {});

// Per-owner mean of max(0, u_i(misreport) - u_i(truth)).
std::vector<double> EmpiricalRegret(const MbrModel& model, const ProfileBatch& batch,
                                    const BestResponseParams& params,
                                    const EvalOptions& options = {});

// Per-owner mean of max(0, -u_i(truth)).
std::vector<double> EmpiricalIr(const MbrModel& model, const ProfileBatch& batch,
                                const EvalOptions& options = {});

// Allocations below this in every coordinate score kErrCap instead of +inf.
inline constexpr double kErrEpsFloor = 1e-6;
double ErrCap(ClipBound bound);

// Mean over profiles of ErrBound(VarOpt(eps), eps, L) at the fractional
// allocation.
double EmpiricalErr(const MbrModel& model, const ProfileBatch& batch, ClipBound bound);

struct TrainState {
  std::vector<double> phi_rgv;
  std::vector<double> phi_irv;
  double rho_rgv = 1.0;
  double rho_irv = 4.0;
  int epoch = 0;
  long iteration = 0;
};

struct MbrGradients {
  nn::NetworkGradients allocation;
  nn::NetworkGradients payment;
};

struct LagrangianTerms {
  double value = 0;
  double err = 0;
  std::vector<double> regret;
  std::vector<double> ir;
};

// Augmented Lagrangian
//   C = ERR + sum phi_rgv,i rgv_i + rho_rgv/2 (sum rgv)^2
//           + sum phi_irv,i irv_i + rho_irv/2 (sum irv)^2
// on one batch with misreports held fixed. Fills `grads` with dC/dtheta
// when non-null.
LagrangianTerms EvaluateLagrangian(const MbrModel& model, const ProfileBatch& batch,
                                   const Matrix& misreports, const TrainState& state,
                                   ClipBound bound, MbrGradients* grads = nullptr);

struct TrainConfig {
  MbrArchitecture arch;
  MarketConfig market;  // n is taken from arch; budget is ignored
  double budget_low = 1.0;
  double budget_high = 20.0;
  int epochs = 100;
  int num_batches = 100;  // T
  int batch_size = 1000;  // K
  BestResponseParams best_response;
  int multiplier_period = 10;  // Q
  double learning_rate = 0.001;  // psi
  double phi_init = 1.0;
  double rho_rgv_init = 1.0;
  double rho_irv_init = 4.0;
  double rho_rgv_increment = 1.0;
  double rho_irv_increment = 3.0;
  int rho_period_epochs = 2;
  double clip = 1.0;
  uint64_t seed = 0;

  void Validate() const;
};

struct EpochLog {
  int epoch = 0;
  double lagrangian = 0;
  double err_hat = 0;
  double regret_mean = 0;
  double regret_max = 0;
  double ir_mean = 0;
  double ir_max = 0;
};

// CSV header and row for the training log.
std::string EpochLogHeader();
std::string EpochLogRow(const EpochLog& row);

// T batches of K profiles, budgets uniform on [budget_low, budget_high].
std::vector<ProfileBatch> GenerateTrainingSample(const TrainConfig& cfg, uint64_t seed);
ProfileBatch GenerateProfileBatch(const MarketConfig& market, int n, int count,
                                  double budget_low, double budget_high, uint64_t seed);

// Initial model for a config (deterministic in cfg.seed).
MbrModel InitialModel(const TrainConfig& cfg);

struct TrainResult {
  MbrModel model;
  TrainState state;
  std::vector<EpochLog> log;
};

// Augmented-Lagrangian training. `on_epoch` runs after each epoch with its
// log row. Throws DivergenceError if the Lagrangian or the parameters turn
// non-finite; the rows logged so far have been delivered to `on_epoch` by
// then.
TrainResult TrainMbr(const TrainConfig& cfg, const std::vector<ProfileBatch>& sample,
                     const std::function<void(const EpochLog&)>& on_epoch = {});

// Held-out incentive and error metrics.
struct EvaluationReport {
  std::vector<double> regret;
  std::vector<double> ir;
  double regret_mean = 0;
  double regret_max = 0;
  double ir_mean = 0;
  double ir_max = 0;
  double err_hat = 0;
  // Structural checks counted over the batch.
  long budget_violations = 0;
  long privacy_violations = 0;
};

EvaluationReport Evaluate(const MbrModel& model, const ProfileBatch& batch,
                          const BestResponseParams& params, ClipBound bound);

// Checkpoint file: MBRv1 magic, model header, scaling, then the
// allocation and payment network blocks.
void SaveModel(const MbrModel& model, const std::string& path);
MbrModel LoadModel(const std::string& path);

// Deterministic checkpoint name for an (n, M) model inside `dir`.
std::string CheckpointPath(const std::string& dir, int n, int num_sub_bids);

}  // namespace flmarket::murba

#endif  // FLMARKET_MURBA_H_
