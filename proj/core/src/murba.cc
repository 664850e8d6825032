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

#include "flmarket/murba.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "flmarket/errors.h"

namespace flmarket::murba {
namespace {

using nn::GradientTape;

// Forward state of a batch of raw input rows. Row r is scored against the
// true profile truth[r].
struct BatchPass {
  Matrix raw;
  Matrix alloc;      // rows x n(M+1), dummy slot first in each group
  Matrix pay_frac;   // rows x n
  Matrix payments;   // rows x n
  Matrix eps;        // rows x n
  Matrix utility;    // rows x n
  GradientTape alloc_tape;
  GradientTape pay_tape;
};

Eigen::Index BudgetCol(int owner, int m) { return MbrInput::SliceOffset(owner, m) + m; }

void RunBatch(const MbrModel& model, const std::vector<const BidProfile*>& truth,
              const EvalOptions& options, bool record, BatchPass& pass) {
  const int n = model.n();
  const int m = model.num_sub_bids();
  const Eigen::Index rows = pass.raw.rows();
  const Matrix scaled =
      (pass.raw.array().rowwise() / model.input_divisors().transpose().array()).matrix();
  pass.alloc = model.allocation().Forward(scaled, record ? &pass.alloc_tape : nullptr);
  pass.pay_frac = model.payment().Forward(scaled, record ? &pass.pay_tape : nullptr);

  pass.payments.resize(rows, n);
  pass.eps.resize(rows, n);
  pass.utility.resize(rows, n);
  const Eigen::Index b_col = pass.raw.cols() - 1;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const BidProfile& profile = *truth[r];
    const double budget = pass.raw(r, b_col);
    for (int i = 0; i < n; ++i) {
      const double reported = pass.raw(r, BudgetCol(i, m));
      double eps = 0;
      for (int k = 1; k <= m; ++k) eps += pass.alloc(r, i * (m + 1) + k) * reported / k;
      const double pay = pass.pay_frac(r, i) * budget + options.payment_shift;
      pass.eps(r, i) = eps;
      pass.payments(r, i) = pay;
      pass.utility(r, i) = pay - profile[i].valuation(eps);
    }
  }
}

// Pulls dLoss/du (util_coeff) and extra dLoss/deps (eps_coeff) back to the
// network parameters and/or the raw inputs.
void Backprop(const MbrModel& model, const std::vector<const BidProfile*>& truth,
              BatchPass& pass, const Matrix& util_coeff, const Matrix* eps_coeff,
              MbrGradients* grads, Matrix* raw_grad) {
  const int n = model.n();
  const int m = model.num_sub_bids();
  const Eigen::Index rows = pass.raw.rows();
  const Eigen::Index b_col = pass.raw.cols() - 1;

  Matrix up_alloc = Matrix::Zero(rows, pass.alloc.cols());
  Matrix up_pay(rows, n);
  Matrix direct_budget(rows, n);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const BidProfile& profile = *truth[r];
    for (int i = 0; i < n; ++i) {
      const double cu = util_coeff(r, i);
      double g_eps = eps_coeff != nullptr ? (*eps_coeff)(r, i) : 0.0;
      if (cu != 0) g_eps -= cu * profile[i].valuation.Derivative(pass.eps(r, i));
      up_pay(r, i) = cu * pass.raw(r, b_col);
      const double reported = pass.raw(r, BudgetCol(i, m));
      double mass_over_m = 0;
      for (int k = 1; k <= m; ++k) {
        up_alloc(r, i * (m + 1) + k) = g_eps * reported / k;
        mass_over_m += pass.alloc(r, i * (m + 1) + k) / k;
      }
      direct_budget(r, i) = g_eps * mass_over_m;
    }
  }

  const bool params = grads != nullptr;
  nn::NetworkGradients ga = nn::Backward(pass.alloc_tape, up_alloc, params);
  nn::NetworkGradients gp = nn::Backward(pass.pay_tape, up_pay, params);
  if (raw_grad != nullptr) {
    *raw_grad = ((ga.input + gp.input).array().rowwise() /
                 model.input_divisors().transpose().array())
                    .matrix();
    for (int i = 0; i < n; ++i) raw_grad->col(BudgetCol(i, m)) += direct_budget.col(i);
  }
  if (params) {
    grads->allocation = std::move(ga);
    grads->payment = std::move(gp);
  }
}

// Euclidean projection onto {x : x_1 >= x_2 >= ... >= x_M >= 0}
// (pool-adjacent-violators, then clamp).
void ProjectNonIncreasingNonNegative(double* x, int len) {
  std::vector<double> level;
  std::vector<int> count;
  for (int k = 0; k < len; ++k) {
    level.push_back(x[k]);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] < level.back()) {
      const double merged = (level[level.size() - 2] * count[count.size() - 2] +
                             level.back() * count.back()) /
                            (count[count.size() - 2] + count.back());
      const int c = count[count.size() - 2] + count.back();
      level.pop_back();
      count.pop_back();
      level.back() = merged;
      count.back() = c;
    }
  }
  int k = 0;
  for (size_t b = 0; b < level.size(); ++b) {
    for (int c = 0; c < count[b]; ++c) x[k++] = std::max(0.0, level[b]);
  }
}

Matrix TruthfulRows(const ProfileBatch& batch, int m) {
  const int n = static_cast<int>(batch.profiles.front().size());
  Matrix rows(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(n) * (m + 1) + 1);
  for (size_t k = 0; k < batch.size(); ++k) {
    rows.row(static_cast<Eigen::Index>(k)) =
        MbrInput::FromProfile(batch.profiles[k], batch.budgets[k], m).raw().transpose();
  }
  return rows;
}

void CheckBatch(const MbrModel& model, const ProfileBatch& batch) {
  if (batch.profiles.empty()) throw DomainError("empty profile batch");
  if (batch.budgets.size() != batch.profiles.size()) {
    throw ShapeError("one financial budget per profile is required");
  }
  for (const BidProfile& p : batch.profiles) {
    if (static_cast<int>(p.size()) != model.n()) {
      throw ShapeError("profile size does not match the model's n");
    }
  }
}

double ProfileErr(const double* eps, int n, ClipBound bound) {
  bool all_small = true;
  for (int i = 0; i < n; ++i) all_small = all_small && eps[i] < kErrEpsFloor;
  if (all_small) return ErrCap(bound);
  std::vector<double> e(eps, eps + n);
  return ErrBound(VarOpt(e), e, bound).value();
}

std::string Hex(double x) {
  std::ostringstream os;
  os << std::hexfloat << x;
  return os.str();
}

double ParseHex(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw ParseError("bad number '" + s + "' in checkpoint");
  return v;
}

}  // namespace

std::vector<std::vector<SubBid>> TransformBids(const BidProfile& profile, int num_sub_bids) {
  if (num_sub_bids < 1) throw DomainError("need at least one sub-bid (M >= 1)");
  std::vector<std::vector<SubBid>> out(profile.size());
  for (size_t i = 0; i < profile.size(); ++i) {
    const Bid& b = profile[i];
    if (!(b.privacy_budget > 0)) throw DomainError("sub-bids need a positive privacy budget");
    for (int m = 1; m <= num_sub_bids; ++m) {
      const double privacy = b.privacy_budget / m;
      out[i].push_back(SubBid{b.valuation(privacy), privacy});
    }
  }
  return out;
}

MbrInput::MbrInput(int n, int num_sub_bids)
    : n_(n), m_(num_sub_bids), raw_(Vector::Zero(static_cast<Eigen::Index>(n) * (num_sub_bids + 1) + 1)) {
  if (n < 1 || num_sub_bids < 1) throw DomainError("MBR input needs n >= 1 and M >= 1");
}

MbrInput MbrInput::FromProfile(const BidProfile& profile, double budget, int num_sub_bids) {
  if (!(budget > 0)) throw DomainError("financial budget must be positive");
  const auto sub_bids = TransformBids(profile, num_sub_bids);
  MbrInput input(static_cast<int>(profile.size()), num_sub_bids);
  for (int i = 0; i < input.n(); ++i) {
    for (int m = 1; m <= num_sub_bids; ++m) input.valuation(i, m) = sub_bids[i][m - 1].valuation;
    input.privacy_budget(i) = profile[i].privacy_budget;
  }
  input.financial_budget() = budget;
  return input;
}

MbrModel::MbrModel(MbrArchitecture arch, InputScaling scaling, Rng& init_rng)
    : arch_(std::move(arch)),
      scaling_(scaling),
      allocation_({1, 1}, nn::OutputActivation::kNone),
      payment_({1, 1}, nn::OutputActivation::kNone) {
  if (arch_.n < 1 || arch_.num_sub_bids < 1) throw DomainError("MBR needs n >= 1 and M >= 1");
  std::vector<int> alloc_widths{static_cast<int>(input_dim())};
  alloc_widths.insert(alloc_widths.end(), arch_.hidden.begin(), arch_.hidden.end());
  std::vector<int> pay_widths = alloc_widths;
  alloc_widths.push_back(arch_.n * (arch_.num_sub_bids + 1));
  pay_widths.push_back(arch_.n);
  allocation_ = nn::DenseNetwork::GlorotUniform(alloc_widths, nn::OutputActivation::kSoftmaxRows,
                                                arch_.num_sub_bids + 1, init_rng);
  payment_ = nn::DenseNetwork::GlorotUniform(pay_widths, nn::OutputActivation::kSoftmaxVector, 0,
                                             init_rng);
  BuildDivisors();
}

MbrModel::MbrModel(MbrArchitecture arch, InputScaling scaling, nn::DenseNetwork allocation,
                   nn::DenseNetwork payment)
    : arch_(std::move(arch)),
      scaling_(scaling),
      allocation_(std::move(allocation)),
      payment_(std::move(payment)) {
  const int group = arch_.num_sub_bids + 1;
  if (allocation_.input_dim() != input_dim() || payment_.input_dim() != input_dim() ||
      allocation_.output_dim() != arch_.n * group || payment_.output_dim() != arch_.n ||
      allocation_.output_activation() != nn::OutputActivation::kSoftmaxRows ||
      allocation_.softmax_group() != group ||
      payment_.output_activation() != nn::OutputActivation::kSoftmaxVector) {
    throw ShapeError("networks do not match the MBR architecture");
  }
  BuildDivisors();
}

void MbrModel::BuildDivisors() {
  if (!(scaling_.valuation > 0 && scaling_.privacy_budget > 0 && scaling_.financial_budget > 0)) {
    throw DomainError("input scaling divisors must be positive");
  }
  divisors_ = Vector::Constant(input_dim(), scaling_.valuation);
  for (int i = 0; i < n(); ++i) divisors_[BudgetCol(i, num_sub_bids())] = scaling_.privacy_budget;
  divisors_[input_dim() - 1] = scaling_.financial_budget;
}

bool operator==(const MbrModel& a, const MbrModel& b) {
  return a.arch_.n == b.arch_.n && a.arch_.num_sub_bids == b.arch_.num_sub_bids &&
         a.arch_.hidden == b.arch_.hidden && a.scaling_.valuation == b.scaling_.valuation &&
         a.scaling_.privacy_budget == b.scaling_.privacy_budget &&
         a.scaling_.financial_budget == b.scaling_.financial_budget &&
         a.allocation_ == b.allocation_ && a.payment_ == b.payment_;
}

InputScaling ScalingForMarket(const MarketConfig& market, double max_financial_budget) {
  const double e = market.sensitivity;
  const double peak = std::max({2.0 * e, e * e, 2.0 * std::sqrt(e), std::expm1(e)});
  return InputScaling{market.alpha_high * peak, e, max_financial_budget};
}

MbrOutput MbrForward(const MbrModel& model, const MbrInput& input) {
  if (input.n() != model.n() || input.num_sub_bids() != model.num_sub_bids()) {
    throw ShapeError("MBR input shape does not match the model");
  }
  const int n = model.n();
  const int m = model.num_sub_bids();
  const Vector scaled = input.raw().cwiseQuotient(model.input_divisors());
  const Vector alloc = model.allocation().Forward(scaled);
  const Vector frac = model.payment().Forward(scaled);
  MbrOutput out{Matrix(n, m), frac * input.raw()[input.dim() - 1]};
  for (int i = 0; i < n; ++i) {
    for (int k = 1; k <= m; ++k) out.allocation(i, k - 1) = alloc[i * (m + 1) + k];
  }
  return out;
}

AuctionOutcome MurbaAuction(const MbrModel& model, const BidProfile& profile, double budget) {
  if (static_cast<int>(profile.size()) != model.n()) {
    throw ShapeError("profile has " + std::to_string(profile.size()) +
                     " owners, model was trained for " + std::to_string(model.n()));
  }
  const MbrInput input = MbrInput::FromProfile(profile, budget, model.num_sub_bids());
  const MbrOutput out = MbrForward(model, input);
  AuctionOutcome outcome{std::vector<double>(profile.size()), std::vector<double>(profile.size())};
  for (int i = 0; i < model.n(); ++i) {
    double eps = 0;
    for (int k = 1; k <= model.num_sub_bids(); ++k) {
      eps += out.allocation(i, k - 1) * profile[i].privacy_budget / k;
    }
    outcome.epsilons[i] = std::min(eps, profile[i].privacy_budget);
    outcome.payments[i] = out.payments[i];
  }
  return outcome;
}

Matrix FindMisreports(const MbrModel& model, const ProfileBatch& batch,
                      const BestResponseParams& params, const EvalOptions& options) {
  CheckBatch(model, batch);
  const int n = model.n();
  const int m = model.num_sub_bids();
  const Matrix truthful = TruthfulRows(batch, m);
  const Eigen::Index rows = truthful.rows() * n;

  BatchPass pass;
  pass.raw.resize(rows, truthful.cols());
  std::vector<const BidProfile*> truth(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    pass.raw.row(r) = truthful.row(r / n);
    truth[r] = &batch.profiles[r / n];
  }
  Matrix best = pass.raw;
  Vector best_utility = Vector::Constant(rows, -std::numeric_limits<double>::infinity());

  Matrix coeff = Matrix::Zero(rows, n);
  for (Eigen::Index r = 0; r < rows; ++r) coeff(r, r % n) = 1.0;

  for (int t = 0; t <= params.iterations; ++t) {
    const bool step = t < params.iterations;
    RunBatch(model, truth, options, step, pass);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double u = pass.utility(r, r % n);
      if (u > best_utility[r]) {
        best_utility[r] = u;
        const Eigen::Index off = MbrInput::SliceOffset(static_cast<int>(r % n), m);
        best.row(r).segment(off, m + 1) = pass.raw.row(r).segment(off, m + 1);
      }
    }
    if (!step) break;
    Matrix grad;
    Backprop(model, truth, pass, coeff, nullptr, nullptr, &grad);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const int i = static_cast<int>(r % n);
      const Eigen::Index off = MbrInput::SliceOffset(i, m);
      Eigen::RowVectorXd slice = pass.raw.row(r).segment(off, m + 1) +
                                 params.step * grad.row(r).segment(off, m + 1);
      ProjectNonIncreasingNonNegative(slice.data(), m);
      slice[m] = std::clamp(slice[m], 0.0, (*truth[r])[i].privacy_budget);
      pass.raw.row(r).segment(off, m + 1) = slice;
    }
  }
  return best;
}

Vector BestResponse(const MbrModel& model, const BidProfile& profile, double budget, int owner,
                    const BestResponseParams& params, const EvalOptions& options) {
  if (owner < 0 || owner >= model.n()) throw DomainError("owner index out of range");
  const ProfileBatch batch{{profile}, {budget}};
  const Matrix rows = FindMisreports(model, batch, params, options);
  const Eigen::Index off = MbrInput::SliceOffset(owner, model.num_sub_bids());
  return rows.row(owner).segment(off, model.num_sub_bids() + 1).transpose();
}

std::vector<double> EmpiricalRegret(const MbrModel& model, const ProfileBatch& batch,
                                    const BestResponseParams& params,
                                    const EvalOptions& options) {
  const Matrix mis = FindMisreports(model, batch, params, options);
  const int n = model.n();
  const auto k_rows = static_cast<Eigen::Index>(batch.size());
  BatchPass pass;
  pass.raw.resize(k_rows + mis.rows(), mis.cols());
  pass.raw.topRows(k_rows) = TruthfulRows(batch, model.num_sub_bids());
  pass.raw.bottomRows(mis.rows()) = mis;
  std::vector<const BidProfile*> truth(pass.raw.rows());
  for (Eigen::Index r = 0; r < pass.raw.rows(); ++r) {
    truth[r] = &batch.profiles[r < k_rows ? r : (r - k_rows) / n];
  }
  RunBatch(model, truth, options, false, pass);
  std::vector<double> regret(n, 0.0);
  for (Eigen::Index k = 0; k < k_rows; ++k) {
    for (int i = 0; i < n; ++i) {
      const double gain = pass.utility(k_rows + k * n + i, i) - pass.utility(k, i);
      regret[i] += std::max(0.0, gain);
    }
  }
  for (double& r : regret) r /= static_cast<double>(k_rows);
  return regret;
}

std::vector<double> EmpiricalIr(const MbrModel& model, const ProfileBatch& batch,
                                const EvalOptions& options) {
  CheckBatch(model, batch);
  BatchPass pass;
  pass.raw = TruthfulRows(batch, model.num_sub_bids());
  std::vector<const BidProfile*> truth;
  for (const BidProfile& p : batch.profiles) truth.push_back(&p);
  RunBatch(model, truth, options, false, pass);
  std::vector<double> ir(model.n(), 0.0);
  for (Eigen::Index k = 0; k < pass.raw.rows(); ++k) {
    for (int i = 0; i < model.n(); ++i) ir[i] += std::max(0.0, -pass.utility(k, i));
  }
  for (double& v : ir) v /= static_cast<double>(pass.raw.rows());
  return ir;
}

double ErrCap(ClipBound bound) {
  return 8.0 * bound.value() * bound.value() / (kErrEpsFloor * kErrEpsFloor);
}

double EmpiricalErr(const MbrModel& model, const ProfileBatch& batch, ClipBound bound) {
  CheckBatch(model, batch);
  BatchPass pass;
  pass.raw = TruthfulRows(batch, model.num_sub_bids());
  std::vector<const BidProfile*> truth;
  for (const BidProfile& p : batch.profiles) truth.push_back(&p);
  RunBatch(model, truth, {}, false, pass);
  double total = 0;
  for (Eigen::Index k = 0; k < pass.raw.rows(); ++k) {
    const Eigen::RowVectorXd e = pass.eps.row(k);
    total += ProfileErr(e.data(), model.n(), bound);
  }
  return total / static_cast<double>(pass.raw.rows());
}

LagrangianTerms EvaluateLagrangian(const MbrModel& model, const ProfileBatch& batch,
                                   const Matrix& misreports, const TrainState& state,
                                   ClipBound bound, MbrGradients* grads) {
  CheckBatch(model, batch);
  const int n = model.n();
  const auto k_rows = static_cast<Eigen::Index>(batch.size());
  if (misreports.rows() != k_rows * n || misreports.cols() != model.input_dim()) {
    throw ShapeError("misreport matrix must have K * n rows of input width");
  }
  if (static_cast<int>(state.phi_rgv.size()) != n || static_cast<int>(state.phi_irv.size()) != n) {
    throw ShapeError("Lagrange multipliers must have length n");
  }
  const double inv_k = 1.0 / static_cast<double>(k_rows);

  BatchPass pass;
  pass.raw.resize(k_rows + misreports.rows(), misreports.cols());
  pass.raw.topRows(k_rows) = TruthfulRows(batch, model.num_sub_bids());
  pass.raw.bottomRows(misreports.rows()) = misreports;
  std::vector<const BidProfile*> truth(pass.raw.rows());
  for (Eigen::Index r = 0; r < pass.raw.rows(); ++r) {
    truth[r] = &batch.profiles[r < k_rows ? r : (r - k_rows) / n];
  }
  RunBatch(model, truth, {}, grads != nullptr, pass);

  LagrangianTerms terms;
  terms.regret.assign(n, 0.0);
  terms.ir.assign(n, 0.0);
  Matrix eps_coeff = Matrix::Zero(pass.raw.rows(), n);
  std::vector<double> grad_buf(n);
  for (Eigen::Index k = 0; k < k_rows; ++k) {
    for (int i = 0; i < n; ++i) {
      const double u = pass.utility(k, i);
      terms.regret[i] += std::max(0.0, pass.utility(k_rows + k * n + i, i) - u) * inv_k;
      terms.ir[i] += std::max(0.0, -u) * inv_k;
    }
    const Eigen::RowVectorXd e = pass.eps.row(k);
    bool all_small = true;
    for (int i = 0; i < n; ++i) all_small = all_small && e[i] < kErrEpsFloor;
    if (all_small) {
      terms.err += ErrCap(bound) * inv_k;
    } else {
      terms.err += VarOptErrorWithGradient({e.data(), static_cast<size_t>(n)}, bound, grad_buf) * inv_k;
      for (int i = 0; i < n; ++i) eps_coeff(k, i) = grad_buf[i] * inv_k;
    }
  }

  double sum_rgv = 0;
  double sum_irv = 0;
  for (int i = 0; i < n; ++i) {
    sum_rgv += terms.regret[i];
    sum_irv += terms.ir[i];
  }
  terms.value = terms.err + 0.5 * state.rho_rgv * sum_rgv * sum_rgv +
                0.5 * state.rho_irv * sum_irv * sum_irv;
  for (int i = 0; i < n; ++i) {
    terms.value += state.phi_rgv[i] * terms.regret[i] + state.phi_irv[i] * terms.ir[i];
  }
  if (grads == nullptr) return terms;

  // dC/du for every row.
  Matrix util_coeff = Matrix::Zero(pass.raw.rows(), n);
  for (Eigen::Index k = 0; k < k_rows; ++k) {
    for (int i = 0; i < n; ++i) {
      const double u = pass.utility(k, i);
      const Eigen::Index mr = k_rows + k * n + i;
      if (pass.utility(mr, i) - u > 0) {
        const double c = (state.phi_rgv[i] + state.rho_rgv * sum_rgv) * inv_k;
        util_coeff(mr, i) += c;
        util_coeff(k, i) -= c;
      }
      if (u < 0) util_coeff(k, i) -= (state.phi_irv[i] + state.rho_irv * sum_irv) * inv_k;
    }
  }
  Backprop(model, truth, pass, util_coeff, &eps_coeff, grads, nullptr);
  return terms;
}

void TrainConfig::Validate() const {
  if (arch.n < 1 || arch.num_sub_bids < 1) throw DomainError("need n >= 1 and M >= 1");
  if (epochs < 0) throw DomainError("epochs must be non-negative");
  if (num_batches < 1 || batch_size < 1) throw DomainError("need T >= 1 and K >= 1");
  if (best_response.iterations < 0) throw DomainError("R must be non-negative");
  if (multiplier_period < 1) throw DomainError("Q must be positive");
  if (rho_period_epochs < 1) throw DomainError("penalty schedule period must be positive");
  if (!(learning_rate >= 0)) throw DomainError("learning rate must be non-negative");
  if (!(budget_low > 0) || !(budget_low <= budget_high)) {
    throw DomainError("training budget range must be positive and ordered");
  }
  if (!(rho_rgv_init > 0) || !(rho_irv_init > 0)) throw DomainError("penalties must be positive");
  MarketConfig m = market;
  m.n = arch.n;
  m.Validate();
}

std::string EpochLogHeader() {
  return "epoch,lagrangian,err_hat,regret_mean,regret_max,ir_mean,ir_max";
}

std::string EpochLogRow(const EpochLog& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", row.epoch,
                row.lagrangian, row.err_hat, row.regret_mean, row.regret_max, row.ir_mean,
                row.ir_max);
  return buf;
}

ProfileBatch GenerateProfileBatch(const MarketConfig& market, int n, int count,
                                  double budget_low, double budget_high, uint64_t seed) {
  MarketConfig cfg = market;
  cfg.n = n;
  Rng rng(seed);
  ProfileBatch batch;
  batch.profiles.reserve(count);
  batch.budgets.reserve(count);
  for (int k = 0; k < count; ++k) {
    batch.profiles.push_back(GenerateBidProfile(cfg, rng));
    batch.budgets.push_back(rng.Uniform(budget_low, budget_high));
  }
  return batch;
}

std::vector<ProfileBatch> GenerateTrainingSample(const TrainConfig& cfg, uint64_t seed) {
  cfg.Validate();
  std::vector<ProfileBatch> sample;
  sample.reserve(cfg.num_batches);
  for (int t = 0; t < cfg.num_batches; ++t) {
    sample.push_back(GenerateProfileBatch(cfg.market, cfg.arch.n, cfg.batch_size, cfg.budget_low,
                                          cfg.budget_high, DeriveSeed(seed, {static_cast<uint64_t>(t)})));
  }
  return sample;
}

MbrModel InitialModel(const TrainConfig& cfg) {
  cfg.Validate();
  Rng init(DeriveSeed(cfg.seed, {0x1417}));
  return MbrModel(cfg.arch, ScalingForMarket(cfg.market, cfg.budget_high), init);
}

namespace {

bool AllFinite(const nn::DenseNetwork& net) {
  for (const nn::DenseLayer& layer : net.layers()) {
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

}  // namespace

TrainResult TrainMbr(const TrainConfig& cfg, const std::vector<ProfileBatch>& sample,
                     const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.Validate();
  if (sample.empty()) throw DomainError("empty training sample");
  const ClipBound bound(cfg.clip);
  const int n = cfg.arch.n;
  TrainResult result{InitialModel(cfg), TrainState{}, {}};
  TrainState& state = result.state;
  state.phi_rgv.assign(n, cfg.phi_init);
  state.phi_irv.assign(n, cfg.phi_init);
  state.rho_rgv = cfg.rho_rgv_init;
  state.rho_irv = cfg.rho_irv_init;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    state.epoch = epoch;
    EpochLog row;
    row.epoch = epoch;
    for (const ProfileBatch& batch : sample) {
      const Matrix mis = FindMisreports(result.model, batch, cfg.best_response);
      MbrGradients grads;
      const LagrangianTerms terms =
          EvaluateLagrangian(result.model, batch, mis, state, bound, &grads);
      if (!std::isfinite(terms.value)) {
        throw DivergenceError("Lagrangian became non-finite at epoch " + std::to_string(epoch) +
                              ", iteration " + std::to_string(state.iteration));
      }
      nn::SgdStep(result.model.allocation(), grads.allocation, cfg.learning_rate);
      nn::SgdStep(result.model.payment(), grads.payment, cfg.learning_rate);
      if (!AllFinite(result.model.allocation()) || !AllFinite(result.model.payment())) {
        throw DivergenceError("parameters became non-finite at epoch " + std::to_string(epoch) +
                              ", iteration " + std::to_string(state.iteration));
      }
      ++state.iteration;
      if (state.iteration % cfg.multiplier_period == 0) {
        for (int i = 0; i < n; ++i) {
          state.phi_rgv[i] += state.rho_rgv * terms.regret[i];
          state.phi_irv[i] += state.rho_irv * terms.ir[i];
        }
      }

      row.lagrangian += terms.value;
      row.err_hat += terms.err;
      double rgv_sum = 0;
      double irv_sum = 0;
      for (int i = 0; i < n; ++i) {
        rgv_sum += terms.regret[i];
        irv_sum += terms.ir[i];
        row.regret_max = std::max(row.regret_max, terms.regret[i]);
        row.ir_max = std::max(row.ir_max, terms.ir[i]);
      }
      row.regret_mean += rgv_sum / n;
      row.ir_mean += irv_sum / n;
    }
    const double t = static_cast<double>(sample.size());
    row.lagrangian /= t;
    row.err_hat /= t;
    row.regret_mean /= t;
    row.ir_mean /= t;
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);

    if ((epoch + 1) % cfg.rho_period_epochs == 0) {
      state.rho_rgv += cfg.rho_rgv_increment;
      state.rho_irv += cfg.rho_irv_increment;
    }
  }
  state.epoch = cfg.epochs;
  return result;
}

EvaluationReport Evaluate(const MbrModel& model, const ProfileBatch& batch,
                          const BestResponseParams& params, ClipBound bound) {
  EvaluationReport report;
  report.regret = EmpiricalRegret(model, batch, params);
  report.ir = EmpiricalIr(model, batch);
  report.err_hat = EmpiricalErr(model, batch, bound);
  const double n = static_cast<double>(model.n());
  for (int i = 0; i < model.n(); ++i) {
    report.regret_mean += report.regret[i] / n;
    report.ir_mean += report.ir[i] / n;
    report.regret_max = std::max(report.regret_max, report.regret[i]);
    report.ir_max = std::max(report.ir_max, report.ir[i]);
  }
  for (size_t k = 0; k < batch.size(); ++k) {
    const AuctionOutcome out = MurbaAuction(model, batch.profiles[k], batch.budgets[k]);
    if (std::abs(out.TotalPayment() - batch.budgets[k]) > 1e-9 * std::max(1.0, batch.budgets[k])) {
      ++report.budget_violations;
    }
    const MbrOutput raw = MbrForward(
        model, MbrInput::FromProfile(batch.profiles[k], batch.budgets[k], model.num_sub_bids()));
    for (int i = 0; i < model.n(); ++i) {
      double eps = 0;
      for (int m = 1; m <= model.num_sub_bids(); ++m) {
        eps += raw.allocation(i, m - 1) * batch.profiles[k][i].privacy_budget / m;
      }
      if (eps > batch.profiles[k][i].privacy_budget + 1e-9) ++report.privacy_violations;
    }
  }
  return report;
}

void SaveModel(const MbrModel& model, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << nn::kMagic << '\n';
  os << "mbr " << model.n() << ' ' << model.num_sub_bids() << ' '
     << model.architecture().hidden.size();
  for (int h : model.architecture().hidden) os << ' ' << h;
  os << '\n';
  os << "scaling " << Hex(model.scaling().valuation) << ' ' << Hex(model.scaling().privacy_budget)
     << ' ' << Hex(model.scaling().financial_budget) << '\n';
  nn::WriteNetworkBlock(os, model.allocation());
  nn::WriteNetworkBlock(os, model.payment());
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

MbrModel LoadModel(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("checkpoint '" + path + "' not found");
  nn::ExpectMagic(is);
  std::string tag;
  MbrArchitecture arch;
  size_t layers = 0;
  if (!(is >> tag) || tag != "mbr" || !(is >> arch.n >> arch.num_sub_bids >> layers)) {
    throw ParseError("bad model header in '" + path + "'");
  }
  arch.hidden.resize(layers);
  for (int& h : arch.hidden) {
    if (!(is >> h)) throw ParseError("bad hidden widths in '" + path + "'");
  }
  std::string v, e, b;
  if (!(is >> tag) || tag != "scaling" || !(is >> v >> e >> b)) {
    throw ParseError("bad scaling line in '" + path + "'");
  }
  InputScaling scaling{ParseHex(v), ParseHex(e), ParseHex(b)};
  nn::DenseNetwork alloc = nn::ReadNetworkBlock(is);
  nn::DenseNetwork pay = nn::ReadNetworkBlock(is);
  return MbrModel(arch, scaling, std::move(alloc), std::move(pay));
}

std::string CheckpointPath(const std::string& dir, int n, int num_sub_bids) {
  return (std::filesystem::path(dir) /
          ("mbr_n" + std::to_string(n) + "_m" + std::to_string(num_sub_bids) + ".mbr"))
      .string();
}

}  // namespace flmarket::murba
