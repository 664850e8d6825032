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

#include "cli.h"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>
#include <utility>

#include "CLI11.hpp"
#include "json.hpp"

#include "flmarket/aggregation.h"
#include "flmarket/allin.h"
#include "flmarket/errors.h"
#include "flmarket/fl.h"
#include "flmarket/market.h"
#include "flmarket/murba.h"
#include "flmarket/rng.h"

namespace flmarket::cli {
namespace {

constexpr char kSchemaHelp[] = R"(
CSV schemas (column order is fixed):
  auction    seed,owner,family,scale,privacy_budget,epsilon,payment,err_varopt,err_biasopt
  aggregate  owner,epsilon,lambda,bias_bound,var_bound,err_bound
  simulate   run_id,round,budget,mechanism,aggregator,err_bound,total_payment,accuracy,seed
  sweep      kind,param,value,mechanism,aggregator,seed,err_bound,total_payment,accuracy,
             regret_mean,regret_max,ir_mean,ir_max,err_bound_std,total_payment_std,
             accuracy_std,regret_mean_std,regret_max_std,ir_mean_std,ir_max_std
             kind is "data" (one seed) or "aggregate" (mean over seeds, *_std filled).
             Regret and IR columns are only filled for murba.
  train-mbr  <out>/mbr_n<N>_m<M>.log.csv: epoch,lagrangian,err_hat,regret_mean,regret_max,ir_mean,ir_max
             plus the checkpoint mbr_n<N>_m<M>.mbr and metadata mbr_n<N>_m<M>.json
Profile files (auction --profile) have the header family,scale,privacy_budget;
family is one of linear, quadratic, sqrt, exp, step.
Unbounded error bounds print as inf.
Config files (--config) use INI/TOML syntax with one [section] per subcommand,
e.g. [train-mbr] epochs = 20. Command-line flags override the file.
Exit codes: 0 success, 2 usage error, 3 runtime error.)";

constexpr uint64_t kAuctionStream = 0xa0c7;
constexpr uint64_t kDataStream = 0xda7a;
constexpr uint64_t kHeldOutStream = 0xe7a1;

std::string Fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string Fmt(const std::optional<double>& x) { return x ? Fmt(*x) : std::string(); }

// Writes to --out when given, otherwise to the caller's stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : fallback_(fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : fallback_; }

 private:
  std::ofstream file_;
  std::ostream& fallback_;
};

struct MarketFlags {
  int n = 10;
  double budget = 20.0;
  std::string scenario = "low";
  uint64_t seed = 0;

  MarketConfig Config() const {
    MarketConfig m;
    m.n = n;
    m.budget = budget;
    m.sensitivity = ScenarioSensitivity(scenario);
    m.seed = seed;
    return m;
  }
};

void AddMarketFlags(CLI::App* cmd, MarketFlags& f) {
  cmd->add_option("--n", f.n, "Number of data owners")->capture_default_str()->check(
      CLI::PositiveNumber);
  cmd->add_option("--budget", f.budget, "Financial budget B")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  cmd->add_option("--scenario", f.scenario, "Privacy sensitivity: low (E=5) or high (E=2)")
      ->capture_default_str()
      ->check(CLI::IsMember({"low", "high"}));
  cmd->add_option("--seed", f.seed, "Random seed")->capture_default_str();
}

struct CheckpointFlags {
  int m = 5;
  std::string dir = "checkpoints";
};

void AddCheckpointFlags(CLI::App* cmd, CheckpointFlags& f) {
  cmd->add_option("--m", f.m, "Sub-bids per owner M of the MBR checkpoint")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--checkpoint-dir", f.dir, "Directory holding mbr_n<N>_m<M>.mbr files")
      ->capture_default_str();
}

murba::MbrModel LoadCheckpoint(const std::string& dir, int n, int m) {
  const std::string path = murba::CheckpointPath(dir, n, m);
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("missing MBR checkpoint '" + path + "' (create it with train-mbr --n " +
                             std::to_string(n) + " --m " + std::to_string(m) + ")");
  }
  murba::MbrModel model = murba::LoadModel(path);
  if (model.n() != n || model.num_sub_bids() != m) {
    throw ParseError("checkpoint '" + path + "' holds a model for n = " +
                     std::to_string(model.n()) + ", M = " + std::to_string(model.num_sub_bids()));
  }
  return model;
}

BidProfile ReadProfile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open profile '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "family,scale,privacy_budget") {
    throw ParseError(path + ":1: expected header family,scale,privacy_budget");
  }
  std::vector<Bid> bids;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string family, scale, budget, extra;
    if (!std::getline(fields, family, ',') || !std::getline(fields, scale, ',') ||
        !std::getline(fields, budget, ',') || std::getline(fields, extra, ',')) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected three fields");
    }
    try {
      size_t used_scale = 0;
      size_t used_budget = 0;
      const double s = std::stod(scale, &used_scale);
      const double e = std::stod(budget, &used_budget);
      if (used_scale != scale.size() || used_budget != budget.size()) throw std::invalid_argument("");
      const ValuationFamily f = ParseFamily(family);
      bids.push_back(MakeBid(f == ValuationFamily::kStep ? ValuationFunction::Step(s)
                                                          : ValuationFunction(f, s),
                             e));
    } catch (const std::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": bad bid '" + line + "'");
    }
  }
  if (bids.empty()) throw ParseError(path + ": no bids");
  return BidProfile(std::move(bids));
}

ExtendedReal ErrFor(Aggregator a, const AuctionOutcome& outcome, ClipBound bound) {
  if (outcome.empty_winner_set()) return kPositiveInfinity;
  return ErrBound(ComputeWeights(a, outcome.epsilons), outcome.epsilons, bound);
}

// ---------------------------------------------------------------- auction

struct AuctionFlags {
  MarketFlags market;
  CheckpointFlags checkpoint;
  std::string mech;
  std::string profile;
  double clip = 1.0;
  std::string out;
};

void RunAuction(const AuctionFlags& f, std::ostream& out, std::ostream& err) {
  const fl::AuctionKind kind = fl::ParseAuction(f.mech);
  const ClipBound bound(f.clip);
  BidProfile profile = [&] {
    if (!f.profile.empty()) return ReadProfile(f.profile);
    MarketConfig cfg = f.market.Config();
    cfg.Validate();
    Rng rng(DeriveSeed(f.market.seed, {kAuctionStream}));
    return GenerateBidProfile(cfg, rng);
  }();
  AuctionOutcome outcome;
  if (kind == fl::AuctionKind::kAllIn) {
    outcome = AllIn(ToSingleMinded(profile), f.market.budget);
  } else {
    const murba::MbrModel model =
        LoadCheckpoint(f.checkpoint.dir, static_cast<int>(profile.size()), f.checkpoint.m);
    outcome = murba::MurbaAuction(model, profile, f.market.budget);
  }
  const std::string var = ErrFor(Aggregator::kVarOpt, outcome, bound).ToString();
  const std::string bias = ErrFor(Aggregator::kBiasOpt, outcome, bound).ToString();
  Sink sink(f.out, out);
  std::ostream& os = sink.stream();
  os << "seed,owner,family,scale,privacy_budget,epsilon,payment,err_varopt,err_biasopt\n";
  for (size_t i = 0; i < profile.size(); ++i) {
    const Bid& b = profile[i];
    os << f.market.seed << ',' << i << ',' << FamilyName(b.valuation.family()) << ','
       << Fmt(b.valuation.scale()) << ',' << Fmt(b.privacy_budget) << ','
       << Fmt(outcome.epsilons[i]) << ',' << Fmt(outcome.payments[i]) << ',' << var << ','
       << bias << '\n';
  }
  if (outcome.empty_winner_set()) err << "empty winner set: no owner was selected\n";
}

// -------------------------------------------------------------- aggregate

struct AggregateFlags {
  std::string aggr = "varopt";
  std::vector<double> eps;
  double clip = 1.0;
  std::string out;
};

void RunAggregate(const AggregateFlags& f, std::ostream& out) {
  const ClipBound bound(f.clip);
  const AggregationWeights w = ComputeWeights(ParseAggregator(f.aggr), f.eps);
  const double bias = BiasBound(w, bound);
  const std::string var = VarBound(w, f.eps, bound).ToString();
  const std::string total = ErrBound(w, f.eps, bound).ToString();
  Sink sink(f.out, out);
  std::ostream& os = sink.stream();
  os << "owner,epsilon,lambda,bias_bound,var_bound,err_bound\n";
  for (size_t i = 0; i < w.size(); ++i) {
    os << i << ',' << Fmt(f.eps[i]) << ',' << Fmt(w[i]) << ',' << Fmt(bias) << ',' << var << ','
       << total << '\n';
  }
}

// -------------------------------------------------------------- train-mbr

struct TrainFlags {
  int n = 5;
  int m = 5;
  std::string scenario = "low";
  int epochs = 20;
  int batches = 100;
  int batch_size = 100;
  std::vector<int> hidden = {32, 32};
  double lr = 0.001;
  int br_iterations = 25;
  double br_step = 0.1;
  int multiplier_period = 10;
  double budget_low = 1.0;
  double budget_high = 20.0;
  double clip = 1.0;
  uint64_t seed = 0;
  int eval_profiles = 1000;
  std::string out_dir = "checkpoints";
};

murba::TrainConfig ToTrainConfig(const TrainFlags& f) {
  murba::TrainConfig cfg;
  cfg.arch.n = f.n;
  cfg.arch.num_sub_bids = f.m;
  cfg.arch.hidden = f.hidden;
  cfg.market.n = f.n;
  cfg.market.sensitivity = ScenarioSensitivity(f.scenario);
  cfg.budget_low = f.budget_low;
  cfg.budget_high = f.budget_high;
  cfg.epochs = f.epochs;
  cfg.num_batches = f.batches;
  cfg.batch_size = f.batch_size;
  cfg.best_response = {f.br_iterations, f.br_step};
  cfg.multiplier_period = f.multiplier_period;
  cfg.learning_rate = f.lr;
  cfg.clip = f.clip;
  cfg.seed = f.seed;
  cfg.Validate();
  return cfg;
}

void RunTrain(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  const murba::TrainConfig cfg = ToTrainConfig(f);
  std::filesystem::create_directories(f.out_dir);
  const std::string ckpt = murba::CheckpointPath(f.out_dir, f.n, f.m);
  const std::string stem = ckpt.substr(0, ckpt.size() - 4);
  const std::string meta_path = stem + ".json";
  const std::string log_path = stem + ".log.csv";

  std::ofstream log(log_path);
  if (!log) throw std::runtime_error("cannot write '" + log_path + "'");
  log << murba::EpochLogHeader() << '\n' << std::flush;

  const auto sample = murba::GenerateTrainingSample(cfg, cfg.seed);
  std::optional<murba::TrainResult> result;
  try {
    result.emplace(murba::TrainMbr(cfg, sample, [&](const murba::EpochLog& row) {
      log << murba::EpochLogRow(row) << '\n' << std::flush;
      err << "epoch " << row.epoch << " lagrangian " << Fmt(row.lagrangian) << " regret_mean "
          << Fmt(row.regret_mean) << " ir_mean " << Fmt(row.ir_mean) << '\n';
    }));
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string(e.what()) + "; partial log kept in '" + log_path + "'");
  }
  murba::SaveModel(result->model, ckpt);

  nlohmann::json meta = {
      {"format", "MBRv1"},
      {"checkpoint", std::filesystem::path(ckpt).filename().string()},
      {"log", std::filesystem::path(log_path).filename().string()},
      {"n", f.n},
      {"m", f.m},
      {"hidden", f.hidden},
      {"scenario", f.scenario},
      {"sensitivity", cfg.market.sensitivity},
      {"epochs", f.epochs},
      {"batches", f.batches},
      {"batch_size", f.batch_size},
      {"learning_rate", f.lr},
      {"best_response", {{"iterations", f.br_iterations}, {"step", f.br_step}}},
      {"multiplier_period", f.multiplier_period},
      {"budget_range", {f.budget_low, f.budget_high}},
      {"clip", f.clip},
      {"seed", f.seed},
  };
  if (f.eval_profiles > 0) {
    const murba::ProfileBatch held_out = murba::GenerateProfileBatch(
        cfg.market, f.n, f.eval_profiles, f.budget_low, f.budget_high,
        DeriveSeed(f.seed, {kHeldOutStream}));
    const murba::EvaluationReport r =
        murba::Evaluate(result->model, held_out, cfg.best_response, ClipBound(f.clip));
    meta["evaluation"] = {{"profiles", f.eval_profiles}, {"regret_mean", r.regret_mean},
                          {"regret_max", r.regret_max},  {"ir_mean", r.ir_mean},
                          {"ir_max", r.ir_max},          {"err_hat", r.err_hat},
                          {"budget_violations", r.budget_violations},
                          {"privacy_violations", r.privacy_violations}};
  }
  std::ofstream meta_file(meta_path);
  if (!meta_file) throw std::runtime_error("cannot write '" + meta_path + "'");
  meta_file << meta.dump(2) << '\n';
  out << "checkpoint=" << ckpt << "\nmetadata=" << meta_path << "\nlog=" << log_path << '\n';
}

// --------------------------------------------------------------- datasets

struct DataFlags {
  std::string path;
  std::string label = "y";
  double test_fraction = 0.2;
  int rows = 2000;
  int dim = 8;
  double separation = 1.0;
};

void AddDataFlags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--dataset", f.path, "CSV dataset (header row); synthetic blobs when omitted");
  cmd->add_option("--label", f.label, "Label column of --dataset")->capture_default_str();
  cmd->add_option("--test-fraction", f.test_fraction, "Held-out fraction")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 0.99));
  cmd->add_option("--rows", f.rows, "Synthetic rows")->capture_default_str()->check(
      CLI::PositiveNumber);
  cmd->add_option("--dim", f.dim, "Synthetic feature dimension")->capture_default_str()->check(
      CLI::PositiveNumber);
  cmd->add_option("--separation", f.separation, "Synthetic blob separation")
      ->capture_default_str();
}

fl::Dataset MakeDataset(const DataFlags& f, int n_owners, uint64_t seed) {
  if (!f.path.empty()) {
    return fl::LoadCsvDataset(f.path, f.label, n_owners, DeriveSeed(seed, {kDataStream}),
                              f.test_fraction);
  }
  return fl::SyntheticBlobs(f.rows, f.dim, f.separation, n_owners, seed, f.test_fraction);
}

// --------------------------------------------------------------- simulate

struct SimFlags {
  MarketFlags market;
  CheckpointFlags checkpoint;
  DataFlags data;
  std::string mech = "allin";
  std::string aggr = "varopt";
  int rounds = 10;
  double lr = 0.01;
  double clip = 1.0;
  bool noiseless = false;
  std::string run_id = "run";
  std::string out;
};

void RunSimulate(const SimFlags& f, std::ostream& out) {
  fl::SimConfig cfg;
  cfg.rounds = f.rounds;
  cfg.learning_rate = f.lr;
  cfg.clip = f.clip;
  cfg.auction = fl::ParseAuction(f.mech);
  cfg.aggregator = ParseAggregator(f.aggr);
  cfg.market = f.market.Config();
  cfg.noiseless = f.noiseless;
  cfg.seed = f.market.seed;
  cfg.run_id = f.run_id;
  std::optional<murba::MbrModel> model;
  if (cfg.auction == fl::AuctionKind::kMurba) {
    model.emplace(LoadCheckpoint(f.checkpoint.dir, f.market.n, f.checkpoint.m));
    cfg.mbr_model = &*model;
  }
  const fl::Dataset data = MakeDataset(f.data, f.market.n, f.market.seed);
  const fl::SimResult result = fl::RunFl(cfg, data);
  Sink sink(f.out, out);
  sink.stream() << fl::MetricsHeader() << '\n' << fl::MetricsRows(cfg, result);
}

// ------------------------------------------------------------------ sweep

struct SweepFlags {
  MarketFlags market;
  CheckpointFlags checkpoint;
  DataFlags data;
  std::string param;
  std::vector<double> grid;
  int seeds = 10;
  std::vector<std::string> mechs = {"allin"};
  std::vector<std::string> aggrs = {"varopt"};
  int rounds = 1;
  double lr = 0.01;
  double clip = 1.0;
  int eval_profiles = 200;
  int jobs = 1;
  std::string out;
};

constexpr int kNumMetrics = 7;
using Metrics = std::array<std::optional<double>, kNumMetrics>;

struct SweepPoint {
  double value;
  std::string mech;
  std::string aggr;
  uint64_t seed;
};

struct SweepRow {
  SweepPoint point;
  Metrics metrics;
};

int AsCount(double v, const std::string& param) {
  if (!(v >= 1) || v != std::floor(v)) {
    throw DomainError("--grid values for " + param + " must be positive integers");
  }
  return static_cast<int>(v);
}

void RunSweep(const SweepFlags& f, std::ostream& out) {
  std::vector<SweepPoint> points;
  for (double v : f.grid) {
    if (f.param != "budget") AsCount(v, f.param);
    for (const std::string& mech : f.mechs) {
      for (const std::string& aggr : f.aggrs) {
        for (int s = 0; s < f.seeds; ++s) {
          points.push_back({v, mech, aggr, f.market.seed + static_cast<uint64_t>(s)});
        }
      }
    }
  }

  // Checkpoints are loaded up front so a missing one fails before any work.
  std::map<std::pair<int, int>, std::unique_ptr<murba::MbrModel>> models;
  auto shape = [&](double v) {
    int n = f.market.n;
    int m = f.checkpoint.m;
    if (f.param == "n") n = AsCount(v, "n");
    if (f.param == "m") m = AsCount(v, "m");
    return std::make_pair(n, m);
  };
  for (const SweepPoint& p : points) {
    if (p.mech != "murba") continue;
    const auto key = shape(p.value);
    if (!models.count(key)) {
      models[key] = std::make_unique<murba::MbrModel>(
          LoadCheckpoint(f.checkpoint.dir, key.first, key.second));
    }
  }

  auto evaluate = [&](const SweepPoint& p) {
    const auto [n, m] = shape(p.value);
    fl::SimConfig cfg;
    cfg.rounds = f.rounds;
    cfg.learning_rate = f.lr;
    cfg.clip = f.clip;
    cfg.auction = fl::ParseAuction(p.mech);
    cfg.aggregator = ParseAggregator(p.aggr);
    cfg.market = f.market.Config();
    cfg.market.n = n;
    if (f.param == "budget") cfg.market.budget = p.value;
    cfg.seed = p.seed;
    cfg.run_id = f.param + "=" + Fmt(p.value);
    if (cfg.auction == fl::AuctionKind::kMurba) cfg.mbr_model = models.at({n, m}).get();
    const fl::SimResult sim = fl::RunFl(cfg, MakeDataset(f.data, n, p.seed));
    Metrics mt;
    mt[0] = sim.rounds.front().err_bound.ToDouble();
    mt[1] = sim.rounds.front().total_payment;
    mt[2] = sim.final_accuracy;
    if (cfg.mbr_model != nullptr && f.eval_profiles > 0) {
      const murba::ProfileBatch batch = murba::GenerateProfileBatch(
          cfg.market, n, f.eval_profiles, cfg.market.budget, cfg.market.budget,
          DeriveSeed(p.seed, {kHeldOutStream}));
      const murba::EvaluationReport r =
          murba::Evaluate(*cfg.mbr_model, batch, murba::BestResponseParams{}, ClipBound(f.clip));
      mt[3] = r.regret_mean;
      mt[4] = r.regret_max;
      mt[5] = r.ir_mean;
      mt[6] = r.ir_max;
    }
    return SweepRow{p, mt};
  };

  // Worker pool over grid points; rows are written afterwards in grid order.
  std::vector<SweepRow> rows(points.size());
  std::vector<std::exception_ptr> failures(points.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < points.size(); i = next++) {
      try {
        rows[i] = evaluate(points[i]);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(f.jobs, static_cast<int>(points.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  for (const auto& e : failures) {
    if (e) std::rethrow_exception(e);
  }

  Sink sink(f.out, out);
  std::ostream& os = sink.stream();
  os << "kind,param,value,mechanism,aggregator,seed,err_bound,total_payment,accuracy,"
        "regret_mean,regret_max,ir_mean,ir_max,err_bound_std,total_payment_std,accuracy_std,"
        "regret_mean_std,regret_max_std,ir_mean_std,ir_max_std\n";
  for (const SweepRow& r : rows) {
    os << "data," << f.param << ',' << Fmt(r.point.value) << ',' << r.point.mech << ','
       << r.point.aggr << ',' << r.point.seed;
    for (const auto& x : r.metrics) os << ',' << Fmt(x);
    os << std::string(kNumMetrics, ',') << '\n';
  }
  // Points for one (value, mech, aggr) group are contiguous.
  for (size_t start = 0; start < rows.size(); start += static_cast<size_t>(f.seeds)) {
    const SweepPoint& p = rows[start].point;
    Metrics mean;
    Metrics sd;
    for (int k = 0; k < kNumMetrics; ++k) {
      if (!rows[start].metrics[k]) continue;
      double sum = 0;
      for (int s = 0; s < f.seeds; ++s) sum += *rows[start + s].metrics[k];
      const double mu = sum / f.seeds;
      double ss = 0;
      for (int s = 0; s < f.seeds; ++s) {
        const double d = *rows[start + s].metrics[k] - mu;
        ss += d * d;
      }
      mean[k] = mu;
      sd[k] = f.seeds > 1 ? std::sqrt(ss / (f.seeds - 1)) : 0.0;
    }
    os << "aggregate," << f.param << ',' << Fmt(p.value) << ',' << p.mech << ',' << p.aggr << ',';
    for (const auto& x : mean) os << ',' << Fmt(x);
    for (const auto& x : sd) os << ',' << Fmt(x);
    os << '\n';
  }
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"FL-Market: privacy-budget auctions, gradient aggregation, MBR training and "
               "federated learning simulation"};
  app.name("flmarket");
  app.footer(kSchemaHelp);
  app.set_config("--config", "", "INI/TOML config file with [subcommand] sections");
  app.require_subcommand(1);

  AuctionFlags auction;
  CLI::App* auction_cmd = app.add_subcommand("auction", "Run one auction and print the outcome");
  AddMarketFlags(auction_cmd, auction.market);
  AddCheckpointFlags(auction_cmd, auction.checkpoint);
  auction_cmd->add_option("--mech", auction.mech, "Auction: allin or murba")
      ->required()
      ->check(CLI::IsMember({"allin", "murba"}));
  auction_cmd->add_option("--profile", auction.profile, "Bid profile CSV instead of a generated one")
      ->check(CLI::ExistingFile);
  auction_cmd->add_option("--clip", auction.clip, "Clip bound L")->capture_default_str();
  auction_cmd->add_option("--out", auction.out, "Output CSV (stdout when omitted)");

  AggregateFlags aggregate;
  CLI::App* aggregate_cmd =
      app.add_subcommand("aggregate", "Aggregation weights and error bounds for given epsilons");
  aggregate_cmd->add_option("--aggr", aggregate.aggr, "Aggregation: biasopt or varopt")
      ->capture_default_str()
      ->check(CLI::IsMember({"biasopt", "varopt"}));
  aggregate_cmd->add_option("--eps", aggregate.eps, "Comma-separated privacy parameters")
      ->required()
      ->delimiter(',');
  aggregate_cmd->add_option("--clip", aggregate.clip, "Clip bound L")->capture_default_str();
  aggregate_cmd->add_option("--out", aggregate.out, "Output CSV (stdout when omitted)");

  TrainFlags train;
  CLI::App* train_cmd = app.add_subcommand("train-mbr", "Train an MBR model for MURBA");
  train_cmd->add_option("--n", train.n, "Number of data owners")->capture_default_str()->check(
      CLI::PositiveNumber);
  train_cmd->add_option("--m", train.m, "Sub-bids per owner M")->capture_default_str()->check(
      CLI::PositiveNumber);
  train_cmd->add_option("--scenario", train.scenario, "low (E=5) or high (E=2)")
      ->capture_default_str()
      ->check(CLI::IsMember({"low", "high"}));
  train_cmd->add_option("--epochs", train.epochs, "Training epochs")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  train_cmd->add_option("--batches", train.batches, "Batches per epoch T")->capture_default_str();
  train_cmd->add_option("--batch-size", train.batch_size, "Profiles per batch K")
      ->capture_default_str();
  train_cmd->add_option("--hidden", train.hidden, "Hidden layer widths")
      ->capture_default_str()
      ->delimiter(',');
  train_cmd->add_option("--lr", train.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--br-iterations", train.br_iterations, "Best-response steps R")
      ->capture_default_str();
  train_cmd->add_option("--br-step", train.br_step, "Best-response step size")
      ->capture_default_str();
  train_cmd->add_option("--multiplier-period", train.multiplier_period,
                        "Iterations between multiplier updates Q")
      ->capture_default_str();
  train_cmd->add_option("--budget-low", train.budget_low, "Lowest training budget")
      ->capture_default_str();
  train_cmd->add_option("--budget-high", train.budget_high, "Highest training budget")
      ->capture_default_str();
  train_cmd->add_option("--clip", train.clip, "Clip bound L")->capture_default_str();
  train_cmd->add_option("--seed", train.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--eval-profiles", train.eval_profiles,
                        "Held-out profiles evaluated into the metadata (0 skips)")
      ->capture_default_str();
  train_cmd->add_option("--out", train.out_dir, "Checkpoint directory")->capture_default_str();

  SimFlags sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Run a multi-round FL-Market simulation");
  AddMarketFlags(sim_cmd, sim.market);
  AddCheckpointFlags(sim_cmd, sim.checkpoint);
  AddDataFlags(sim_cmd, sim.data);
  sim_cmd->add_option("--mech", sim.mech, "Auction: allin or murba")
      ->capture_default_str()
      ->check(CLI::IsMember({"allin", "murba"}));
  sim_cmd->add_option("--aggr", sim.aggr, "Aggregation: biasopt or varopt")
      ->capture_default_str()
      ->check(CLI::IsMember({"biasopt", "varopt"}));
  sim_cmd->add_option("--rounds", sim.rounds, "Training rounds")->capture_default_str();
  sim_cmd->add_option("--lr", sim.lr, "Learning rate")->capture_default_str();
  sim_cmd->add_option("--clip", sim.clip, "Clip bound L")->capture_default_str();
  sim_cmd->add_flag("--noiseless", sim.noiseless,
                    "All owners win, no perturbation, uniform weights");
  sim_cmd->add_option("--run-id", sim.run_id, "run_id column value")->capture_default_str();
  sim_cmd->add_option("--out", sim.out, "Output CSV (stdout when omitted)");

  SweepFlags sweep;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Sweep budget, n or M over seeds");
  AddMarketFlags(sweep_cmd, sweep.market);
  AddCheckpointFlags(sweep_cmd, sweep.checkpoint);
  AddDataFlags(sweep_cmd, sweep.data);
  sweep_cmd->add_option("--param", sweep.param, "Swept parameter: budget, n or m")
      ->required()
      ->check(CLI::IsMember({"budget", "n", "m"}));
  sweep_cmd->add_option("--grid", sweep.grid, "Comma-separated parameter values")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep.seeds, "Seeds per point (seed, seed+1, ...)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--mech", sweep.mechs, "Auctions, comma-separated")
      ->capture_default_str()
      ->delimiter(',')
      ->check(CLI::IsMember({"allin", "murba"}));
  sweep_cmd->add_option("--aggr", sweep.aggrs, "Aggregations, comma-separated")
      ->capture_default_str()
      ->delimiter(',')
      ->check(CLI::IsMember({"biasopt", "varopt"}));
  sweep_cmd->add_option("--rounds", sweep.rounds, "Training rounds per run")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--lr", sweep.lr, "Learning rate")->capture_default_str();
  sweep_cmd->add_option("--clip", sweep.clip, "Clip bound L")->capture_default_str();
  sweep_cmd->add_option("--eval-profiles", sweep.eval_profiles,
                        "Held-out profiles for murba regret/IR columns (0 skips)")
      ->capture_default_str();
  sweep_cmd->add_option("--jobs", sweep.jobs, "Worker threads")->capture_default_str()->check(
      CLI::PositiveNumber);
  sweep_cmd->add_option("--out", sweep.out, "Output CSV (stdout when omitted)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (auction_cmd->parsed()) RunAuction(auction, out, err);
    if (aggregate_cmd->parsed()) RunAggregate(aggregate, out);
    if (train_cmd->parsed()) RunTrain(train, out, err);
    if (sim_cmd->parsed()) RunSimulate(sim, out);
    if (sweep_cmd->parsed()) RunSweep(sweep, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace flmarket::cli
