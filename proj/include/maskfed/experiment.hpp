// Copyright 2026 The maskfed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment driver: config schema, the multi-round run, and the emitted
// tables. Everything rendered here except the timing table is a pure function
// of the config, so reruns are byte-identical at any thread count.

#ifndef MASKFED_EXPERIMENT_HPP_
#define MASKFED_EXPERIMENT_HPP_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskfed/client.hpp"
#include "maskfed/datastore.hpp"
#include "maskfed/error.hpp"
#include "maskfed/server.hpp"
#include "maskfed/wire_codec.hpp"

namespace maskfed {

struct DataConfig {
  // Exactly one source: synthetic, explicit client bank files, or a pooled
  // bank split across clients with a Dirichlet partition.
  std::optional<SyntheticSpec> synthetic;
  std::vector<std::string> client_banks;
  std::string dirichlet_bank;
  std::size_t dirichlet_clients = 0;
  double dirichlet_alpha = 0.5;
  std::string global_bank;  // optional for file-based data
};

struct ExperimentConfig {
  DataConfig data;
  std::size_t rounds = 30;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool compression = true;
  std::string output_dir = "out";
  SplitSpec split;
  TrainingConfig training;
};

namespace config_detail {

using nlohmann::json;

inline void CheckKeys(const json& obj, const std::string& where,
                      std::initializer_list<const char*> allowed) {
  Require(obj.is_object(), ErrorCode::kConfig, where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    Require(ok.count(key) > 0, ErrorCode::kConfig,
            "unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void Read(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  const std::string path = where.empty() ? key : where + "." + key;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kConfig, "key '" + path + "' has the wrong type");
  }
}

inline void Positive(double v, const std::string& key) {
  Require(v > 0.0 && std::isfinite(v), ErrorCode::kConfig,
          "key '" + key + "' must be positive");
}

}  // namespace config_detail

// Parses the JSON config; `base_dir` resolves relative bank paths.
inline ExperimentConfig ParseExperimentConfig(
    const nlohmann::json& root, const std::filesystem::path& base_dir = {}) {
  using namespace config_detail;
  CheckKeys(root, "", {"data", "rounds", "seed", "threads", "compression",
                       "output_dir", "split", "training"});
  ExperimentConfig cfg;
  Read(root, "rounds", "", cfg.rounds);
  Read(root, "seed", "", cfg.seed);
  Read(root, "threads", "", cfg.threads);
  Read(root, "compression", "", cfg.compression);
  Read(root, "output_dir", "", cfg.output_dir);
  Require(cfg.threads >= 1, ErrorCode::kConfig, "key 'threads' must be >= 1");

  if (root.contains("split")) {
    const auto& s = root["split"];
    CheckKeys(s, "split", {"train", "val", "test"});
    Read(s, "train", "split", cfg.split.train);
    Read(s, "val", "split", cfg.split.val);
    Read(s, "test", "split", cfg.split.test);
    Require(std::abs(cfg.split.train + cfg.split.val + cfg.split.test - 1.0) <
                1e-9,
            ErrorCode::kConfig, "split fractions must sum to 1");
  }
  cfg.split.seed = cfg.seed;

  if (root.contains("training")) {
    const auto& t = root["training"];
    CheckKeys(t, "training",
              {"batch_size", "lambda", "temperature", "tau", "lr_fam", "lr_mlp",
               "gamma", "hidden", "mask_window", "mask_fam",
               "reset_fam_optimizer", "mlp_grad_to_fam", "optimizer"});
    auto& tr = cfg.training;
    Read(t, "batch_size", "training", tr.batch_size);
    Read(t, "lambda", "training", tr.lambda);
    Read(t, "temperature", "training", tr.temperature);
    Read(t, "tau", "training", tr.tau);
    Read(t, "lr_fam", "training", tr.lr_fam);
    Read(t, "lr_mlp", "training", tr.lr_mlp);
    Read(t, "gamma", "training", tr.gamma);
    Read(t, "hidden", "training", tr.hidden);
    Read(t, "mask_window", "training", tr.mask_window);
    Read(t, "mask_fam", "training", tr.mask_fam);
    Read(t, "reset_fam_optimizer", "training", tr.reset_fam_optimizer);
    Read(t, "mlp_grad_to_fam", "training", tr.mlp_grad_to_fam);
    if (t.contains("optimizer")) {
      const auto& o = t["optimizer"];
      CheckKeys(o, "training.optimizer", {"weight_decay", "beta1", "beta2", "eps"});
      Read(o, "weight_decay", "training.optimizer", tr.optimizer.weight_decay);
      Read(o, "beta1", "training.optimizer", tr.optimizer.beta1);
      Read(o, "beta2", "training.optimizer", tr.optimizer.beta2);
      Read(o, "eps", "training.optimizer", tr.optimizer.eps);
    }
  }
  const auto& tr = cfg.training;
  Require(tr.batch_size >= 1, ErrorCode::kConfig,
          "key 'training.batch_size' must be >= 1");
  Require(tr.hidden >= 1, ErrorCode::kConfig, "key 'training.hidden' must be >= 1");
  Require(tr.lambda >= 0.0, ErrorCode::kConfig, "key 'training.lambda' must be >= 0");
  Positive(tr.temperature, "training.temperature");
  Positive(tr.tau, "training.tau");
  Positive(tr.gamma, "training.gamma");
  Positive(tr.mask_window, "training.mask_window");
  Positive(tr.optimizer.eps, "training.optimizer.eps");
  Require(tr.lr_fam >= 0.0 && tr.lr_mlp >= 0.0, ErrorCode::kConfig,
          "learning rates must be >= 0");
  Require(tr.optimizer.beta1 > 0 && tr.optimizer.beta1 < 1 &&
              tr.optimizer.beta2 > 0 && tr.optimizer.beta2 < 1,
          ErrorCode::kConfig, "optimizer betas must lie in (0, 1)");
  Require(tr.optimizer.weight_decay >= 0.0, ErrorCode::kConfig,
          "key 'training.optimizer.weight_decay' must be >= 0");

  Require(root.contains("data"), ErrorCode::kConfig, "missing key 'data'");
  const auto& d = root["data"];
  CheckKeys(d, "data", {"synthetic", "clients", "global", "dirichlet"});
  const int sources = static_cast<int>(d.contains("synthetic")) +
                      static_cast<int>(d.contains("clients")) +
                      static_cast<int>(d.contains("dirichlet"));
  Require(sources == 1, ErrorCode::kConfig,
          "key 'data' needs exactly one of 'synthetic', 'clients', 'dirichlet'");
  const auto resolve = [&](const std::string& p, const std::string& key) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    Require(std::filesystem::exists(path), ErrorCode::kConfig,
            "key '" + key + "': bank file not found: " + path.string());
    return path.string();
  };
  if (d.contains("synthetic")) {
    const auto& s = d["synthetic"];
    CheckKeys(s, "data.synthetic",
              {"clients", "dim", "classes", "samples_per_client", "shift",
               "shift_strength", "noise", "seed"});
    SyntheticSpec spec;
    spec.seed = cfg.seed;
    std::string shift = ShiftModeName(spec.shift);
    Read(s, "clients", "data.synthetic", spec.clients);
    Read(s, "dim", "data.synthetic", spec.dim);
    Read(s, "classes", "data.synthetic", spec.classes);
    Read(s, "samples_per_client", "data.synthetic", spec.samples_per_client);
    Read(s, "shift", "data.synthetic", shift);
    Read(s, "shift_strength", "data.synthetic", spec.shift_strength);
    Read(s, "noise", "data.synthetic", spec.noise);
    Read(s, "seed", "data.synthetic", spec.seed);
    try {
      spec.shift = ParseShiftMode(shift);
    } catch (const Error&) {
      throw Error(ErrorCode::kConfig,
                  "key 'data.synthetic.shift': unknown mode '" + shift + "'");
    }
    Require(spec.classes >= 2 && spec.dim >= spec.classes && spec.clients >= 1 &&
                spec.samples_per_client >= 5,
            ErrorCode::kConfig, "key 'data.synthetic' has invalid sizes");
    cfg.data.synthetic = spec;
  }
  if (d.contains("clients")) {
    Require(d["clients"].is_array() && !d["clients"].empty(), ErrorCode::kConfig,
            "key 'data.clients' must be a nonempty array of paths");
    for (std::size_t i = 0; i < d["clients"].size(); ++i) {
      const std::string key = "data.clients[" + std::to_string(i) + "]";
      Require(d["clients"][i].is_string(), ErrorCode::kConfig,
              "key '" + key + "' must be a path");
      cfg.data.client_banks.push_back(
          resolve(d["clients"][i].get<std::string>(), key));
    }
  }
  if (d.contains("dirichlet")) {
    const auto& s = d["dirichlet"];
    CheckKeys(s, "data.dirichlet", {"bank", "clients", "alpha"});
    std::string bank;
    Read(s, "bank", "data.dirichlet", bank);
    cfg.data.dirichlet_bank = resolve(bank, "data.dirichlet.bank");
    Read(s, "clients", "data.dirichlet", cfg.data.dirichlet_clients);
    Read(s, "alpha", "data.dirichlet", cfg.data.dirichlet_alpha);
    Require(cfg.data.dirichlet_clients >= 2, ErrorCode::kConfig,
            "key 'data.dirichlet.clients' must be >= 2");
    Positive(cfg.data.dirichlet_alpha, "data.dirichlet.alpha");
  }
  if (d.contains("global")) {
    Require(d["global"].is_string(), ErrorCode::kConfig,
            "key 'data.global' must be a path");
    Require(!d.contains("synthetic"), ErrorCode::kConfig,
            "key 'data.global' is generated for synthetic data");
    cfg.data.global_bank = resolve(d["global"].get<std::string>(), "data.global");
  }
  return cfg;
}

inline ExperimentConfig LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path);
  Require(static_cast<bool>(in), ErrorCode::kConfig,
          "cannot open config " + path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfig, std::string("malformed config: ") + e.what());
  }
  return ParseExperimentConfig(
      root, std::filesystem::absolute(path).parent_path());
}

struct ClientSnapshot {
  EpochReport train;
  Metrics val;
  Metrics test;           // ensemble
  Metrics test_fam_only;
  Metrics test_mlp_only;
  std::size_t bytes_up = 0;
  std::size_t bytes_down = 0;
};

struct RoundSnapshot {
  std::size_t round = 0;  // 0 = initialization, before any training
  std::vector<ClientSnapshot> clients;
  std::optional<Metrics> global;
  double mean_val_accuracy = 0.0;
  PhaseTiming timing;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RoundSnapshot> rounds;
  std::size_t best_round = 0;
  std::size_t fam_parameters = 0;
  std::size_t fam_float32_bytes = 0;
  TensorList final_global_fam;
};

struct ExperimentData {
  std::vector<EmbeddingBank> clients;  // unsplit
  std::optional<EmbeddingBank> global;
};

inline ExperimentData LoadExperimentData(const ExperimentConfig& cfg) {
  ExperimentData out;
  if (cfg.data.synthetic) {
    auto synth = GenerateSynthetic(*cfg.data.synthetic);
    out.clients = std::move(synth.clients);
    out.global = std::move(synth.global);
  } else if (!cfg.data.client_banks.empty()) {
    for (const auto& p : cfg.data.client_banks) out.clients.push_back(LoadBank(p));
  } else {
    out.clients = DirichletPartition(LoadBank(cfg.data.dirichlet_bank),
                                     cfg.data.dirichlet_clients,
                                     cfg.data.dirichlet_alpha, cfg.seed);
  }
  if (!cfg.data.global_bank.empty()) out.global = LoadBank(cfg.data.global_bank);
  const std::size_t dim = out.clients.front().dim;
  for (const auto& b : out.clients) {
    Require(b.dim == dim, ErrorCode::kInvalidInput,
            "client banks disagree on feature dimension");
    Require(!b.empty(), ErrorCode::kInvalidInput, "client bank has no samples");
  }
  if (out.global) {
    Require(out.global->dim == dim, ErrorCode::kInvalidInput,
            "global bank feature dimension differs from client banks");
  }
  return out;
}

inline ExperimentResult RunExperiment(
    const ExperimentConfig& cfg,
    const std::function<void(const RoundSnapshot&)>& on_round = {}) {
  const ExperimentData data = LoadExperimentData(cfg);
  const std::size_t dim = data.clients.front().dim;

  FamModel initial_fam(dim);
  CounterRng fam_rng(cfg.seed, streams::kFamInit);
  initial_fam.Init(fam_rng);
  initial_fam.SetMasking(cfg.training.mask_fam, cfg.training.mask_window);

  std::vector<Client> clients;
  for (std::size_t k = 0; k < data.clients.size(); ++k) {
    auto split = SplitBank(data.clients[k], cfg.split);
    clients.emplace_back(static_cast<int>(k), initial_fam, std::move(split.train),
                         std::move(split.val), std::move(split.test),
                         cfg.training, cfg.seed);
  }
  Server server(SnapshotParameters(initial_fam.Parameters()), cfg.compression);

  ExperimentResult result;
  result.config = cfg;
  result.fam_parameters = initial_fam.ParameterCount();
  result.fam_float32_bytes = 4 * result.fam_parameters;

  const auto snapshot = [&](std::size_t round, const RoundReport* report) {
    RoundSnapshot snap;
    snap.round = round;
    for (std::size_t k = 0; k < clients.size(); ++k) {
      ClientSnapshot c;
      if (report != nullptr) {
        const auto& r = report->clients[k];
        c.train = r.train;
        c.val = r.val;
        c.bytes_up = r.bytes_up;
        c.bytes_down = r.bytes_down;
      } else {
        c.val = clients[k].Evaluate(Split::kVal).ensemble;
      }
      const auto test = clients[k].Evaluate(Split::kTest);
      c.test = test.ensemble;
      c.test_fam_only = test.fam_only;
      c.test_mlp_only = test.mlp_only;
      snap.mean_val_accuracy += c.val.accuracy;
      snap.clients.push_back(c);
    }
    snap.mean_val_accuracy /= static_cast<double>(clients.size());
    if (data.global) {
      snap.global = GlobalEvaluate(server.global_fam(), *data.global, cfg.training);
    }
    if (report != nullptr) snap.timing = report->timing;
    return snap;
  };

  result.rounds.push_back(snapshot(0, nullptr));
  if (on_round) on_round(result.rounds.back());
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    const RoundReport report = server.RunRound(clients, cfg.threads);
    result.rounds.push_back(snapshot(r, &report));
    if (on_round) on_round(result.rounds.back());
  }
  // Select among trained rounds; the initialization only if none ran.
  if (cfg.rounds == 0) {
    result.best_round = 0;
  } else {
    std::vector<double> acc;
    for (std::size_t r = 1; r < result.rounds.size(); ++r) {
      acc.push_back(result.rounds[r].mean_val_accuracy);
    }
    result.best_round = 1 + BestCheckpoint(acc);
  }
  result.final_global_fam = server.global_fam();
  return result;
}

namespace report_detail {

inline std::string Fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline std::string Pct(double v) { return Fixed(100.0 * v, 2); }

}  // namespace report_detail

// Mean of the per-client ensemble test accuracies and the global accuracy.
inline double AverageAccuracy(const RoundSnapshot& snap) {
  double total = 0.0;
  for (const auto& c : snap.clients) total += c.test.accuracy;
  std::size_t n = snap.clients.size();
  if (snap.global) {
    total += snap.global->accuracy;
    ++n;
  }
  return total / static_cast<double>(n);
}

struct CommTotals {
  std::size_t up = 0;
  std::size_t down = 0;
};

inline CommTotals CommThrough(const ExperimentResult& result, std::size_t round) {
  CommTotals t;
  for (std::size_t r = 1; r <= round && r < result.rounds.size(); ++r) {
    for (const auto& c : result.rounds[r].clients) {
      t.up += c.bytes_up;
      t.down += c.bytes_down;
    }
  }
  return t;
}

// One JSON object per round.
inline std::string RenderRoundLog(const ExperimentResult& result) {
  std::ostringstream out;
  for (const auto& snap : result.rounds) {
    nlohmann::json line;
    line["round"] = snap.round;
    line["mean_val_accuracy"] = snap.mean_val_accuracy;
    auto& arr = line["clients"] = nlohmann::json::array();
    for (std::size_t k = 0; k < snap.clients.size(); ++k) {
      const auto& c = snap.clients[k];
      arr.push_back({{"client", k},
                     {"loss_contrastive", c.train.contrastive},
                     {"loss_mlp", c.train.mlp},
                     {"loss_sim", c.train.similarity},
                     {"loss_total", c.train.total},
                     {"val_accuracy", c.val.accuracy},
                     {"val_f1", c.val.macro_f1},
                     {"val_ece", c.val.ece},
                     {"test_accuracy", c.test.accuracy},
                     {"test_f1", c.test.macro_f1},
                     {"test_ece", c.test.ece},
                     {"test_fam_accuracy", c.test_fam_only.accuracy},
                     {"test_mlp_accuracy", c.test_mlp_only.accuracy},
                     {"bytes_up", c.bytes_up},
                     {"bytes_down", c.bytes_down}});
    }
    if (snap.global) {
      line["global"] = {{"accuracy", snap.global->accuracy},
                        {"f1", snap.global->macro_f1},
                        {"ece", snap.global->ece}};
    }
    out << line.dump() << "\n";
  }
  return out.str();
}

// Long-format per-round metrics table.
inline std::string RenderMetricsCsv(const ExperimentResult& result) {
  using report_detail::Fixed;
  std::ostringstream out;
  out << "round,site,split,head,accuracy,macro_f1,ece\n";
  const auto row = [&](std::size_t round, const std::string& site,
                       const char* split, const char* head, const Metrics& m) {
    out << round << "," << site << "," << split << "," << head << ","
        << Fixed(m.accuracy) << "," << Fixed(m.macro_f1) << "," << Fixed(m.ece)
        << "\n";
  };
  for (const auto& snap : result.rounds) {
    for (std::size_t k = 0; k < snap.clients.size(); ++k) {
      const auto& c = snap.clients[k];
      const std::string site = "C" + std::to_string(k + 1);
      row(snap.round, site, "val", "ensemble", c.val);
      row(snap.round, site, "test", "ensemble", c.test);
      row(snap.round, site, "test", "fam", c.test_fam_only);
      row(snap.round, site, "test", "mlp", c.test_mlp_only);
    }
    if (snap.global) row(snap.round, "global", "test", "fam", *snap.global);
  }
  return out.str();
}

// Final table at the best-validation round, comma separated.
inline std::string RenderSummaryCsv(const ExperimentResult& result) {
  using report_detail::Fixed;
  const auto& snap = result.rounds[result.best_round];
  std::ostringstream out;
  out << "metric";
  for (std::size_t k = 0; k < snap.clients.size(); ++k) out << ",C" << k + 1;
  if (snap.global) out << ",global";
  out << ",AVG\n";
  const auto line = [&](const char* name, auto client_value, auto global_value) {
    out << name;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& c : snap.clients) {
      const double v = client_value(c);
      out << "," << Fixed(v);
      total += v;
      ++n;
    }
    if (snap.global) {
      const double v = global_value(*snap.global);
      out << "," << Fixed(v);
      total += v;
      ++n;
    }
    out << "," << Fixed(total / static_cast<double>(n)) << "\n";
  };
  line("accuracy", [](const ClientSnapshot& c) { return c.test.accuracy; },
       [](const Metrics& g) { return g.accuracy; });
  line("macro_f1", [](const ClientSnapshot& c) { return c.test.macro_f1; },
       [](const Metrics& g) { return g.macro_f1; });
  line("ece", [](const ClientSnapshot& c) { return c.test.ece; },
       [](const Metrics& g) { return g.ece; });
  line("fam_only_accuracy",
       [](const ClientSnapshot& c) { return c.test_fam_only.accuracy; },
       [](const Metrics& g) { return g.accuracy; });
  return out.str();
}

inline std::string RenderSummary(const ExperimentResult& result) {
  using report_detail::Pct;
  const auto& snap = result.rounds[result.best_round];
  std::ostringstream out;
  out << "rounds run: " << result.config.rounds
      << "   best validation round: " << result.best_round << "\n\n";
  out << "test metrics (%)  ";
  for (std::size_t k = 0; k < snap.clients.size(); ++k) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%8s", ("C" + std::to_string(k + 1)).c_str());
    out << buf;
  }
  if (snap.global) out << "  global";
  out << "     AVG\n";
  const auto line = [&](const char* name, auto client_value, auto global_value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%-17s", name);
    out << buf;
    double total = 0.0;
    std::size_t n = 0;
    const auto cell = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%8s", Pct(v).c_str());
      out << buf;
      total += v;
      ++n;
    };
    for (const auto& c : snap.clients) cell(client_value(c));
    if (snap.global) cell(global_value(*snap.global));
    std::snprintf(buf, sizeof(buf), "%8s", Pct(total / static_cast<double>(n)).c_str());
    out << buf << "\n";
  };
  line("accuracy", [](const ClientSnapshot& c) { return c.test.accuracy; },
       [](const Metrics& g) { return g.accuracy; });
  line("macro F1", [](const ClientSnapshot& c) { return c.test.macro_f1; },
       [](const Metrics& g) { return g.macro_f1; });
  line("ECE", [](const ClientSnapshot& c) { return c.test.ece; },
       [](const Metrics& g) { return g.ece; });
  line("FAM-only acc", [](const ClientSnapshot& c) { return c.test_fam_only.accuracy; },
       [](const Metrics& g) { return g.accuracy; });

  const auto to_best = CommThrough(result, result.best_round);
  const auto total = CommThrough(result, result.config.rounds);
  out << "\ncommunication\n";
  out << "  FAM parameters:              " << result.fam_parameters << "\n";
  out << "  FAM float32 size (bytes):    " << result.fam_float32_bytes << "\n";
  if (result.rounds.size() > 1) {
    const auto& c0 = result.rounds[1].clients.front();
    out << "  round-1 packet (bytes):      down " << c0.bytes_down << ", up "
        << c0.bytes_up << "\n";
  }
  out << "  bytes to best round:         up " << to_best.up << ", down "
      << to_best.down << ", total " << to_best.up + to_best.down << "\n";
  out << "  bytes over all rounds:       up " << total.up << ", down " << total.down
      << ", total " << total.up + total.down << "\n";
  out << "  compression:                 "
      << (result.config.compression ? "float16 + zlib" : "float32 (off)") << "\n";
  out << "computation: wall-clock per phase in timing.csv\n";
  return out.str();
}

inline std::string RenderTimingCsv(const ExperimentResult& result) {
  using report_detail::Fixed;
  std::ostringstream out;
  out << "round,broadcast_s,local_s,aggregate_s\n";
  for (std::size_t r = 1; r < result.rounds.size(); ++r) {
    const auto& t = result.rounds[r].timing;
    out << r << "," << Fixed(t.broadcast_s) << "," << Fixed(t.local_s) << ","
        << Fixed(t.aggregate_s) << "\n";
  }
  return out.str();
}

inline void WriteTextFile(const std::filesystem::path& path,
                          const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  Require(static_cast<bool>(out), ErrorCode::kInvalidInput,
          "cannot write " + path.string());
  out << text;
}

inline void WriteExperimentOutputs(const ExperimentResult& result,
                                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  WriteTextFile(dir / "rounds.ndjson", RenderRoundLog(result));
  WriteTextFile(dir / "metrics.csv", RenderMetricsCsv(result));
  WriteTextFile(dir / "summary.csv", RenderSummaryCsv(result));
  WriteTextFile(dir / "summary.txt", RenderSummary(result));
  WriteTextFile(dir / "timing.csv", RenderTimingCsv(result));
  WritePacketFile((dir / "global_fam.fmc").string(),
                  Pack(result.final_global_fam, result.config.compression));
}

}  // namespace maskfed

#endif  // MASKFED_EXPERIMENT_HPP_
