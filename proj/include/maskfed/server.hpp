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

// Server side of a round: broadcast the global FAM, let every client train
// locally, collect the uploads and average them. All traffic goes through the
// wire codec, so byte counts are exactly what a deployment would transmit.

#ifndef MASKFED_SERVER_HPP_
#define MASKFED_SERVER_HPP_

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <exception>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "maskfed/client.hpp"
#include "maskfed/error.hpp"
#include "maskfed/tensors.hpp"
#include "maskfed/wire_codec.hpp"

namespace maskfed {

// Uniform elementwise mean, summed in the given (ascending client) order.
inline TensorList Aggregate(const std::vector<TensorList>& uploads) {
  Require(!uploads.empty(), ErrorCode::kEmptyInput, "nothing to aggregate");
  const TensorList& ref = uploads.front();
  for (std::size_t i = 1; i < uploads.size(); ++i) {
    const auto& u = uploads[i];
    const std::string who = "client " + std::to_string(i);
    Require(u.size() == ref.size(), ErrorCode::kProtocol,
            who + " uploaded " + std::to_string(u.size()) + " tensors, expected " +
                std::to_string(ref.size()));
    for (std::size_t k = 0; k < ref.size(); ++k) {
      Require(u[k].name == ref[k].name && u[k].shape == ref[k].shape &&
                  u[k].values.size() == ref[k].values.size(),
              ErrorCode::kProtocol,
              who + " tensor '" + u[k].name + "' does not match '" +
                  ref[k].name + "'");
    }
  }
  TensorList out = ref;
  const double inv_n = 1.0 / static_cast<double>(uploads.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto& values = out[k].values;
    for (std::size_t e = 0; e < values.size(); ++e) {
      double acc = 0.0;
      for (const auto& u : uploads) acc += u[k].values[e];
      values[e] = acc * inv_n;
    }
  }
  return out;
}

struct ClientRoundRecord {
  int client = 0;
  EpochReport train;
  Metrics val;           // ensemble on the validation split
  Metrics val_fam_only;
  std::size_t bytes_up = 0;
  std::size_t bytes_down = 0;
};

struct PhaseTiming {
  double broadcast_s = 0.0;
  double local_s = 0.0;
  double aggregate_s = 0.0;
};

struct RoundReport {
  std::size_t round = 0;
  std::vector<ClientRoundRecord> clients;
  std::size_t bytes_up = 0;
  std::size_t bytes_down = 0;
  PhaseTiming timing;  // wall clock; not part of any deterministic output

  double MeanValAccuracy() const {
    if (clients.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& c : clients) acc += c.val.accuracy;
    return acc / static_cast<double>(clients.size());
  }
};

struct CommRecord {
  std::size_t round = 0;
  int client = 0;
  std::size_t bytes_up = 0;
  std::size_t bytes_down = 0;
};

class Server {
 public:
  Server(TensorList initial_fam, bool compress)
      : global_fam_(std::move(initial_fam)), compress_(compress) {}

  const TensorList& global_fam() const { return global_fam_; }
  std::size_t round() const { return round_; }
  const std::vector<CommRecord>& comm_log() const { return comm_log_; }
  bool compress() const { return compress_; }

  // One communication round. Client work runs on up to `threads` threads;
  // results do not depend on the thread count. Any client failure aborts the
  // round before aggregation.
  RoundReport RunRound(std::vector<Client>& clients, std::size_t threads = 1) {
    Require(!clients.empty(), ErrorCode::kEmptyInput, "round without clients");
    using Clock = std::chrono::steady_clock;
    RoundReport report;
    report.round = round_ + 1;

    auto t0 = Clock::now();
    const WirePacket broadcast = Pack(global_fam_, compress_);
    auto t1 = Clock::now();

    std::vector<WirePacket> uploads(clients.size());
    std::vector<ClientRoundRecord> records(clients.size());
    std::vector<std::exception_ptr> failures(clients.size());
    auto work = [&](std::size_t i) {
      try {
        Client& client = clients[i];
        client.ImportFam(Unpack(broadcast));
        records[i].client = client.id();
        records[i].bytes_down = broadcast.bytes.size();
        records[i].train = client.LocalEpoch();
        Evaluation val;
        try {
          val = client.Evaluate(Split::kVal);
        } catch (const Error& e) {
          // Banks are validated finite on load, so this is the update's fault.
          if (e.code() != ErrorCode::kInvalidInput) throw;
          throw Error(ErrorCode::kTrainingDiverged,
                      std::string("validation after local training: ") + e.what());
        }
        records[i].val = val.ensemble;
        records[i].val_fam_only = val.fam_only;
        uploads[i] = Pack(client.ExportFam(), compress_);
        records[i].bytes_up = uploads[i].bytes.size();
      } catch (...) {
        failures[i] = std::current_exception();
      }
    };
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, clients.size());
    if (workers == 1) {
      for (std::size_t i = 0; i < clients.size(); ++i) work(i);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t i = w; i < clients.size(); i += workers) work(i);
        });
      }
      for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < clients.size(); ++i) {
      if (!failures[i]) continue;
      try {
        std::rethrow_exception(failures[i]);
      } catch (const Error& e) {
        throw Error(e.code(), "round " + std::to_string(report.round) +
                                  " aborted, client " +
                                  std::to_string(clients[i].id()) + ": " +
                                  e.what());
      }
    }
    auto t2 = Clock::now();

    std::vector<TensorList> unpacked;
    unpacked.reserve(uploads.size());
    for (const auto& packet : uploads) unpacked.push_back(Unpack(packet));
    global_fam_ = Aggregate(unpacked);
    auto t3 = Clock::now();

    for (const auto& r : records) {
      report.bytes_up += r.bytes_up;
      report.bytes_down += r.bytes_down;
      comm_log_.push_back({report.round, r.client, r.bytes_up, r.bytes_down});
    }
    report.clients = std::move(records);
    const auto secs = [](auto a, auto b) {
      return std::chrono::duration<double>(b - a).count();
    };
    report.timing = {secs(t0, t1), secs(t1, t2), secs(t2, t3)};
    ++round_;
    return report;
  }

 private:
  TensorList global_fam_;
  bool compress_;
  std::size_t round_ = 0;
  std::vector<CommRecord> comm_log_;
};

// Round with the best mean client validation accuracy; ties go to the
// earliest round. Returns an index into `mean_val_accuracy`.
inline std::size_t BestCheckpoint(std::span<const double> mean_val_accuracy) {
  Require(!mean_val_accuracy.empty(), ErrorCode::kEmptyInput,
          "best checkpoint of empty history");
  std::size_t best = 0;
  for (std::size_t r = 1; r < mean_val_accuracy.size(); ++r) {
    if (mean_val_accuracy[r] > mean_val_accuracy[best]) best = r;
  }
  return best;
}

inline std::size_t BestCheckpoint(const std::vector<RoundReport>& history) {
  std::vector<double> acc;
  acc.reserve(history.size());
  for (const auto& r : history) acc.push_back(r.MeanValAccuracy());
  return BestCheckpoint(acc);
}

// FAM-only inference with the aggregated parameters (the global site has no
// private head).
inline Metrics GlobalEvaluate(const TensorList& global_fam,
                              const EmbeddingBank& bank,
                              const TrainingConfig& config) {
  Require(!bank.empty(), ErrorCode::kEmptyInput, "global bank is empty");
  FamModel fam(bank.dim);
  fam.SetMasking(config.mask_fam, config.mask_window);
  try {
    RestoreParameters(fam.Parameters(), global_fam);
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidInput,
                std::string("global FAM does not match bank dimension: ") +
                    e.what());
  }
  return ScoreProbabilities(FamProbabilities(fam, bank, config.tau), bank.labels);
}

}  // namespace maskfed

#endif  // MASKFED_SERVER_HPP_
