#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftl/losses.hpp"
#include "ftl/objectives.hpp"
#include "ftl/message.hpp"
#include "ftl/network.hpp"
#include "ftl/optim.hpp"

namespace ftl {

/// Elementwise unweighted mean of tensor sets, in the given order. Computed
/// as w₀ + Σᵢ(wᵢ − w₀)/m so identical inputs average to themselves exactly.
std::vector<Tensor> average_tensors(std::span<const std::vector<Tensor>> sets);

/// FedAvg over upload messages. Uploads are put in ascending client-id order
/// first, so the result does not depend on arrival order.
std::vector<Tensor> fedavg(std::span<const RoundMessage> uploads);

/// Client-side state: private data and BiMap stack, a copy of the shared
/// classifier, and the latest common-space samples received from peers.
class Client {
 public:
  Client(std::uint32_t id, std::vector<SpdMatrix> covs, std::vector<std::size_t> labels,
         ModelParams params, Schedule schedule, OptimizerOptions optimizer = {},
         double eps = kDefaultClampEps, std::vector<std::size_t> subjects = {});

  std::uint32_t id() const noexcept { return id_; }
  const ModelParams& params() const noexcept { return params_; }
  ModelParams& params() noexcept { return params_; }
  const Schedule& schedule() const noexcept { return schedule_; }
  Schedule& schedule() noexcept { return schedule_; }
  std::size_t epochs_trained() const noexcept { return epochs_trained_; }
  std::size_t trial_count() const noexcept { return covs_.size(); }

  /// Overwrites the shared classifier and caches the peers' domain blocks.
  void receive(const RoundMessage& broadcast);

  /// Domain weights against each peer, indexed by peer id then class.
  void set_domain_weights(std::vector<std::pair<std::uint32_t, std::vector<double>>> weights,
                          double sigma);

  struct LocalResult {
    RoundMessage upload;
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t epochs = 0;
  };

  /// Trains `epochs` full-batch epochs (both the BiMap stack and the shared
  /// classifier) and returns the upload for `round`. With zero epochs the
  /// loss is evaluated without updating.
  LocalResult local_update(std::uint64_t round, std::size_t epochs, bool share_domain);

  /// Upload carrying the current shared weights and, if requested, the
  /// per-class common-space samples.
  RoundMessage make_upload(std::uint64_t round, bool share_domain) const;

  double evaluate_accuracy(const std::vector<SpdMatrix>& covs,
                           const std::vector<std::size_t>& labels) const;

 private:
  std::vector<PeerDomain> peer_domains() const;

  std::uint32_t id_;
  std::vector<SpdMatrix> covs_;
  std::vector<std::size_t> labels_;
  std::vector<std::size_t> subjects_;  // subject index per trial; empty for one subject
  ModelParams params_;
  Schedule schedule_;
  OptimizerOptions optimizer_;
  double eps_;
  std::size_t epochs_trained_ = 0;
  std::vector<DomainBlock> peer_blocks_;
  std::vector<std::pair<std::uint32_t, std::vector<double>>> domain_weights_;
  double sigma_ = kDefaultKernelSigma;
};

struct ServerState {
  std::uint64_t round = 0;
  std::vector<Tensor> global_shared;
  std::vector<std::uint32_t> client_ids;  // ascending
  std::vector<DomainBlock> domain_cache;  // latest samples per client and class
};

struct FederatedOptions {
  std::size_t local_epochs = 1;
  std::size_t max_rounds = 2000;
  double stop_loss = 1.5;
  /// Exchange common-space samples and add the MMD domain term.
  bool domain_adaptation = true;
  double sigma = kDefaultKernelSigma;
  /// λ indexed by client position in ascending-id order; when absent every
  /// pair and class uses kDefaultDomainWeight.
  std::optional<LossWeights> weights;
  /// Train clients on separate threads within a round.
  bool parallel = false;
  /// When set, every broadcast is also written here as round_<t>.bin.
  std::optional<std::filesystem::path> snapshot_dir;
};

struct ClientRoundReport {
  std::uint32_t client_id = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t epochs = 0;
};

struct RoundReport {
  std::uint64_t round = 0;
  std::vector<ClientRoundReport> clients;  // ascending id
};

/// A client failed during a round; server and clients were restored to their
/// pre-round state.
class RoundAbortedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Registers the clients (ids must be unique), takes the global classifier
/// from the lowest-id client, broadcasts it, and collects initial domain
/// samples when domain adaptation is on.
ServerState init_federation(std::vector<Client>& clients, const FederatedOptions& options);

RoundMessage make_broadcast(const ServerState& server);

/// Broadcast, local training, upload, FedAvg, round counter increment.
RoundReport run_round(ServerState& server, std::vector<Client>& clients,
                      const FederatedOptions& options);

enum class FederatedStop { kThreshold, kMaxRounds };

struct FederatedHistory {
  std::vector<RoundReport> rounds;
  FederatedStop stop = FederatedStop::kMaxRounds;
};

/// A round aborted during run_federated_training; carries the completed rounds.
class FederatedTrainingError : public std::runtime_error {
 public:
  FederatedTrainingError(const std::string& what, FederatedHistory history)
      : std::runtime_error(what), history_(std::move(history)) {}

  const FederatedHistory& history() const noexcept { return history_; }

 private:
  FederatedHistory history_;
};

/// Runs rounds until every client's loss is below options.stop_loss or
/// options.max_rounds is reached, then broadcasts the final global
/// classifier to every client.
FederatedHistory run_federated_training(ServerState& server, std::vector<Client>& clients,
                                        const FederatedOptions& options);

}  // namespace ftl
