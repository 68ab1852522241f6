#include "ftl/federated.hpp"

#include <algorithm>
#include <future>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include "ftl/objectives.hpp"

namespace ftl {

std::vector<Tensor> average_tensors(std::span<const std::vector<Tensor>> sets) {
  if (sets.empty()) throw std::invalid_argument("fedavg: no uploads");
  const auto& first = sets.front();
  for (const auto& set : sets) {
    if (set.size() != first.size()) throw std::invalid_argument("fedavg: tensor count mismatch");
    for (std::size_t t = 0; t < set.size(); ++t) {
      if (!set[t].same_shape(first[t]) || set[t].values.size() != first[t].values.size()) {
        throw std::invalid_argument("fedavg: shape mismatch in tensor " + std::to_string(t));
      }
    }
  }
  const auto m = static_cast<double>(sets.size());
  std::vector<Tensor> out = first;
  for (std::size_t t = 0; t < out.size(); ++t) {
    for (std::size_t k = 0; k < out[t].values.size(); ++k) {
      const double base = first[t].values[k];
      double delta = 0.0;
      for (const auto& set : sets) delta += set[t].values[k] - base;
      out[t].values[k] = base + delta / m;
    }
  }
  return out;
}

std::vector<Tensor> fedavg(std::span<const RoundMessage> uploads) {
  std::vector<const RoundMessage*> ordered;
  for (const auto& u : uploads) ordered.push_back(&u);
  std::sort(ordered.begin(), ordered.end(),
            [](const RoundMessage* a, const RoundMessage* b) { return a->client_id < b->client_id; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->client_id == ordered[i - 1]->client_id) {
      throw std::invalid_argument("fedavg: duplicate upload from client " +
                                  std::to_string(ordered[i]->client_id));
    }
  }
  std::vector<std::vector<Tensor>> sets;
  sets.reserve(ordered.size());
  for (const auto* u : ordered) sets.push_back(u->shared);
  return average_tensors(sets);
}

Client::Client(std::uint32_t id, std::vector<SpdMatrix> covs, std::vector<std::size_t> labels,
               ModelParams params, Schedule schedule, OptimizerOptions optimizer, double eps,
               std::vector<std::size_t> subjects)
    : id_(id), covs_(std::move(covs)), labels_(std::move(labels)), subjects_(std::move(subjects)),
      params_(std::move(params)),
      schedule_(schedule), optimizer_(optimizer), eps_(eps) {
  if (covs_.empty()) throw std::invalid_argument("client " + std::to_string(id) + " has no data");
  if (covs_.size() != labels_.size()) {
    throw std::invalid_argument("client " + std::to_string(id) + ": covariances and labels differ");
  }
  if (!subjects_.empty() && subjects_.size() != covs_.size()) {
    throw std::invalid_argument("client " + std::to_string(id) + ": subject indices and trials differ");
  }
  validate_params(params_);
  for (const auto& c : covs_) {
    if (c.dim() != params_.input_dim()) {
      throw std::invalid_argument("client " + std::to_string(id) + ": covariance dim " +
                                  std::to_string(c.dim()) + " but first BiMap expects " +
                                  std::to_string(params_.input_dim()));
    }
  }
}

void Client::receive(const RoundMessage& broadcast) {
  if (broadcast.direction != Direction::kBroadcast) {
    throw std::invalid_argument("client " + std::to_string(id_) + " received a non-broadcast");
  }
  assign_shared(broadcast.shared, params_.shared);
  peer_blocks_.clear();
  for (const auto& block : broadcast.domain)
    if (block.client_id != id_) peer_blocks_.push_back(block);
}

void Client::set_domain_weights(std::vector<std::pair<std::uint32_t, std::vector<double>>> weights,
                                double sigma) {
  domain_weights_ = std::move(weights);
  sigma_ = sigma;
}

std::vector<PeerDomain> Client::peer_domains() const {
  std::vector<PeerDomain> peers;
  for (const auto& [peer_id, lambda] : domain_weights_) {
    PeerDomain peer{ClassSamples(params_.num_classes()), lambda};
    bool any = false;
    for (const auto& block : peer_blocks_) {
      if (block.client_id != peer_id || block.label >= peer.samples.size()) continue;
      auto samples = unpack_samples(block.samples);
      auto& dst = peer.samples[block.label];
      dst.insert(dst.end(), samples.begin(), samples.end());
      any = true;
    }
    if (any) peers.push_back(std::move(peer));
  }
  return peers;
}

Client::LocalResult Client::local_update(std::uint64_t round, std::size_t epochs,
                                         bool share_domain) {
  ClassificationObjective classification(covs_, labels_, eps_, subjects_);
  auto peers = share_domain ? peer_domains() : std::vector<PeerDomain>{};
  std::unique_ptr<Objective> objective;
  if (peers.empty()) {
    objective = std::make_unique<ClassificationObjective>(std::move(classification));
  } else {
    objective = std::make_unique<DomainAdaptedObjective>(std::move(classification),
                                                         std::move(peers), sigma_);
  }

  LocalResult result;
  result.epochs = epochs;
  if (epochs == 0) {
    ModelGradients scratch = ModelGradients::zeros_like(params_);
    const auto r = objective->evaluate(params_, scratch);
    result.loss = r.loss;
    result.accuracy = r.accuracy;
  } else {
    const auto report =
        train_epochs(params_, *objective, schedule_, epochs, optimizer_, epochs_trained_);
    epochs_trained_ += epochs;
    result.loss = report.epochs.back().loss;
    result.accuracy = report.epochs.back().accuracy;
  }
  result.upload = make_upload(round, share_domain);
  return result;
}

RoundMessage Client::make_upload(std::uint64_t round, bool share_domain) const {
  RoundMessage msg{Direction::kUpload, round, id_, shared_tensors(params_.shared), {}};
  if (share_domain) {
    const auto by_class = reduce_by_class(params_, covs_, labels_, params_.num_classes(), eps_);
    for (std::size_t y = 0; y < by_class.size(); ++y) {
      if (by_class[y].empty()) continue;
      msg.domain.push_back(DomainBlock{id_, static_cast<std::uint32_t>(y),
                                       pack_samples(by_class[y], params_.common_dim())});
    }
  }
  return msg;
}

double Client::evaluate_accuracy(const std::vector<SpdMatrix>& covs,
                                 const std::vector<std::size_t>& labels) const {
  return accuracy(params_, covs, labels, eps_);
}

namespace {

std::vector<std::size_t> id_order(const std::vector<Client>& clients) {
  std::vector<std::size_t> order(clients.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return clients[a].id() < clients[b].id(); });
  return order;
}

std::vector<DomainBlock> collect_domain(std::vector<RoundMessage> uploads) {
  std::sort(uploads.begin(), uploads.end(),
            [](const RoundMessage& a, const RoundMessage& b) { return a.client_id < b.client_id; });
  std::vector<DomainBlock> blocks;
  for (auto& u : uploads)
    for (auto& b : u.domain) blocks.push_back(std::move(b));
  return blocks;
}

}  // namespace

ServerState init_federation(std::vector<Client>& clients, const FederatedOptions& options) {
  if (clients.empty()) throw std::invalid_argument("init_federation: no clients");
  const auto order = id_order(clients);
  ServerState server;
  for (std::size_t idx : order) {
    if (!server.client_ids.empty() && server.client_ids.back() == clients[idx].id()) {
      throw std::invalid_argument("init_federation: duplicate client id " +
                                  std::to_string(clients[idx].id()));
    }
    server.client_ids.push_back(clients[idx].id());
  }
  const auto& reference = clients[order.front()].params().shared;
  for (const auto& c : clients) {
    if (c.params().shared.weight.rows() != reference.weight.rows() ||
        c.params().shared.weight.cols() != reference.weight.cols()) {
      throw std::invalid_argument(
          "init_federation: shared classifier shapes differ across clients (common-space "
          "dimensions must agree)");
    }
  }
  server.global_shared = shared_tensors(reference);

  const std::size_t m = clients.size();
  const std::size_t classes = reference.out_dim();
  const LossWeights weights = options.weights.value_or(LossWeights(m, classes));
  if (weights.clients() < m || weights.classes() < classes) {
    throw std::invalid_argument("init_federation: loss weights cover too few clients or classes");
  }
  for (std::size_t pi = 0; pi < m; ++pi) {
    std::vector<std::pair<std::uint32_t, std::vector<double>>> per_peer;
    for (std::size_t pj = 0; pj < m; ++pj) {
      if (pi == pj) continue;
      std::vector<double> lambda(classes);
      for (std::size_t y = 0; y < classes; ++y) lambda[y] = weights.at(pi, pj, y);
      per_peer.emplace_back(server.client_ids[pj], std::move(lambda));
    }
    clients[order[pi]].set_domain_weights(std::move(per_peer), options.sigma);
  }

  const RoundMessage initial = make_broadcast(server);
  for (auto& c : clients) c.receive(initial);
  if (options.domain_adaptation) {
    std::vector<RoundMessage> uploads;
    for (const auto& c : clients) uploads.push_back(c.make_upload(server.round, true));
    server.domain_cache = collect_domain(std::move(uploads));
  }
  return server;
}

RoundMessage make_broadcast(const ServerState& server) {
  return RoundMessage{Direction::kBroadcast, server.round, 0, server.global_shared,
                      server.domain_cache};
}

RoundReport run_round(ServerState& server, std::vector<Client>& clients,
                      const FederatedOptions& options) {
  const ServerState server_snapshot = server;
  const std::vector<Client> clients_snapshot = clients;
  try {
    if (clients.size() != server.client_ids.size()) {
      throw std::invalid_argument("client set does not match the registered clients");
    }
    const RoundMessage broadcast = make_broadcast(server);
    const std::string wire = serialize(broadcast);
    if (options.snapshot_dir) {
      std::ostringstream name;
      name << "round_" << std::setw(5) << std::setfill('0') << server.round << ".bin";
      save_message(broadcast, *options.snapshot_dir / name.str());
    }
    const RoundMessage received = deserialize(wire);

    auto work = [&](Client& c) {
      try {
        c.receive(received);
        return c.local_update(server.round, options.local_epochs, options.domain_adaptation);
      } catch (const std::exception& e) {
        throw std::runtime_error("client " + std::to_string(c.id()) + ": " + e.what());
      }
    };
    std::vector<Client::LocalResult> results(clients.size());
    if (options.parallel && clients.size() > 1) {
      std::vector<std::future<Client::LocalResult>> futures;
      for (auto& c : clients) futures.push_back(std::async(std::launch::async, work, std::ref(c)));
      std::exception_ptr first_error;
      for (std::size_t i = 0; i < futures.size(); ++i) {
        try {
          results[i] = futures[i].get();
        } catch (...) {
          if (!first_error) first_error = std::current_exception();
        }
      }
      if (first_error) std::rethrow_exception(first_error);
    } else {
      for (std::size_t i = 0; i < clients.size(); ++i) results[i] = work(clients[i]);
    }

    std::vector<RoundMessage> uploads;
    std::set<std::uint32_t> seen;
    for (const auto& r : results) {
      RoundMessage upload = deserialize(serialize(r.upload));
      if (upload.direction != Direction::kUpload || upload.round != server.round) {
        throw std::runtime_error("client " + std::to_string(upload.client_id) +
                                 " uploaded for the wrong round");
      }
      if (!std::binary_search(server.client_ids.begin(), server.client_ids.end(),
                              upload.client_id) ||
          !seen.insert(upload.client_id).second) {
        throw std::runtime_error("unexpected upload from client " +
                                 std::to_string(upload.client_id));
      }
      uploads.push_back(std::move(upload));
    }

    RoundReport report{server.round, {}};
    for (std::size_t idx : id_order(clients)) {
      report.clients.push_back(
          {clients[idx].id(), results[idx].loss, results[idx].accuracy, results[idx].epochs});
    }
    server.global_shared = fedavg(uploads);
    if (options.domain_adaptation) server.domain_cache = collect_domain(std::move(uploads));
    ++server.round;
    return report;
  } catch (const std::exception& e) {
    server = server_snapshot;
    clients = clients_snapshot;
    throw RoundAbortedError("round " + std::to_string(server.round) + " aborted: " + e.what());
  }
}

FederatedHistory run_federated_training(ServerState& server, std::vector<Client>& clients,
                                        const FederatedOptions& options) {
  if (options.max_rounds < 1) throw std::invalid_argument("max_rounds must be at least 1");
  FederatedHistory history;
  try {
    for (std::size_t r = 0; r < options.max_rounds; ++r) {
      history.rounds.push_back(run_round(server, clients, options));
      const auto& last = history.rounds.back();
      const bool converged = std::all_of(last.clients.begin(), last.clients.end(),
                                         [&](const auto& c) { return c.loss < options.stop_loss; });
      if (converged) {
        history.stop = FederatedStop::kThreshold;
        break;
      }
    }
  } catch (const RoundAbortedError& e) {
    throw FederatedTrainingError(e.what(), std::move(history));
  }
  const RoundMessage final_broadcast = make_broadcast(server);
  for (auto& c : clients) c.receive(final_broadcast);
  return history;
}

}  // namespace ftl
