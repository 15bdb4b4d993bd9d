#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "fhdp/util.hpp"

namespace fhdp {

/// One learning step: (s, a, r, s') plus the feasible-action mask at s'.
struct Transition {
  Eigen::VectorXd state;
  int action = 0;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  std::vector<std::uint8_t> next_mask;
  bool terminal = false;
};

/// FIFO-bounded experience store; sampling is without replacement within
/// one batch.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Transition t);
  std::size_t size() const { return buffer_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::vector<const Transition*> sample(std::size_t batch_size,
                                        std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> buffer_;
};

/// Feed-forward state -> per-action value approximator: ReLU hidden layers,
/// linear output, He-initialized. Parameters are addressable as one flat
/// vector for optimization, serialization, and finite-difference checks.
class ValueFunction {
 public:
  ValueFunction() = default;
  ValueFunction(int state_dim, int action_count, std::vector<int> hidden,
                std::uint64_t seed);

  int state_dim() const { return state_dim_; }
  int action_count() const { return action_count_; }
  const std::vector<int>& hidden() const { return hidden_; }

  Eigen::VectorXd values(const Eigen::VectorXd& state) const;

  int parameter_count() const;
  Eigen::VectorXd flat_parameters() const;
  void set_flat_parameters(const Eigen::VectorXd& flat);
  bool finite() const;

  // Internals exposed for the backward pass.
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

 private:
  int state_dim_ = 0;
  int action_count_ = 0;
  std::vector<int> hidden_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

/// Epsilon-greedy over the feasible mask: with probability epsilon a
/// uniform feasible action, otherwise the feasible argmax (lowest index on
/// ties). Masked actions are never selected.
int select_action(const ValueFunction& vf, const Eigen::VectorXd& state,
                  const std::vector<std::uint8_t>& mask, double epsilon,
                  std::mt19937_64& rng);

/// Double-Q regression target for one transition:
/// y = r                                              when terminal,
/// y = r + gamma * Q_target(s', argmax_feasible Q_online(s', .)) otherwise.
double double_q_target(const ValueFunction& online, const ValueFunction& target,
                       const Transition& t, double gamma);

/// Mean squared TD error of a batch and its gradient with respect to the
/// online network's flat parameters. The gradient is exact (verified
/// against finite differences in tests).
std::pair<double, Eigen::VectorXd> td_loss_and_gradient(
    const ValueFunction& online, const ValueFunction& target,
    const std::vector<const Transition*>& batch, double gamma);

enum class OptimizerKind { kAdam, kSgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Stateful first-order optimizer over a ValueFunction's flat parameters.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, int parameter_count);
  void step(ValueFunction& vf, const Eigen::VectorXd& gradient);

 private:
  OptimizerConfig config_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

/// One optimizer step on the batch; returns the pre-step mean loss.
/// Throws training_error when the loss or parameters go non-finite.
double update(ValueFunction& online, const ValueFunction& target,
              const std::vector<const Transition*>& batch, double gamma,
              Optimizer& optimizer);

/// Episode environment contract for training: a finite-horizon MDP with a
/// per-state feasible-action mask.
class EpisodeEnv {
 public:
  virtual ~EpisodeEnv() = default;
  virtual int state_dim() const = 0;
  virtual int action_count() const = 0;
  virtual void reset(std::uint64_t episode_seed) = 0;
  virtual Eigen::VectorXd state() const = 0;
  virtual std::vector<std::uint8_t> feasible_mask() const = 0;
  virtual double step(int action) = 0;
  virtual bool done() const = 0;
};

struct TrainParams {
  int episodes = 3000;
  std::size_t replay_capacity = 50000;
  std::size_t batch_size = 64;
  double gamma = 1.0;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_decay_episodes = 3000;
  int target_sync_interval = 200;  // in episodes
  int updates_per_episode = 1;
  std::vector<int> hidden = {128, 128};
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
};

void validate_train_params(const TrainParams& params);

/// Exploration rate for a given episode under the linear decay schedule.
double epsilon_at(const TrainParams& params, int episode);

struct EpisodePoint {
  int episode = 0;
  double total_return = 0.0;
  double loss = 0.0;
  double epsilon = 0.0;
};

struct TrainResult {
  ValueFunction value_function;
  std::vector<EpisodePoint> curve;
};

/// Full training loop: per-episode rollouts into the replay buffer,
/// double-Q updates, periodic target sync. Bit-deterministic for a fixed
/// seed and parameter set on one platform.
TrainResult train(EpisodeEnv& env, const TrainParams& params);

/// Versioned JSON checkpoint (layer sizes, flat parameters, caller
/// metadata such as normalization bounds).
void save_value_function(const ValueFunction& vf, const std::string& metadata_json,
                         const std::string& path);
struct LoadedValueFunction {
  ValueFunction value_function;
  std::string metadata_json;
};
LoadedValueFunction load_value_function(const std::string& path);

/// CSV with header episode,return,loss,epsilon.
void write_learning_curve(const std::vector<EpisodePoint>& curve,
                          const std::string& path);

}  // namespace fhdp
