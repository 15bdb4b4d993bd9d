#include "fhdp/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace fhdp {

namespace {

/// Forward pass keeping pre- and post-activation caches for backprop.
struct ForwardCache {
  std::vector<Eigen::VectorXd> activations;      // a_0 = x .. a_L = output
  std::vector<Eigen::VectorXd> pre_activations;  // z_1 .. z_L
};

ForwardCache forward_cached(const ValueFunction& vf, const Eigen::VectorXd& x) {
  ForwardCache cache;
  cache.activations.push_back(x);
  const auto& W = vf.weights();
  const auto& b = vf.biases();
  for (std::size_t l = 0; l < W.size(); ++l) {
    Eigen::VectorXd z = W[l] * cache.activations.back() + b[l];
    cache.pre_activations.push_back(z);
    if (l + 1 < W.size())
      cache.activations.push_back(z.cwiseMax(0.0));
    else
      cache.activations.push_back(z);
  }
  return cache;
}

int masked_argmax(const Eigen::VectorXd& values,
                  const std::vector<std::uint8_t>& mask) {
  int best = -1;
  for (int a = 0; a < values.size(); ++a) {
    if (a >= static_cast<int>(mask.size()) || !mask[a]) continue;
    if (best < 0 || values(a) > values(best)) best = a;
  }
  return best;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0)
    throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (buffer_.size() == capacity_) buffer_.pop_front();
  buffer_.push_back(std::move(t));
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch_size,
                                                    std::mt19937_64& rng) const {
  if (buffer_.empty())
    throw std::invalid_argument("ReplayBuffer: sampling from empty buffer");
  std::size_t n = buffer_.size();
  std::size_t k = std::min(batch_size, n);
  // Partial Fisher-Yates over an index vector: k distinct indices.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<const Transition*> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.push_back(&buffer_[idx[i]]);
  }
  return out;
}

ValueFunction::ValueFunction(int state_dim, int action_count,
                             std::vector<int> hidden, std::uint64_t seed)
    : state_dim_(state_dim), action_count_(action_count), hidden_(std::move(hidden)) {
  if (state_dim < 1 || action_count < 1)
    throw std::invalid_argument("ValueFunction: dimensions must be positive");
  for (int h : hidden_)
    if (h < 1) throw std::invalid_argument("ValueFunction: bad hidden width");
  std::mt19937_64 rng(mix_seed(seed));
  std::vector<int> sizes;
  sizes.push_back(state_dim_);
  for (int h : hidden_) sizes.push_back(h);
  sizes.push_back(action_count_);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    int fan_in = sizes[l], fan_out = sizes[l + 1];
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / fan_in));
    Eigen::MatrixXd W(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) W(i, j) = init(rng);
    weights_.push_back(std::move(W));
    biases_.push_back(Eigen::VectorXd::Zero(fan_out));
  }
}

Eigen::VectorXd ValueFunction::values(const Eigen::VectorXd& state) const {
  if (state.size() != state_dim_)
    throw std::invalid_argument("ValueFunction: state dimension mismatch");
  return forward_cached(*this, state).activations.back();
}

int ValueFunction::parameter_count() const {
  int n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    n += static_cast<int>(weights_[l].size() + biases_[l].size());
  return n;
}

Eigen::VectorXd ValueFunction::flat_parameters() const {
  Eigen::VectorXd flat(parameter_count());
  int offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    int wn = static_cast<int>(weights_[l].size());
    flat.segment(offset, wn) =
        Eigen::Map<const Eigen::VectorXd>(weights_[l].data(), wn);
    offset += wn;
    int bn = static_cast<int>(biases_[l].size());
    flat.segment(offset, bn) = biases_[l];
    offset += bn;
  }
  return flat;
}

void ValueFunction::set_flat_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count())
    throw std::invalid_argument("ValueFunction: parameter count mismatch");
  int offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    int wn = static_cast<int>(weights_[l].size());
    Eigen::Map<Eigen::VectorXd>(weights_[l].data(), wn) = flat.segment(offset, wn);
    offset += wn;
    int bn = static_cast<int>(biases_[l].size());
    biases_[l] = flat.segment(offset, bn);
    offset += bn;
  }
}

bool ValueFunction::finite() const {
  for (const auto& W : weights_)
    if (!W.allFinite()) return false;
  for (const auto& b : biases_)
    if (!b.allFinite()) return false;
  return true;
}

int select_action(const ValueFunction& vf, const Eigen::VectorXd& state,
                  const std::vector<std::uint8_t>& mask, double epsilon,
                  std::mt19937_64& rng) {
  std::vector<int> feasible;
  for (std::size_t a = 0; a < mask.size(); ++a)
    if (mask[a]) feasible.push_back(static_cast<int>(a));
  if (feasible.empty())
    throw std::invalid_argument("select_action: empty feasible mask");
  // Always draw the exploration coin so the rng stream advances uniformly.
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, feasible.size() - 1);
    return feasible[pick(rng)];
  }
  Eigen::VectorXd q = vf.values(state);
  return masked_argmax(q, mask);
}

double double_q_target(const ValueFunction& online, const ValueFunction& target,
                       const Transition& t, double gamma) {
  if (t.terminal) return t.reward;
  Eigen::VectorXd q_online = online.values(t.next_state);
  int a_star = masked_argmax(q_online, t.next_mask);
  if (a_star < 0) return t.reward;  // dead end treated as terminal
  Eigen::VectorXd q_target = target.values(t.next_state);
  return t.reward + gamma * q_target(a_star);
}

std::pair<double, Eigen::VectorXd> td_loss_and_gradient(
    const ValueFunction& online, const ValueFunction& target,
    const std::vector<const Transition*>& batch, double gamma) {
  if (batch.empty())
    throw std::invalid_argument("td_loss_and_gradient: empty batch");
  const auto& W = online.weights();
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
  for (std::size_t l = 0; l < W.size(); ++l) {
    dW.push_back(Eigen::MatrixXd::Zero(W[l].rows(), W[l].cols()));
    db.push_back(Eigen::VectorXd::Zero(W[l].rows()));
  }

  double loss = 0.0;
  double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const Transition* t : batch) {
    if (t->action < 0 || t->action >= online.action_count())
      throw std::invalid_argument("td_loss_and_gradient: action out of range");
    ForwardCache cache = forward_cached(online, t->state);
    double predicted = cache.activations.back()(t->action);
    double y = double_q_target(online, target, *t, gamma);
    double err = predicted - y;
    loss += err * err * inv_b;

    // Backward pass: only the selected action's output carries error.
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(online.action_count());
    delta(t->action) = 2.0 * err * inv_b;
    for (int l = static_cast<int>(W.size()) - 1; l >= 0; --l) {
      dW[l] += delta * cache.activations[l].transpose();
      db[l] += delta;
      if (l > 0) {
        Eigen::VectorXd upstream = W[l].transpose() * delta;
        // ReLU derivative on the previous layer's pre-activation.
        delta = (cache.pre_activations[l - 1].array() > 0.0)
                    .select(upstream.array(), 0.0)
                    .matrix();
      }
    }
  }

  Eigen::VectorXd flat(online.parameter_count());
  int offset = 0;
  for (std::size_t l = 0; l < W.size(); ++l) {
    int wn = static_cast<int>(dW[l].size());
    flat.segment(offset, wn) = Eigen::Map<const Eigen::VectorXd>(dW[l].data(), wn);
    offset += wn;
    int bn = static_cast<int>(db[l].size());
    flat.segment(offset, bn) = db[l];
    offset += bn;
  }
  return {loss, flat};
}

Optimizer::Optimizer(OptimizerConfig config, int parameter_count)
    : config_(config),
      m_(Eigen::VectorXd::Zero(parameter_count)),
      v_(Eigen::VectorXd::Zero(parameter_count)) {
  if (config.learning_rate <= 0.0)
    throw std::invalid_argument("Optimizer: learning rate must be positive");
}

void Optimizer::step(ValueFunction& vf, const Eigen::VectorXd& gradient) {
  if (gradient.size() != m_.size())
    throw std::invalid_argument("Optimizer: gradient size mismatch");
  Eigen::VectorXd params = vf.flat_parameters();
  if (config_.kind == OptimizerKind::kSgd) {
    params -= config_.learning_rate * gradient;
  } else {
    ++t_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * gradient;
    v_ = config_.beta2 * v_ +
         (1.0 - config_.beta2) * gradient.cwiseProduct(gradient);
    double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    Eigen::VectorXd m_hat = m_ / bias1;
    Eigen::VectorXd v_hat = v_ / bias2;
    params -= config_.learning_rate *
              (m_hat.array() / (v_hat.array().sqrt() + config_.epsilon)).matrix();
  }
  vf.set_flat_parameters(params);
}

double update(ValueFunction& online, const ValueFunction& target,
              const std::vector<const Transition*>& batch, double gamma,
              Optimizer& optimizer) {
  auto [loss, gradient] = td_loss_and_gradient(online, target, batch, gamma);
  if (!std::isfinite(loss))
    throw training_error("update: non-finite loss");
  optimizer.step(online, gradient);
  if (!online.finite())
    throw training_error("update: parameters went non-finite");
  return loss;
}

void validate_train_params(const TrainParams& params) {
  if (params.episodes < 1)
    throw std::invalid_argument("TrainParams: episodes must be >= 1");
  if (params.batch_size < 1 || params.replay_capacity < params.batch_size)
    throw std::invalid_argument("TrainParams: bad replay/batch sizes");
  if (params.gamma < 0.0 || params.gamma > 1.0)
    throw std::invalid_argument("TrainParams: gamma must lie in [0,1]");
  if (params.epsilon_start < 0.0 || params.epsilon_start > 1.0 ||
      params.epsilon_end < 0.0 || params.epsilon_end > params.epsilon_start)
    throw std::invalid_argument("TrainParams: bad epsilon schedule");
  if (params.epsilon_decay_episodes < 1 || params.target_sync_interval < 1 ||
      params.updates_per_episode < 0)
    throw std::invalid_argument("TrainParams: bad schedule intervals");
}

double epsilon_at(const TrainParams& params, int episode) {
  double progress = std::min(
      1.0, static_cast<double>(episode) /
               static_cast<double>(params.epsilon_decay_episodes));
  return params.epsilon_start +
         (params.epsilon_end - params.epsilon_start) * progress;
}

TrainResult train(EpisodeEnv& env, const TrainParams& params) {
  validate_train_params(params);
  ValueFunction online(env.state_dim(), env.action_count(), params.hidden,
                       derive_seed(params.seed, "learner-init"));
  ValueFunction target = online;
  Optimizer optimizer(params.optimizer, online.parameter_count());
  ReplayBuffer replay(params.replay_capacity);
  auto rng_actions = make_rng(params.seed, "learner-actions");
  auto rng_replay = make_rng(params.seed, "learner-replay");

  TrainResult result;
  result.curve.reserve(params.episodes);
  for (int episode = 0; episode < params.episodes; ++episode) {
    if (episode % params.target_sync_interval == 0) target = online;
    double eps = epsilon_at(params, episode);

    env.reset(derive_seed(params.seed, "episode-" + std::to_string(episode)));
    double total_return = 0.0;
    while (!env.done()) {
      auto mask = env.feasible_mask();
      if (std::none_of(mask.begin(), mask.end(),
                       [](std::uint8_t m) { return m != 0; }))
        break;  // defensively treat a maskless state as episode end
      Eigen::VectorXd s = env.state();
      int a = select_action(online, s, mask, eps, rng_actions);
      double r = env.step(a);
      Transition t;
      t.state = std::move(s);
      t.action = a;
      t.reward = r;
      t.next_state = env.state();
      t.terminal = env.done();
      if (!t.terminal) t.next_mask = env.feasible_mask();
      replay.push(std::move(t));
      total_return += r;
    }
    if (!std::isfinite(total_return))
      throw training_error("train: non-finite episode return");

    double loss = 0.0;
    int updates_done = 0;
    for (int u = 0; u < params.updates_per_episode; ++u) {
      if (replay.size() < params.batch_size) break;
      loss += update(online, target,
                     replay.sample(params.batch_size, rng_replay), params.gamma,
                     optimizer);
      ++updates_done;
    }
    if (updates_done > 0) loss /= updates_done;
    result.curve.push_back({episode, total_return, loss, eps});
  }
  result.value_function = std::move(online);
  return result;
}

void save_value_function(const ValueFunction& vf, const std::string& metadata_json,
                         const std::string& path) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  doc["kind"] = "value_function";
  doc["state_dim"] = vf.state_dim();
  doc["action_count"] = vf.action_count();
  doc["hidden"] = vf.hidden();
  Eigen::VectorXd flat = vf.flat_parameters();
  std::vector<double> parameters(flat.data(), flat.data() + flat.size());
  doc["parameters"] = parameters;
  doc["metadata"] = metadata_json.empty()
                        ? nlohmann::ordered_json(nullptr)
                        : nlohmann::ordered_json::parse(metadata_json);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_value_function: cannot open " + path);
  out << doc.dump(2) << '\n';
}

LoadedValueFunction load_value_function(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_value_function: cannot open " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  if (doc.value("schema_version", 0) != 1 ||
      doc.value("kind", "") != "value_function")
    throw std::runtime_error("load_value_function: unrecognized checkpoint format");
  LoadedValueFunction loaded;
  loaded.value_function =
      ValueFunction(doc.at("state_dim").get<int>(),
                    doc.at("action_count").get<int>(),
                    doc.at("hidden").get<std::vector<int>>(), 0);
  auto parameters = doc.at("parameters").get<std::vector<double>>();
  loaded.value_function.set_flat_parameters(
      Eigen::Map<const Eigen::VectorXd>(parameters.data(), parameters.size()));
  if (!doc.at("metadata").is_null()) loaded.metadata_json = doc.at("metadata").dump();
  return loaded;
}

void write_learning_curve(const std::vector<EpisodePoint>& curve,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_learning_curve: cannot open " + path);
  out << "episode,return,loss,epsilon\n";
  for (const auto& p : curve)
    out << p.episode << ',' << format_double(p.total_return) << ','
        << format_double(p.loss) << ',' << format_double(p.epsilon) << '\n';
}

}  // namespace fhdp
