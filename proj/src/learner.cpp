#include "evoscen/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "evoscen/errors.hpp"
#include "evoscen/models.hpp"

namespace evoscen {

Transition make_transition(const ObservationGrid& obs, const ActionPair& action, double reward,
                           const ObservationGrid& next_obs, bool done) {
  return {obs, action, reward, next_obs, done, modality_of(obs) == Modality::Adversarial};
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  if (data_.size() < capacity_) {
    data_.push_back(t);
    return;
  }
  data_[head_] = t;
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= data_.size()) throw ContractError("replay buffer index out of range");
  return data_[(head_ + i) % data_.size()];
}

const Transition& ReplayBuffer::sample(Rng& rng) const {
  if (data_.empty()) throw ContractError("sample from an empty replay buffer");
  return data_[rng.below(data_.size())];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<const Transition*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(&sample(rng));
  return out;
}

void Td3Config::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("td3: tau must be in (0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("td3: gamma must be in (0, 1)");
  if (batch == 0 || buffer_max < batch) throw ConfigError("td3: buffer_max must be at least batch");
  if (rounds < 0 || iters_per_round < 0 || policy_delay < 1 || hidden < 1) {
    throw ConfigError("td3: rounds, iters_per_round, policy_delay and hidden must be positive");
  }
  if (!(lr_actor > 0 && lr_critic1 > 0 && lr_critic2 > 0)) throw ConfigError("td3: learning rates must be positive");
  if (explore_sigma < 0 || target_noise < 0 || target_noise_clip < 0) throw ConfigError("td3: noise must be >= 0");
}

Td3Networks make_networks(Rng& rng, int hidden, int obs_size) {
  Td3Networks n;
  n.actor = Mlp::random({obs_size, hidden, hidden, kActionSize}, Activation::Relu, Activation::Tanh, rng);
  n.critic1 = Mlp::random({obs_size + kActionSize, hidden, hidden, 1}, Activation::Relu, Activation::Identity, rng);
  n.critic2 = Mlp::random({obs_size + kActionSize, hidden, hidden, 1}, Activation::Relu, Activation::Identity, rng);
  n.actor_target = n.actor;
  n.critic1_target = n.critic1;
  n.critic2_target = n.critic2;
  return n;
}

namespace {

const std::pair<const char*, Mlp Td3Networks::*> kCheckpointFiles[] = {
    {"actor.txt", &Td3Networks::actor},
    {"critic1.txt", &Td3Networks::critic1},
    {"critic2.txt", &Td3Networks::critic2},
    {"actor_target.txt", &Td3Networks::actor_target},
    {"critic1_target.txt", &Td3Networks::critic1_target},
    {"critic2_target.txt", &Td3Networks::critic2_target},
};

Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd x(top.rows() + bottom.rows(), top.cols());
  x << top, bottom;
  return x;
}

void check_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) throw DivergenceError(std::string("td3: non-finite ") + what + " loss");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Td3Networks& nets) {
  std::filesystem::create_directories(dir);
  for (const auto& [file, member] : kCheckpointFiles) save_mlp(dir / file, nets.*member);
}

Td3Networks load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("checkpoint directory " + dir.string() + " not found");
  Td3Networks nets;
  for (const auto& [file, member] : kCheckpointFiles) nets.*member = load_mlp(dir / file);
  if (!nets.actor.same_shape(nets.actor_target) || !nets.critic1.same_shape(nets.critic1_target) ||
      !nets.critic2.same_shape(nets.critic2_target) || !nets.critic1.same_shape(nets.critic2) ||
      nets.critic1.input_size() != nets.actor.input_size() + kActionSize ||
      nets.actor.output_size() != kActionSize || nets.critic1.output_size() != 1) {
    throw ConfigError("checkpoint " + dir.string() + ": inconsistent network shapes");
  }
  return nets;
}

Batch make_batch(const std::vector<const Transition*>& samples) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  Batch b;
  b.obs.resize(kObservationSize, n);
  b.next_obs.resize(kObservationSize, n);
  b.action.resize(kActionSize, n);
  b.reward.resize(n);
  b.done.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Transition& t = *samples[static_cast<std::size_t>(j)];
    b.obs.col(j) = flatten(t.obs);
    b.next_obs.col(j) = flatten(t.next_obs);
    b.action(0, j) = t.action.a_long;
    b.action(1, j) = t.action.a_lat;
    b.reward(j) = t.reward;
    b.done(j) = t.done ? 1.0 : 0.0;
  }
  return b;
}

LossGrad critic_loss(const Mlp& critic, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& action,
                     const Eigen::VectorXd& y) {
  Mlp::Tape tape;
  const Eigen::MatrixXd q = critic.forward(stack(obs, action), tape);
  const double n = static_cast<double>(y.size());
  const Eigen::RowVectorXd err = q.row(0) - y.transpose();
  LossGrad out;
  out.loss = err.squaredNorm() / n;
  out.grad = critic.backward(tape, (2.0 / n) * err);
  return out;
}

LossGrad actor_loss(const Mlp& actor, const Mlp& critic, const Eigen::MatrixXd& obs) {
  Mlp::Tape actor_tape, critic_tape;
  const Eigen::MatrixXd a = actor.forward(obs, actor_tape);
  const Eigen::MatrixXd q = critic.forward(stack(obs, a), critic_tape);
  const double n = static_cast<double>(obs.cols());
  LossGrad out;
  out.loss = -q.sum() / n;
  Eigen::MatrixXd grad_input;
  critic.backward(critic_tape, Eigen::MatrixXd::Constant(1, obs.cols(), -1.0 / n), &grad_input);
  out.grad = actor.backward(actor_tape, grad_input.bottomRows(a.rows()));
  return out;
}

TargetValues td3_targets(const Td3Networks& nets, const Batch& batch, const Td3Config& cfg, Rng& rng) {
  Eigen::MatrixXd a = nets.actor_target.forward(batch.next_obs);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double eps = std::clamp(rng.normal(0.0, cfg.target_noise), -cfg.target_noise_clip, cfg.target_noise_clip);
      a(i, j) = std::clamp(a(i, j) + eps, -1.0, 1.0);
    }
  }
  const Eigen::MatrixXd x = stack(batch.next_obs, a);
  TargetValues t;
  t.q1 = nets.critic1_target.forward(x).row(0).transpose();
  t.q2 = nets.critic2_target.forward(x).row(0).transpose();
  t.y = batch.reward + cfg.gamma * (1.0 - batch.done.array()).matrix().cwiseProduct(t.q1.cwiseMin(t.q2));
  return t;
}

Td3::Td3(Td3Networks nets, const Td3Config& cfg)
    : nets_(std::move(nets)),
      cfg_(cfg),
      actor_opt_(nets_.actor, cfg.lr_actor),
      critic1_opt_(nets_.critic1, cfg.lr_critic1),
      critic2_opt_(nets_.critic2, cfg.lr_critic2) {
  cfg_.validate();
}

ActionPair Td3::select_action(const ObservationGrid& grid, bool explore, Rng& rng) const {
  const Eigen::VectorXd y = nets_.actor.forward(flatten(grid));
  if (!explore) return ActionPair::clamped(y(0), y(1));
  const double n0 = rng.normal(0.0, cfg_.explore_sigma);
  const double n1 = rng.normal(0.0, cfg_.explore_sigma);
  return ActionPair::clamped(y(0) + n0, y(1) + n1);
}

Td3Losses Td3::update(const ReplayBuffer& buffer, Rng& rng) {
  if (buffer.size() < cfg_.batch) throw ContractError("td3 update: buffer smaller than the batch");
  return update(make_batch(buffer.sample(cfg_.batch, rng)), rng);
}

Td3Losses Td3::update(const Batch& batch, Rng& rng) {
  const TargetValues target = td3_targets(nets_, batch, cfg_, rng);
  Td3Losses out;
  LossGrad c1 = critic_loss(nets_.critic1, batch.obs, batch.action, target.y);
  LossGrad c2 = critic_loss(nets_.critic2, batch.obs, batch.action, target.y);
  out.critic1 = c1.loss;
  out.critic2 = c2.loss;
  check_finite(c1.loss, "critic1");
  check_finite(c2.loss, "critic2");
  critic1_opt_.step(nets_.critic1, c1.grad);
  critic2_opt_.step(nets_.critic2, c2.grad);
  ++iterations_;
  if (iterations_ % cfg_.policy_delay == 0) {
    LossGrad a = actor_loss(nets_.actor, nets_.critic1, batch.obs);
    check_finite(a.loss, "actor");
    actor_opt_.step(nets_.actor, a.grad);
    out.actor = a.loss;
    nets_.actor_target.soft_update_toward(nets_.actor, cfg_.tau);
    nets_.critic1_target.soft_update_toward(nets_.critic1, cfg_.tau);
    nets_.critic2_target.soft_update_toward(nets_.critic2, cfg_.tau);
  }
  return out;
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Level1: return "level1";
    case Stage::Level2: return "level2";
    case Stage::Marl: return "marl";
  }
  return "level1";
}

Stage stage_from_string(const std::string& name) {
  for (Stage s : {Stage::Level1, Stage::Level2, Stage::Marl}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError("unknown stage '" + name + "' (expected level1, level2 or marl)");
}

std::vector<Driver> stage_drivers(Stage stage, const TrainConfig& cfg, const Mlp* live, const Mlp* frozen) {
  const Driver learner{ModelKind::DualDM, live, true, true, 0.0};
  std::vector<Driver> drivers;
  switch (stage) {
    case Stage::Level1:
      drivers.assign(static_cast<std::size_t>(cfg.others) + 1, Driver{ModelKind::ConstantSpeed});
      drivers[1] = learner;
      break;
    case Stage::Level2:
      drivers.assign(static_cast<std::size_t>(cfg.others) + 1, Driver{ModelKind::DualDM, frozen});
      drivers[1] = learner;
      break;
    case Stage::Marl:
      drivers.assign(static_cast<std::size_t>(cfg.agents) + 1, learner);
      drivers[0] = Driver{ModelKind::Stackelberg};
      break;
  }
  return drivers;
}

StageResult run_stage(Stage stage, const TrainConfig& cfg, std::uint64_t seed, const std::optional<Td3Networks>& init,
                      const std::function<void(const RoundStats&)>& on_round) {
  cfg.td3.validate();
  if (stage != Stage::Level1 && !init) {
    throw ConfigError("stage " + to_string(stage) + " must start from the " +
                      (stage == Stage::Level2 ? "level1" : "level2") + " checkpoint");
  }
  const int vehicles = stage == Stage::Marl ? cfg.agents : cfg.others;
  if (vehicles < 1) throw ConfigError("training needs at least one other vehicle");

  Rng rng(derive_seed(seed, 0xA11CE));
  Td3 td3(init ? *init : make_networks(rng, cfg.td3.hidden), cfg.td3);
  const Mlp frozen = init ? init->actor : Mlp{};
  ReplayBuffer buffer(cfg.td3.buffer_max);

  SimulationConfig sim = cfg.sim;
  sim.spawn.bv_count = vehicles;
  sim.observation.mark_adversarial = stage == Stage::Marl;
  const RoadGeometry road(sim.map);
  EpisodeOptions opts;
  opts.cooperative = stage == Stage::Marl;
  opts.explore_sigma = cfg.td3.explore_sigma;
  const std::vector<Driver> drivers = stage_drivers(stage, cfg, &td3.nets().actor, &frozen);

  StageResult result;
  std::deque<std::pair<long, long>> window;  // (saturated steps, steps) per round
  long window_sat = 0, window_steps = 0;

  for (int round = 0; round < cfg.td3.rounds; ++round) {
    RoundStats stats;
    stats.round = round;
    double sum = 0.0, sum_adv = 0.0, sum_non = 0.0;
    long samples = 0, saturated = 0;
    auto observer = [&](const StepInfo& info) {
      double abs_sum = 0.0;
      int count = 0;
      for (const auto& b : info.rewards) {
        const ActionPair& a = info.actions.at(b.agent_id);
        buffer.push(make_transition(info.grids.at(b.agent_id), a, b.total, info.next_grids.at(b.agent_id), info.done));
        ++result.transitions;
        sum += b.total;
        ++samples;
        if (b.modality == Modality::Adversarial) {
          sum_adv += b.total;
          ++stats.adversarial_samples;
        } else {
          sum_non += b.total;
          ++stats.non_adversarial_samples;
        }
        const ActionPair& raw = info.policy_outputs.at(b.agent_id);
        abs_sum += std::abs(raw.a_long) + std::abs(raw.a_lat);
        count += 2;
      }
      if (count && abs_sum / count >= 0.99) ++saturated;
    };
    const EpisodeResult ep = run_episode(road, sim, drivers, derive_seed(seed, static_cast<std::uint64_t>(round)), opts,
                                         observer);
    stats.steps = ep.steps;
    stats.mean_reward = samples ? sum / static_cast<double>(samples) : 0.0;
    stats.adversarial_mean = stats.adversarial_samples ? sum_adv / static_cast<double>(stats.adversarial_samples) : 0.0;
    stats.non_adversarial_mean =
        stats.non_adversarial_samples ? sum_non / static_cast<double>(stats.non_adversarial_samples) : 0.0;
    stats.saturated_fraction = ep.steps ? static_cast<double>(saturated) / static_cast<double>(ep.steps) : 0.0;

    for (int it = 0; it < cfg.td3.iters_per_round && buffer.size() >= cfg.td3.batch; ++it) {
      const Td3Losses losses = td3.update(buffer, rng);
      stats.critic_loss = 0.5 * (losses.critic1 + losses.critic2);
    }

    window.emplace_back(saturated, ep.steps);
    window_sat += saturated;
    window_steps += ep.steps;
    if (static_cast<int>(window.size()) > cfg.divergence_window) {
      window_sat -= window.front().first;
      window_steps -= window.front().second;
      window.pop_front();
    }
    if (!result.diverged && static_cast<int>(window.size()) == cfg.divergence_window && window_steps > 0 &&
        static_cast<double>(window_sat) >= cfg.divergence_fraction * static_cast<double>(window_steps)) {
      result.diverged = true;
      result.diverged_at = round;
    }
    result.curve.push_back(stats);
    if (on_round) on_round(stats);
  }
  result.nets = td3.nets();
  return result;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<RoundStats>& curve) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "round,steps,mean_reward,non_adversarial_mean,adversarial_mean,non_adversarial_samples,"
         "adversarial_samples,saturated_fraction,critic_loss\n";
  for (const auto& r : curve) {
    out << r.round << ',' << r.steps << ',' << format_double(r.mean_reward) << ','
        << format_double(r.non_adversarial_mean) << ',' << format_double(r.adversarial_mean) << ','
        << r.non_adversarial_samples << ',' << r.adversarial_samples << ',' << format_double(r.saturated_fraction)
        << ',' << (r.critic_loss ? format_double(*r.critic_loss) : std::string()) << '\n';
  }
}

}  // namespace evoscen
