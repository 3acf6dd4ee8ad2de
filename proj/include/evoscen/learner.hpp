#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evoscen/nn.hpp"
#include "evoscen/observation.hpp"
#include "evoscen/signals.hpp"
#include "evoscen/simulation.hpp"

namespace evoscen {

struct Transition {
  ObservationGrid obs;
  ActionPair action;
  double reward = 0.0;
  ObservationGrid next_obs;
  bool done = false;
  bool coop_marker = false;
};

/// Builds a transition; the cooperation marker is derived from obs.M.
Transition make_transition(const ObservationGrid& obs, const ActionPair& action, double reward,
                           const ObservationGrid& next_obs, bool done);

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// i-th transition counted from the oldest.
  const Transition& at(std::size_t i) const;
  /// Uniform with replacement. Throws ContractError when empty.
  const Transition& sample(Rng& rng) const;
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> data_;
};

struct Td3Config {
  int rounds = 90000;
  std::size_t buffer_max = 40000;
  double lr_actor = 1e-4;
  double lr_critic1 = 1e-4;
  double lr_critic2 = 1e-4;
  std::size_t batch = 10;
  int iters_per_round = 2;
  double tau = 0.095;
  double gamma = 0.9;
  double explore_sigma = 0.1;
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
  int policy_delay = 2;
  int hidden = 256;

  /// Throws ConfigError when an invariant is broken.
  void validate() const;
};

struct Td3Networks {
  Mlp actor, critic1, critic2;
  Mlp actor_target, critic1_target, critic2_target;
};

/// Actor obs -> hidden -> hidden -> 2 (tanh); critics obs+2 -> hidden -> hidden -> 1.
/// Targets start as copies.
Td3Networks make_networks(Rng& rng, int hidden = 256, int obs_size = kObservationSize);

void save_checkpoint(const std::filesystem::path& dir, const Td3Networks& nets);
Td3Networks load_checkpoint(const std::filesystem::path& dir);

/// Columns are samples.
struct Batch {
  Eigen::MatrixXd obs;       // obs_size x n
  Eigen::MatrixXd action;    // 2 x n
  Eigen::VectorXd reward;    // n
  Eigen::MatrixXd next_obs;  // obs_size x n
  Eigen::VectorXd done;      // n, 0 or 1
};

Batch make_batch(const std::vector<const Transition*>& samples);

struct LossGrad {
  double loss = 0.0;
  Gradients grad;
};

/// Mean squared error of critic(obs ++ action) against y.
LossGrad critic_loss(const Mlp& critic, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& action,
                     const Eigen::VectorXd& y);

/// -mean critic(obs ++ actor(obs)), differentiated with respect to the actor.
LossGrad actor_loss(const Mlp& actor, const Mlp& critic, const Eigen::MatrixXd& obs);

struct TargetValues {
  Eigen::VectorXd y;
  Eigen::VectorXd q1;  // target critic values at the smoothed target action
  Eigen::VectorXd q2;
};

/// y = r + gamma * (1 - done) * min(Q1t, Q2t)(next_obs, clip(actor_t(next_obs) + clip(noise))).
TargetValues td3_targets(const Td3Networks& nets, const Batch& batch, const Td3Config& cfg, Rng& rng);

struct Td3Losses {
  double critic1 = 0.0;
  double critic2 = 0.0;
  std::optional<double> actor;  // present on delayed policy updates
};

class Td3 {
 public:
  Td3(Td3Networks nets, const Td3Config& cfg);

  /// Deterministic policy output, plus clamped N(0, explore_sigma) noise when `explore`.
  ActionPair select_action(const ObservationGrid& grid, bool explore, Rng& rng) const;
  /// One TD3 iteration on a uniformly sampled batch. Throws ContractError
  /// when the buffer holds fewer than `batch` transitions and
  /// DivergenceError on a non-finite loss.
  Td3Losses update(const ReplayBuffer& buffer, Rng& rng);
  /// The same iteration on an explicit batch.
  Td3Losses update(const Batch& batch, Rng& rng);

  const Td3Networks& nets() const { return nets_; }
  Td3Networks& nets() { return nets_; }
  const Td3Config& config() const { return cfg_; }
  long iterations() const { return iterations_; }

 private:
  Td3Networks nets_;
  Td3Config cfg_;
  Adam actor_opt_, critic1_opt_, critic2_opt_;
  long iterations_ = 0;
};

enum class Stage { Level1, Level2, Marl };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);

struct TrainConfig {
  SimulationConfig sim;
  Td3Config td3;
  int others = 12;  // vehicles around the learner in level-k stages
  int agents = 12;  // learning BVs in the adversarial stage
  int divergence_window = 100;
  double divergence_fraction = 0.95;
};

struct RoundStats {
  int round = 0;
  long steps = 0;
  double mean_reward = 0.0;
  long non_adversarial_samples = 0;
  double non_adversarial_mean = 0.0;
  long adversarial_samples = 0;
  double adversarial_mean = 0.0;
  double saturated_fraction = 0.0;
  std::optional<double> critic_loss;
};

struct StageResult {
  Td3Networks nets;
  std::vector<RoundStats> curve;
  bool diverged = false;
  std::optional<int> diverged_at;  // round at which the flag was raised
  std::size_t transitions = 0;
};

/// `init` is required for Level2 and Marl (the previous stage's networks);
/// Level2 also freezes a copy of its actor for the opponents.
StageResult run_stage(Stage stage, const TrainConfig& cfg, std::uint64_t seed,
                      const std::optional<Td3Networks>& init = std::nullopt,
                      const std::function<void(const RoundStats&)>& on_round = {});

/// Drivers for one round of `stage`; the learners use `live`, frozen
/// opponents use `frozen`.
std::vector<Driver> stage_drivers(Stage stage, const TrainConfig& cfg, const Mlp* live, const Mlp* frozen);

/// Header plus one line per round: round,steps,mean_reward,... .
void write_curve_csv(const std::filesystem::path& path, const std::vector<RoundStats>& curve);

}  // namespace evoscen
