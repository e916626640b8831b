#ifndef IPDQ_DQN_HPP
#define IPDQ_DQN_HPP

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipdq/engine.hpp"
#include "ipdq/game.hpp"
#include "ipdq/policy.hpp"
#include "json.hpp"

namespace ipdq {

// Two-layer perceptron on the one-hot joint previous action. Outputs are
// indexed by action (D = 0, C = 1).
struct MlpQNet {
  int hidden = 32;
  std::vector<double> w1;  // hidden x 4, row-major
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // 2 x hidden, row-major
  std::array<double, 2> b2{0.0, 0.0};

  static MlpQNet zeros(int hidden);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  static MlpQNet random(int hidden, RandomStream& rng);

  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& p);
  bool all_finite() const;
};

struct ActionValues {
  double q_c = 0.0;
  double q_d = 0.0;
  double operator[](Action a) const { return a == Action::C ? q_c : q_d; }
};

ActionValues forward(const MlpQNet& net, State s);
// Tabularises the network: q(s, a) = forward(net, s)[a].
QTable to_qtable(const MlpQNet& net);

struct Transition {
  State s = kDD;
  Action a = Action::D;
  double r = 0.0;
  State next = kDD;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);  // overwrites the oldest item once full
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }
  // Uniform with replacement over stored items.
  const Transition& sample(RandomStream& rng) const;

 private:
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
  std::vector<Transition> items_;
};

struct DqnConfig {
  PayoffMatrix payoff = PayoffMatrix::from_g(1.8);
  double gamma = 0.8;
  double tau = 0.01;
  double eps_start = 0.5;
  double eps_end = 0.01;
  std::uint64_t eps_decay_steps = 600;
  std::uint64_t pretrain_iters = 600;
  std::uint64_t num_iters = 10000;  // includes the pretraining iterations
  std::uint64_t batch_size = 256;
  std::uint64_t buffer_capacity = 1000000;
  double learning_rate = 0.5;
  int hidden = 32;
  UpdateMode update_mode = UpdateMode::p1_only;
  std::uint64_t seed = 8;
  std::uint64_t run_index = 0;

  void validate() const;
  // Exploration rate used at iteration it.
  double epsilon_at(std::uint64_t it) const;
};

DqnConfig full_scale(DqnConfig cfg);
nlohmann::json dqn_config_to_json(const DqnConfig& cfg);
DqnConfig dqn_config_from_json(const nlohmann::json& j);

class TrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double huber(double d);
double huber_grad(double d);

// Mean Huber loss between net(s)[a] and r + gamma max_b target(next)[b].
// When grad is non-null it receives d loss / d parameters in parameters() order.
double batch_loss(const MlpQNet& net, const MlpQNet& target, const std::vector<Transition>& batch, double gamma,
                  std::vector<double>* grad = nullptr);

// One SGD step on a sampled batch followed by the soft target update.
// Returns the pre-step loss.
double train_step(MlpQNet& net, MlpQNet& target, const ReplayBuffer& buffer, const DqnConfig& cfg, RandomStream& rng);

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
};

// Compares batch_loss gradients with central differences on a random net and
// a random batch drawn from rng. The relative error uses max(|a|, |n|, 1e-6)
// as its denominator.
GradientCheck gradient_check(RandomStream& rng, int hidden = 8, std::size_t batch = 16, double h = 1e-5);

struct DqnLogRow {
  std::uint64_t iter = 0;
  double epsilon = 0.0;
  std::array<double, 4> p_c{};  // in kStates order
  double loss = 0.0;
};

struct DqnResult {
  DqnConfig config;
  std::vector<DqnLogRow> log;
  PolicyProfile pretrain_policy;
  PolicyProfile final_policy;
  bool pavlov_pattern = false;
  MlpQNet final_net;
};

// p(C|CC), p(C|DD) > 0.9 and p(C|CD), p(C|DC) < 0.1.
bool pavlov_pattern(const std::array<double, 4>& p_c);

DqnResult selfplay_train(const DqnConfig& cfg);

std::string dqn_log_csv(const DqnResult& res);
nlohmann::json dqn_report_json(const std::vector<DqnResult>& results);

}  // namespace ipdq

#endif  // IPDQ_DQN_HPP
