#include "ipdq/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ipdq/io.hpp"
#include "ipdq/serialize.hpp"

namespace ipdq {

MlpQNet MlpQNet::zeros(int hidden) {
  if (hidden <= 0) throw std::invalid_argument("hidden size must be positive");
  MlpQNet net;
  net.hidden = hidden;
  net.w1.assign(static_cast<std::size_t>(hidden) * 4, 0.0);
  net.b1.assign(static_cast<std::size_t>(hidden), 0.0);
  net.w2.assign(static_cast<std::size_t>(hidden) * 2, 0.0);
  return net;
}

MlpQNet MlpQNet::random(int hidden, RandomStream& rng) {
  MlpQNet net = zeros(hidden);
  auto fill = [&rng](std::vector<double>& v, double bound) {
    for (double& x : v) x = bound * (2.0 * rng.uniform() - 1.0);
  };
  const double bound1 = 1.0 / std::sqrt(4.0);
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill(net.w1, bound1);
  fill(net.b1, bound1);
  fill(net.w2, bound2);
  for (double& x : net.b2) x = bound2 * (2.0 * rng.uniform() - 1.0);
  return net;
}

std::vector<double> MlpQNet::parameters() const {
  std::vector<double> p;
  p.reserve(parameter_count());
  p.insert(p.end(), w1.begin(), w1.end());
  p.insert(p.end(), b1.begin(), b1.end());
  p.insert(p.end(), w2.begin(), w2.end());
  p.insert(p.end(), b2.begin(), b2.end());
  return p;
}

void MlpQNet::set_parameters(const std::vector<double>& p) {
  if (p.size() != parameter_count()) throw std::invalid_argument("parameter vector has the wrong length");
  auto it = p.begin();
  for (auto* v : {&w1, &b1, &w2}) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(v->size()), v->begin());
    it += static_cast<std::ptrdiff_t>(v->size());
  }
  b2 = {it[0], it[1]};
}

bool MlpQNet::all_finite() const {
  auto ok = [](const auto& v) { return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }); };
  return ok(w1) && ok(b1) && ok(w2) && ok(b2);
}

namespace {

// Hidden pre-activations and outputs for one state.
struct Activation {
  std::vector<double> h;
  std::array<double, 2> out{};
};

Activation activate(const MlpQNet& net, State s) {
  const std::size_t H = static_cast<std::size_t>(net.hidden);
  const std::size_t col = index(s);
  Activation act;
  act.h.resize(H);
  act.out = net.b2;
  for (std::size_t j = 0; j < H; ++j) {
    act.h[j] = net.w1[j * 4 + col] + net.b1[j];
    const double z = std::max(act.h[j], 0.0);
    act.out[0] += net.w2[j] * z;
    act.out[1] += net.w2[H + j] * z;
  }
  return act;
}

}  // namespace

ActionValues forward(const MlpQNet& net, State s) {
  const Activation act = activate(net, s);
  return {act.out[index(Action::C)], act.out[index(Action::D)]};
}

QTable to_qtable(const MlpQNet& net) {
  QTable q;
  for (State s : kStates) {
    const ActionValues v = forward(net, s);
    q(s, Action::C) = v.q_c;
    q(s, Action::D) = v.q_d;
  }
  return q;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(const Transition& t) {
  if (size_ < capacity_) {
    items_.push_back(t);
    ++size_;
  } else {
    items_[head_] = t;
  }
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::sample(RandomStream& rng) const {
  if (size_ == 0) throw std::logic_error("cannot sample from an empty replay buffer");
  return items_[rng.uniform_index(size_)];
}

void DqnConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::domain_error(what); };
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) fail("tau must lie in (0, 1]");
  if (!(eps_end >= 0.0 && eps_end <= eps_start && eps_start <= 0.5)) fail("need 0 <= eps_end <= eps_start <= 1/2");
  if (batch_size == 0) fail("batch_size must be positive");
  if (buffer_capacity == 0) fail("buffer_capacity must be positive");
  if (!(learning_rate >= 0.0 && std::isfinite(learning_rate))) fail("learning_rate must be finite and nonnegative");
  if (hidden <= 0) fail("hidden must be positive");
}

double DqnConfig::epsilon_at(std::uint64_t it) const {
  if (it < pretrain_iters) return eps_start;
  if (eps_decay_steps == 0) return eps_end;
  const double frac =
      std::min(1.0, static_cast<double>(it - pretrain_iters) / static_cast<double>(eps_decay_steps));
  return eps_start + (eps_end - eps_start) * frac;
}

DqnConfig full_scale(DqnConfig cfg) {
  cfg.batch_size = 16384;
  return cfg;
}

nlohmann::json dqn_config_to_json(const DqnConfig& cfg) {
  return {{"payoff", payoff_to_json(cfg.payoff)},
          {"gamma", cfg.gamma},
          {"tau", cfg.tau},
          {"eps_start", cfg.eps_start},
          {"eps_end", cfg.eps_end},
          {"eps_decay_steps", cfg.eps_decay_steps},
          {"pretrain_iters", cfg.pretrain_iters},
          {"num_iters", cfg.num_iters},
          {"batch_size", cfg.batch_size},
          {"buffer_capacity", cfg.buffer_capacity},
          {"learning_rate", cfg.learning_rate},
          {"hidden", cfg.hidden},
          {"update_mode", to_string(cfg.update_mode)},
          {"seed", cfg.seed},
          {"run_index", cfg.run_index}};
}

DqnConfig dqn_config_from_json(const nlohmann::json& j) {
  DqnConfig cfg;
  if (j.contains("payoff")) cfg.payoff = payoff_from_json(j.at("payoff"));
  if (j.contains("g")) cfg.payoff = PayoffMatrix::from_g(j.at("g").get<double>());
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("gamma", cfg.gamma);
  get("tau", cfg.tau);
  get("eps_start", cfg.eps_start);
  get("eps_end", cfg.eps_end);
  get("eps_decay_steps", cfg.eps_decay_steps);
  get("pretrain_iters", cfg.pretrain_iters);
  get("num_iters", cfg.num_iters);
  get("batch_size", cfg.batch_size);
  get("buffer_capacity", cfg.buffer_capacity);
  get("learning_rate", cfg.learning_rate);
  get("hidden", cfg.hidden);
  get("seed", cfg.seed);
  get("run_index", cfg.run_index);
  if (j.contains("update_mode")) cfg.update_mode = update_mode_from_string(j.at("update_mode").get<std::string>());
  cfg.validate();
  return cfg;
}

double huber(double d) {
  const double a = std::abs(d);
  return a <= 1.0 ? 0.5 * d * d : a - 0.5;
}

double huber_grad(double d) { return std::clamp(d, -1.0, 1.0); }

double batch_loss(const MlpQNet& net, const MlpQNet& target, const std::vector<Transition>& batch, double gamma,
                  std::vector<double>* grad) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  std::array<Activation, 4> act;
  std::array<double, 4> next_max{};
  for (State s : kStates) {
    act[index(s)] = activate(net, s);
    const Activation t = activate(target, s);
    next_max[index(s)] = std::max(t.out[0], t.out[1]);
  }
  // Loss gradient w.r.t. each of the 8 outputs, summed over the batch.
  std::array<std::array<double, 2>, 4> dout{};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const Transition& tr : batch) {
    const double y = tr.r + gamma * next_max[index(tr.next)];
    const double d = act[index(tr.s)].out[index(tr.a)] - y;
    loss += huber(d);
    dout[index(tr.s)][index(tr.a)] += huber_grad(d) * inv_n;
  }
  loss *= inv_n;
  if (!grad) return loss;

  const std::size_t H = static_cast<std::size_t>(net.hidden);
  grad->assign(net.parameter_count(), 0.0);
  double* gw1 = grad->data();
  double* gb1 = gw1 + 4 * H;
  double* gw2 = gb1 + H;
  double* gb2 = gw2 + 2 * H;
  for (std::size_t s = 0; s < 4; ++s) {
    const auto& o = dout[s];
    if (o[0] == 0.0 && o[1] == 0.0) continue;
    gb2[0] += o[0];
    gb2[1] += o[1];
    for (std::size_t j = 0; j < H; ++j) {
      const double h = act[s].h[j];
      if (h <= 0.0) continue;
      gw2[j] += o[0] * h;
      gw2[H + j] += o[1] * h;
      const double gh = o[0] * net.w2[j] + o[1] * net.w2[H + j];
      gw1[j * 4 + s] += gh;
      gb1[j] += gh;
    }
  }
  return loss;
}

double train_step(MlpQNet& net, MlpQNet& target, const ReplayBuffer& buffer, const DqnConfig& cfg, RandomStream& rng) {
  if (buffer.size() == 0) throw std::logic_error("train_step needs a nonempty replay buffer");
  std::vector<Transition> batch;
  batch.reserve(cfg.batch_size);
  for (std::uint64_t i = 0; i < cfg.batch_size; ++i) batch.push_back(buffer.sample(rng));
  std::vector<double> grad;
  const double loss = batch_loss(net, target, batch, cfg.gamma, &grad);
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite DQN loss (seed=" << cfg.seed << " run=" << cfg.run_index << " lr=" << fmt17(cfg.learning_rate)
        << ")";
    throw TrainingFailure(msg.str());
  }
  std::vector<double> p = net.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.learning_rate * grad[i];
  net.set_parameters(p);
  std::vector<double> t = target.parameters();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - cfg.tau) * t[i] + cfg.tau * p[i];
  target.set_parameters(t);
  return loss;
}

namespace {

// True when every hidden pre-activation and every TD error is clear of the
// points where the loss is not twice differentiable.
bool away_from_kinks(const MlpQNet& net, const MlpQNet& target, const std::vector<Transition>& batch, double gamma,
                     double margin) {
  std::array<double, 4> next_max{};
  for (State s : kStates) {
    const Activation t = activate(target, s);
    next_max[index(s)] = std::max(t.out[0], t.out[1]);
    for (double h : activate(net, s).h)
      if (std::abs(h) < margin) return false;
  }
  for (const Transition& tr : batch) {
    const double d = activate(net, tr.s).out[index(tr.a)] - tr.r - gamma * next_max[index(tr.next)];
    if (std::abs(std::abs(d) - 1.0) < margin) return false;
  }
  return true;
}

}  // namespace

GradientCheck gradient_check(RandomStream& rng, int hidden, std::size_t batch_size, double h) {
  const double gamma = 0.8;
  MlpQNet net, target;
  std::vector<Transition> batch(batch_size);
  // Finite differences are meaningless across a kink, so such draws are redrawn.
  do {
    net = MlpQNet::random(hidden, rng);
    target = MlpQNet::random(hidden, rng);
    // Larger output weights put part of the batch on the linear branch of the loss.
    for (double& w : net.w2) w *= 4.0;
    for (Transition& tr : batch) {
      tr.s = kStates[rng.uniform_index(4)];
      tr.a = rng.uniform() < 0.5 ? Action::D : Action::C;
      tr.next = kStates[rng.uniform_index(4)];
      tr.r = 4.0 * rng.uniform() - 2.0;
    }
  } while (!away_from_kinks(net, target, batch, gamma, 100.0 * h));
  std::vector<double> analytic;
  batch_loss(net, target, batch, gamma, &analytic);
  std::vector<double> p = net.parameters();
  GradientCheck out;
  out.parameters = p.size();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    net.set_parameters(p);
    const double up = batch_loss(net, target, batch, gamma);
    p[i] = saved - h;
    net.set_parameters(p);
    const double down = batch_loss(net, target, batch, gamma);
    p[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    // The floor sits above the rounding noise of the differenced loss (about 1e-11).
    const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(numeric - analytic[i]) / scale);
  }
  net.set_parameters(p);
  return out;
}

bool pavlov_pattern(const std::array<double, 4>& p_c) {
  return p_c[index(kCC)] > 0.9 && p_c[index(kDD)] > 0.9 && p_c[index(kCD)] < 0.1 && p_c[index(kDC)] < 0.1;
}

namespace {

std::array<double, 4> cooperate_row(const QTable& q, double epsilon) {
  std::array<double, 4> p{};
  for (State s : kStates) p[index(s)] = cooperate_probability(q, s, epsilon);
  return p;
}

void fail_divergence(const DqnConfig& cfg, std::uint64_t it) {
  std::ostringstream msg;
  msg << "DQN weights diverged (seed=" << cfg.seed << " run=" << cfg.run_index << " iter=" << it << ")";
  throw TrainingFailure(msg.str());
}

}  // namespace

DqnResult selfplay_train(const DqnConfig& cfg) {
  cfg.validate();
  RandomStream rng(cfg.seed, cfg.run_index);
  DqnResult res;
  res.config = cfg;
  MlpQNet net = MlpQNet::random(cfg.hidden, rng);
  MlpQNet target = net;
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));
  std::vector<State> states(cfg.batch_size, kDD);
  res.pretrain_policy = classify(to_qtable(net));
  res.log.reserve(cfg.num_iters);

  for (std::uint64_t it = 0; it < cfg.num_iters; ++it) {
    const double eps = cfg.epsilon_at(it);
    const bool random_opponent = it < cfg.pretrain_iters;
    const QTable q = to_qtable(net);
    for (State& s : states) {
      const Action a1 = epsilon_greedy(q, s, eps, rng);
      const Action a2 = random_opponent ? (rng.uniform() < 0.5 ? Action::D : Action::C)
                                        : epsilon_greedy(q, swap(s), eps, rng);
      const State next = next_state(a1, a2);
      buffer.push({s, a1, cfg.payoff.reward(a1, a2), next});
      if (!random_opponent && cfg.update_mode == UpdateMode::both_perspectives)
        buffer.push({swap(s), a2, cfg.payoff.reward(a2, a1), swap(next)});
      s = next;
    }
    DqnLogRow row;
    row.iter = it;
    row.epsilon = eps;
    row.loss = train_step(net, target, buffer, cfg, rng);
    if (!net.all_finite()) fail_divergence(cfg, it);
    const QTable after = to_qtable(net);
    row.p_c = cooperate_row(after, eps);
    res.log.push_back(row);
    if (it + 1 == cfg.pretrain_iters) res.pretrain_policy = classify(after);
  }
  const QTable final_q = to_qtable(net);
  res.final_policy = classify(final_q);
  res.pavlov_pattern = pavlov_pattern(cooperate_row(final_q, cfg.epsilon_at(cfg.num_iters)));
  res.final_net = std::move(net);
  return res;
}

std::string dqn_log_csv(const DqnResult& res) {
  std::string out = "iter,epsilon,p_c_cc,p_c_dd,p_c_cd,p_c_dc,loss\n";
  for (const DqnLogRow& r : res.log) {
    out += std::to_string(r.iter) + ',' + fmt17(r.epsilon);
    for (State s : {kCC, kDD, kCD, kDC}) out += ',' + fmt17(r.p_c[index(s)]);
    out += ',' + fmt17(r.loss) + '\n';
  }
  return out;
}

nlohmann::json dqn_report_json(const std::vector<DqnResult>& results) {
  nlohmann::json runs = nlohmann::json::array();
  std::size_t alld = 0, pavlov = 0;
  for (const DqnResult& r : results) {
    const QTable q = to_qtable(r.final_net);
    nlohmann::json p_c;
    for (State s : kStates) p_c[to_string(s)] = cooperate_probability(q, s, r.config.epsilon_at(r.config.num_iters));
    runs.push_back({{"seed", r.config.seed},
                    {"run_index", r.config.run_index},
                    {"pretrain_policy", r.pretrain_policy.name()},
                    {"final_policy", r.final_policy.name()},
                    {"pavlov_pattern", r.pavlov_pattern},
                    {"final_p_c", p_c},
                    {"final_q", qtable_to_json(q)}});
    alld += r.pretrain_policy.kind() == PolicyKind::AlwaysDefect;
    pavlov += r.pavlov_pattern;
  }
  nlohmann::json j;
  j["config"] = results.empty() ? nlohmann::json() : dqn_config_to_json(results.front().config);
  j["runs"] = runs;
  j["pretrain_always_defect"] = alld;
  j["final_pavlov_pattern"] = pavlov;
  return j;
}

}  // namespace ipdq
