#include "ipdq/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace ipdq {

Action QTable::greedy(State s) const {
  return (*this)(s, Action::C) > (*this)(s, Action::D) ? Action::C : Action::D;
}

double QTable::max_value(State s) const {
  return std::max((*this)(s, Action::C), (*this)(s, Action::D));
}

bool QTable::all_finite() const {
  for (const auto& row : q_)
    for (double v : row)
      if (!std::isfinite(v)) return false;
  return true;
}

double QTable::max_abs_diff(const QTable& other) const {
  double m = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) m = std::max(m, std::abs(q_[i][j] - other.q_[i][j]));
  return m;
}

std::array<double, 8> QTable::flat() const {
  std::array<double, 8> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[2 * i] = (*this)(kStates[i], Action::C);
    out[2 * i + 1] = (*this)(kStates[i], Action::D);
  }
  return out;
}

std::uint8_t PolicyProfile::bits() const {
  std::uint8_t b = 0;
  for (std::size_t i = 0; i < 4; ++i)
    if (greedy_action[i] == Action::C) b |= static_cast<std::uint8_t>(1u << i);
  return b;
}

PolicyProfile PolicyProfile::from_bits(std::uint8_t bits, double epsilon) {
  PolicyProfile p;
  for (std::size_t i = 0; i < 4; ++i) p.greedy_action[i] = (bits >> i) & 1u ? Action::C : Action::D;
  p.epsilon = epsilon;
  return p;
}

namespace {
// Canonical order DD, CC, CD, DC.
constexpr std::uint8_t kAlwaysDefectBits = 0b0000;
constexpr std::uint8_t kLoseShiftBits = 0b0001;
constexpr std::uint8_t kGrimTriggerBits = 0b0010;
constexpr std::uint8_t kPavlovBits = 0b0011;
constexpr std::uint8_t kTitForTatBits = 0b1010;
}  // namespace

PolicyKind PolicyProfile::kind() const {
  switch (bits()) {
    case kAlwaysDefectBits: return PolicyKind::AlwaysDefect;
    case kLoseShiftBits: return PolicyKind::LoseShift;
    case kGrimTriggerBits: return PolicyKind::GrimTrigger;
    case kPavlovBits: return PolicyKind::Pavlov;
    default: return PolicyKind::Other;
  }
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::AlwaysDefect: return "always_defect";
    case PolicyKind::LoseShift: return "lose_shift";
    case PolicyKind::GrimTrigger: return "grim_trigger";
    case PolicyKind::Pavlov: return "pavlov";
    case PolicyKind::Other: return "other";
  }
  return "other";
}

std::string PolicyProfile::name() const {
  const PolicyKind k = kind();
  if (k != PolicyKind::Other) return to_string(k);
  std::string s = "other:";
  for (Action a : greedy_action) s += a == Action::C ? '1' : '0';
  return s;
}

PolicyProfile PolicyProfile::always_defect(double e) { return from_bits(kAlwaysDefectBits, e); }
PolicyProfile PolicyProfile::lose_shift(double e) { return from_bits(kLoseShiftBits, e); }
PolicyProfile PolicyProfile::grim_trigger(double e) { return from_bits(kGrimTriggerBits, e); }
PolicyProfile PolicyProfile::pavlov(double e) { return from_bits(kPavlovBits, e); }
PolicyProfile PolicyProfile::tit_for_tat(double e) { return from_bits(kTitForTatBits, e); }

PolicyProfile profile_from_name(const std::string& name) {
  if (name == "always_defect") return PolicyProfile::always_defect();
  if (name == "lose_shift") return PolicyProfile::lose_shift();
  if (name == "grim_trigger") return PolicyProfile::grim_trigger();
  if (name == "pavlov") return PolicyProfile::pavlov();
  if (name == "tit_for_tat") return PolicyProfile::tit_for_tat();
  if (name.rfind("other:", 0) == 0 && name.size() == 10) {
    std::uint8_t b = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      const char c = name[6 + i];
      if (c != '0' && c != '1') throw std::invalid_argument("invalid policy name '" + name + "'");
      if (c == '1') b |= static_cast<std::uint8_t>(1u << i);
    }
    return PolicyProfile::from_bits(b);
  }
  throw std::invalid_argument("unknown policy name '" + name + "'");
}

PolicyProfile classify(const QTable& q, double epsilon) {
  PolicyProfile p;
  for (std::size_t i = 0; i < 4; ++i) p.greedy_action[i] = q.greedy(kStates[i]);
  p.epsilon = epsilon;
  return p;
}

bool is_cooperative(PolicyKind kind) {
  return kind == PolicyKind::Pavlov || kind == PolicyKind::LoseShift;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), key_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

std::uint64_t RandomStream::next_u64() {
  const std::uint64_t x = key_ + counter_ * 0xd1b54a32d192ed03ULL;
  ++counter_;
  return splitmix64(x);
}

double RandomStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RandomStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index requires n > 0");
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = ~0ULL - (~0ULL % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

ActionDraw epsilon_greedy_draw(const QTable& q, State s, double epsilon, RandomStream& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 0.5))
    throw std::domain_error("epsilon must lie in [0, 1/2] (got " + std::to_string(epsilon) + ")");
  const Action greedy = q.greedy(s);
  // One draw per call even at epsilon = 0 so streams stay aligned across settings.
  const bool explore = rng.uniform() < epsilon;
  return {explore ? other(greedy) : greedy, explore};
}

Action epsilon_greedy(const QTable& q, State s, double epsilon, RandomStream& rng) {
  return epsilon_greedy_draw(q, s, epsilon, rng).action;
}

double cooperate_probability(const QTable& q, State s, double epsilon) {
  return q.greedy(s) == Action::C ? 1.0 - epsilon : epsilon;
}

}  // namespace ipdq
