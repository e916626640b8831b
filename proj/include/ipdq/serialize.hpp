#ifndef IPDQ_SERIALIZE_HPP
#define IPDQ_SERIALIZE_HPP

#include "ipdq/game.hpp"
#include "ipdq/policy.hpp"
#include "json.hpp"

namespace ipdq {

// {"g": x} when built from g, otherwise the four rewards.
nlohmann::json payoff_to_json(const PayoffMatrix& m);
// Accepts {"g": x} or {"r_cc", "r_cd", "r_dc", "r_dd"}; validation errors propagate.
PayoffMatrix payoff_from_json(const nlohmann::json& j);

// {"DD": {"C": x, "D": y}, "CC": ..., "CD": ..., "DC": ...}
nlohmann::json qtable_to_json(const QTable& q);
QTable qtable_from_json(const nlohmann::json& j);

}  // namespace ipdq

#endif  // IPDQ_SERIALIZE_HPP
