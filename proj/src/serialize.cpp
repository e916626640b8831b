#include "ipdq/serialize.hpp"

#include <stdexcept>

namespace ipdq {

nlohmann::json payoff_to_json(const PayoffMatrix& m) {
  if (m.g()) return {{"g", *m.g()}};
  return {{"r_cc", m.r_cc()}, {"r_cd", m.r_cd()}, {"r_dc", m.r_dc()}, {"r_dd", m.r_dd()}};
}

PayoffMatrix payoff_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("payoff must be a JSON object");
  if (j.contains("g")) return PayoffMatrix::from_g(j.at("g").get<double>());
  for (const char* key : {"r_cc", "r_cd", "r_dc", "r_dd"})
    if (!j.contains(key)) throw std::invalid_argument(std::string("payoff is missing '") + key + "'");
  return PayoffMatrix(j.at("r_cc").get<double>(), j.at("r_cd").get<double>(), j.at("r_dc").get<double>(),
                      j.at("r_dd").get<double>());
}

nlohmann::json qtable_to_json(const QTable& q) {
  nlohmann::json j = nlohmann::json::object();
  for (State s : kStates) j[to_string(s)] = {{"C", q(s, Action::C)}, {"D", q(s, Action::D)}};
  return j;
}

QTable qtable_from_json(const nlohmann::json& j) {
  QTable q;
  for (State s : kStates) {
    const std::string key = to_string(s);
    if (!j.contains(key)) throw std::invalid_argument("Q-table is missing state '" + key + "'");
    q(s, Action::C) = j.at(key).at("C").get<double>();
    q(s, Action::D) = j.at(key).at("D").get<double>();
  }
  if (!q.all_finite()) throw std::invalid_argument("Q-table entries must be finite");
  return q;
}

}  // namespace ipdq
