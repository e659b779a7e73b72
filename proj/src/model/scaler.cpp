#include "odn/model/scaler.hpp"

#include <algorithm>

#include "odn/core/error.hpp"

namespace odn::model {

MinMaxScaler::MinMaxScaler(std::vector<double> lo, std::vector<double> hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size() || lo_.empty()) throw CheckpointError("scaler bounds are malformed");
  for (std::size_t c = 0; c < lo_.size(); ++c) {
    if (!(hi_[c] > lo_[c])) throw ParameterError("scaler component " + std::to_string(c) + " has max <= min");
  }
}

MinMaxScaler MinMaxScaler::fit(const std::vector<std::vector<double>>& columns) {
  std::vector<double> lo, hi;
  for (const auto& col : columns) {
    if (col.empty()) throw ParameterError("cannot fit a scaler on an empty column");
    const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
    lo.push_back(*mn);
    hi.push_back(*mx);
  }
  return MinMaxScaler(std::move(lo), std::move(hi));
}

void MinMaxScaler::save(io::TensorContainer& c, const std::string& prefix) const {
  c.put_f64(prefix + "/lo", lo_, {lo_.size()});
  c.put_f64(prefix + "/hi", hi_, {hi_.size()});
}

MinMaxScaler MinMaxScaler::load(const io::TensorContainer& c, const std::string& prefix) {
  if (!c.contains(prefix + "/lo") || !c.contains(prefix + "/hi")) {
    throw CheckpointError("checkpoint lacks scaler '" + prefix + "'");
  }
  return MinMaxScaler(c.get_f64_values(prefix + "/lo"), c.get_f64_values(prefix + "/hi"));
}

}  // namespace odn::model
