#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "odn/pipeline/container.hpp"

namespace odn::model {

/// Per-component min-max map onto [0, 1].
class MinMaxScaler {
 public:
  MinMaxScaler() = default;
  MinMaxScaler(std::vector<double> lo, std::vector<double> hi);

  /// `columns[c]` holds every training value of component c.
  static MinMaxScaler fit(const std::vector<std::vector<double>>& columns);

  std::size_t components() const { return lo_.size(); }
  bool fitted() const { return !lo_.empty(); }
  double transform(double v, std::size_t c) const { return (v - lo_[c]) / (hi_[c] - lo_[c]); }
  double inverse(double v, std::size_t c) const { return lo_[c] + v * (hi_[c] - lo_[c]); }
  double lo(std::size_t c) const { return lo_.at(c); }
  double hi(std::size_t c) const { return hi_.at(c); }

  void save(io::TensorContainer& c, const std::string& prefix) const;
  static MinMaxScaler load(const io::TensorContainer& c, const std::string& prefix);

 private:
  std::vector<double> lo_, hi_;
};

}  // namespace odn::model
