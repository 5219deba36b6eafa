#pragma once

#include <string>

namespace kgad {

struct MetricValue {
  std::string name;
  double value = 0.0;
  bool higher_is_more_dissimilar = false;
};

}  // namespace kgad
