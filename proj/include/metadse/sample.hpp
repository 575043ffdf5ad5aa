#pragma once

#include "metadse/design_space.hpp"

namespace metadse {

struct Labels {
  double ipc = 0;    // instructions per cycle
  double power = 0;  // watts
  friend bool operator==(const Labels&, const Labels&) = default;
};

// One labeled design point.
struct Sample {
  DesignPoint point;
  FeatureVector features;
  Labels labels;
  friend bool operator==(const Sample&, const Sample&) = default;
};

}  // namespace metadse
