#pragma once

#include <cstddef>
#include <vector>

namespace fedbac {

struct LabeledExample {
  std::vector<double> features;
  std::size_t label = 0;
};

// A bag of labeled examples; used for generator pools, per-client train sets
// and per-server test splits alike.
struct Dataset {
  std::vector<LabeledExample> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

}  // namespace fedbac
