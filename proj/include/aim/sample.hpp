#pragma once

#include <vector>

namespace aim {

// One VQA instance: region features, question tokens, answer class and the
// (skill, concept) pair it was generated from.
struct Sample {
  std::vector<double> regions;  // region_count x feature_dim, row-major
  std::vector<int> question;    // question_len token ids
  int answer = 0;
  int skill = 0;
  int concept_id = 0;
  int concept2 = -1;  // second queried concept (compare skills), -1 otherwise

  bool operator==(const Sample&) const = default;
};

}  // namespace aim
