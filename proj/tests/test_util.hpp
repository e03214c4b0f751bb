#pragma once

#include <random>
#include <vector>

#include "drmww/data.hpp"
#include "oracles.hpp"

namespace testutil {

inline drmww::Dataset to_dataset(const oracle::Sample& s,
                                 drmww::OutcomeKind kind = drmww::OutcomeKind::continuous) {
  std::vector<drmww::Subject> subjects;
  for (std::size_t i = 0; i < s.n(); ++i)
    subjects.push_back({std::to_string(i + 1), s.z[i], s.y[i], s.w[i]});
  return drmww::Dataset(std::move(subjects), kind);
}

/// z and y only.
inline drmww::Dataset simple(std::vector<int> z, std::vector<double> y,
                             std::vector<std::vector<double>> w = {}) {
  std::vector<drmww::Subject> subjects;
  for (std::size_t i = 0; i < z.size(); ++i)
    subjects.push_back({std::to_string(i + 1), z[i], y[i], w.empty() ? std::vector<double>{} : w[i]});
  return drmww::Dataset(std::move(subjects), drmww::OutcomeKind::continuous);
}

}  // namespace testutil
