#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace vigil {

struct DbscanParams {
  double eps = 1.0;
  int min_pts = 3;
};

// Density clustering over 2-D points. Returns a cluster id per point, -1 for
// noise. Plain O(n^2) neighbourhood queries; radar frames hold at most a few
// dozen points.
inline std::vector<int> dbscan(const std::vector<std::array<double, 2>>& points,
                               const DbscanParams& params) {
  const int n = static_cast<int>(points.size());
  std::vector<int> label(n, -2);  // -2 unvisited, -1 noise
  const double eps2 = params.eps * params.eps;

  auto neighbours = [&](int i) {
    std::vector<int> out;
    for (int j = 0; j < n; ++j) {
      double dx = points[i][0] - points[j][0];
      double dy = points[i][1] - points[j][1];
      if (dx * dx + dy * dy <= eps2) out.push_back(j);
    }
    return out;
  };

  int cluster = 0;
  for (int i = 0; i < n; ++i) {
    if (label[i] != -2) continue;
    auto seeds = neighbours(i);
    if (static_cast<int>(seeds.size()) < params.min_pts) {
      label[i] = -1;
      continue;
    }
    label[i] = cluster;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      int j = seeds[k];
      if (label[j] == -1) label[j] = cluster;  // border point
      if (label[j] != -2) continue;
      label[j] = cluster;
      auto more = neighbours(j);
      if (static_cast<int>(more.size()) >= params.min_pts) {
        seeds.insert(seeds.end(), more.begin(), more.end());
      }
    }
    ++cluster;
  }
  return label;
}

}  // namespace vigil
