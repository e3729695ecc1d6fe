#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tsgs/core_types.hpp"

namespace tsgs {

struct Neighbor {
  std::size_t index;
  double dist2;
};

/// Static 3D KD-tree over a point set. Queries are exact; neighbours are
/// ordered by (squared distance, index) so ties resolve to the lower index.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points, std::size_t leaf_size = 8);

  std::vector<Neighbor> nearest(const Vec3& query, std::size_t k, std::int64_t exclude = -1) const;

  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    std::size_t begin, end;
    int axis;  // -1 for leaves
    double split;
    std::int32_t left, right;
  };

  std::int32_t build(std::size_t begin, std::size_t end);
  void search(std::int32_t node, const Vec3& q, std::size_t k, std::int64_t exclude,
              std::vector<Neighbor>& heap) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

}  // namespace tsgs
