#pragma once

// Ordinal quantization of watch time and the binary decomposition trees built
// over the resulting rank intervals.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace tpm {

// Sorted rank boundaries g_0 < g_1 < ... < g_m. Interval k is [g_k, g_{k+1}),
// except the last one which also contains g_m.
class OrdinalScale {
 public:
  OrdinalScale() = default;
  explicit OrdinalScale(std::vector<double> boundaries);

  std::size_t num_intervals() const { return boundaries_.size() - 1; }
  std::span<const double> boundaries() const { return boundaries_; }

  double lower() const { return boundaries_.front(); }
  double upper() const { return boundaries_.back(); }
  double interval_lower(std::size_t k) const { return boundaries_[k]; }
  double interval_upper(std::size_t k) const { return boundaries_[k + 1]; }
  double midpoint(std::size_t k) const {
    return 0.5 * (boundaries_[k] + boundaries_[k + 1]);
  }
  double width(std::size_t k) const {
    return boundaries_[k + 1] - boundaries_[k];
  }

  // Index of the interval containing t. Values outside [g_0, g_m] clamp to
  // the first or last interval. Throws on NaN.
  std::size_t interval_of(double t) const;

  friend bool operator==(const OrdinalScale&, const OrdinalScale&) = default;

 private:
  std::vector<double> boundaries_;
};

// Boundaries at the empirical quantiles 0, 1/m, ..., 1 of `watch_times`
// (linear interpolation between order statistics). Tied quantiles are pushed
// up to the next representable double so every interval has positive width.
OrdinalScale build_scale(std::span<const double> watch_times,
                         std::size_t num_leaves);

// Linear-interpolation quantile of an ascending-sorted sample.
double sorted_quantile(std::span<const double> sorted, double p);

enum class TreeKind { kBalanced, kLinear };

std::string_view to_string(TreeKind kind);
TreeKind tree_kind_from_string(std::string_view name);

struct TreeNode {
  std::size_t start = 0;  // first leaf covered
  std::size_t end = 0;    // one past the last leaf covered
  std::optional<std::pair<std::size_t, std::size_t>> children;
  std::optional<std::size_t> head;
  std::optional<double> leaf_midpoint;

  bool is_leaf() const { return end - start == 1; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// One internal node on a root-to-leaf path. label == 1 means the path turns
// into the right child, i.e. the sample is a positive for that head.
struct PathStep {
  std::size_t head = 0;
  int label = 0;
  friend bool operator==(const PathStep&, const PathStep&) = default;
};

class DecompositionTree {
 public:
  DecompositionTree() = default;
  // Validates the structural invariants; throws tpm::Error on violation.
  DecompositionTree(OrdinalScale scale, TreeKind kind,
                    std::vector<TreeNode> nodes, std::size_t root);

  const OrdinalScale& scale() const { return scale_; }
  TreeKind kind() const { return kind_; }
  std::span<const TreeNode> nodes() const { return nodes_; }
  std::size_t root() const { return root_; }
  std::size_t leaf_count() const { return leaf_count_; }
  std::size_t num_heads() const { return leaf_count_ - 1; }

  // Node index of leaf k.
  std::size_t leaf_node(std::size_t leaf) const { return leaf_node_[leaf]; }
  std::span<const PathStep> path(std::size_t leaf) const {
    return paths_[leaf];
  }
  // Internal node indices ordered so that parents precede children.
  std::span<const std::size_t> top_down_order() const { return order_; }

  // Per-leaf conditional expectation E(T | T in leaf). Defaults to the
  // interval midpoints.
  std::span<const double> leaf_values() const { return leaf_values_; }
  void set_leaf_values(std::vector<double> values);

  friend bool operator==(const DecompositionTree&,
                         const DecompositionTree&) = default;

 private:
  OrdinalScale scale_;
  TreeKind kind_ = TreeKind::kBalanced;
  std::vector<TreeNode> nodes_;
  std::size_t root_ = 0;
  std::size_t leaf_count_ = 0;
  std::vector<std::size_t> leaf_node_;
  std::vector<std::vector<PathStep>> paths_;
  std::vector<std::size_t> order_;
  std::vector<double> leaf_values_;
};

// Halving tree: a node spanning s leaves gives ceil(s/2) to its left child.
DecompositionTree build_balanced_tree(const OrdinalScale& scale);
// Spine tree: node [k, m) splits into [k, k+1) and [k+1, m).
DecompositionTree build_linear_tree(const OrdinalScale& scale);
DecompositionTree build_tree(const OrdinalScale& scale, TreeKind kind);

std::size_t leaf_of(const OrdinalScale& scale, const DecompositionTree& tree,
                    double t);

std::vector<PathStep> path_and_labels(const DecompositionTree& tree,
                                      std::size_t leaf);

// Mean target per leaf; leaves without samples keep their midpoint.
std::vector<double> empirical_leaf_means(const DecompositionTree& tree,
                                         std::span<const double> targets);

}  // namespace tpm
