#include "tpm/ranks.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <fmt/format.h>

#include "tpm/error.hpp"

namespace tpm {

OrdinalScale::OrdinalScale(std::vector<double> boundaries)
    : boundaries_(std::move(boundaries)) {
  if (boundaries_.size() < 3) {
    throw Error(ErrorKind::kInvalidArgument,
                "ordinal scale needs at least 2 intervals");
  }
  for (std::size_t i = 0; i < boundaries_.size(); ++i) {
    if (!std::isfinite(boundaries_[i])) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("ordinal scale boundary {} is not finite", i));
    }
    if (i > 0 && !(boundaries_[i] > boundaries_[i - 1])) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("ordinal scale boundaries must be strictly "
                              "increasing (index {})",
                              i));
    }
  }
}

std::size_t OrdinalScale::interval_of(double t) const {
  if (std::isnan(t)) {
    throw Error(ErrorKind::kData, "watch time is NaN");
  }
  if (t < boundaries_.front()) return 0;
  if (t >= boundaries_.back()) return num_intervals() - 1;
  auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), t);
  return static_cast<std::size_t>(it - boundaries_.begin()) - 1;
}

double sorted_quantile(std::span<const double> sorted, double p) {
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

OrdinalScale build_scale(std::span<const double> watch_times,
                         std::size_t num_leaves) {
  if (num_leaves < 2) {
    throw Error(ErrorKind::kInvalidArgument, "num_leaves must be at least 2");
  }
  if (watch_times.empty()) {
    throw Error(ErrorKind::kData, "cannot build a scale from no watch times");
  }
  std::vector<double> sorted(watch_times.begin(), watch_times.end());
  for (double t : sorted) {
    if (!std::isfinite(t) || t < 0.0) {
      throw Error(ErrorKind::kData,
                  fmt::format("watch time {} is not a finite value >= 0", t));
    }
  }
  std::sort(sorted.begin(), sorted.end());
  std::size_t num_distinct = 1;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i] != sorted[i - 1]) ++num_distinct;
  }
  if (num_distinct < num_leaves) {
    throw Error(ErrorKind::kData,
                fmt::format("insufficient label diversity: {} distinct watch "
                            "times for {} leaves",
                            num_distinct, num_leaves));
  }

  std::vector<double> boundaries(num_leaves + 1);
  const double m = static_cast<double>(num_leaves);
  for (std::size_t k = 0; k <= num_leaves; ++k) {
    boundaries[k] = sorted_quantile(sorted, static_cast<double>(k) / m);
  }
  for (std::size_t k = 1; k <= num_leaves; ++k) {
    if (boundaries[k] <= boundaries[k - 1]) {
      boundaries[k] = std::nextafter(boundaries[k - 1],
                                     std::numeric_limits<double>::infinity());
    }
  }
  return OrdinalScale(std::move(boundaries));
}

std::string_view to_string(TreeKind kind) {
  return kind == TreeKind::kBalanced ? "balanced" : "linear";
}

TreeKind tree_kind_from_string(std::string_view name) {
  if (name == "balanced") return TreeKind::kBalanced;
  if (name == "linear") return TreeKind::kLinear;
  throw Error(ErrorKind::kConfig,
              fmt::format("unknown tree kind '{}' (expected balanced|linear)",
                          name));
}

namespace {

Error bad_tree(const std::string& what) {
  return Error(ErrorKind::kModelFormat, "invalid decomposition tree: " + what);
}

}  // namespace

DecompositionTree::DecompositionTree(OrdinalScale scale, TreeKind kind,
                                     std::vector<TreeNode> nodes,
                                     std::size_t root)
    : scale_(std::move(scale)),
      kind_(kind),
      nodes_(std::move(nodes)),
      root_(root) {
  leaf_count_ = scale_.num_intervals();
  if (nodes_.size() != 2 * leaf_count_ - 1) {
    throw bad_tree(fmt::format("{} nodes for {} leaves", nodes_.size(),
                               leaf_count_));
  }
  if (root_ >= nodes_.size() || nodes_[root_].start != 0 ||
      nodes_[root_].end != leaf_count_) {
    throw bad_tree("root must span every leaf");
  }

  constexpr auto kUnset = std::numeric_limits<std::size_t>::max();
  leaf_node_.assign(leaf_count_, kUnset);
  paths_.assign(leaf_count_, {});
  std::vector<bool> seen(nodes_.size(), false);
  std::vector<bool> head_used(num_heads(), false);

  // Breadth-first walk; each entry carries the path that led to it.
  std::deque<std::pair<std::size_t, std::vector<PathStep>>> queue;
  queue.emplace_back(root_, std::vector<PathStep>{});
  while (!queue.empty()) {
    auto [index, path] = std::move(queue.front());
    queue.pop_front();
    if (seen[index]) throw bad_tree("node reachable more than once");
    seen[index] = true;
    const TreeNode& node = nodes_[index];
    if (node.end <= node.start || node.end > leaf_count_) {
      throw bad_tree(fmt::format("node {} has an empty or out-of-range span",
                                 index));
    }
    if (node.is_leaf()) {
      if (node.children || node.head || !node.leaf_midpoint) {
        throw bad_tree(fmt::format("leaf node {} is malformed", index));
      }
      if (*node.leaf_midpoint != scale_.midpoint(node.start)) {
        throw bad_tree(fmt::format("leaf node {} midpoint mismatch", index));
      }
      leaf_node_[node.start] = index;
      paths_[node.start] = std::move(path);
      continue;
    }
    if (!node.children || !node.head || node.leaf_midpoint) {
      throw bad_tree(fmt::format("internal node {} is malformed", index));
    }
    const auto [left, right] = *node.children;
    if (left >= nodes_.size() || right >= nodes_.size()) {
      throw bad_tree(fmt::format("node {} has a dangling child", index));
    }
    if (nodes_[left].start != node.start || nodes_[right].end != node.end ||
        nodes_[left].end != nodes_[right].start) {
      throw bad_tree(fmt::format(
          "children of node {} do not partition its span", index));
    }
    if (*node.head >= num_heads() || head_used[*node.head]) {
      throw bad_tree(fmt::format("node {} has an invalid head index", index));
    }
    head_used[*node.head] = true;
    order_.push_back(index);

    auto left_path = path;
    left_path.push_back({*node.head, 0});
    path.push_back({*node.head, 1});
    queue.emplace_back(left, std::move(left_path));
    queue.emplace_back(right, std::move(path));
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw bad_tree("unreachable nodes");
  }

  leaf_values_.resize(leaf_count_);
  for (std::size_t k = 0; k < leaf_count_; ++k) {
    leaf_values_[k] = scale_.midpoint(k);
  }
}

void DecompositionTree::set_leaf_values(std::vector<double> values) {
  if (values.size() != leaf_count_) {
    throw Error(ErrorKind::kInvalidArgument,
                "leaf value count does not match the tree");
  }
  for (std::size_t k = 0; k < leaf_count_; ++k) {
    if (!(values[k] >= scale_.interval_lower(k) &&
          values[k] <= scale_.interval_upper(k))) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("leaf value {} lies outside its interval", k));
    }
  }
  leaf_values_ = std::move(values);
}

namespace {

// Builds nodes breadth-first so that node and head indices both follow BFS
// order. `split` returns the size of the left child for a span.
template <typename SplitFn>
DecompositionTree build_with(const OrdinalScale& scale, TreeKind kind,
                             SplitFn split) {
  const std::size_t m = scale.num_intervals();
  std::vector<TreeNode> nodes;
  nodes.reserve(2 * m - 1);
  nodes.push_back({0, m, std::nullopt, std::nullopt, std::nullopt});
  std::size_t next_head = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::size_t start = nodes[i].start;
    const std::size_t end = nodes[i].end;
    if (end - start == 1) {
      nodes[i].leaf_midpoint = scale.midpoint(start);
      continue;
    }
    const std::size_t mid = start + split(end - start);
    nodes[i].head = next_head++;
    nodes[i].children = {nodes.size(), nodes.size() + 1};
    nodes.push_back({start, mid, std::nullopt, std::nullopt, std::nullopt});
    nodes.push_back({mid, end, std::nullopt, std::nullopt, std::nullopt});
  }
  return DecompositionTree(scale, kind, std::move(nodes), 0);
}

}  // namespace

DecompositionTree build_balanced_tree(const OrdinalScale& scale) {
  return build_with(scale, TreeKind::kBalanced,
                    [](std::size_t span) { return (span + 1) / 2; });
}

DecompositionTree build_linear_tree(const OrdinalScale& scale) {
  return build_with(scale, TreeKind::kLinear,
                    [](std::size_t) { return std::size_t{1}; });
}

DecompositionTree build_tree(const OrdinalScale& scale, TreeKind kind) {
  return kind == TreeKind::kBalanced ? build_balanced_tree(scale)
                                     : build_linear_tree(scale);
}

std::size_t leaf_of(const OrdinalScale& scale, const DecompositionTree& tree,
                    double t) {
  const std::size_t k = scale.interval_of(t);
  if (k >= tree.leaf_count()) {
    throw Error(ErrorKind::kInvalidArgument, "scale and tree disagree");
  }
  return k;
}

std::vector<PathStep> path_and_labels(const DecompositionTree& tree,
                                      std::size_t leaf) {
  if (leaf >= tree.leaf_count()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("leaf {} out of range", leaf));
  }
  auto p = tree.path(leaf);
  return {p.begin(), p.end()};
}

std::vector<double> empirical_leaf_means(const DecompositionTree& tree,
                                         std::span<const double> targets) {
  const auto& scale = tree.scale();
  std::vector<double> sum(tree.leaf_count(), 0.0);
  std::vector<std::size_t> count(tree.leaf_count(), 0);
  for (double t : targets) {
    const std::size_t k = scale.interval_of(t);
    sum[k] += std::clamp(t, scale.interval_lower(k), scale.interval_upper(k));
    ++count[k];
  }
  std::vector<double> means(tree.leaf_count());
  for (std::size_t k = 0; k < means.size(); ++k) {
    means[k] = count[k] == 0
                   ? scale.midpoint(k)
                   : std::clamp(sum[k] / static_cast<double>(count[k]),
                                scale.interval_lower(k),
                                scale.interval_upper(k));
  }
  return means;
}

}  // namespace tpm
