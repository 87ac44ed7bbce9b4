#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rankclust/cluster.hpp"
#include "rankclust/clustered_matrix.hpp"
#include "rankclust/model.hpp"

namespace rankclust {

struct LayerKChoice {
  std::size_t k = 0;
  double ppl = 0.0;
  double delta_ppl = 0.0;
  bool forced = false;  // no candidate met the budget; k is the largest
};

// Smallest candidate K whose single-layer clustering keeps
// PPL(clustered) - baseline_ppl <= budget.
LayerKChoice select_layer_k(const ToyModel& model, const LayerSelector& sel,
                            std::span<const std::size_t> candidates, double budget,
                            std::span<const Token> eval_tokens, double baseline_ppl,
                            const KMeansOptions& kmeans = {});

struct PlanEntry {
  LayerSelector selector;
  LayerKChoice choice;
};

struct ClusterPlan {
  std::vector<std::size_t> candidates;
  double budget = 0.0;
  double baseline_ppl = 0.0;
  double clustered_ppl = 0.0;  // every planned layer clustered at once
  std::vector<PlanEntry> entries;
  // Clustered tensors of the chosen K, by tensor name.
  std::map<std::string, ClusteredMatrix> clustered;

  // Every K is a candidate and every unforced entry is within budget.
  bool valid() const;
  // Entry count per chosen K.
  std::map<std::size_t, std::size_t> k_histogram() const;
};

ClusterPlan plan_model(const ToyModel& model, std::span<const std::size_t> candidates, double budget,
                       std::span<const Token> eval_tokens, const KMeansOptions& kmeans = {});

// Replaces every planned projection by its reconstruction.
ToyModel apply_clustered(const ToyModel& model, const std::map<std::string, ClusteredMatrix>& clustered);

}  // namespace rankclust
