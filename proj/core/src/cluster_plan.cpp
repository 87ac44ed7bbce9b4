#include "rankclust/cluster_plan.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "rankclust/codec.hpp"
#include "rankclust/error.hpp"

namespace rankclust {

namespace {

void check_candidates(std::span<const std::size_t> candidates) {
  if (candidates.empty()) throw InvalidInput("candidate K list is empty");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i] == 0) throw InvalidInput("candidate K must be positive");
    if (i > 0 && candidates[i] <= candidates[i - 1]) {
      throw InvalidInput("candidate K list must be strictly ascending");
    }
  }
}

}  // namespace

LayerKChoice select_layer_k(const ToyModel& model, const LayerSelector& sel,
                            std::span<const std::size_t> candidates, double budget,
                            std::span<const Token> eval_tokens, double baseline_ppl,
                            const KMeansOptions& kmeans) {
  check_candidates(candidates);
  const DenseMatrix& w = model.projection(sel);
  LayerKChoice choice;
  for (std::size_t k : candidates) {
    const ClusteredMatrix cm = cluster_matrix(w, k, kmeans);
    const double ppl = perplexity(model.set_projection(sel, reconstruct(cm)), eval_tokens);
    choice = {k, ppl, ppl - baseline_ppl, false};
    if (choice.delta_ppl <= budget) return choice;
  }
  choice.forced = true;
  return choice;
}

bool ClusterPlan::valid() const {
  for (const auto& e : entries) {
    if (std::find(candidates.begin(), candidates.end(), e.choice.k) == candidates.end()) return false;
    if (!e.choice.forced && !(e.choice.delta_ppl <= budget)) return false;
    if (e.choice.forced && e.choice.k != candidates.back()) return false;
  }
  return true;
}

std::map<std::size_t, std::size_t> ClusterPlan::k_histogram() const {
  std::map<std::size_t, std::size_t> h;
  for (const auto& e : entries) ++h[e.choice.k];
  return h;
}

ToyModel apply_clustered(const ToyModel& model, const std::map<std::string, ClusteredMatrix>& clustered) {
  ToyModel out = model;
  std::size_t used = 0;
  for (const auto& sel : model.projection_selectors()) {
    const auto it = clustered.find(tensor_name(sel));
    if (it == clustered.end()) continue;
    out = out.set_projection(sel, reconstruct(it->second));
    ++used;
  }
  if (used != clustered.size()) throw InvalidInput("clustered set names tensors that are not projections");
  return out;
}

ClusterPlan plan_model(const ToyModel& model, std::span<const std::size_t> candidates, double budget,
                       std::span<const Token> eval_tokens, const KMeansOptions& kmeans) {
  check_candidates(candidates);
  ClusterPlan plan;
  plan.candidates.assign(candidates.begin(), candidates.end());
  plan.budget = budget;
  plan.baseline_ppl = perplexity(model, eval_tokens);
  for (const auto& sel : model.projection_selectors()) {
    const LayerKChoice c = select_layer_k(model, sel, candidates, budget, eval_tokens, plan.baseline_ppl, kmeans);
    plan.entries.push_back({sel, c});
    plan.clustered.emplace(tensor_name(sel), cluster_matrix(model.projection(sel), c.k, kmeans));
  }
  plan.clustered_ppl = perplexity(apply_clustered(model, plan.clustered), eval_tokens);
  return plan;
}

}  // namespace rankclust
