#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "rankclust/clustered_matrix.hpp"
#include "rankclust/model.hpp"

namespace rankclust {

// A checkpoint is a WCX container (tensors) plus a JSON sidecar next to it
// ("<path>.json") holding the model config. Unclustered tensors are stored
// dense as binary16, so saving rounds every parameter to half precision.
struct Checkpoint {
  ToyModel model;
  // Projections stored clustered, by tensor name. The model holds their
  // reconstruction.
  std::map<std::string, ClusteredMatrix> clustered;
};

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

void save_checkpoint(const std::filesystem::path& path, const ToyModel& model,
                     const std::map<std::string, ClusteredMatrix>& clustered = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

// The model exactly as a save/load cycle would return it.
ToyModel round_to_half(const ToyModel& model);

}  // namespace rankclust
