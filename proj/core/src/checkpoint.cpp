#include "rankclust/checkpoint.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include "rankclust/codec.hpp"
#include "rankclust/corpus.hpp"
#include "rankclust/error.hpp"
#include "rankclust/half.hpp"

namespace rankclust {

namespace {

constexpr std::string_view kSidecarKind = "rankclust-checkpoint";

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void save_checkpoint(const std::filesystem::path& path, const ToyModel& model,
                     const std::map<std::string, ClusteredMatrix>& clustered) {
  std::vector<WcxRecord> records;
  nlohmann::json clustered_names = nlohmann::json::array();
  for (const auto& [name, tensor] : model.named_tensors()) {
    if (const auto it = clustered.find(name); it != clustered.end()) {
      if (it->second.rows() != tensor->rows() || it->second.cols() != tensor->cols()) {
        throw InvalidInput(fmt::format("clustered tensor '{}' does not match the model shape", name));
      }
      records.push_back({name, it->second});
      clustered_names.push_back(name);
    } else {
      records.push_back({name, *tensor});
    }
  }
  if (clustered_names.size() != clustered.size()) {
    throw InvalidInput("clustered tensors name parameters the model does not have");
  }
  write_file(path, write_container(records));

  auto side = nlohmann::json::parse(model.config().to_json());
  nlohmann::json doc = {{"kind", kSidecarKind}, {"config", side}, {"clustered", clustered_names}};
  write_text(sidecar_path(path), doc.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  ModelConfig config;
  try {
    const auto doc = nlohmann::json::parse(read_text(sidecar_path(path)));
    if (doc.value("kind", std::string()) != kSidecarKind) {
      throw DataError(fmt::format("{} is not a checkpoint sidecar", sidecar_path(path).string()));
    }
    config = ModelConfig::from_json(doc.at("config").dump());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("bad checkpoint sidecar {}: {}", sidecar_path(path).string(), e.what()));
  } catch (const InvalidInput& e) {
    throw DataError(fmt::format("bad checkpoint sidecar {}: {}", sidecar_path(path).string(), e.what()));
  }

  const auto records = read_container(read_file(path));
  std::vector<std::pair<std::string, DenseMatrix>> dense;
  std::map<std::string, ClusteredMatrix> clustered;
  for (const auto& rec : records) {
    if (const auto* cm = std::get_if<ClusteredMatrix>(&rec.tensor)) {
      dense.emplace_back(rec.name, reconstruct(*cm));
      clustered.emplace(rec.name, *cm);
    } else {
      dense.emplace_back(rec.name, std::get<DenseMatrix>(rec.tensor));
    }
  }
  try {
    return {ToyModel::from_named_tensors(config, dense), std::move(clustered)};
  } catch (const InvalidInput& e) {
    throw DataError(fmt::format("checkpoint {} does not match its config: {}", path.string(), e.what()));
  }
}

ToyModel round_to_half(const ToyModel& model) {
  std::vector<std::pair<std::string, DenseMatrix>> named;
  for (const auto& [name, t] : model.named_tensors()) {
    std::vector<float> v(t->values().begin(), t->values().end());
    for (auto& x : v) x = rankclust::round_to_half(x);
    named.emplace_back(name, DenseMatrix(t->rows(), t->cols(), std::move(v), t->role()));
  }
  return ToyModel::from_named_tensors(model.config(), named);
}

}  // namespace rankclust
