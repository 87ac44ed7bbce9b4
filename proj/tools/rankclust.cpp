// rankclust: train a toy model, cluster its projections, perturb centroids
// and write reports.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "rankclust/checkpoint.hpp"
#include "rankclust/cluster_plan.hpp"
#include "rankclust/codec.hpp"
#include "rankclust/corpus.hpp"
#include "rankclust/error.hpp"
#include "rankclust/harness.hpp"
#include "rankclust/report.hpp"
#include "rankclust/train.hpp"

namespace fs = std::filesystem;
using namespace rankclust;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Globals {
  std::string model;
  std::string corpus = RANKCLUST_DEFAULT_CORPUS;
  std::string out = ".";
  std::string format = "csv";
  std::uint64_t seed = 0;
  std::size_t eval_tokens = 8192;
};

struct SuiteArgs {
  std::string layer;
  std::size_t k = 32;
  std::string seeds = "10";
};

// "10" means seeds 0..9; "3,7,11" lists them.
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  try {
    if (text.find(',') == std::string::npos) return seed_range(std::stoull(text));
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto comma = text.find(',', start);
      out.push_back(std::stoull(text.substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  } catch (const std::logic_error&) {
    throw InvalidInput(fmt::format("bad --seeds '{}'", text));
  }
  return out;
}

std::vector<std::size_t> parse_candidates(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  try {
    while (start <= text.size()) {
      const auto comma = text.find(',', start);
      out.push_back(std::stoull(text.substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  } catch (const std::logic_error&) {
    throw InvalidInput(fmt::format("bad --candidates '{}'", text));
  }
  return out;
}

ToyModel require_model(const Globals& g) {
  if (g.model.empty()) throw InvalidInput("--model is required");
  return load_checkpoint(g.model).model;
}

LayerSelector selector_or_default(const std::string& text, const ToyModel& m) {
  if (text.empty()) return default_selector(m.config());
  const LayerSelector sel = LayerSelector::parse(text);
  (void)m.projection(sel);
  return sel;
}

SuiteOptions suite_options(const Globals& g, const SuiteArgs& a) {
  SuiteOptions o;
  o.k = a.k;
  o.seeds = parse_seeds(a.seeds);
  o.kmeans.seed = g.seed;
  return o;
}

void emit_records(const Globals& g, std::string_view stem, std::span<const PerturbationRecord> recs,
                  const nlohmann::json& meta = nlohmann::json::object()) {
  const ReportFormat f = parse_format(g.format);
  const std::string text = f == ReportFormat::csv ? records_csv(recs) : records_json(stem, recs, meta.dump());
  const auto path = write_report(g.out, stem, f, text);
  fmt::print("wrote {}\n", path.string());
}

void print_medians(std::span<const PerturbationRecord> recs) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : recs) groups[{r.selector, r.transform}].push_back(r.ppl_ratio);
  for (const auto& [key, ratios] : groups) {
    fmt::print("{:<28} {:<40} median ppl_ratio {:.4f} (n={})\n", key.first, key.second, median(ratios), ratios.size());
  }
}

std::vector<CentroidTransform> default_perturb_transforms() {
  using K = TransformKind;
  return {CentroidTransform::identity(),
          CentroidTransform::seeded(K::sorted_gaussian, 0),
          CentroidTransform::seeded(K::sorted_gaussian, 0).corrected(),
          CentroidTransform::seeded(K::freq_weighted_monotone, 0),
          CentroidTransform::seeded(K::sign_scramble_shift, 0),
          CentroidTransform::seeded(K::sign_preserving_shuffle, 0),
          CentroidTransform::seeded(K::gaussian_random, 0),
          CentroidTransform::seeded(K::random_permutation, 0)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weight clustering and centroid perturbation lab"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Globals g;
  app.add_option("--model", g.model, "checkpoint path (.wcx; config in <path>.json)");
  app.add_option("--corpus", g.corpus, "byte corpus; the final 10% is held out")->capture_default_str();
  app.add_option("--out", g.out, "report directory")->capture_default_str();
  app.add_option("--format", g.format, "report format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  app.add_option("--seed", g.seed, "base seed (training, k-means init)")->capture_default_str();
  app.add_option("--eval-tokens", g.eval_tokens, "held-out tokens used for PPL (0 = all)")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a toy model and save it to --model");
  TrainOptions topt;
  ModelConfig cfg;
  std::string norm = "layer_norm";
  train_cmd->add_option("--steps", topt.steps)->capture_default_str();
  train_cmd->add_option("--lr", topt.lr)->capture_default_str();
  train_cmd->add_option("--batch", topt.batch)->capture_default_str();
  train_cmd->add_option("--layers", cfg.n_layers)->capture_default_str();
  train_cmd->add_option("--d-model", cfg.d_model)->capture_default_str();
  train_cmd->add_option("--heads", cfg.n_heads)->capture_default_str();
  train_cmd->add_option("--d-ff", cfg.d_ff)->capture_default_str();
  train_cmd->add_option("--context", cfg.context)->capture_default_str();
  train_cmd->add_option("--norm", norm)->check(CLI::IsMember({"layer_norm", "rms_norm"}))->capture_default_str();
  train_cmd->add_option("--log-every", topt.log_every, "print the loss every N steps")->capture_default_str();

  auto* eval_cmd = app.add_subcommand("eval", "held-out perplexity of --model");

  auto* cluster_cmd = app.add_subcommand("cluster", "adaptive per-layer K plan");
  double budget = 0.5;
  std::string candidates = "16,32,64";
  std::string save_clustered;
  cluster_cmd->add_option("--budget", budget, "max PPL increase per layer")->capture_default_str();
  cluster_cmd->add_option("--candidates", candidates)->capture_default_str();
  cluster_cmd->add_option("--save", save_clustered, "write the clustered model as a checkpoint");

  SuiteArgs sargs;
  auto* perturb_cmd = app.add_subcommand("perturb", "single-layer centroid replacement");
  std::vector<std::string> transforms;
  perturb_cmd->add_option("--layer", sargs.layer, "e.g. layers.4.mlp.gate_proj or 4.gate");
  perturb_cmd->add_option("--transform", transforms, "transform text; repeatable");
  perturb_cmd->add_option("--seeds", sargs.seeds, "count, or comma list")->capture_default_str();
  perturb_cmd->add_option("--k", sargs.k)->capture_default_str();

  auto* sweep_cmd = app.add_subcommand("sweep", "monotone transform sweep");
  sweep_cmd->add_option("--layer", sargs.layer);
  sweep_cmd->add_option("--k", sargs.k)->capture_default_str();

  auto* depth_cmd = app.add_subcommand("depth", "early/mid/late/q-proj replacement");
  depth_cmd->add_option("--seeds", sargs.seeds)->capture_default_str();
  depth_cmd->add_option("--k", sargs.k)->capture_default_str();

  auto* prog_cmd = app.add_subcommand("progressive", "block-by-block replacement, deepest first");
  bool corrected = false;
  std::size_t stride = 2;
  std::string prog_transform = "sorted_gaussian";
  std::string prog_seeds = "5";
  prog_cmd->add_flag("--corrected", corrected, "moment-match every replaced projection");
  prog_cmd->add_option("--stride", stride)->capture_default_str();
  prog_cmd->add_option("--transform", prog_transform)->capture_default_str();
  prog_cmd->add_option("--seeds", prog_seeds)->capture_default_str();
  prog_cmd->add_option("--k", sargs.k)->capture_default_str();

  auto* cov_cmd = app.add_subcommand("coverage", "cluster-size coverage of projections");
  bool cov_all = false;
  cov_cmd->add_option("--layer", sargs.layer);
  cov_cmd->add_option("--k", sargs.k)->capture_default_str();
  cov_cmd->add_flag("--all", cov_all, "every projection");

  auto* bench_cmd = app.add_subcommand("bench", "dense vs rebuild vs LUT generation timing");
  BenchOptions bopt;
  bench_cmd->add_option("--k", bopt.k)->capture_default_str();
  bench_cmd->add_option("--prompt", bopt.prompt_tokens)->capture_default_str();
  bench_cmd->add_option("--generate", bopt.generated_tokens)->capture_default_str();
  bench_cmd->add_option("--reps", bopt.reps)->capture_default_str();

  auto* pack_cmd = app.add_subcommand("pack", "cluster every projection and write a clustered checkpoint");
  std::string pack_output;
  std::size_t pack_k = 32;
  pack_cmd->add_option("--output", pack_output, "clustered checkpoint path")->required();
  pack_cmd->add_option("--k", pack_k)->capture_default_str();

  auto* unpack_cmd = app.add_subcommand("unpack", "reconstruct a clustered checkpoint to a dense one");
  std::string unpack_input, unpack_output;
  unpack_cmd->add_option("input", unpack_input)->required();
  unpack_cmd->add_option("--output", unpack_output)->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "list the records of a WCX file");
  std::string inspect_input;
  inspect_cmd->add_option("input", inspect_input)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    auto eval_tokens = [&](const CorpusSplit& c) { return eval_slice(c, g.eval_tokens); };

    if (*train_cmd) {
      if (g.model.empty()) throw InvalidInput("train needs --model <output checkpoint>");
      cfg.norm = parse_norm(norm);
      cfg.seed = g.seed;
      topt.seed = g.seed;
      const CorpusSplit corpus = load_corpus(g.corpus);
      const ToyModel init = ToyModel::init(cfg);
      const double init_ppl = perplexity(init, eval_tokens(corpus));
      topt.on_log = [](std::size_t step, double loss) {
        fmt::print("step {:5d} loss {:.4f}\n", step, loss);
        std::fflush(stdout);
      };
      const TrainResult r = train(init, corpus.train, topt);
      save_checkpoint(g.model, r.model);
      const ToyModel saved = load_checkpoint(g.model).model;
      const double ppl = perplexity(saved, eval_tokens(corpus));
      fmt::print("init ppl {:.4f}  trained ppl {:.4f}  ratio {:.4f}  {:.1f}s\n", init_ppl, ppl, ppl / init_ppl, r.seconds);
      nlohmann::json summary = {{"model_id", model_id(saved)}, {"init_ppl", init_ppl}, {"ppl", ppl},
                                {"steps", topt.steps},         {"lr", topt.lr},       {"batch", topt.batch},
                                {"seed", g.seed},              {"eval_tokens", g.eval_tokens},
                                {"final_loss", r.losses.empty() ? 0.0 : r.losses.back()}};
      write_text(fs::path(g.out) / "train.json", summary.dump(2) + "\n");
      return kOk;
    }
    if (*inspect_cmd) {
      const auto records = read_container(read_file(inspect_input));
      fmt::print("{:<32} {:>6} {:>6} {:>6} {:>5}\n", "name", "D", "O", "K", "mode");
      for (const auto& rec : records) {
        if (const auto* cm = std::get_if<ClusteredMatrix>(&rec.tensor)) {
          fmt::print("{:<32} {:>6} {:>6} {:>6} {:>5}\n", rec.name, cm->rows(), cm->cols(), cm->k(), 0);
        } else {
          const auto& d = std::get<DenseMatrix>(rec.tensor);
          fmt::print("{:<32} {:>6} {:>6} {:>6} {:>5}\n", rec.name, d.rows(), d.cols(), 0, 255);
        }
      }
      return kOk;
    }
    if (*unpack_cmd) {
      const Checkpoint ck = load_checkpoint(unpack_input);
      save_checkpoint(unpack_output, ck.model);
      fmt::print("wrote {} ({} clustered tensors reconstructed)\n", unpack_output, ck.clustered.size());
      return kOk;
    }

    const ToyModel model = require_model(g);
    const CorpusSplit corpus = load_corpus(g.corpus);
    const auto eval = eval_tokens(corpus);

    if (*eval_cmd) {
      fmt::print("{}\n", perplexity(model, eval));
    } else if (*cluster_cmd) {
      const auto cands = parse_candidates(candidates);
      KMeansOptions km;
      km.seed = g.seed;
      const ClusterPlan plan = plan_model(model, cands, budget, eval, km);
      const ReportFormat f = parse_format(g.format);
      const auto recs = plan_records(model, plan);
      const auto path = write_report(g.out, "cluster", f, f == ReportFormat::csv ? records_csv(recs) : plan_json(model, plan));
      for (const auto& [k, n] : plan.k_histogram()) fmt::print("K={:<4} {} layers\n", k, n);
      fmt::print("baseline ppl {:.4f}  clustered ppl {:.4f}  delta {:+.4f}  plan {}\n", plan.baseline_ppl,
                 plan.clustered_ppl, plan.clustered_ppl - plan.baseline_ppl, plan.valid() ? "valid" : "INVALID");
      fmt::print("wrote {}\n", path.string());
      if (!save_clustered.empty()) save_checkpoint(save_clustered, apply_clustered(model, plan.clustered), plan.clustered);
    } else if (*perturb_cmd) {
      std::vector<CentroidTransform> ts;
      for (const auto& t : transforms) ts.push_back(CentroidTransform::parse(t));
      if (ts.empty()) ts = default_perturb_transforms();
      const auto recs = run_single_layer_suite(model, selector_or_default(sargs.layer, model), ts,
                                               suite_options(g, sargs), eval);
      print_medians(recs);
      emit_records(g, "perturb", recs);
    } else if (*sweep_cmd) {
      const auto sel = selector_or_default(sargs.layer, model);
      const auto recs = run_monotone_sweep(model, sel, monotone_sweep_transforms(), suite_options(g, sargs), eval);
      std::vector<double> dv, dp;
      const double base_s2 = recs.front().sigma2;
      for (const auto& r : recs) {
        dv.push_back(std::abs(std::log(r.sigma2 / base_s2)));
        dp.push_back(std::log(r.ppl_ratio));
      }
      const double rho = spearman(dv, dp);
      print_medians(recs);
      fmt::print("spearman(|log sigma2 ratio|, log ppl ratio) = {:.4f}\n", rho);
      emit_records(g, "sweep", recs, {{"spearman", rho}});
    } else if (*depth_cmd) {
      const auto sels = depth_selectors(model.config());
      const auto recs = run_depth_suite(model, sels, suite_options(g, sargs), eval);
      print_medians(recs);
      emit_records(g, "depth", recs);
    } else if (*prog_cmd) {
      CentroidTransform t = CentroidTransform::parse(prog_transform);
      if (corrected) t = t.corrected();
      KMeansOptions km;
      km.seed = g.seed;
      const auto clustered = cluster_all(model, sargs.k, km);
      std::vector<PerturbationRecord> recs;
      for (std::uint64_t s : parse_seeds(prog_seeds)) {
        const auto curve = run_progressive(model, t, stride, s, clustered, eval);
        for (const auto& p : curve.points) {
          fmt::print("seed {:3d} {:5.1f}% ppl_ratio {:.4f}\n", s, p.fraction_pct, p.ppl_ratio);
        }
        const auto rows = curve.records();
        recs.insert(recs.end(), rows.begin(), rows.end());
      }
      emit_records(g, "progressive", recs);
    } else if (*cov_cmd) {
      KMeansOptions km;
      km.seed = g.seed;
      std::vector<LayerSelector> sels;
      if (cov_all) {
        sels = model.projection_selectors();
      } else {
        sels.push_back(selector_or_default(sargs.layer, model));
      }
      std::vector<CoverageReport> reps;
      for (const auto& sel : sels) {
        reps.push_back(coverage_report(cluster_matrix(model.projection(sel), sargs.k, km), sel.to_string()));
        const auto& r = reps.back();
        fmt::print("{:<28} K={} {} clusters cover {:.0f}%  skew {:+.3f}  excess kurtosis {:+.3f}\n", r.name, r.k,
                   r.clusters_for_target, 100 * r.target_share, r.skewness, r.excess_kurtosis);
      }
      const ReportFormat f = parse_format(g.format);
      const auto path = write_report(g.out, "coverage", f, f == ReportFormat::csv ? coverage_csv(reps) : coverage_json(reps));
      fmt::print("wrote {}\n", path.string());
    } else if (*bench_cmd) {
      bopt.kmeans.seed = g.seed;
      const auto rows = bench_execution_paths(model, corpus.heldout, bopt);
      for (const auto& r : rows) fmt::print("{:<8} {:9.2f} ms  x{:.2f}\n", r.path, r.mean_ms, r.ratio);
      const ReportFormat f = parse_format(g.format);
      nlohmann::json meta = {{"k", bopt.k}, {"prompt_tokens", bopt.prompt_tokens},
                             {"generated_tokens", bopt.generated_tokens}};
      const auto path = write_report(g.out, "bench", f, f == ReportFormat::csv ? bench_csv(rows) : bench_json(rows, meta.dump()));
      fmt::print("wrote {}\n", path.string());
    } else if (*pack_cmd) {
      KMeansOptions km;
      km.seed = g.seed;
      std::map<std::string, ClusteredMatrix> clustered;
      std::vector<NamedClustered> named;
      for (const auto& sel : model.projection_selectors()) {
        auto cm = cluster_matrix(model.projection(sel), pack_k, km);
        named.push_back({tensor_name(sel), cm});
        clustered.emplace(tensor_name(sel), std::move(cm));
      }
      save_checkpoint(pack_output, apply_clustered(model, clustered), clustered);
      const auto rows = storage_report(named);
      const ReportFormat f = parse_format(g.format);
      const auto path = write_report(g.out, "storage", f, f == ReportFormat::csv ? storage_csv(rows) : storage_json(rows));
      fmt::print("wrote {} and {}\n", pack_output, path.string());
    }
    return kOk;
  } catch (const InvalidInput& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  } catch (const FormatError& e) {
    fmt::print(stderr, "format error: {} (record {}, offset {})\n", e.what(), e.record(), e.offset());
    return kData;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  } catch (const NumericalError& e) {
    fmt::print(stderr, "numerical error: {}\n", e.what());
    return kNumerical;
  }
}
