// dualcap: corpus generation, two-stage training, captioning, evaluation and ablation.

#include "dualcap/errors.hpp"
#include "dualcap/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>

namespace {

namespace fs = std::filesystem;
using namespace dualcap;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  validate(cfg);
  return cfg;
}

fs::path output_root(const GlobalOptions& g) {
  if (!g.out.empty()) return g.out;
  if (const char* env = std::getenv("DUALCAP_OUT"); env && *env) return env;
  return "runs";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "' (expected train or test)");
}

std::vector<std::string> split_grid(const std::vector<std::string>& args) {
  // cell names contain commas, so several cells in one argument are separated by ';'
  std::vector<std::string> out;
  for (const auto& a : args) {
    std::size_t start = 0;
    while (start <= a.size()) {
      const std::size_t end = std::min(a.find(';', start), a.size());
      const std::string item = a.substr(start, end - start);
      if (item.find_first_not_of(' ') != std::string::npos) out.push_back(item);
      start = end + 1;
    }
  }
  return out;
}

void print_losses(const char* label, const std::vector<double>& losses) {
  for (std::size_t e = 0; e < losses.size(); ++e) std::printf("%s epoch %zu loss %.6f\n", label, e + 1, losses[e]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-encoder, dual-query-transformer image captioning at desk scale"};
  app.require_subcommand(1);
  GlobalOptions global;
  app.add_option("--config", global.config, "Run config JSON (keys override defaults)");
  app.add_option("--seed", global.seed, "Base seed, overrides the config");
  app.add_option("--out", global.out, "Output root (default $DUALCAP_OUT, else ./runs)");

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic general and medical corpus");
  auto* pretrain = app.add_subcommand("pretrain", "Build the tokenizer, train the frozen LM, pre-train both branches");
  auto* finetune = app.add_subcommand("finetune", "Train queries, Q-Formers and projections through the frozen LM");
  bool resume = false;
  finetune->add_flag("--resume", resume, "Continue from an existing finetune checkpoint");

  auto* generate = app.add_subcommand("generate", "Caption a split with the fine-tuned model");
  std::string gen_dataset = "medical";
  std::string gen_split = "test";
  std::string gen_output;
  generate->add_option("--dataset", gen_dataset, "general or medical")->capture_default_str();
  generate->add_option("--split", gen_split, "train or test")->capture_default_str();
  generate->add_option("--output", gen_output, "Predictions file (default <out>/predictions.jsonl)");

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against the manifest references");
  std::string eval_predictions;
  std::string eval_dataset = "medical";
  evaluate->add_option("--predictions", eval_predictions, "JSONL {image, prediction} (default <out>/predictions.jsonl)");
  evaluate->add_option("--dataset", eval_dataset, "Manifest holding the references")->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "Run the ablation grid over seeds");
  std::vector<std::string> grid;
  std::vector<std::uint64_t> seeds;
  ablate->add_option("--grid", grid, "Cells to run, e.g. \"MSMedCap(G,G+M)\"; ';' separates several");
  ablate->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',');

  auto* report = app.add_subcommand("report", "Render the results table from report.json and ablation.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::kConfig);
  }

  try {
    const RunConfig cfg = resolve_config(global);
    const RunLayout layout = run_layout(cfg, output_root(global));

    if (gen->parsed()) {
      const auto summary = stage_gen_data(cfg, layout);
      std::printf("wrote corpus to %s\n", layout.data.string().c_str());
      for (const auto& [key, n] : summary.counts) std::printf("  %-14s %zu\n", key.c_str(), n);
    } else if (pretrain->parsed()) {
      const auto summary = stage_pretrain(cfg, layout);
      std::printf("language model frozen, held-out perplexity %.4f\n", summary.lm_perplexity);
      for (const auto& [branch, losses] : summary.epoch_losses) print_losses(branch.c_str(), losses);
      std::printf("checkpoint %s\n", layout.pretrain().string().c_str());
    } else if (finetune->parsed()) {
      const auto summary = stage_finetune(cfg, layout, resume);
      if (summary.resumed_from > 0) std::printf("resumed at step %lld\n", summary.resumed_from);
      print_losses("finetune", summary.epoch_losses);
      std::printf("%lld steps, checkpoint %s\n", summary.steps, layout.finetune().string().c_str());
    } else if (generate->parsed()) {
      const fs::path out = gen_output.empty() ? layout.predictions() : fs::path(gen_output);
      const auto preds = stage_generate(cfg, layout, gen_dataset, parse_split(gen_split), out);
      std::printf("%zu predictions written to %s\n", preds.size(), out.string().c_str());
    } else if (evaluate->parsed()) {
      const fs::path preds = eval_predictions.empty() ? layout.predictions() : fs::path(eval_predictions);
      const auto summary = stage_evaluate(cfg, layout, preds, eval_dataset);
      std::printf("%zu pairs\n%s", summary.pairs, summary.table.c_str());
    } else if (ablate->parsed()) {
      const auto names = grid.empty() ? cfg.ablation.grid : split_grid(grid);
      const auto cells = select_ablation_cells(names);
      const auto& run_seeds = seeds.empty() ? cfg.ablation.seeds : seeds;
      const auto summary = stage_ablate(cfg, layout, cells, run_seeds);
      for (const auto& c : summary.cells) {
        std::printf("%s:", c.cell.name.c_str());
        for (const auto& s : c.seeds)
          if (s.scores)
            std::printf(" seed %llu CIDEr %.4f", static_cast<unsigned long long>(s.seed), s.scores->cider);
          else
            std::printf(" seed %llu failed (%s)", static_cast<unsigned long long>(s.seed), s.error.c_str());
        std::printf("\n");
      }
      std::printf("%s", summary.table.c_str());
    } else if (report->parsed()) {
      std::printf("%s", stage_report(layout).c_str());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ErrorKind::kArtifact);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
