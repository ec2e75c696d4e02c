// saplma-synth: writes synthetic activation matrices (and optionally a
// synthetic few-shot score file) for a dataset index, so the pipeline can be
// exercised without running a language model.

#include <cmath>
#include <iostream>

#include "CLI11.hpp"
#include "saplma/activation_store.hpp"
#include "saplma/error.hpp"
#include "saplma/rng.hpp"
#include "saplma/synthetic.hpp"

namespace fs = std::filesystem;
using namespace saplma;

int main(int argc, char** argv) {
  CLI::App app{"Synthetic activation store for a dataset index"};
  std::string index_path;
  std::string pattern;
  std::vector<int> layers;
  std::string kind = "shared";
  synthetic::Spec spec;
  std::string few_shot_path;
  std::vector<int> shots{3, 5};

  app.add_option("--index", index_path, "dataset index (JSONL)")->required();
  app.add_option("--out", pattern, "output path; '{layer}' is replaced by the layer number")->required();
  app.add_option("--layer", layers, "layer (repeatable); omit for a single matrix");
  app.add_option("--dim", spec.dim, "vector width");
  app.add_option("--kind", kind, "shared or orthogonal")->check(CLI::IsMember({"shared", "orthogonal"}));
  app.add_option("--signal", spec.signal, "signal strength");
  app.add_option("--topic-offset", spec.topic_offset, "per-topic shift scale");
  app.add_option("--seed", spec.seed, "random seed");
  app.add_option("--few-shot", few_shot_path, "also write a synthetic few-shot CSV here");
  app.add_option("--shots", shots, "shot counts for --few-shot");
  CLI11_PARSE(app, argc, argv);

  try {
    spec.kind = synthetic::parse_kind(kind);
    const auto index = store::DatasetIndex::load(index_path);
    if (layers.empty()) layers.push_back(0);
    for (int layer : layers) {
      auto layer_spec = spec;
      layer_spec.seed = spec.seed + static_cast<std::uint64_t>(layer);
      auto m = synthetic::make_matrix(index, layer_spec);
      std::string path = pattern;
      if (auto pos = path.find("{layer}"); pos != std::string::npos) {
        path.replace(pos, 7, std::to_string(layer));
      }
      store::write_activation_matrix(m, path);
      std::cout << "wrote " << path << " (" << m.count << " x " << m.dim << ")\n";
    }
    if (!few_shot_path.empty()) {
      // Weakly informative scores: the true-token probability leans toward the label.
      Rng rng(spec.seed ^ 0x5f5f5f5fULL);
      std::vector<store::FewShotRecord> records;
      for (int k : shots) {
        for (const auto& e : index.entries()) {
          const double z = rng.normal() + (e.label ? 0.3 : -0.3);
          const double p = 1.0 / (1.0 + std::exp(-z));
          records.push_back({e.id, 0.5 * p + 1e-6, 0.5 * (1.0 - p) + 1e-6, k});
        }
      }
      store::write_few_shot(records, few_shot_path);
      std::cout << "wrote " << few_shot_path << " (" << records.size() << " records)\n";
    }
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
  return 0;
}
