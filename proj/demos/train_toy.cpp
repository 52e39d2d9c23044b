// Trains the default toy model on a synthetic attribute corpus and reports
// retrieval and classification on a held-out split.
//
//   demo_train_toy [steps] [seed]
#include "lotlip/evaluation.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
  using namespace lotlip;
  RunConfig config;
  if (argc > 1) config.train.steps = std::atoi(argv[1]);
  if (argc > 2) config.train.seed = std::strtoull(argv[2], nullptr, 10);

  SyntheticCorpusOptions corpus;
  corpus.n = 256;
  auto split = split_manifest(generate_synthetic_corpus(corpus), 64);
  const Dataset train_data = make_dataset(std::move(split.train), config.model.image);
  const Dataset eval_data = make_dataset(std::move(split.eval), config.model.image, {}, train_data.class_names);
  const auto stats = corpus_stats(train_data.records);
  std::printf("%zu train / %zu eval records, %.2f sub-captions per long text\n", train_data.size(), eval_data.size(),
              stats.avg_subcaptions_per_text);

  TrainState state = init_training(config, train_data, default_templates());
  train(state, train_data, [&](const StepMetrics& m) {
    if (m.step % 50 == 0 || m.step + 1 == static_cast<std::uint64_t>(config.train.steps)) {
      std::printf("step %4llu  loss %.4f  (short %.4f, long %.4f)  tau %.4f\n", static_cast<unsigned long long>(m.step),
                  m.loss_total, m.loss_short, m.loss_long, m.tau);
    }
  });

  for (const auto& r : evaluate_all(eval_data, state.model, default_templates())) {
    std::cout << to_json(r).dump() << '\n';
  }
}
