// Trains one network alone and two networks with mutual grafting on the toy
// task, then prints accuracy and information side by side.
//
//   two_network_demo [epochs] [seed]
#include <cstdio>
#include <cstdlib>

#include "graft/graft.hpp"

int main(int argc, char** argv) {
  const int epochs = argc > 1 ? std::atoi(argv[1]) : 10;
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 0;

  auto run = [&](int k) {
    auto cfg = graft::toy_experiment(k, seed);
    cfg.total_epochs = epochs;
    for (auto& w : cfg.workers) w.epochs = epochs;
    return graft::run_experiment(cfg);
  };

  const auto base = run(1);
  const auto grafted = run(2);

  std::printf("epoch  baseline_acc  grafted_acc(w0)  baseline_info  grafted_info  alpha(conv1,w0)\n");
  for (int e = 0; e < epochs; ++e) {
    const auto& b = base.history[static_cast<std::size_t>(e)];
    const auto& g = grafted.history[static_cast<std::size_t>(e) * 2];
    std::printf("%5d  %12.3f  %15.3f  %13.3f  %12.3f  %15.3f\n", e, b.test_accuracy, g.test_accuracy,
                b.network_information, g.network_information, g.alphas.empty() ? 0.5 : g.alphas.front().alpha);
  }
  const auto ratio = [](const graft::ModelSnapshot& m) { return graft::invalid_ratio(m)[1].fraction; };
  std::printf("invalid ratio at 1e-3: baseline %.3f, grafted %.3f\n", ratio(base.finals[0]), ratio(grafted.finals[0]));
}
