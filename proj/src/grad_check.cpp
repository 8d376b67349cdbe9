#include "frn/grad_check.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "frn/training.hpp"

namespace frn {

ModelConfig grad_check_config() {
  ModelConfig config;
  config.feature_dim = 8;
  config.projection_dim = 8;
  config.g_layers = {8, 8};
  config.f_layers = {4};
  config.text_projection_dim = 4;
  return config;
}

GradCheckReport grad_check(const ModelParams<double>& params,
                           std::span<const std::vector<ItemInput>> outfits,
                           std::span<const int> labels, double h, double tol,
                           const GradientHook& hook) {
  const auto start = std::chrono::steady_clock::now();
  BatchLoss<double> analytic = batch_loss<double>(params, outfits, labels, Mode::eval, nullptr);
  if (hook) hook(analytic.grads);

  std::vector<const Tensor<double>*> grads;
  analytic.grads.visit(
      [&grads](const std::string&, const Tensor<double>& g) { grads.push_back(&g); });

  auto loss_at = [&](const ModelParams<double>& p) {
    Tape<double> tape;
    const BoundParams<double> bound = bind(tape, p, false);
    const ForwardPass<double> pass = forward<double>(bound, outfits, Mode::eval, nullptr);
    return softmax_cross_entropy(pass.logits, std::vector<int>(labels.begin(), labels.end()))
        .loss.value()
        .item();
  };

  GradCheckReport report;
  ModelParams<double> probe = params;
  std::size_t k = 0;
  probe.visit([&](const std::string& name, Tensor<double>& t) {
    const Tensor<double>& g = *grads[k++];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + h;
      const double plus = loss_at(probe);
      t[i] = saved - h;
      const double minus = loss_at(probe);
      t[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double ga = g[i];
      const double rel =
          std::abs(ga - numeric) / std::max({1.0, std::abs(ga), std::abs(numeric)});
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = name + "[" + std::to_string(i) + "]";
      }
      if (rel > tol) report.failures.push_back({name, i, ga, numeric, rel});
    }
  });
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace frn
