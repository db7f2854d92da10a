#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "usgan/evaluation.hpp"
#include "usgan/model.hpp"

namespace usgan {

/// One synthesized image: input `image` translated from `source` to `target`.
struct EvalRow {
  std::string image;
  int64_t source = 0;
  int64_t target = 0;
  double acd = 0.0;
  double drift = 0.0;
  std::optional<double> fvs;
  int64_t predicted = 0;
};

struct EvalInputs {
  const GeneratorParams* generator = nullptr;
  ModelConfig config;
  torch::Tensor images;  ///< (N, 3, D, D)
  torch::Tensor labels;  ///< (N) source class ids
  std::vector<std::string> names;
  const Embedder* embedder = nullptr;
  /// Optional; predicted stays -1 when absent.
  const ExpressionClassifier* classifier = nullptr;
  /// Optional verification backend.
  VerificationClient* verifier = nullptr;
  /// Translate to every class (true) or only to classes other than the source.
  bool include_source_class = false;
};

/// Synthesizes every (image, target) pair and scores it.
std::vector<EvalRow> evaluate_synthesis(const EvalInputs& in);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  ///< sample standard deviation (n − 1); 0 for one value
  int64_t count = 0;
};
MeanStd mean_std(const std::vector<double>& values);

struct EvalSummary {
  MeanStd acd;
  MeanStd drift;
  std::optional<MeanStd> fvs;
  std::optional<double> expression_accuracy;
};
EvalSummary summarize(const std::vector<EvalRow>& rows);

/// Tab-separated rows under a header line.
std::string format_eval_rows(const std::vector<EvalRow>& rows);
/// `metric<TAB>mean ± std<TAB>n` lines.
std::string format_eval_summary(const EvalSummary& summary);

}  // namespace usgan
