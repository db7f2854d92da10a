#include "usgan/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "usgan/errors.hpp"

namespace usgan {

std::vector<EvalRow> evaluate_synthesis(const EvalInputs& in) {
  if (!in.generator || !in.embedder) throw ValidationError("evaluation needs a generator and an embedder");
  check_image_batch(in.images, in.config);
  const int64_t n = in.images.size(0);
  if (in.labels.numel() != n || static_cast<int64_t>(in.names.size()) != n)
    throw DimensionError("evaluation: images, labels and names differ in count");

  torch::NoGradGuard no_grad;
  const int64_t C = in.config.num_classes;
  std::vector<EvalRow> rows;
  for (int64_t i = 0; i < n; ++i) {
    const auto x = in.images[i];
    const int64_t source = in.labels[i].item<int64_t>();
    std::vector<int64_t> targets;
    for (int64_t c = 0; c < C; ++c)
      if (in.include_source_class || c != source) targets.push_back(c);
    if (targets.empty()) continue;

    const auto ids = torch::tensor(targets, torch::kInt64);
    const auto xs = x.unsqueeze(0).expand({static_cast<int64_t>(targets.size()), -1, -1, -1});
    const auto ys = generator_forward(*in.generator, xs, usgan::one_hot(ids, C), in.config).output;
    torch::Tensor predicted;
    if (in.classifier) predicted = (*in.classifier)(ys);

    const auto fx = in.embedder->embed(x);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const auto y = ys[static_cast<int64_t>(t)];
      EvalRow row;
      row.image = in.names[static_cast<std::size_t>(i)];
      row.source = source;
      row.target = targets[t];
      row.acd = acd_from_features(fx, in.embedder->embed(y));
      row.drift = identity_drift(x, y);
      if (in.verifier) row.fvs = verification_score(*in.verifier, x, y);
      row.predicted = in.classifier ? predicted[static_cast<int64_t>(t)].item<int64_t>() : -1;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  out.count = static_cast<int64_t>(values.size());
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / double(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / double(values.size() - 1));
  }
  return out;
}

EvalSummary summarize(const std::vector<EvalRow>& rows) {
  std::vector<double> acds, drifts, fvss;
  int64_t classified = 0, correct = 0;
  for (const auto& r : rows) {
    acds.push_back(r.acd);
    drifts.push_back(r.drift);
    if (r.fvs) fvss.push_back(*r.fvs);
    if (r.predicted >= 0) {
      ++classified;
      correct += r.predicted == r.target;
    }
  }
  EvalSummary s;
  s.acd = mean_std(acds);
  s.drift = mean_std(drifts);
  if (!fvss.empty()) s.fvs = mean_std(fvss);
  if (classified > 0) s.expression_accuracy = double(correct) / double(classified);
  return s;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string pm(const MeanStd& m) { return num(m.mean) + " ± " + num(m.stddev); }

}  // namespace

std::string format_eval_rows(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << "image\tsource\ttarget\tacd\tdrift\tfvs\tpredicted\n";
  for (const auto& r : rows)
    os << r.image << '\t' << r.source << '\t' << r.target << '\t' << num(r.acd) << '\t'
       << num(r.drift) << '\t' << (r.fvs ? num(*r.fvs) : "NA") << '\t' << r.predicted << '\n';
  return os.str();
}

std::string format_eval_summary(const EvalSummary& s) {
  std::ostringstream os;
  os << "metric\tvalue\tn\n";
  os << "acd\t" << pm(s.acd) << '\t' << s.acd.count << '\n';
  os << "drift\t" << pm(s.drift) << '\t' << s.drift.count << '\n';
  if (s.fvs) os << "fvs\t" << pm(*s.fvs) << '\t' << s.fvs->count << '\n';
  if (s.expression_accuracy) os << "expression_accuracy\t" << num(*s.expression_accuracy) << "\t" << s.acd.count << '\n';
  return os.str();
}

}  // namespace usgan
