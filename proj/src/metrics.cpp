#include "minigcn/metrics.hpp"

#include <iomanip>
#include <ostream>
#include <string>

namespace minigcn {

ConfusionMatrix::ConfusionMatrix(Index classes) {
  if (classes < 1) throw ContractError("ConfusionMatrix: need at least one class");
  counts_ = Matrix<std::int64_t>::Zero(classes, classes);
}

void ConfusionMatrix::add(Index truth, Index predicted, std::int64_t n) {
  if (truth < 0 || truth >= classes() || predicted < 0 || predicted >= classes()) {
    throw ContractError("ConfusionMatrix: class pair (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                        ") outside 0.." + std::to_string(classes() - 1));
  }
  if (n < 0) throw ContractError("ConfusionMatrix: negative count");
  counts_(truth, predicted) += n;
}

void ConfusionMatrix::accumulate(const std::vector<Index>& truth, const std::vector<Index>& predicted) {
  if (truth.size() != predicted.size()) {
    throw ContractError("accumulate: " + std::to_string(truth.size()) + " labels vs " +
                        std::to_string(predicted.size()) + " predictions");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) add(truth[i], predicted[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes() != classes()) throw ShapeError("ConfusionMatrix::merge: class counts differ");
  counts_ += other.counts_;
}

ConfusionMatrix accumulate(Index classes, const std::vector<Index>& truth, const std::vector<Index>& predicted) {
  ConfusionMatrix cm(classes);
  cm.accumulate(truth, predicted);
  return cm;
}

DenseVector per_class_accuracy(const ConfusionMatrix& cm) {
  DenseVector acc(cm.classes());
  for (Index c = 0; c < cm.classes(); ++c) {
    const std::int64_t row = cm.counts().row(c).sum();
    if (row == 0) throw ContractError("per_class_accuracy: class " + std::to_string(c) + " has no samples");
    acc(c) = 100.0 * static_cast<double>(cm.count(c, c)) / static_cast<double>(row);
  }
  return acc;
}

double overall_accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ContractError("overall_accuracy: empty confusion matrix");
  return 100.0 * static_cast<double>(cm.counts().trace()) / static_cast<double>(cm.total());
}

double average_accuracy(const ConfusionMatrix& cm) { return per_class_accuracy(cm).mean(); }

double kappa(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ContractError("kappa: empty confusion matrix");
  const double n = static_cast<double>(cm.total());
  const double p_o = static_cast<double>(cm.counts().trace()) / n;
  double p_e = 0.0;
  for (Index c = 0; c < cm.classes(); ++c) {
    p_e += static_cast<double>(cm.counts().row(c).sum()) * static_cast<double>(cm.counts().col(c).sum());
  }
  p_e /= n * n;
  if (p_e >= 1.0) throw NumericError("kappa: undefined, chance agreement is 1");
  return (p_o - p_e) / (1.0 - p_e);
}

void write_report_csv(std::ostream& os, const ConfusionMatrix& cm, Index first_label) {
  const DenseVector acc = per_class_accuracy(cm);
  os << std::fixed << std::setprecision(6);
  os << "class,accuracy\n";
  for (Index c = 0; c < cm.classes(); ++c) os << c + first_label << ',' << acc(c) << '\n';
  os << "OA," << overall_accuracy(cm) << '\n';
  os << "AA," << acc.mean() << '\n';
  os << "kappa," << kappa(cm) << '\n';
  os << std::defaultfloat;
}

void write_report_text(std::ostream& os, const ConfusionMatrix& cm, Index first_label) {
  const DenseVector acc = per_class_accuracy(cm);
  os << std::fixed << std::setprecision(2);
  os << "class  samples  accuracy(%)\n";
  for (Index c = 0; c < cm.classes(); ++c) {
    os << std::setw(5) << c + first_label << "  " << std::setw(7) << cm.counts().row(c).sum() << "  "
       << std::setw(11) << acc(c) << '\n';
  }
  os << "OA    " << overall_accuracy(cm) << '\n';
  os << "AA    " << acc.mean() << '\n';
  os << std::setprecision(4) << "kappa " << kappa(cm) << '\n';
  os << std::defaultfloat;
}

}  // namespace minigcn
