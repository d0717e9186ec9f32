#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "minigcn/linalg.hpp"

namespace minigcn {

/// Counts indexed [true class][predicted class], classes 0..C-1.
class ConfusionMatrix {
public:
  explicit ConfusionMatrix(Index classes);

  Index classes() const { return counts_.rows(); }
  std::int64_t count(Index truth, Index predicted) const { return counts_(truth, predicted); }
  std::int64_t total() const { return counts_.sum(); }
  const Matrix<std::int64_t>& counts() const { return counts_; }

  void add(Index truth, Index predicted, std::int64_t n = 1);
  void accumulate(const std::vector<Index>& truth, const std::vector<Index>& predicted);
  /// Elementwise sum; associative and commutative.
  void merge(const ConfusionMatrix& other);

private:
  Matrix<std::int64_t> counts_;
};

ConfusionMatrix accumulate(Index classes, const std::vector<Index>& truth, const std::vector<Index>& predicted);

/// Per-class recall in percent. Throws ContractError naming an empty class.
DenseVector per_class_accuracy(const ConfusionMatrix& cm);
/// 100 * trace / total.
double overall_accuracy(const ConfusionMatrix& cm);
/// Mean per-class recall in percent.
double average_accuracy(const ConfusionMatrix& cm);
/// Cohen's kappa (p_o - p_e) / (1 - p_e). Throws NumericError when p_e = 1.
double kappa(const ConfusionMatrix& cm);

/// `class,accuracy` rows followed by OA, AA and kappa rows. `first_label`
/// is the displayed id of class 0.
void write_report_csv(std::ostream& os, const ConfusionMatrix& cm, Index first_label = 1);
void write_report_text(std::ostream& os, const ConfusionMatrix& cm, Index first_label = 1);

}  // namespace minigcn
