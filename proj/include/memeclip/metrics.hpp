#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memeclip/embedding_store.hpp"

namespace memeclip {

struct MetricsReport {
  std::string task;
  Split split = Split::test;
  double accuracy = 0.0;
  double macro_auroc = 0.0;
  double macro_f1 = 0.0;
  std::size_t n_samples = 0;
  std::vector<double> per_class_f1;

  bool operator==(const MetricsReport&) const = default;
};

double accuracy(std::span<const int> predictions, std::span<const int> labels);

struct MacroF1 {
  double macro = 0.0;
  std::vector<double> per_class;
};

/// Per-class F1 with every 0/0 ratio taken as 0; the macro average runs over
/// all n_classes classes, including ones absent from the labels.
MacroF1 macro_f1(std::span<const int> predictions, std::span<const int> labels, int n_classes);

/// One-vs-rest AUROC of `positive_class` for one score column. Tied scores
/// count one half. Returns nothing when the column has no positives or no
/// negatives.
std::optional<double> binary_auroc(std::span<const double> scores, std::span<const int> labels, int positive_class);

/// Mean one-vs-rest AUROC over classes that have both positives and
/// negatives. `scores` is row-major n_samples x n_classes.
double macro_auroc(std::span<const double> scores, std::span<const int> labels, int n_classes);

/// Index of the largest score; ties go to the lowest index.
int argmax(std::span<const double> scores) noexcept;

}  // namespace memeclip
