#include "memeclip/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

#include "memeclip/error.hpp"

namespace memeclip {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) fail(ErrorCode::dimension, "predictions and labels differ in length");
  if (a == 0) fail(ErrorCode::data, "metrics need at least one sample");
}

void check_range(std::span<const int> values, int n_classes, const char* what) {
  for (int v : values) {
    if (v < 0 || v >= n_classes) {
      fail(ErrorCode::index, std::string(what) + " " + std::to_string(v) + " out of range [0, " +
                                 std::to_string(n_classes) + ")");
    }
  }
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  check_lengths(predictions.size(), labels.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

MacroF1 macro_f1(std::span<const int> predictions, std::span<const int> labels, int n_classes) {
  check_lengths(predictions.size(), labels.size());
  if (n_classes < 2) fail(ErrorCode::configuration, "macro F1 needs at least two classes");
  check_range(labels, n_classes, "label");
  check_range(predictions, n_classes, "prediction");

  const auto n = static_cast<std::size_t>(n_classes);
  std::vector<std::size_t> tp(n, 0), fp(n, 0), fn(n, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto p = static_cast<std::size_t>(predictions[i]);
    const auto y = static_cast<std::size_t>(labels[i]);
    if (p == y) {
      ++tp[y];
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  MacroF1 out;
  out.per_class.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    const double precision = ratio(tp[c], tp[c] + fp[c]);
    const double recall = ratio(tp[c], tp[c] + fn[c]);
    out.per_class[c] = ratio(2.0 * precision * recall, precision + recall);
  }
  out.macro = std::accumulate(out.per_class.begin(), out.per_class.end(), 0.0) / static_cast<double>(n);
  return out;
}

std::optional<double> binary_auroc(std::span<const double> scores, std::span<const int> labels, int positive_class) {
  if (scores.size() != labels.size()) fail(ErrorCode::dimension, "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney: sum of positive ranks, tied runs sharing their mid-rank.
  // Ranks are kept doubled so every quantity stays an exact integer.
  std::size_t n_pos = 0;
  std::size_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::size_t doubled_mid = i + j + 1;  // 2 * ((i+1) + j) / 2
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == positive_class) {
        ++n_pos;
        doubled_rank_sum += doubled_mid;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const std::size_t doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double macro_auroc(std::span<const double> scores, std::span<const int> labels, int n_classes) {
  if (n_classes < 1) fail(ErrorCode::configuration, "n_classes must be positive");
  const auto n = static_cast<std::size_t>(n_classes);
  if (scores.size() != labels.size() * n) fail(ErrorCode::dimension, "score matrix shape differs from labels");
  check_range(labels, n_classes, "label");

  std::vector<double> column(labels.size());
  double total = 0.0;
  std::size_t evaluable = 0;
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      column[i] = scores[i * n + c];
    }
    const auto auc = binary_auroc(column, labels, static_cast<int>(c));
    if (auc) {
      total += *auc;
      ++evaluable;
    }
  }
  if (evaluable == 0) fail(ErrorCode::undefined_metric, "no class has both positive and negative samples");
  return total / static_cast<double>(evaluable);
}

int argmax(std::span<const double> scores) noexcept {
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace memeclip
