#include "lgc3d/metrics.hpp"

namespace lgc3d {

std::vector<int64_t> confusion_matrix(const std::vector<int64_t>& truth, const std::vector<int64_t>& pred,
                                      int64_t classes) {
  if (truth.empty()) throw ValueError("metrics: empty label vectors");
  if (truth.size() != pred.size())
    throw ValueError("metrics: " + std::to_string(truth.size()) + " true labels vs " +
                     std::to_string(pred.size()) + " predictions");
  if (classes < 1) throw ValueError("metrics: class count must be >= 1");
  std::vector<int64_t> conf(static_cast<size_t>(classes * classes), 0);
  for (size_t i = 0; i < truth.size(); ++i) {
    const int64_t t = truth[i], p = pred[i];
    if (t < 0 || t >= classes || p < 0 || p >= classes)
      throw ValueError("metrics: label pair (" + std::to_string(t) + "," + std::to_string(p) +
                       ") outside [0," + std::to_string(classes) + ")");
    ++conf[static_cast<size_t>(t * classes + p)];
  }
  return conf;
}

namespace {
int64_t total_of(const std::vector<int64_t>& conf) {
  int64_t n = 0;
  for (int64_t v : conf) n += v;
  return n;
}
}  // namespace

double overall_accuracy(const std::vector<int64_t>& conf, int64_t classes) {
  const int64_t n = total_of(conf);
  if (n == 0) throw ValueError("metrics: empty confusion matrix");
  int64_t diag = 0;
  for (int64_t k = 0; k < classes; ++k) diag += conf[static_cast<size_t>(k * classes + k)];
  return static_cast<double>(diag) / static_cast<double>(n);
}

double average_accuracy(const std::vector<int64_t>& conf, int64_t classes) {
  double sum = 0.0;
  int64_t counted = 0;
  for (int64_t k = 0; k < classes; ++k) {
    int64_t row = 0;
    for (int64_t j = 0; j < classes; ++j) row += conf[static_cast<size_t>(k * classes + j)];
    if (row == 0) continue;  // class absent from the evaluated set
    sum += static_cast<double>(conf[static_cast<size_t>(k * classes + k)]) / static_cast<double>(row);
    ++counted;
  }
  if (counted == 0) throw ValueError("metrics: no class has any true sample");
  return sum / static_cast<double>(counted);
}

double kappa_coefficient(const std::vector<int64_t>& conf, int64_t classes) {
  const int64_t n = total_of(conf);
  if (n == 0) throw ValueError("metrics: empty confusion matrix");
  int64_t diag = 0;
  double pe_num = 0.0;
  for (int64_t k = 0; k < classes; ++k) {
    diag += conf[static_cast<size_t>(k * classes + k)];
    int64_t row = 0, col = 0;
    for (int64_t j = 0; j < classes; ++j) {
      row += conf[static_cast<size_t>(k * classes + j)];
      col += conf[static_cast<size_t>(j * classes + k)];
    }
    pe_num += static_cast<double>(row) * static_cast<double>(col);
  }
  const double po = static_cast<double>(diag) / static_cast<double>(n);
  const double pe = pe_num / (static_cast<double>(n) * static_cast<double>(n));
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;  // degenerate single-cell matrix
  return (po - pe) / (1.0 - pe);
}

MetricsReport metrics_from_confusion(std::vector<int64_t> confusion, int64_t classes) {
  MetricsReport r;
  r.classes = classes;
  r.samples = total_of(confusion);
  r.oa = overall_accuracy(confusion, classes);
  r.aa = average_accuracy(confusion, classes);
  r.kappa = kappa_coefficient(confusion, classes);
  r.per_class.assign(static_cast<size_t>(classes), 0.0);
  r.class_counts.assign(static_cast<size_t>(classes), 0);
  for (int64_t k = 0; k < classes; ++k) {
    int64_t row = 0;
    for (int64_t j = 0; j < classes; ++j) row += confusion[static_cast<size_t>(k * classes + j)];
    r.class_counts[static_cast<size_t>(k)] = row;
    if (row > 0)
      r.per_class[static_cast<size_t>(k)] =
          static_cast<double>(confusion[static_cast<size_t>(k * classes + k)]) / static_cast<double>(row);
  }
  r.confusion = std::move(confusion);
  return r;
}

MetricsReport compute_metrics(const std::vector<int64_t>& truth, const std::vector<int64_t>& pred,
                              int64_t classes) {
  return metrics_from_confusion(confusion_matrix(truth, pred, classes), classes);
}

}  // namespace lgc3d
