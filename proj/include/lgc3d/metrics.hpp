#pragma once

#include <string>
#include <vector>

#include "lgc3d/errors.hpp"

namespace lgc3d {

struct MetricsReport {
  int64_t classes = 0;
  int64_t samples = 0;
  std::vector<int64_t> confusion;    // classes x classes, rows = true class
  std::vector<double> per_class;     // recall per class (0 when the class has no true samples)
  std::vector<int64_t> class_counts; // true samples per class
  double oa = 0.0;
  double aa = 0.0;  // mean recall over classes with at least one true sample
  double kappa = 0.0;
};

std::vector<int64_t> confusion_matrix(const std::vector<int64_t>& truth, const std::vector<int64_t>& pred,
                                      int64_t classes);

double overall_accuracy(const std::vector<int64_t>& confusion, int64_t classes);
double average_accuracy(const std::vector<int64_t>& confusion, int64_t classes);
double kappa_coefficient(const std::vector<int64_t>& confusion, int64_t classes);

MetricsReport metrics_from_confusion(std::vector<int64_t> confusion, int64_t classes);
MetricsReport compute_metrics(const std::vector<int64_t>& truth, const std::vector<int64_t>& pred,
                              int64_t classes);

}  // namespace lgc3d
