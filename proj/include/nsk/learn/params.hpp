#pragma once

// Hyperparameter bundles for the four classifiers. Defaults follow the
// reference configuration used throughout the pipeline.

#include <vector>

namespace nsk::learn {

struct DtParams {
  int min_samples_split = 2;
  int max_depth = -1;  // -1: unlimited
};

struct RfParams {
  int n_trees = 100;
  int max_features = -1;  // -1: floor(sqrt(d))
  DtParams tree;
};

struct SvmParams {
  double c = 1.0;
  double gamma = -1.0;  // -1: "scale", 1/(d * Var(X))
  double tol = 1e-3;    // KKT tolerance
  int max_passes = 200;
};

struct MlpParams {
  std::vector<int> hidden = {64, 32, 16};
  int epochs = 10;
  int batch = 32;
  double dropout = 0.5;
  double l1 = 0.005;
  double l2 = 0.001;
  double lr = 1e-3;  // Adam step size
};

}  // namespace nsk::learn
