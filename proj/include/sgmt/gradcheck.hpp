// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference check of the adapter's analytic gradients.
//
// Loss is <R, H'> for a seeded random upstream R (sum(H') would be constant
// under the final LayerNorm and hide most of the gradient). Each parameter
// entry and each entry of H is perturbed by +-step in double precision.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sgmt {

struct GradcheckOptions {
  int dim = 4;
  int layers = 2;
  int heads = 2;
  int length = 3;  // T, rows of H
  std::uint64_t seed = 7;
  double step = 1e-4;
  bool no_gate = false;
};

struct TensorCheck {
  std::string name;
  std::size_t size = 0;
  double analytic_norm = 0.0;
  // |a - n| / max(|a| + |n|, 1e-6) over Frobenius norms. The floor keeps
  // tensors whose true gradient is identically zero (pooling gate bias,
  // fusion query/key under a single key) from dividing noise by noise.
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<TensorCheck> tensors;  // adapter tensors, then "H"
  double max_rel_error = 0.0;
  int graph_nodes = 0;  // ordinary nodes + super node
};

// Seeded 5-node multimodal graph (3 image + 2 text entities, super node on
// top), stub embeddings of width dim.
GradcheckReport adapter_gradcheck(const GradcheckOptions& options);

std::string to_json(const GradcheckReport& report);

}  // namespace sgmt
