// SPDX-License-Identifier: Apache-2.0

#include "sgmt/gradcheck.hpp"

#include <algorithm>
#include <json.hpp>

#include "sgmt/gat_adapter.hpp"
#include "sgmt/synthetic.hpp"

namespace sgmt {
namespace {

Matrix random_matrix(SplitMix64& rng, Index rows, Index cols, double scale) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * (2.0 * rng.uniform() - 1.0);
  return m;
}

constexpr double kErrorFloor = 1e-6;

double rel_error(const Matrix& a, const Matrix& n) {
  return (a - n).norm() / std::max(a.norm() + n.norm(), kErrorFloor);
}

}  // namespace

GradcheckReport adapter_gradcheck(const GradcheckOptions& o) {
  AdapterConfig cfg;
  cfg.dim = o.dim;
  cfg.layers = o.layers;
  cfg.gat_heads = 1;
  cfg.fusion_heads = o.heads;
  cfg.no_gate = o.no_gate;
  ParamStore store;
  GatAdapter adapter(store, cfg);
  nn::init_all(store, o.seed);
  // Move biases and norm parameters off their 0/1 initial values.
  SplitMix64 rng(o.seed);
  for (const auto& p : store.all()) p->value += random_matrix(rng, p->value.rows(), p->value.cols(), 0.2);

  SplitMix64 graph_rng(o.seed ^ 0x5851F42D4C957F2DULL);
  const SceneGraph isg = synthetic::random_scene_graph(graph_rng, Origin::Isg, 3, 1);
  const SceneGraph tsg = synthetic::random_scene_graph(graph_rng, Origin::Tsg, 2, 0);
  const EmbeddedGraph graph = embed_graph(build_msg(isg, tsg, "img_gradcheck"), StubProvider(o.dim));
  Matrix h = random_matrix(rng, o.length, o.dim, 1.0);
  const Matrix upstream = random_matrix(rng, o.length, o.dim, 1.0);

  auto loss = [&]() {
    const Matrix zg = adapter.forward(graph);
    return adapter.fuse(h, zg).H_prime.cwiseProduct(upstream).sum();
  };

  AdapterTrace trace = AdapterTrace::run(adapter, graph, h);
  const AdapterGradients grads = adapter_backward(trace, store, upstream);

  GradcheckReport report;
  report.graph_nodes = graph.num_nodes();
  auto check = [&](const std::string& name, Matrix& value, const Matrix& analytic) {
    Matrix numeric(value.rows(), value.cols());
    for (Index i = 0; i < value.size(); ++i) {
      const double keep = value.data()[i];
      value.data()[i] = keep + o.step;
      const double up = loss();
      value.data()[i] = keep - o.step;
      const double down = loss();
      value.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2.0 * o.step);
    }
    TensorCheck c{name, static_cast<std::size_t>(value.size()), analytic.norm(), rel_error(analytic, numeric)};
    report.max_rel_error = std::max(report.max_rel_error, c.rel_error);
    report.tensors.push_back(std::move(c));
  };
  for (auto* p : store.group("adapter")) {
    if (o.no_gate && p->name.starts_with("adapter.gate.")) continue;  // not on the no-gate path
    check(p->name, p->value, grads.params.at(p->name));
  }
  check("H", h, grads.h);
  return report;
}

std::string to_json(const GradcheckReport& report) {
  nlohmann::ordered_json j;
  j["max_rel_error"] = report.max_rel_error;
  j["graph_nodes"] = report.graph_nodes;
  auto& tensors = j["tensors"] = nlohmann::ordered_json::array();
  for (const auto& t : report.tensors) {
    tensors.push_back({{"name", t.name}, {"size", t.size}, {"analytic_norm", t.analytic_norm},
                       {"rel_error", t.rel_error}});
  }
  return j.dump();
}

}  // namespace sgmt
