"""Straight-line oracle for message passing, pooling and gated fusion.

Prints C++ initializers consumed by tests/golden.hpp. Graph layout follows the
MSG/LSG construction rule: ordinary nodes first (ISG then TSG), super node
last; scene edges carry their relation label, super links carry "global".
"""

import math

from common import elu, fmt, formula_h, formula_param, layer_norm, leaky, sigmoid, stub_embed


class Graph:
    def __init__(self, labels, edges, key, dim):
        self.n = len(labels)
        self.dim = dim
        self.z0 = [list(stub_embed(x, dim)) for x in labels] + [list(stub_embed(key, dim))]
        self.incoming = {i: [] for i in range(self.n + 1)}
        for s, t, rel in edges:
            e = list(stub_embed(rel, dim))
            self.incoming[t].append((s, e))
            if s != t:
                self.incoming[s].append((t, e))
        g = list(stub_embed("global", dim))
        sn = self.n
        for i in range(self.n):
            self.incoming[i].append((sn, g))
            self.incoming[sn].append((i, g))


def matvec(w, x):
    return [sum(w[r][c] * x[c] for c in range(len(x))) for r in range(len(w))]


def adapter_params(dim, layers):
    p = {}
    for l in range(layers):
        p[f"adapter.gat.{l}.weight"] = formula_param(f"adapter.gat.{l}.weight", dim, 3 * dim)
        p[f"adapter.gat.{l}.attention"] = formula_param(f"adapter.gat.{l}.attention", 1, 3 * dim)
    shapes = {
        "adapter.pool.gate": (1, dim),
        "adapter.pool.feature": (dim, dim),
        "adapter.fusion.query": (dim, dim),
        "adapter.fusion.key": (dim, dim),
        "adapter.fusion.value": (dim, dim),
        "adapter.fusion.output": (dim, dim),
        "adapter.gate.hidden": (dim, 2 * dim),
        "adapter.gate.output": (dim, dim),
    }
    for name, (out, inp) in shapes.items():
        p[name + ".weight"] = formula_param(name + ".weight", out, inp)
        p[name + ".bias"] = formula_param(name + ".bias", 1, out)
    for name in ("adapter.norm.fusion", "adapter.norm.gate"):
        p[name + ".gamma"] = formula_param(name + ".gamma", 1, dim)
        p[name + ".beta"] = formula_param(name + ".beta", 1, dim)
    return p


def alphas(graph, z, p, l):
    a = p[f"adapter.gat.{l}.attention"][0]
    out = {}
    for i in range(graph.n + 1):
        logits = []
        for j, e in graph.incoming[i]:
            m = z[i] + z[j] + e
            logits.append(leaky(sum(a[k] * m[k] for k in range(len(m)))))
        mx = max(logits)
        ex = [math.exp(v - mx) for v in logits]
        s = sum(ex)
        out[i] = [(graph.incoming[i][k][0], ex[k] / s) for k in range(len(ex))]
    return out


def layer(graph, z, p, l):
    w = p[f"adapter.gat.{l}.weight"]
    al = alphas(graph, z, p, l)
    nxt = []
    for i in range(graph.n + 1):
        agg = [0.0] * graph.dim
        for (j, e), (_, alpha) in zip(graph.incoming[i], al[i]):
            msg = [leaky(v) for v in matvec(w, z[i] + z[j] + e)]
            agg = [agg[k] + alpha * msg[k] for k in range(graph.dim)]
        nxt.append([elu(agg[k]) + z[i][k] for k in range(graph.dim)])
    return nxt


def pool(z, p):
    wg, bg = p["adapter.pool.gate.weight"][0], p["adapter.pool.gate.bias"][0][0]
    wf, bf = p["adapter.pool.feature.weight"], p["adapter.pool.feature.bias"][0]
    gates = [sum(wg[k] * row[k] for k in range(len(row))) + bg for row in z]
    mx = max(gates)
    ex = [math.exp(g - mx) for g in gates]
    s = sum(ex)
    zg = [0.0] * len(z[0])
    for row, e in zip(z, ex):
        feat = [v + b for v, b in zip(matvec(wf, row), bf)]
        zg = [zg[k] + (e / s) * feat[k] for k in range(len(zg))]
    return zg


def linear(p, name, x):
    return [v + b for v, b in zip(matvec(p[name + ".weight"], x), p[name + ".bias"][0])]


def fuse(h, zg, p, heads):
    d = len(zg)
    hd = d // heads
    k = linear(p, "adapter.fusion.key", zg)
    v = linear(p, "adapter.fusion.value", zg)
    out = []
    for row in h:
        q = linear(p, "adapter.fusion.query", row)
        merged = []
        for hh in range(heads):
            sl = slice(hh * hd, (hh + 1) * hd)
            score = sum(a * b for a, b in zip(q[sl], k[sl])) / math.sqrt(hd)
            weight = math.exp(score - score)  # softmax over the single key
            merged += [weight * x for x in v[sl]]
        a_row = [x + y for x, y in zip(linear(p, "adapter.fusion.output", merged), row)]
        o = layer_norm(a_row, p["adapter.norm.fusion.gamma"][0], p["adapter.norm.fusion.beta"][0])
        hidden = [max(0.0, x) for x in linear(p, "adapter.gate.hidden", o + list(row))]
        g = [sigmoid(x) for x in linear(p, "adapter.gate.output", hidden)]
        mixed = [gi * oi + (1 - gi) * hi for gi, oi, hi in zip(g, o, row)]
        out.append(layer_norm(mixed, p["adapter.norm.gate.gamma"][0], p["adapter.norm.gate.beta"][0]))
    return out


def cpp_matrix(name, rows):
    body = ",\n    ".join("{" + ", ".join(fmt(x) for x in r) + "}" for r in rows)
    return f"inline const std::vector<std::vector<double>> {name} = {{\n    {body}}};\n"


def main():
    out = []

    # 3-node path a-b-c as a linguistic graph, d=2, one layer.
    path = Graph(["a", "b", "c"], [(0, 1, "r1"), (1, 2, "r2")], "a b c", 2)
    p = adapter_params(2, 1)
    al = alphas(path, path.z0, p, 0)
    rows = []
    for i in range(path.n + 1):
        for src, a in sorted(al[i]):
            rows.append([i, src, a])
    out.append(cpp_matrix("kPathAlpha", rows))

    # Single ordinary node plus super node, d=4, layer 0.
    single = Graph(["dog"], [], "a dog", 4)
    p = adapter_params(4, 1)
    out.append(cpp_matrix("kSingleNodeLayer", layer(single, single.z0, p, 0)))

    # Five ordinary nodes (3 ISG, 2 TSG) plus image super node, d=4, L=2.
    msg = Graph(
        ["man", "horse", "field", "man", "hat"],
        [(0, 1, "rides"), (1, 2, "in"), (3, 4, "wears")],
        "img_0001",
        4,
    )
    p = adapter_params(4, 2)
    z = msg.z0
    for l in range(2):
        z = layer(msg, z, p, l)
    zg = pool(z, p)
    out.append(cpp_matrix("kFiveNodeZg", [zg]))
    out.append(cpp_matrix("kFuseHPrime", fuse(formula_h(3, 4), zg, p, 2)))
    print("\n".join(out))


if __name__ == "__main__":
    main()
