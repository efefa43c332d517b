#include "adllab/graph.hpp"

#include <algorithm>
#include <cmath>

#include "adllab/error.hpp"

namespace adllab {

namespace {

[[noreturn]] void shape_error(PrimKind kind, const std::string& what) {
    fail("shape-mismatch", std::string(prim_kind_name(kind)) + ": " + what);
}

void require_rank(PrimKind kind, const Tensor& t, int rank, const char* role) {
    if (t.rank() != rank) {
        shape_error(kind, std::string(role) + " must have rank " + std::to_string(rank) +
                              ", got " + t.shape_str());
    }
}

Tensor eval_conv2d(const Tensor& in, const Tensor& k, const Tensor& bias, int stride, int pad) {
    const std::int64_t B = in.dim(0), H = in.dim(1), W = in.dim(2), Ci = in.dim(3);
    const std::int64_t KH = k.dim(0), KW = k.dim(1), Co = k.dim(3);
    const std::int64_t OH = (H + 2 * pad - KH) / stride + 1;
    const std::int64_t OW = (W + 2 * pad - KW) / stride + 1;

    Tensor out({B, OH, OW, Co});
    const double* ip = in.data();
    const double* kp = k.data();
    const double* bp = bias.data();
    double* op = out.data();

    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t oy = 0; oy < OH; ++oy) {
            for (std::int64_t ox = 0; ox < OW; ++ox) {
                double* o = op + ((b * OH + oy) * OW + ox) * Co;
                for (std::int64_t co = 0; co < Co; ++co) o[co] = bp[co];
                for (std::int64_t kh = 0; kh < KH; ++kh) {
                    const std::int64_t y = oy * stride + kh - pad;
                    if (y < 0 || y >= H) continue;
                    for (std::int64_t kw = 0; kw < KW; ++kw) {
                        const std::int64_t x = ox * stride + kw - pad;
                        if (x < 0 || x >= W) continue;
                        const double* iv = ip + ((b * H + y) * W + x) * Ci;
                        const double* kv = kp + (kh * KW + kw) * Ci * Co;
                        for (std::int64_t ci = 0; ci < Ci; ++ci) {
                            const double a = iv[ci];
                            const double* kr = kv + ci * Co;
                            for (std::int64_t co = 0; co < Co; ++co) o[co] += a * kr[co];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor eval_softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
    const std::int64_t B = logits.dim(0), K = logits.dim(1);
    const double* zp = logits.data();
    double loss = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
        const double* z = zp + b * K;
        double m = z[0];
        for (std::int64_t k = 1; k < K; ++k) m = std::max(m, z[k]);
        double sum = 0.0;
        for (std::int64_t k = 0; k < K; ++k) sum += std::exp(z[k] - m);
        loss += std::log(sum) - (z[labels[static_cast<std::size_t>(b)]] - m);
    }
    return Tensor::scalar(loss / static_cast<double>(B));
}

Tensor eval_node(const std::vector<Node>& nodes, const Node& n) {
    auto in = [&](std::size_t i) -> const Tensor& {
        return nodes[static_cast<std::size_t>(n.operands[i])].output;
    };
    switch (n.kind) {
        case PrimKind::Conv2d:
            return eval_conv2d(in(0), in(1), in(2), n.params.stride, n.params.pad);
        case PrimKind::Relu: {
            Tensor out = in(0);
            for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
            return out;
        }
        case PrimKind::Sigmoid: {
            Tensor out = in(0);
            for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
            return out;
        }
        case PrimKind::ChannelMeanPool: {
            const Tensor& f = in(0);
            const std::int64_t B = f.dim(0), H = f.dim(1), W = f.dim(2), C = f.dim(3);
            Tensor out({B, H, W});
            const double* fp = f.data();
            double* op = out.data();
            for (std::int64_t i = 0; i < B * H * W; ++i) {
                double s = 0.0;
                const double* fv = fp + i * C;
                for (std::int64_t c = 0; c < C; ++c) s += fv[c];
                op[i] = s / static_cast<double>(C);
            }
            return out;
        }
        case PrimKind::SpatialBroadcastMul: {
            const Tensor& m = in(0);
            const Tensor& f = in(1);
            const std::int64_t C = f.dim(3);
            Tensor out(f.shape());
            const double* mp = m.data();
            const double* fp = f.data();
            double* op = out.data();
            for (std::int64_t i = 0; i < m.size(); ++i) {
                const double mv = mp[i];
                for (std::int64_t c = 0; c < C; ++c) op[i * C + c] = mv * fp[i * C + c];
            }
            return out;
        }
        case PrimKind::GlobalAvgPool: {
            const Tensor& f = in(0);
            const std::int64_t B = f.dim(0), H = f.dim(1), W = f.dim(2), C = f.dim(3);
            Tensor out({B, C});
            const double* fp = f.data();
            double* op = out.data();
            const double inv = 1.0 / static_cast<double>(H * W);
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t i = 0; i < H * W; ++i) {
                    const double* fv = fp + (b * H * W + i) * C;
                    for (std::int64_t c = 0; c < C; ++c) op[b * C + c] += fv[c];
                }
                for (std::int64_t c = 0; c < C; ++c) op[b * C + c] *= inv;
            }
            return out;
        }
        case PrimKind::Dense: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            const Tensor& bias = in(2);
            const std::int64_t B = x.dim(0), F = x.dim(1), K = w.dim(1);
            Tensor out({B, K});
            const double* xp = x.data();
            const double* wp = w.data();
            double* op = out.data();
            for (std::int64_t b = 0; b < B; ++b) {
                double* o = op + b * K;
                for (std::int64_t k = 0; k < K; ++k) o[k] = bias.data()[k];
                for (std::int64_t f = 0; f < F; ++f) {
                    const double a = xp[b * F + f];
                    const double* wr = wp + f * K;
                    for (std::int64_t k = 0; k < K; ++k) o[k] += a * wr[k];
                }
            }
            return out;
        }
        case PrimKind::SoftmaxCrossEntropy:
            return eval_softmax_xent(in(0), n.params.labels);
        case PrimKind::Mul: {
            Tensor out = in(0);
            const Tensor& b = in(1);
            for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= b[i];
            return out;
        }
        case PrimKind::MaxPool2x2: {
            const Tensor& f = in(0);
            const std::int64_t B = f.dim(0), H = f.dim(1), W = f.dim(2), C = f.dim(3);
            const std::int64_t OH = H / 2, OW = W / 2;
            Tensor out({B, OH, OW, C});
            const double* fp = f.data();
            double* op = out.data();
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t oy = 0; oy < OH; ++oy) {
                    for (std::int64_t ox = 0; ox < OW; ++ox) {
                        double* o = op + ((b * OH + oy) * OW + ox) * C;
                        for (std::int64_t c = 0; c < C; ++c) {
                            double m = fp[((b * H + 2 * oy) * W + 2 * ox) * C + c];
                            for (int dy = 0; dy < 2; ++dy) {
                                for (int dx = 0; dx < 2; ++dx) {
                                    const double v =
                                        fp[((b * H + 2 * oy + dy) * W + 2 * ox + dx) * C + c];
                                    m = v > m ? v : m;
                                }
                            }
                            o[c] = m;
                        }
                    }
                }
            }
            return out;
        }
        case PrimKind::Constant:
        case PrimKind::Parameter:
            fail("unknown-primitive", "leaf kinds are not evaluable primitives");
    }
    fail("unknown-primitive", "unhandled primitive kind");
}

void validate_shapes(PrimKind kind, const std::vector<Node>& nodes,
                     const std::vector<NodeId>& operands, const PrimParams& params) {
    auto in = [&](std::size_t i) -> const Tensor& {
        return nodes[static_cast<std::size_t>(operands[i])].output;
    };
    auto require_operands = [&](std::size_t n) {
        if (operands.size() != n) {
            shape_error(kind, "expected " + std::to_string(n) + " operands, got " +
                                  std::to_string(operands.size()));
        }
    };
    switch (kind) {
        case PrimKind::Conv2d: {
            require_operands(3);
            require_rank(kind, in(0), 4, "input");
            require_rank(kind, in(1), 4, "kernel");
            require_rank(kind, in(2), 1, "bias");
            const Tensor& x = in(0);
            const Tensor& k = in(1);
            if (k.dim(0) % 2 == 0 || k.dim(1) % 2 == 0) {
                shape_error(kind, "kernel must be odd-sized, got " + k.shape_str());
            }
            if (k.dim(2) != x.dim(3)) {
                shape_error(kind, "kernel input channels " + k.shape_str() +
                                      " do not match input " + x.shape_str());
            }
            if (in(2).dim(0) != k.dim(3)) {
                shape_error(kind, "bias " + in(2).shape_str() + " does not match kernel " +
                                      k.shape_str());
            }
            if (params.stride < 1 || params.pad < 0) {
                shape_error(kind, "stride must be >= 1 and padding >= 0");
            }
            if (x.dim(1) + 2 * params.pad < k.dim(0) || x.dim(2) + 2 * params.pad < k.dim(1)) {
                shape_error(kind, "kernel " + k.shape_str() + " larger than padded input " +
                                      x.shape_str());
            }
            break;
        }
        case PrimKind::Relu:
        case PrimKind::Sigmoid:
            require_operands(1);
            break;
        case PrimKind::ChannelMeanPool: {
            require_operands(1);
            require_rank(kind, in(0), 4, "features");
            if (in(0).dim(1) < 1 || in(0).dim(2) < 1) {
                shape_error(kind, "empty spatial extent " + in(0).shape_str());
            }
            break;
        }
        case PrimKind::SpatialBroadcastMul: {
            require_operands(2);
            require_rank(kind, in(0), 3, "map");
            require_rank(kind, in(1), 4, "features");
            const Tensor& m = in(0);
            const Tensor& f = in(1);
            if (m.dim(0) != f.dim(0) || m.dim(1) != f.dim(1) || m.dim(2) != f.dim(2)) {
                shape_error(kind, "map " + m.shape_str() + " does not match features " +
                                      f.shape_str());
            }
            break;
        }
        case PrimKind::GlobalAvgPool:
            require_operands(1);
            require_rank(kind, in(0), 4, "features");
            break;
        case PrimKind::Dense: {
            require_operands(3);
            require_rank(kind, in(0), 2, "input");
            require_rank(kind, in(1), 2, "weights");
            require_rank(kind, in(2), 1, "bias");
            if (in(0).dim(1) != in(1).dim(0)) {
                shape_error(kind, "input " + in(0).shape_str() + " vs weights " +
                                      in(1).shape_str());
            }
            if (in(2).dim(0) != in(1).dim(1)) {
                shape_error(kind, "bias " + in(2).shape_str() + " vs weights " +
                                      in(1).shape_str());
            }
            break;
        }
        case PrimKind::SoftmaxCrossEntropy: {
            require_operands(1);
            require_rank(kind, in(0), 2, "logits");
            if (static_cast<std::int64_t>(params.labels.size()) != in(0).dim(0)) {
                shape_error(kind, "labels count " + std::to_string(params.labels.size()) +
                                      " vs logits " + in(0).shape_str());
            }
            for (int l : params.labels) {
                if (l < 0 || l >= in(0).dim(1)) {
                    shape_error(kind, "label " + std::to_string(l) + " out of range for " +
                                          in(0).shape_str());
                }
            }
            break;
        }
        case PrimKind::MaxPool2x2: {
            require_operands(1);
            require_rank(kind, in(0), 4, "features");
            if (in(0).dim(1) % 2 != 0 || in(0).dim(2) % 2 != 0) {
                shape_error(kind, "spatial dims must be even, got " + in(0).shape_str());
            }
            break;
        }
        case PrimKind::Mul: {
            require_operands(2);
            if (!in(0).same_shape(in(1))) {
                shape_error(kind, "operand shapes differ: " + in(0).shape_str() + " vs " +
                                      in(1).shape_str());
            }
            break;
        }
        case PrimKind::Constant:
        case PrimKind::Parameter:
            fail("unknown-primitive", "leaf kinds must be created via constant()/parameter()");
    }
}

}  // namespace

const char* prim_kind_name(PrimKind kind) {
    switch (kind) {
        case PrimKind::Constant: return "constant";
        case PrimKind::Parameter: return "parameter";
        case PrimKind::Conv2d: return "conv2d";
        case PrimKind::Relu: return "relu";
        case PrimKind::Sigmoid: return "sigmoid";
        case PrimKind::ChannelMeanPool: return "channelwise-average-pool";
        case PrimKind::SpatialBroadcastMul: return "spatial-broadcast-multiply";
        case PrimKind::GlobalAvgPool: return "global-average-pool";
        case PrimKind::Dense: return "dense";
        case PrimKind::SoftmaxCrossEntropy: return "softmax-cross-entropy";
        case PrimKind::MaxPool2x2: return "max-pool-2x2";
        case PrimKind::Mul: return "multiply";
    }
    return "unknown";
}

NodeId Graph::append(Node n) {
    n.id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
}

NodeId Graph::constant(Tensor value) {
    Node n;
    n.kind = PrimKind::Constant;
    n.output = std::move(value);
    n.grad_blocked = true;
    return append(std::move(n));
}

NodeId Graph::parameter(Tensor value) {
    Node n;
    n.kind = PrimKind::Parameter;
    n.output = std::move(value);
    return append(std::move(n));
}

void Graph::check_operand(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        fail("bad-operand", "operand id " + std::to_string(id) + " not in graph");
    }
}

NodeId Graph::apply(PrimKind kind, std::vector<NodeId> operands, PrimParams params) {
    for (NodeId id : operands) check_operand(id);
    validate_shapes(kind, nodes_, operands, params);
    Node n;
    n.kind = kind;
    n.operands = std::move(operands);
    n.params = std::move(params);
    n.output = eval_node(nodes_, n);
    return append(std::move(n));
}

const Node& Graph::node(NodeId id) const {
    check_operand(id);
    return nodes_[static_cast<std::size_t>(id)];
}

Node& Graph::node(NodeId id) {
    check_operand(id);
    return nodes_[static_cast<std::size_t>(id)];
}

void Graph::recompute() {
    for (Node& n : nodes_) {
        if (n.kind == PrimKind::Constant || n.kind == PrimKind::Parameter) continue;
        n.output = eval_node(nodes_, n);
    }
}

NodeId conv2d(Graph& g, NodeId input, NodeId kernel, NodeId bias, int stride, int pad) {
    PrimParams p;
    p.stride = stride;
    p.pad = pad;
    return g.apply(PrimKind::Conv2d, {input, kernel, bias}, std::move(p));
}

NodeId relu(Graph& g, NodeId x) { return g.apply(PrimKind::Relu, {x}); }
NodeId sigmoid(Graph& g, NodeId x) { return g.apply(PrimKind::Sigmoid, {x}); }
NodeId channel_mean_pool(Graph& g, NodeId features) {
    return g.apply(PrimKind::ChannelMeanPool, {features});
}
NodeId spatial_broadcast_mul(Graph& g, NodeId map, NodeId features) {
    return g.apply(PrimKind::SpatialBroadcastMul, {map, features});
}
NodeId global_avg_pool(Graph& g, NodeId features) {
    return g.apply(PrimKind::GlobalAvgPool, {features});
}
NodeId dense(Graph& g, NodeId input, NodeId weights, NodeId bias) {
    return g.apply(PrimKind::Dense, {input, weights, bias});
}
NodeId softmax_cross_entropy(Graph& g, NodeId logits, std::vector<int> labels) {
    PrimParams p;
    p.labels = std::move(labels);
    return g.apply(PrimKind::SoftmaxCrossEntropy, {logits}, std::move(p));
}
NodeId max_pool_2x2(Graph& g, NodeId features) {
    return g.apply(PrimKind::MaxPool2x2, {features});
}

const Tensor& Gradients::at(NodeId id) const {
    if (!has(id)) fail("no-adjoint", "no adjoint recorded for node " + std::to_string(id));
    return adjoints_[static_cast<std::size_t>(id)];
}

Tensor& Gradients::slot(NodeId id, const Tensor& like) {
    auto i = static_cast<std::size_t>(id);
    if (!present_[i]) {
        adjoints_[i] = Tensor(like.shape());
        present_[i] = true;
    }
    return adjoints_[i];
}

std::map<NodeId, Tensor> Gradients::parameter_gradients(const Graph& g) const {
    std::map<NodeId, Tensor> out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto id = static_cast<NodeId>(i);
        if (g.node(id).kind == PrimKind::Parameter) out.emplace(id, at(id));
    }
    return out;
}

namespace {

void backprop_node(const Graph& g, const Node& n, const Tensor& d, Gradients& grads) {
    auto in = [&](std::size_t i) -> const Node& { return g.node(n.operands[i]); };
    // Accumulation into a blocked operand is skipped entirely; blocked nodes
    // contribute zero adjoint downstream by construction.
    auto want = [&](std::size_t i) { return !in(i).grad_blocked; };
    auto acc = [&](std::size_t i) -> Tensor& {
        return grads.slot(n.operands[i], in(i).output);
    };

    switch (n.kind) {
        case PrimKind::Conv2d: {
            const Tensor& x = in(0).output;
            const Tensor& k = in(1).output;
            const std::int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
            const std::int64_t KH = k.dim(0), KW = k.dim(1), Co = k.dim(3);
            const std::int64_t OH = d.dim(1), OW = d.dim(2);
            const int stride = n.params.stride, pad = n.params.pad;
            const bool wx = want(0), wk = want(1), wb = want(2);
            double* dx = wx ? acc(0).data() : nullptr;
            double* dk = wk ? acc(1).data() : nullptr;
            double* db = wb ? acc(2).data() : nullptr;
            const double* xp = x.data();
            const double* kp = k.data();
            const double* dp = d.data();
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t oy = 0; oy < OH; ++oy) {
                    for (std::int64_t ox = 0; ox < OW; ++ox) {
                        const double* dv = dp + ((b * OH + oy) * OW + ox) * Co;
                        if (wb) {
                            for (std::int64_t co = 0; co < Co; ++co) db[co] += dv[co];
                        }
                        if (!wx && !wk) continue;
                        for (std::int64_t kh = 0; kh < KH; ++kh) {
                            const std::int64_t y = oy * stride + kh - pad;
                            if (y < 0 || y >= H) continue;
                            for (std::int64_t kw = 0; kw < KW; ++kw) {
                                const std::int64_t x0 = ox * stride + kw - pad;
                                if (x0 < 0 || x0 >= W) continue;
                                const std::int64_t ioff = ((b * H + y) * W + x0) * Ci;
                                const std::int64_t koff = (kh * KW + kw) * Ci * Co;
                                for (std::int64_t ci = 0; ci < Ci; ++ci) {
                                    const double a = xp[ioff + ci];
                                    const double* kr = kp + koff + ci * Co;
                                    double gxa = 0.0;
                                    for (std::int64_t co = 0; co < Co; ++co) {
                                        const double dd = dv[co];
                                        if (wk) dk[koff + ci * Co + co] += a * dd;
                                        gxa += kr[co] * dd;
                                    }
                                    if (wx) dx[ioff + ci] += gxa;
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case PrimKind::Relu: {
            if (!want(0)) break;
            Tensor& dx = acc(0);
            const Tensor& x = in(0).output;
            for (std::int64_t i = 0; i < x.size(); ++i) {
                if (x[i] > 0.0) dx[i] += d[i];
            }
            break;
        }
        case PrimKind::Sigmoid: {
            if (!want(0)) break;
            Tensor& dx = acc(0);
            const Tensor& s = n.output;
            for (std::int64_t i = 0; i < s.size(); ++i) dx[i] += d[i] * s[i] * (1.0 - s[i]);
            break;
        }
        case PrimKind::ChannelMeanPool: {
            if (!want(0)) break;
            Tensor& dx = acc(0);
            const std::int64_t C = in(0).output.dim(3);
            const double inv = 1.0 / static_cast<double>(C);
            for (std::int64_t i = 0; i < d.size(); ++i) {
                const double v = d[i] * inv;
                for (std::int64_t c = 0; c < C; ++c) dx[i * C + c] += v;
            }
            break;
        }
        case PrimKind::SpatialBroadcastMul: {
            const Tensor& m = in(0).output;
            const Tensor& f = in(1).output;
            const std::int64_t C = f.dim(3);
            if (want(0)) {
                Tensor& dm = acc(0);
                for (std::int64_t i = 0; i < m.size(); ++i) {
                    double s = 0.0;
                    for (std::int64_t c = 0; c < C; ++c) s += d[i * C + c] * f[i * C + c];
                    dm[i] += s;
                }
            }
            if (want(1)) {
                Tensor& df = acc(1);
                for (std::int64_t i = 0; i < m.size(); ++i) {
                    const double mv = m[i];
                    for (std::int64_t c = 0; c < C; ++c) df[i * C + c] += d[i * C + c] * mv;
                }
            }
            break;
        }
        case PrimKind::GlobalAvgPool: {
            if (!want(0)) break;
            Tensor& dx = acc(0);
            const Tensor& f = in(0).output;
            const std::int64_t B = f.dim(0), HW = f.dim(1) * f.dim(2), C = f.dim(3);
            const double inv = 1.0 / static_cast<double>(HW);
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t i = 0; i < HW; ++i) {
                    for (std::int64_t c = 0; c < C; ++c) {
                        dx[(b * HW + i) * C + c] += d[b * C + c] * inv;
                    }
                }
            }
            break;
        }
        case PrimKind::Dense: {
            const Tensor& x = in(0).output;
            const Tensor& w = in(1).output;
            const std::int64_t B = x.dim(0), F = x.dim(1), K = w.dim(1);
            if (want(0)) {
                Tensor& dx = acc(0);
                for (std::int64_t b = 0; b < B; ++b) {
                    for (std::int64_t f = 0; f < F; ++f) {
                        double s = 0.0;
                        for (std::int64_t k = 0; k < K; ++k) s += d[b * K + k] * w[f * K + k];
                        dx[b * F + f] += s;
                    }
                }
            }
            if (want(1)) {
                Tensor& dw = acc(1);
                for (std::int64_t b = 0; b < B; ++b) {
                    for (std::int64_t f = 0; f < F; ++f) {
                        const double a = x[b * F + f];
                        for (std::int64_t k = 0; k < K; ++k) dw[f * K + k] += a * d[b * K + k];
                    }
                }
            }
            if (want(2)) {
                Tensor& db = acc(2);
                for (std::int64_t b = 0; b < B; ++b) {
                    for (std::int64_t k = 0; k < K; ++k) db[k] += d[b * K + k];
                }
            }
            break;
        }
        case PrimKind::SoftmaxCrossEntropy: {
            if (!want(0)) break;
            Tensor& dz = acc(0);
            const Tensor& z = in(0).output;
            const std::int64_t B = z.dim(0), K = z.dim(1);
            const double scale = d[0] / static_cast<double>(B);
            for (std::int64_t b = 0; b < B; ++b) {
                const double* zr = z.data() + b * K;
                double m = zr[0];
                for (std::int64_t k = 1; k < K; ++k) m = std::max(m, zr[k]);
                double sum = 0.0;
                for (std::int64_t k = 0; k < K; ++k) sum += std::exp(zr[k] - m);
                const int label = n.params.labels[static_cast<std::size_t>(b)];
                for (std::int64_t k = 0; k < K; ++k) {
                    const double p = std::exp(zr[k] - m) / sum;
                    dz[b * K + k] += scale * (p - (k == label ? 1.0 : 0.0));
                }
            }
            break;
        }
        case PrimKind::Mul: {
            const Tensor& a = in(0).output;
            const Tensor& b = in(1).output;
            if (want(0)) {
                Tensor& da = acc(0);
                for (std::int64_t i = 0; i < a.size(); ++i) da[i] += d[i] * b[i];
            }
            if (want(1)) {
                Tensor& db = acc(1);
                for (std::int64_t i = 0; i < a.size(); ++i) db[i] += d[i] * a[i];
            }
            break;
        }
        case PrimKind::MaxPool2x2: {
            if (!want(0)) break;
            Tensor& dx = acc(0);
            const Tensor& f = in(0).output;
            const std::int64_t B = f.dim(0), H = f.dim(1), W = f.dim(2), C = f.dim(3);
            const std::int64_t OH = H / 2, OW = W / 2;
            // Route the adjoint to the first maximum in window scan order.
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t oy = 0; oy < OH; ++oy) {
                    for (std::int64_t ox = 0; ox < OW; ++ox) {
                        for (std::int64_t c = 0; c < C; ++c) {
                            std::int64_t best = ((b * H + 2 * oy) * W + 2 * ox) * C + c;
                            double m = f[best];
                            for (int dy = 0; dy < 2; ++dy) {
                                for (int dxr = 0; dxr < 2; ++dxr) {
                                    const std::int64_t idx =
                                        ((b * H + 2 * oy + dy) * W + 2 * ox + dxr) * C + c;
                                    if (f[idx] > m) {
                                        m = f[idx];
                                        best = idx;
                                    }
                                }
                            }
                            dx[best] += d[((b * OH + oy) * OW + ox) * C + c];
                        }
                    }
                }
            }
            break;
        }
        case PrimKind::Constant:
        case PrimKind::Parameter:
            break;  // leaves have no operands
    }
}

}  // namespace

Gradients backward(const Graph& g, NodeId loss) {
    const Node& ln = g.node(loss);
    if (ln.output.size() != 1) {
        fail("nonscalar-loss", "backward needs a scalar loss, got " + ln.output.shape_str());
    }
    Gradients grads(g.size());
    grads.slot(loss, ln.output)[0] = 1.0;

    for (NodeId id = loss; id >= 0; --id) {
        if (!grads.has(id)) continue;
        const Node& n = g.node(id);
        if (n.grad_blocked) continue;
        backprop_node(g, n, grads.at(id), grads);
    }

    // Every parameter gets an adjoint, zero when unreached by the loss.
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto id = static_cast<NodeId>(i);
        const Node& n = g.node(id);
        if (n.kind == PrimKind::Parameter && !grads.has(id)) grads.slot(id, n.output);
    }
    return grads;
}

}  // namespace adllab
