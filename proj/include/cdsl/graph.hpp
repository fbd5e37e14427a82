#ifndef CDSL_GRAPH_HPP
#define CDSL_GRAPH_HPP

#include <string>
#include <unordered_map>
#include <vector>

#include "cdsl/layers.hpp"
#include "cdsl/tensor.hpp"

namespace cdsl::nn {

enum class LayerKind {
    input,
    conv,
    transposed_conv,
    batch_norm,
    relu,
    sigmoid,
    max_pool,
    add,
    concat,
    bilinear_resize,
};

struct LayerSpec {
    LayerKind kind = LayerKind::input;
    std::string name;
    int k = 0, stride = 1, pad = 0, out_pad = 0, out_ch = 0;
    double factor = 1.0; // bilinear_resize
};

struct Node {
    LayerSpec spec;
    std::vector<int> inputs; // node ids, always < own id
    Shape4 out_shape;        // inferred at build time with nominal batch 1
};

// Named tensors in deterministic insertion order. Non-trainable entries hold
// batch-norm running statistics; the optimizer skips them.
template <typename T>
struct ParameterStore {
    struct Entry {
        std::string name;
        Tensor4<T> value;
        bool trainable = true;
    };

    std::vector<Entry> entries;
    std::unordered_map<std::string, int> index;

    Tensor4<T>& add(const std::string& name, Tensor4<T> value, bool trainable) {
        if (index.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index[name] = static_cast<int>(entries.size());
        entries.push_back({name, std::move(value), trainable});
        return entries.back().value;
    }

    bool has(const std::string& name) const { return index.count(name) != 0; }

    Tensor4<T>& get(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown parameter: " + name);
        return entries[it->second].value;
    }
    const Tensor4<T>& get(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown parameter: " + name);
        return entries[it->second].value;
    }

    std::size_t numel() const {
        std::size_t s = 0;
        for (const auto& e : entries) s += e.value.numel();
        return s;
    }

    template <typename U>
    ParameterStore<U> cast() const {
        ParameterStore<U> out;
        for (const auto& e : entries) out.add(e.name, e.value.template cast<U>(), e.trainable);
        return out;
    }

    // zero-filled mirror with identical names/shapes/order
    ParameterStore<T> zeros_like() const {
        ParameterStore<T> out;
        for (const auto& e : entries) out.add(e.name, Tensor4<T>(e.value.shape), e.trainable);
        return out;
    }

    bool operator==(const ParameterStore& o) const {
        if (entries.size() != o.entries.size()) return false;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].name != o.entries[i].name) return false;
            if (!(entries[i].value == o.entries[i].value)) return false;
        }
        return true;
    }
};

// Acyclic single-output layer graph with shape inference at construction.
// Node 0 is the input placeholder; the last added node is the output.
class Graph {
public:
    int add_input(int c, int h, int w) {
        if (!nodes_.empty()) throw ConfigError("graph: input must be the first node");
        LayerSpec s;
        s.kind = LayerKind::input;
        s.name = "input";
        return push(s, {}, Shape4{1, c, h, w});
    }

    int add_conv(const std::string& name, int in, int k, int stride, int pad, int out_ch) {
        const Shape4 is = shape(in);
        const int oh = conv_out_dim(is.h, k, stride, pad);
        const int ow = conv_out_dim(is.w, k, stride, pad);
        if (oh < 1 || ow < 1)
            throw ConfigError("conv " + name + ": output would be empty for input " + is.str());
        LayerSpec s;
        s.kind = LayerKind::conv;
        s.name = name;
        s.k = k;
        s.stride = stride;
        s.pad = pad;
        s.out_ch = out_ch;
        return push(s, {in}, Shape4{1, out_ch, oh, ow});
    }

    int add_tconv(const std::string& name, int in, int k, int stride, int pad, int out_pad,
                  int out_ch) {
        const Shape4 is = shape(in);
        if (out_pad >= stride)
            throw ConfigError("transposed_conv " + name + ": output padding must be < stride");
        const int oh = tconv_out_dim(is.h, k, stride, pad, out_pad);
        const int ow = tconv_out_dim(is.w, k, stride, pad, out_pad);
        if (oh < 1 || ow < 1)
            throw ConfigError("transposed_conv " + name + ": empty output");
        LayerSpec s;
        s.kind = LayerKind::transposed_conv;
        s.name = name;
        s.k = k;
        s.stride = stride;
        s.pad = pad;
        s.out_pad = out_pad;
        s.out_ch = out_ch;
        return push(s, {in}, Shape4{1, out_ch, oh, ow});
    }

    int add_batch_norm(const std::string& name, int in) {
        LayerSpec s;
        s.kind = LayerKind::batch_norm;
        s.name = name;
        return push(s, {in}, shape(in));
    }

    int add_relu(const std::string& name, int in) {
        LayerSpec s;
        s.kind = LayerKind::relu;
        s.name = name;
        return push(s, {in}, shape(in));
    }

    int add_sigmoid(const std::string& name, int in) {
        LayerSpec s;
        s.kind = LayerKind::sigmoid;
        s.name = name;
        return push(s, {in}, shape(in));
    }

    int add_max_pool(const std::string& name, int in, int k, int stride, int pad) {
        const Shape4 is = shape(in);
        const int oh = conv_out_dim(is.h, k, stride, pad);
        const int ow = conv_out_dim(is.w, k, stride, pad);
        if (oh < 1 || ow < 1) throw ConfigError("max_pool " + name + ": empty output");
        LayerSpec s;
        s.kind = LayerKind::max_pool;
        s.name = name;
        s.k = k;
        s.stride = stride;
        s.pad = pad;
        return push(s, {in}, Shape4{1, is.c, oh, ow});
    }

    int add_add(const std::string& name, int a, int b) {
        if (!(shape(a) == shape(b)))
            throw ConfigError("add " + name + ": shape mismatch " + shape(a).str() + " vs " +
                              shape(b).str());
        LayerSpec s;
        s.kind = LayerKind::add;
        s.name = name;
        return push(s, {a, b}, shape(a));
    }

    int add_concat(const std::string& name, int a, int b) {
        const Shape4 sa = shape(a), sb = shape(b);
        if (!sa.same_spatial(sb))
            throw ConfigError("concat " + name + ": spatial mismatch " + sa.str() + " vs " +
                              sb.str());
        LayerSpec s;
        s.kind = LayerKind::concat;
        s.name = name;
        return push(s, {a, b}, Shape4{1, sa.c + sb.c, sa.h, sa.w});
    }

    int add_bilinear_resize(const std::string& name, int in, double factor) {
        const Shape4 is = shape(in);
        const double th = is.h * factor, tw = is.w * factor;
        const int oh = static_cast<int>(th), ow = static_cast<int>(tw);
        if (oh < 1 || ow < 1 || oh != th || ow != tw)
            throw ConfigError("bilinear_resize " + name + ": non-integer target size for " +
                              is.str());
        LayerSpec s;
        s.kind = LayerKind::bilinear_resize;
        s.name = name;
        s.factor = factor;
        return push(s, {in}, Shape4{1, is.c, oh, ow});
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    const Node& node(int id) const { return nodes_.at(id); }
    Shape4 shape(int id) const { return nodes_.at(id).out_shape; }
    int output() const { return static_cast<int>(nodes_.size()) - 1; }

    int find(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? -1 : it->second;
    }
    Shape4 shape_of(const std::string& name) const {
        const int id = find(name);
        if (id < 0) throw ConfigError("unknown node: " + name);
        return nodes_[id].out_shape;
    }

private:
    int push(LayerSpec spec, std::vector<int> inputs, Shape4 out) {
        if (by_name_.count(spec.name)) throw ConfigError("duplicate node name: " + spec.name);
        const int id = static_cast<int>(nodes_.size());
        for (int in : inputs)
            if (in < 0 || in >= id) throw ConfigError("graph: bad edge into " + spec.name);
        by_name_[spec.name] = id;
        nodes_.push_back({std::move(spec), std::move(inputs), out});
        return id;
    }

    std::vector<Node> nodes_;
    std::unordered_map<std::string, int> by_name_;
};

// parameter shapes owned by a node, in (name, shape, trainable) order
struct ParamDecl {
    std::string name;
    Shape4 shape;
    bool trainable;
};

inline std::vector<ParamDecl> node_params(const Graph& g, const Node& nd) {
    std::vector<ParamDecl> out;
    const std::string& nm = nd.spec.name;
    switch (nd.spec.kind) {
    case LayerKind::conv: {
        const int ic = g.shape(nd.inputs[0]).c;
        out.push_back({nm + ".w", Shape4{nd.spec.out_ch, ic, nd.spec.k, nd.spec.k}, true});
        out.push_back({nm + ".b", Shape4{1, nd.spec.out_ch, 1, 1}, true});
        break;
    }
    case LayerKind::transposed_conv: {
        const int ic = g.shape(nd.inputs[0]).c;
        out.push_back({nm + ".w", Shape4{ic, nd.spec.out_ch, nd.spec.k, nd.spec.k}, true});
        out.push_back({nm + ".b", Shape4{1, nd.spec.out_ch, 1, 1}, true});
        break;
    }
    case LayerKind::batch_norm: {
        const int c = nd.out_shape.c;
        out.push_back({nm + ".gamma", Shape4{1, c, 1, 1}, true});
        out.push_back({nm + ".beta", Shape4{1, c, 1, 1}, true});
        out.push_back({nm + ".running_mean", Shape4{1, c, 1, 1}, false});
        out.push_back({nm + ".running_var", Shape4{1, c, 1, 1}, false});
        break;
    }
    default:
        break;
    }
    return out;
}

enum class Mode { train, eval };

template <typename T>
struct Tape {
    bool valid = false;
    Mode mode = Mode::eval;
    std::vector<Tensor4<T>> value;
    std::vector<std::vector<int>> pool_argmax;
    std::vector<std::vector<T>> bn_mean, bn_invstd;
};

// Runs the graph on a batch. Caches every activation in the tape; train mode
// additionally updates batch-norm running statistics unless update_running is
// false (gradient checking re-runs forward many times and must not drift).
template <typename T>
const Tensor4<T>& graph_forward(const Graph& g, ParameterStore<T>& params,
                                const Tensor4<T>& batch, Mode mode, Tape<T>& tape,
                                bool update_running = true) {
    const auto& nodes = g.nodes();
    const Shape4 in_shape = g.shape(0);
    if (batch.c() != in_shape.c || batch.h() != in_shape.h || batch.w() != in_shape.w)
        throw std::invalid_argument("forward: batch " + batch.shape.str() +
                                    " does not match graph input " + in_shape.str());
    if (batch.n() < 1) throw std::invalid_argument("forward: empty batch");

    tape.value.assign(nodes.size(), Tensor4<T>{});
    tape.pool_argmax.assign(nodes.size(), {});
    tape.bn_mean.assign(nodes.size(), {});
    tape.bn_invstd.assign(nodes.size(), {});
    tape.mode = mode;
    tape.valid = true;
    tape.value[0] = batch;

    for (std::size_t id = 1; id < nodes.size(); ++id) {
        const Node& nd = nodes[id];
        const std::string& nm = nd.spec.name;
        const Tensor4<T>& a = tape.value[nd.inputs[0]];
        switch (nd.spec.kind) {
        case LayerKind::conv:
            tape.value[id] = conv_forward(a, params.get(nm + ".w"), params.get(nm + ".b"),
                                          nd.spec.stride, nd.spec.pad);
            break;
        case LayerKind::transposed_conv:
            tape.value[id] = tconv_forward(a, params.get(nm + ".w"), params.get(nm + ".b"),
                                           nd.spec.stride, nd.spec.pad, nd.spec.out_pad);
            break;
        case LayerKind::batch_norm:
            if (mode == Mode::train && batch.n() < 2)
                throw std::invalid_argument("forward: batch_norm in train mode needs batch >= 2");
            tape.value[id] = batchnorm_forward(
                a, params.get(nm + ".gamma"), params.get(nm + ".beta"),
                params.get(nm + ".running_mean"), params.get(nm + ".running_var"),
                mode == Mode::train, mode == Mode::train && update_running, tape.bn_mean[id],
                tape.bn_invstd[id]);
            break;
        case LayerKind::relu:
            tape.value[id] = relu_forward(a);
            break;
        case LayerKind::sigmoid:
            tape.value[id] = sigmoid_forward(a);
            break;
        case LayerKind::max_pool:
            tape.value[id] =
                maxpool_forward(a, nd.spec.k, nd.spec.stride, nd.spec.pad, tape.pool_argmax[id]);
            break;
        case LayerKind::add:
            tape.value[id] = add_forward(a, tape.value[nd.inputs[1]]);
            break;
        case LayerKind::concat:
            tape.value[id] = concat_forward(a, tape.value[nd.inputs[1]]);
            break;
        case LayerKind::bilinear_resize:
            tape.value[id] = bilinear_resize_forward(a, nd.out_shape.h, nd.out_shape.w);
            break;
        case LayerKind::input:
            throw ConfigError("graph: unexpected input node");
        }
        const Shape4 got = tape.value[id].shape;
        const Shape4 want{batch.n(), nd.out_shape.c, nd.out_shape.h, nd.out_shape.w};
        if (!(got == want))
            throw NumericError("forward: node " + nm + " produced " + got.str() + ", inferred " +
                               want.str());
        if (!tape.value[id].all_finite())
            throw NumericError("forward: non-finite values at node " + nm);
    }
    return tape.value[g.output()];
}

template <typename T>
struct Gradients {
    ParameterStore<T> params; // aligned with the forward store
    Tensor4<T> input;
};

// Reverse pass over the tape. Gradient accumulation is index-ordered, so a
// given (graph, params, batch, upstream) always reduces identically.
template <typename T>
Gradients<T> graph_backward(const Graph& g, const ParameterStore<T>& params,
                            const Tape<T>& tape, const Tensor4<T>& d_output) {
    if (!tape.valid || tape.mode != Mode::train)
        throw std::logic_error("backward: requires a cached train-mode forward pass");
    const auto& nodes = g.nodes();
    const int out_id = g.output();
    if (!(d_output.shape == tape.value[out_id].shape))
        throw std::invalid_argument("backward: upstream gradient shape mismatch");

    std::vector<Tensor4<T>> grad(nodes.size());
    auto accum = [&](int id, Tensor4<T>&& add_g) {
        if (grad[id].numel() == 0) {
            grad[id] = std::move(add_g);
        } else {
            for (std::size_t i = 0; i < grad[id].data.size(); ++i)
                grad[id].data[i] += add_g.data[i];
        }
    };

    Gradients<T> out;
    out.params = params.zeros_like();
    grad[out_id] = d_output;

    for (int id = out_id; id >= 1; --id) {
        const Node& nd = nodes[id];
        if (grad[id].numel() == 0) continue; // node does not feed the output
        const Tensor4<T>& dy = grad[id];
        const std::string& nm = nd.spec.name;
        const Tensor4<T>& x = tape.value[nd.inputs[0]];
        switch (nd.spec.kind) {
        case LayerKind::conv: {
            Tensor4<T> dx, dw, db;
            conv_backward(x, params.get(nm + ".w"), dy, nd.spec.stride, nd.spec.pad, &dx, &dw,
                          &db);
            out.params.get(nm + ".w") = std::move(dw);
            out.params.get(nm + ".b") = std::move(db);
            accum(nd.inputs[0], std::move(dx));
            break;
        }
        case LayerKind::transposed_conv: {
            Tensor4<T> dx, dw, db;
            tconv_backward(x, params.get(nm + ".w"), dy, nd.spec.stride, nd.spec.pad, &dx, &dw,
                           &db);
            out.params.get(nm + ".w") = std::move(dw);
            out.params.get(nm + ".b") = std::move(db);
            accum(nd.inputs[0], std::move(dx));
            break;
        }
        case LayerKind::batch_norm: {
            Tensor4<T> dx, dgamma, dbeta;
            batchnorm_backward(x, params.get(nm + ".gamma"), tape.bn_mean[id],
                               tape.bn_invstd[id], dy, &dx, &dgamma, &dbeta);
            out.params.get(nm + ".gamma") = std::move(dgamma);
            out.params.get(nm + ".beta") = std::move(dbeta);
            accum(nd.inputs[0], std::move(dx));
            break;
        }
        case LayerKind::relu:
            accum(nd.inputs[0], relu_backward(x, dy));
            break;
        case LayerKind::sigmoid:
            accum(nd.inputs[0], sigmoid_backward(tape.value[id], dy));
            break;
        case LayerKind::max_pool:
            accum(nd.inputs[0], maxpool_backward(dy, tape.pool_argmax[id], x.shape));
            break;
        case LayerKind::add: {
            Tensor4<T> copy = dy;
            accum(nd.inputs[0], std::move(copy));
            Tensor4<T> copy2 = dy;
            accum(nd.inputs[1], std::move(copy2));
            break;
        }
        case LayerKind::concat: {
            Tensor4<T> da, db;
            concat_backward(dy, x.c(), &da, &db);
            accum(nd.inputs[0], std::move(da));
            accum(nd.inputs[1], std::move(db));
            break;
        }
        case LayerKind::bilinear_resize:
            accum(nd.inputs[0], bilinear_resize_backward(dy, x.shape));
            break;
        case LayerKind::input:
            break;
        }
    }
    if (grad[0].numel() == 0) grad[0] = Tensor4<T>(tape.value[0].shape);
    out.input = std::move(grad[0]);
    return out;
}

} // namespace cdsl::nn

#endif
