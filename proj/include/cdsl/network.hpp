#ifndef CDSL_NETWORK_HPP
#define CDSL_NETWORK_HPP

#include <algorithm>
#include <set>
#include <vector>

#include "cdsl/graph.hpp"

namespace cdsl::nn {

// Declarative architecture description. scale_inputs holds the denominators of
// the extra input scales: {2} is the dual-scale network, {2,4} triad, {2,4,8}
// the full multi-scale variant.
struct NetworkConfig {
    int in_channels = 1;
    int base_channels = 64;
    std::vector<int> encoder_channels = {64, 128, 256, 512};
    std::set<int> scale_inputs = {};
    int input_h = 256;
    int input_w = 256;
    int classes = 1;

    void validate() const {
        if (in_channels < 1) throw ConfigError("network: in_channels must be >= 1");
        if (base_channels < 1) throw ConfigError("network: base_channels must be >= 1");
        if (classes != 1) throw ConfigError("network: only binary output (classes=1) supported");
        if (encoder_channels.size() != 4)
            throw ConfigError("network: exactly 4 encoder stages expected");
        for (std::size_t i = 0; i < encoder_channels.size(); ++i) {
            if (encoder_channels[i] % 4 != 0)
                throw ConfigError("network: encoder channels must be divisible by 4 "
                                  "(decoder bottleneck)");
            if (i > 0 && encoder_channels[i] <= encoder_channels[i - 1])
                throw ConfigError("network: encoder channels must be strictly increasing");
        }
        for (int d : scale_inputs)
            if (d != 2 && d != 4 && d != 8)
                throw ConfigError("network: scale inputs limited to denominators {2,4,8}");
        if (input_h % 32 != 0 || input_w % 32 != 0)
            throw ConfigError("network: input size must be divisible by 32, got " +
                              std::to_string(input_h) + "x" + std::to_string(input_w));
        if (input_h < 32 || input_w < 32) throw ConfigError("network: input too small");
    }
};

struct NetworkGraph {
    NetworkConfig config;
    Graph graph;
};

// ResBlock: conv3x3(stride) -> BN -> ReLU -> conv3x3 -> BN, plus a projection
// shortcut (1x1 conv + BN) whenever stride or channel count changes.
// Returns the id of the block output node, named "<prefix>.out".
inline int append_res_block(Graph& g, int in, int out_ch, int stride, const std::string& prefix) {
    if (stride != 1 && stride != 2)
        throw ConfigError("res_block " + prefix + ": stride must be 1 or 2");
    const int in_ch = g.shape(in).c;
    int t = g.add_conv(prefix + ".conv1", in, 3, stride, 1, out_ch);
    t = g.add_batch_norm(prefix + ".bn1", t);
    t = g.add_relu(prefix + ".relu1", t);
    t = g.add_conv(prefix + ".conv2", t, 3, 1, 1, out_ch);
    t = g.add_batch_norm(prefix + ".bn2", t);
    int shortcut = in;
    if (stride != 1 || in_ch != out_ch) {
        shortcut = g.add_conv(prefix + ".proj", in, 1, stride, 0, out_ch);
        shortcut = g.add_batch_norm(prefix + ".proj_bn", shortcut);
    }
    t = g.add_add(prefix + ".add", t, shortcut);
    return g.add_relu(prefix + ".out", t);
}

// DecodeBlock: 1x1 conv to c/4 -> transposed conv 3x3 (stride 2 doubles the
// spatial dims, stride 1 keeps them) -> 1x1 conv to out_ch, BN+ReLU after each.
inline int append_decode_block(Graph& g, int in, int out_ch, int stride,
                               const std::string& prefix) {
    const int in_ch = g.shape(in).c;
    if (in_ch % 4 != 0)
        throw ConfigError("decode_block " + prefix + ": input channels " +
                          std::to_string(in_ch) + " not divisible by 4");
    const int mid = in_ch / 4;
    int t = g.add_conv(prefix + ".reduce", in, 1, 1, 0, mid);
    t = g.add_batch_norm(prefix + ".bn1", t);
    t = g.add_relu(prefix + ".relu1", t);
    t = g.add_tconv(prefix + ".up", t, 3, stride, 1, stride == 2 ? 1 : 0, mid);
    t = g.add_batch_norm(prefix + ".bn2", t);
    t = g.add_relu(prefix + ".relu2", t);
    t = g.add_conv(prefix + ".expand", t, 1, 1, 0, out_ch);
    t = g.add_batch_norm(prefix + ".bn3", t);
    return g.add_relu(prefix + ".out", t);
}

// LinkNet-style encoder-decoder with optional multi-scale input injection.
// Scale inputs are resized copies of the network input concatenated onto the
// feature map of matching spatial size (1/2 after the initial conv, 1/4 after
// the max-pool, 1/8 after encoder block 2); the following conv absorbs the
// extra channels. Skip links take the pre-injection tensors, which keeps the
// decoder channel ledger independent of the injection set.
inline NetworkGraph build_network(const NetworkConfig& config) {
    config.validate();
    NetworkGraph net;
    net.config = config;
    Graph& g = net.graph;

    const int input = g.add_input(config.in_channels, config.input_h, config.input_w);
    const bool use_half = config.scale_inputs.count(2) != 0;
    const bool use_quarter = config.scale_inputs.count(4) != 0;
    const bool use_eighth = config.scale_inputs.count(8) != 0;

    const int half = use_half ? g.add_bilinear_resize("scale.half", input, 0.5) : -1;
    const int quarter = use_quarter ? g.add_bilinear_resize("scale.quarter", input, 0.25) : -1;
    const int eighth = use_eighth ? g.add_bilinear_resize("scale.eighth", input, 0.125) : -1;

    // initial block: 7x7 stride-2 conv, BN, ReLU, then 3x3 stride-2 max-pool
    int t = g.add_conv("init.conv", input, 7, 2, 3, config.base_channels);
    t = g.add_batch_norm("init.bn", t);
    t = g.add_relu("init.relu", t);
    if (use_half) t = g.add_concat("init.inject_half", t, half);
    t = g.add_max_pool("init.pool", t, 3, 2, 1);
    const int pool_out = t; // skip source for the innermost decoder
    if (use_quarter) t = g.add_concat("init.inject_quarter", t, quarter);

    const auto& ec = config.encoder_channels;
    const int e1 = append_res_block(g, t, ec[0], 1, "enc1");
    const int e2 = append_res_block(g, e1, ec[1], 2, "enc2");
    int e3_in = e2;
    if (use_eighth) e3_in = g.add_concat("enc2.inject_eighth", e2, eighth);
    const int e3 = append_res_block(g, e3_in, ec[2], 2, "enc3");
    const int e4 = append_res_block(g, e3, ec[3], 2, "enc4");

    // decoder chain; each decoder output is summed with the matching encoder
    // stage output (the skip links)
    int d = append_decode_block(g, e4, g.shape(e3).c, 2, "dec4");
    d = g.add_add("skip3.add", d, e3);
    d = append_decode_block(g, d, g.shape(e2).c, 2, "dec3");
    d = g.add_add("skip2.add", d, e2);
    d = append_decode_block(g, d, g.shape(e1).c, 2, "dec2");
    d = g.add_add("skip1.add", d, e1);
    d = append_decode_block(g, d, g.shape(pool_out).c, 1, "dec1");
    d = g.add_add("skip0.add", d, pool_out);

    // head: two transposed-conv upsamplings restore the input resolution
    int h = g.add_tconv("head.up1", d, 3, 2, 1, 1, 32);
    h = g.add_batch_norm("head.bn1", h);
    h = g.add_relu("head.relu1", h);
    h = g.add_conv("head.conv", h, 3, 1, 1, 32);
    h = g.add_batch_norm("head.bn2", h);
    h = g.add_relu("head.relu2", h);
    h = g.add_tconv("head.up2", h, 2, 2, 0, 0, config.classes);
    h = g.add_sigmoid("head.sigmoid", h);

    const Shape4 out = g.shape(h);
    if (out.h != config.input_h || out.w != config.input_w || out.c != config.classes)
        throw ConfigError("network: output shape " + out.str() + " does not restore input size");
    return net;
}

// He-normal conv/tconv weights (std = sqrt(2/fan_in), fan_in = in_ch*k*k),
// zero biases, BN scale 1 / shift 0 / running stats (0,1).
template <typename T>
ParameterStore<T> init_graph_params(const Graph& g, std::uint32_t seed) {
    ParameterStore<T> store;
    Rng rng(seed);
    for (const Node& nd : g.nodes()) {
        for (const ParamDecl& pd : node_params(g, nd)) {
            Tensor4<T> t(pd.shape);
            if (nd.spec.kind == LayerKind::conv || nd.spec.kind == LayerKind::transposed_conv) {
                if (pd.name.ends_with(".w")) {
                    const int fan_in = g.shape(nd.inputs[0]).c * nd.spec.k * nd.spec.k;
                    fill_normal(t, rng, std::sqrt(2.0 / fan_in));
                }
                // biases stay zero
            } else if (nd.spec.kind == LayerKind::batch_norm) {
                if (pd.name.ends_with(".gamma") || pd.name.ends_with(".running_var"))
                    std::fill(t.data.begin(), t.data.end(), T(1));
            }
            store.add(pd.name, std::move(t), pd.trainable);
        }
    }
    return store;
}

template <typename T = float>
ParameterStore<T> init_parameters(const NetworkGraph& net, std::uint32_t seed) {
    return init_graph_params<T>(net.graph, seed);
}

template <typename T>
const Tensor4<T>& forward(const NetworkGraph& net, ParameterStore<T>& params,
                          const Tensor4<T>& batch, Mode mode, Tape<T>& tape,
                          bool update_running = true) {
    return graph_forward(net.graph, params, batch, mode, tape, update_running);
}

template <typename T>
Gradients<T> backward(const NetworkGraph& net, const ParameterStore<T>& params,
                      const Tape<T>& tape, const Tensor4<T>& d_output) {
    return graph_backward(net.graph, params, tape, d_output);
}

} // namespace cdsl::nn

#endif
