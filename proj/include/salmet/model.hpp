#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "salmet/common.hpp"
#include "salmet/tensor.hpp"

namespace salmet {

enum class LayerKind { Conv2d, AffineChannel, Relu, MaxPool2x2, Flatten, Dense, Softmax };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::AffineChannel: return "affine-channel";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool2x2: return "maxpool2x2";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
        case LayerKind::Softmax: return "softmax";
    }
    return "?";
}

struct Layer {
    LayerKind kind = LayerKind::Relu;
    int out_channels = 0;  // conv2d
    int kernel = 0;        // conv2d, square
    int padding = 0;       // conv2d, symmetric zeros
    int out_features = 0;  // dense
    bool has_bias = false;

    // resolved while chaining shapes
    int in_h = 0, in_w = 0, in_c = 0;
    int out_h = 0, out_w = 0, out_c = 0;

    std::vector<double> weights;  // conv: oc*ic*k*k; dense: out*in; affine-channel: scale then shift
    std::vector<double> bias;

    std::size_t param_count() const {
        switch (kind) {
            case LayerKind::Conv2d:
                return static_cast<std::size_t>(out_channels) * static_cast<std::size_t>(in_c) *
                           static_cast<std::size_t>(kernel) * static_cast<std::size_t>(kernel) +
                       (has_bias ? static_cast<std::size_t>(out_channels) : 0u);
            case LayerKind::AffineChannel: return 2u * static_cast<std::size_t>(in_c);
            case LayerKind::Dense:
                return static_cast<std::size_t>(out_features) * static_cast<std::size_t>(in_c) +
                       (has_bias ? static_cast<std::size_t>(out_features) : 0u);
            default: return 0;
        }
    }
};

enum class ModelKind { Network, AffineOracle, SigmoidOracle };

struct Model {
    ModelKind kind = ModelKind::Network;
    int input_h = 0, input_w = 0, input_c = 0;
    int class_count = 0;
    std::vector<double> std_mean;  // per channel, applied before the first layer
    std::vector<double> std_std;
    std::vector<Layer> layers;

    // oracle parameters (H*W*C weights over raw pixels)
    std::vector<double> oracle_weights;
    double oracle_bias = 0.0;

    bool is_oracle() const { return kind != ModelKind::Network; }
};

struct ClassScore {
    std::vector<double> probabilities;
    int predicted_class = 0;
    double confidence = 0.0;
};

inline double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

namespace detail {

// activation tensor, HWC interleaved like Image::pixels
struct Act {
    int h = 0, w = 0, c = 0;
    std::vector<double> v;
    Act() = default;
    Act(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(static_cast<std::size_t>(h_) * w_ * c_, 0.0) {}
    double& at(int y, int x, int ch) { return v[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return v[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
};

inline float read_f32_le(std::span<const std::uint8_t> blob, std::size_t off) {
    std::uint32_t u = static_cast<std::uint32_t>(blob[off]) | (static_cast<std::uint32_t>(blob[off + 1]) << 8) |
                      (static_cast<std::uint32_t>(blob[off + 2]) << 16) |
                      (static_cast<std::uint32_t>(blob[off + 3]) << 24);
    return std::bit_cast<float>(u);
}

inline Act conv2d_forward(const Layer& l, const Act& in) {
    Act out(l.out_h, l.out_w, l.out_c);
    const int k = l.kernel, p = l.padding;
    for (int oc = 0; oc < l.out_c; ++oc) {
        const double b = l.has_bias ? l.bias[static_cast<std::size_t>(oc)] : 0.0;
        for (int y = 0; y < l.out_h; ++y)
            for (int x = 0; x < l.out_w; ++x) {
                double acc = b;
                for (int ic = 0; ic < l.in_c; ++ic)
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = y + ky - p;
                        if (iy < 0 || iy >= l.in_h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = x + kx - p;
                            if (ix < 0 || ix >= l.in_w) continue;
                            const std::size_t wi =
                                ((static_cast<std::size_t>(oc) * l.in_c + ic) * k + ky) * k + kx;
                            acc += l.weights[wi] * in.at(iy, ix, ic);
                        }
                    }
                out.at(y, x, oc) = acc;
            }
    }
    return out;
}

inline Act conv2d_backward(const Layer& l, const Act& dout) {
    Act din(l.in_h, l.in_w, l.in_c);
    const int k = l.kernel, p = l.padding;
    for (int oc = 0; oc < l.out_c; ++oc)
        for (int y = 0; y < l.out_h; ++y)
            for (int x = 0; x < l.out_w; ++x) {
                const double g = dout.at(y, x, oc);
                if (g == 0.0) continue;
                for (int ic = 0; ic < l.in_c; ++ic)
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = y + ky - p;
                        if (iy < 0 || iy >= l.in_h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = x + kx - p;
                            if (ix < 0 || ix >= l.in_w) continue;
                            const std::size_t wi =
                                ((static_cast<std::size_t>(oc) * l.in_c + ic) * k + ky) * k + kx;
                            din.at(iy, ix, ic) += l.weights[wi] * g;
                        }
                    }
            }
    return din;
}

inline Act forward_layer(const Layer& l, const Act& in) {
    switch (l.kind) {
        case LayerKind::Conv2d: return conv2d_forward(l, in);
        case LayerKind::AffineChannel: {
            Act out = in;
            const std::size_t c = static_cast<std::size_t>(l.in_c);
            for (std::size_t i = 0; i < out.v.size(); ++i)
                out.v[i] = l.weights[i % c] * out.v[i] + l.weights[c + i % c];
            return out;
        }
        case LayerKind::Relu: {
            Act out = in;
            for (double& v : out.v) v = std::max(v, 0.0);
            return out;
        }
        case LayerKind::MaxPool2x2: {
            Act out(l.out_h, l.out_w, l.out_c);
            for (int y = 0; y < l.out_h; ++y)
                for (int x = 0; x < l.out_w; ++x)
                    for (int c = 0; c < l.out_c; ++c) {
                        double m = in.at(2 * y, 2 * x, c);
                        m = std::max(m, in.at(2 * y, 2 * x + 1, c));
                        m = std::max(m, in.at(2 * y + 1, 2 * x, c));
                        m = std::max(m, in.at(2 * y + 1, 2 * x + 1, c));
                        out.at(y, x, c) = m;
                    }
            return out;
        }
        case LayerKind::Flatten: {
            Act out(1, 1, l.out_c);
            out.v = in.v;
            return out;
        }
        case LayerKind::Dense: {
            Act out(1, 1, l.out_features);
            for (int o = 0; o < l.out_features; ++o) {
                double acc = l.has_bias ? l.bias[static_cast<std::size_t>(o)] : 0.0;
                const std::size_t base = static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in_c);
                for (int i = 0; i < l.in_c; ++i) acc += l.weights[base + static_cast<std::size_t>(i)] * in.v[static_cast<std::size_t>(i)];
                out.v[static_cast<std::size_t>(o)] = acc;
            }
            return out;
        }
        case LayerKind::Softmax: {
            Act out = in;
            double mx = *std::max_element(out.v.begin(), out.v.end());
            double sum = 0.0;
            for (double& v : out.v) {
                v = std::exp(v - mx);
                sum += v;
            }
            for (double& v : out.v) v /= sum;
            return out;
        }
    }
    throw contract_error("forward: unreachable layer kind");
}

// gradient of the layer output w.r.t. its input; `in` is the saved forward input
inline Act backward_layer(const Layer& l, const Act& in, const Act& dout) {
    switch (l.kind) {
        case LayerKind::Conv2d: return conv2d_backward(l, dout);
        case LayerKind::AffineChannel: {
            Act din = dout;
            const std::size_t c = static_cast<std::size_t>(l.in_c);
            for (std::size_t i = 0; i < din.v.size(); ++i) din.v[i] *= l.weights[i % c];
            return din;
        }
        case LayerKind::Relu: {
            Act din = dout;
            for (std::size_t i = 0; i < din.v.size(); ++i)
                if (in.v[i] <= 0.0) din.v[i] = 0.0;
            return din;
        }
        case LayerKind::MaxPool2x2: {
            Act din(l.in_h, l.in_w, l.in_c);
            // route to the first position attaining the max, matching forward's scan order
            for (int y = 0; y < l.out_h; ++y)
                for (int x = 0; x < l.out_w; ++x)
                    for (int c = 0; c < l.out_c; ++c) {
                        int by = 2 * y, bx = 2 * x;
                        double best = in.at(by, bx, c);
                        if (in.at(2 * y, 2 * x + 1, c) > best) { best = in.at(2 * y, 2 * x + 1, c); by = 2 * y; bx = 2 * x + 1; }
                        if (in.at(2 * y + 1, 2 * x, c) > best) { best = in.at(2 * y + 1, 2 * x, c); by = 2 * y + 1; bx = 2 * x; }
                        if (in.at(2 * y + 1, 2 * x + 1, c) > best) { by = 2 * y + 1; bx = 2 * x + 1; }
                        din.at(by, bx, c) += dout.at(y, x, c);
                    }
            return din;
        }
        case LayerKind::Flatten: {
            Act din(l.in_h, l.in_w, l.in_c);
            din.v = dout.v;
            return din;
        }
        case LayerKind::Dense: {
            Act din(1, 1, l.in_c);
            for (int o = 0; o < l.out_features; ++o) {
                const double g = dout.v[static_cast<std::size_t>(o)];
                if (g == 0.0) continue;
                const std::size_t base = static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in_c);
                for (int i = 0; i < l.in_c; ++i) din.v[static_cast<std::size_t>(i)] += l.weights[base + static_cast<std::size_t>(i)] * g;
            }
            return din;
        }
        case LayerKind::Softmax:
            throw contract_error("backward: softmax not differentiated (gradients stop at logits)");
    }
    throw contract_error("backward: unreachable layer kind");
}

inline Act standardize(const Model& m, const Image& img) {
    Act a(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                a.at(y, x, c) = (img.at(y, x, c) - m.std_mean[static_cast<std::size_t>(c)]) /
                                m.std_std[static_cast<std::size_t>(c)];
    return a;
}

inline void check_input_shape(const Model& m, const Image& img) {
    require(img.height == m.input_h && img.width == m.input_w && img.channels == m.input_c,
            "model: image dimensions do not match model input");
}

inline double oracle_score(const Model& m, const Image& img) {
    double s = m.oracle_bias;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) s += m.oracle_weights[i] * img.pixels[i];
    return s;
}

}  // namespace detail

// Pre-softmax logits for networks; the raw (pre-link) affine score for oracles.
inline std::vector<double> forward_logits(const Model& m, const Image& img) {
    detail::check_input_shape(m, img);
    if (m.is_oracle()) return {detail::oracle_score(m, img)};
    detail::Act a = detail::standardize(m, img);
    for (const Layer& l : m.layers) {
        if (l.kind == LayerKind::Softmax) break;
        a = detail::forward_layer(l, a);
    }
    return a.v;
}

inline ClassScore forward(const Model& m, const Image& img) {
    detail::check_input_shape(m, img);
    ClassScore cs;
    if (m.is_oracle()) {
        double s = detail::oracle_score(m, img);
        if (m.kind == ModelKind::SigmoidOracle) s = sigmoid(s);
        cs.probabilities = {s};
        cs.predicted_class = 0;
        cs.confidence = s;
        return cs;
    }
    detail::Act a = detail::standardize(m, img);
    for (const Layer& l : m.layers) a = detail::forward_layer(l, a);
    cs.probabilities = a.v;
    cs.predicted_class = static_cast<int>(std::max_element(a.v.begin(), a.v.end()) - a.v.begin());
    cs.confidence = a.v[static_cast<std::size_t>(cs.predicted_class)];
    return cs;
}

// d(logit of class_index)/d(raw pixel), H*W*C interleaved. Includes the 1/sigma_c
// standardization factor so the derivative is in raw pixel units.
inline std::vector<double> gradient(const Model& m, const Image& img, int class_index) {
    detail::check_input_shape(m, img);
    require(class_index >= 0 && class_index < m.class_count, "gradient: class index out of range");
    if (m.is_oracle()) return m.oracle_weights;

    std::vector<detail::Act> acts;
    acts.reserve(m.layers.size() + 1);
    acts.push_back(detail::standardize(m, img));
    std::size_t n_back = 0;  // layers before softmax
    for (const Layer& l : m.layers) {
        if (l.kind == LayerKind::Softmax) break;
        acts.push_back(detail::forward_layer(l, acts.back()));
        ++n_back;
    }

    detail::Act d = acts.back();
    std::fill(d.v.begin(), d.v.end(), 0.0);
    d.v[static_cast<std::size_t>(class_index)] = 1.0;
    for (std::size_t i = n_back; i-- > 0;) d = detail::backward_layer(m.layers[i], acts[i], d);

    for (int y = 0; y < m.input_h; ++y)
        for (int x = 0; x < m.input_w; ++x)
            for (int c = 0; c < m.input_c; ++c) d.at(y, x, c) /= m.std_std[static_cast<std::size_t>(c)];
    return d.v;
}

inline Model make_affine_oracle(int h, int w, int c, std::vector<double> weights, double bias,
                                bool sigmoid_link = false) {
    require(h >= 1 && w >= 1 && c >= 1, "affine oracle: bad dimensions");
    require(weights.size() == static_cast<std::size_t>(h) * w * c, "affine oracle: weight count mismatch");
    for (double v : weights) require(std::isfinite(v), "affine oracle: non-finite weight");
    require(std::isfinite(bias), "affine oracle: non-finite bias");
    Model m;
    m.kind = sigmoid_link ? ModelKind::SigmoidOracle : ModelKind::AffineOracle;
    m.input_h = h;
    m.input_w = w;
    m.input_c = c;
    m.class_count = 1;
    m.std_mean.assign(static_cast<std::size_t>(c), 0.0);
    m.std_std.assign(static_cast<std::size_t>(c), 1.0);
    m.oracle_weights = std::move(weights);
    m.oracle_bias = bias;
    return m;
}

namespace detail {

inline std::string layer_err(std::size_t idx, const std::string& kind, const std::string& what) {
    return "layer " + std::to_string(idx) + " (" + kind + "): " + what;
}

inline int manifest_int(const nlohmann::json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key) || !j[key].is_number_integer())
        throw format_error("model manifest: " + ctx + ": missing integer field '" + key + "'");
    return j[key].get<int>();
}

}  // namespace detail

// Manifest layout:
//   {"kind": "network" | "affine-oracle",
//    "input": {"height": H, "width": W, "channels": C},
//    "class_count": K,
//    "standardization": {"mean": [C], "std": [C]},      (network)
//    "layers": [{"kind": "conv2d", "out_channels": n, "kernel": k, "padding": p,
//                "bias": false, "offset": bytes}, ...], (network)
//    "link": "identity" | "sigmoid", "bias": b}          (oracle)
// Blob: little-endian f32, packed in layer order unless a layer declares "offset".
// Oracle blobs hold the H*W*C weight array.
inline Model load_model(const nlohmann::json& manifest, std::span<const std::uint8_t> blob) {
    if (!manifest.is_object()) throw format_error("model manifest: not a JSON object");
    const std::string kind = manifest.value("kind", std::string("network"));

    if (!manifest.contains("input") || !manifest["input"].is_object())
        throw format_error("model manifest: missing 'input' object");
    const nlohmann::json& in = manifest["input"];
    const int h = detail::manifest_int(in, "height", "input");
    const int w = detail::manifest_int(in, "width", "input");
    const int c = detail::manifest_int(in, "channels", "input");
    if (h < 1 || w < 1 || c < 1) throw format_error("model manifest: input dimensions must be >= 1");

    if (kind == "affine-oracle" || kind == "sigmoid-oracle") {
        const std::string link = manifest.value("link", kind == "sigmoid-oracle" ? "sigmoid" : "identity");
        if (link != "identity" && link != "sigmoid")
            throw format_error("model manifest: unknown link '" + link + "'");
        const std::size_t n = static_cast<std::size_t>(h) * w * c;
        if (blob.size() != n * 4)
            throw format_error("model manifest: oracle blob holds " + std::to_string(blob.size() / 4) +
                               " floats, expected " + std::to_string(n));
        std::vector<double> weights(n);
        for (std::size_t i = 0; i < n; ++i) weights[i] = detail::read_f32_le(blob, i * 4);
        return make_affine_oracle(h, w, c, std::move(weights), manifest.value("bias", 0.0),
                                  link == "sigmoid");
    }
    if (kind != "network") throw format_error("model manifest: unknown model kind '" + kind + "'");

    Model m;
    m.kind = ModelKind::Network;
    m.input_h = h;
    m.input_w = w;
    m.input_c = c;
    m.class_count = detail::manifest_int(manifest, "class_count", "top level");
    if (m.class_count < 2) throw format_error("model manifest: class_count must be >= 2");

    if (!manifest.contains("standardization") || !manifest["standardization"].is_object())
        throw format_error("model manifest: missing 'standardization' object");
    const nlohmann::json& st = manifest["standardization"];
    for (const char* key : {"mean", "std"}) {
        if (!st.contains(key) || !st[key].is_array() || st[key].size() != static_cast<std::size_t>(c))
            throw format_error(std::string("model manifest: standardization '") + key + "' must be an array of " +
                               std::to_string(c) + " numbers");
    }
    m.std_mean = st["mean"].get<std::vector<double>>();
    m.std_std = st["std"].get<std::vector<double>>();
    for (double s : m.std_std)
        if (!(s > 0.0)) throw format_error("model manifest: standardization std must be strictly positive");

    if (!manifest.contains("layers") || !manifest["layers"].is_array() || manifest["layers"].empty())
        throw format_error("model manifest: missing non-empty 'layers' array");

    int cur_h = h, cur_w = w, cur_c = c;
    bool flattened = false;
    for (std::size_t i = 0; i < manifest["layers"].size(); ++i) {
        const nlohmann::json& lj = manifest["layers"][i];
        if (!lj.is_object() || !lj.contains("kind") || !lj["kind"].is_string())
            throw format_error("model manifest: layer " + std::to_string(i) + ": missing 'kind'");
        const std::string lk = lj["kind"].get<std::string>();
        Layer l;
        l.in_h = cur_h;
        l.in_w = cur_w;
        l.in_c = cur_c;
        if (lk == "conv2d") {
            l.kind = LayerKind::Conv2d;
            if (flattened) throw format_error(detail::layer_err(i, lk, "input already flattened"));
            l.out_channels = detail::manifest_int(lj, "out_channels", "layer " + std::to_string(i));
            l.kernel = detail::manifest_int(lj, "kernel", "layer " + std::to_string(i));
            l.padding = lj.value("padding", 0);
            l.has_bias = lj.value("bias", false);
            if (l.out_channels < 1 || l.kernel < 1 || l.padding < 0)
                throw format_error(detail::layer_err(i, lk, "bad shape parameters"));
            l.out_h = cur_h + 2 * l.padding - l.kernel + 1;
            l.out_w = cur_w + 2 * l.padding - l.kernel + 1;
            l.out_c = l.out_channels;
            if (l.out_h < 1 || l.out_w < 1)
                throw format_error(detail::layer_err(i, lk, "kernel larger than padded input"));
        } else if (lk == "affine-channel") {
            l.kind = LayerKind::AffineChannel;
            if (flattened) throw format_error(detail::layer_err(i, lk, "input already flattened"));
            l.out_h = cur_h;
            l.out_w = cur_w;
            l.out_c = cur_c;
        } else if (lk == "relu") {
            l.kind = LayerKind::Relu;
            l.out_h = cur_h;
            l.out_w = cur_w;
            l.out_c = cur_c;
        } else if (lk == "maxpool2x2") {
            l.kind = LayerKind::MaxPool2x2;
            if (flattened) throw format_error(detail::layer_err(i, lk, "input already flattened"));
            if (cur_h < 2 || cur_w < 2)
                throw format_error(detail::layer_err(i, lk, "input smaller than 2x2"));
            l.out_h = cur_h / 2;
            l.out_w = cur_w / 2;
            l.out_c = cur_c;
        } else if (lk == "flatten") {
            l.kind = LayerKind::Flatten;
            if (flattened) throw format_error(detail::layer_err(i, lk, "input already flattened"));
            l.out_h = 1;
            l.out_w = 1;
            l.out_c = cur_h * cur_w * cur_c;
            flattened = true;
        } else if (lk == "dense") {
            l.kind = LayerKind::Dense;
            if (!flattened && (cur_h != 1 || cur_w != 1))
                throw format_error(detail::layer_err(i, lk, "input not flattened"));
            l.out_features = detail::manifest_int(lj, "out_features", "layer " + std::to_string(i));
            if (l.out_features < 1) throw format_error(detail::layer_err(i, lk, "bad out_features"));
            l.has_bias = lj.value("bias", false);
            l.out_h = 1;
            l.out_w = 1;
            l.out_c = l.out_features;
            flattened = true;
        } else if (lk == "softmax") {
            l.kind = LayerKind::Softmax;
            if (i + 1 != manifest["layers"].size())
                throw format_error(detail::layer_err(i, lk, "softmax must be the final layer"));
            if (cur_h != 1 || cur_w != 1)
                throw format_error(detail::layer_err(i, lk, "input not flattened"));
            l.out_h = 1;
            l.out_w = 1;
            l.out_c = cur_c;
        } else {
            throw format_error(detail::layer_err(i, lk, "unknown layer kind"));
        }
        if (lj.contains("in_channels") && lj["in_channels"].get<int>() != l.in_c)
            throw format_error(detail::layer_err(i, lk, "declared in_channels " +
                                                            std::to_string(lj["in_channels"].get<int>()) +
                                                            " but shape chain gives " + std::to_string(l.in_c)));
        if (lj.contains("in_features") && lj["in_features"].get<int>() != l.in_c)
            throw format_error(detail::layer_err(i, lk, "declared in_features " +
                                                            std::to_string(lj["in_features"].get<int>()) +
                                                            " but shape chain gives " + std::to_string(l.in_c)));
        cur_h = l.out_h;
        cur_w = l.out_w;
        cur_c = l.out_c;
        m.layers.push_back(std::move(l));
    }

    if (m.layers.back().kind != LayerKind::Softmax)
        throw format_error("model manifest: the final layer must be softmax");
    if (cur_c != m.class_count)
        throw format_error("model manifest: network produces " + std::to_string(cur_c) + " outputs, class_count is " +
                           std::to_string(m.class_count));

    // parameter layout: packed in layer order, overridable per layer by "offset"
    std::size_t total = 0;
    for (const Layer& l : m.layers) total += l.param_count();
    if (blob.size() != total * 4)
        throw format_error("weights blob holds " + std::to_string(blob.size() / 4) + " floats (" +
                           std::to_string(blob.size()) + " bytes), manifest declares " + std::to_string(total));

    std::size_t packed = 0;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        Layer& l = m.layers[i];
        const std::size_t count = l.param_count();
        const nlohmann::json& lj = manifest["layers"][i];
        std::size_t off = packed * 4;
        if (lj.contains("offset")) {
            if (count == 0)
                throw format_error(detail::layer_err(i, layer_kind_name(l.kind), "offset on a parameter-free layer"));
            if (!lj["offset"].is_number_integer() || lj["offset"].get<std::int64_t>() < 0)
                throw format_error(detail::layer_err(i, layer_kind_name(l.kind), "bad offset"));
            off = static_cast<std::size_t>(lj["offset"].get<std::int64_t>());
        }
        if (off + count * 4 > blob.size())
            throw format_error(detail::layer_err(i, layer_kind_name(l.kind), "parameters run past end of blob"));
        packed += count;
        if (count == 0) continue;

        std::size_t n_weights = count, n_bias = 0;
        if (l.has_bias) {
            n_bias = static_cast<std::size_t>(l.kind == LayerKind::Dense ? l.out_features : l.out_channels);
            n_weights -= n_bias;
        }
        l.weights.resize(n_weights);
        for (std::size_t j = 0; j < n_weights; ++j) l.weights[j] = detail::read_f32_le(blob, off + j * 4);
        l.bias.resize(n_bias);
        for (std::size_t j = 0; j < n_bias; ++j)
            l.bias[j] = detail::read_f32_le(blob, off + (n_weights + j) * 4);
    }
    return m;
}

}  // namespace salmet
