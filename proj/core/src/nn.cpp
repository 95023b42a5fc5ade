#include "evetac/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "evetac/errors.hpp"

namespace evetac::nn {

namespace {

std::size_t layer_param_count(const LayerSpec& l)
{
    switch (l.kind) {
    case LayerKind::Dense:
        return static_cast<std::size_t>(l.in) * l.out + l.out;
    case LayerKind::Conv2d:
        return static_cast<std::size_t>(l.out_ch) * l.in_ch * l.kh * l.kw + l.out_ch;
    default:
        return 0;
    }
}

constexpr double kProbEps = 1e-12;

} // namespace

LayerSpec LayerSpec::dense(int in, int out)
{
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.in = in;
    l.out = out;
    return l;
}

LayerSpec LayerSpec::conv2d(int in_ch, int out_ch, int kh, int kw, int pt, int pb, int pl, int pr)
{
    LayerSpec l;
    l.kind = LayerKind::Conv2d;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.kh = kh;
    l.kw = kw;
    l.pt = pt;
    l.pb = pb;
    l.pl = pl;
    l.pr = pr;
    return l;
}

LayerSpec LayerSpec::relu()
{
    return LayerSpec{};
}

LayerSpec LayerSpec::sigmoid()
{
    LayerSpec l;
    l.kind = LayerKind::Sigmoid;
    return l;
}

LayerSpec LayerSpec::dropout(double p)
{
    LayerSpec l;
    l.kind = LayerKind::Dropout;
    l.p = p;
    return l;
}

LayerSpec LayerSpec::flatten()
{
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    return l;
}

LayerSpec LayerSpec::max_pool(int kh, int kw)
{
    LayerSpec l;
    l.kind = LayerKind::MaxPool2d;
    l.kh = kh;
    l.kw = kw;
    return l;
}

void NetworkSpec::finalize()
{
    shapes.clear();
    param_offsets.clear();
    param_count = 0;
    Shape3 cur = input;
    for (const LayerSpec& l : layers) {
        param_offsets.push_back(param_count);
        param_count += layer_param_count(l);
        switch (l.kind) {
        case LayerKind::Dense:
            if (static_cast<std::size_t>(l.in) != cur.size())
                throw InvalidInput("nn: dense input size mismatch");
            cur = {1, 1, l.out};
            break;
        case LayerKind::Conv2d: {
            if (l.in_ch != cur.c)
                throw InvalidInput("nn: conv input channel mismatch");
            const int oh = cur.h + l.pt + l.pb - l.kh + 1;
            const int ow = cur.w + l.pl + l.pr - l.kw + 1;
            if (oh < 1 || ow < 1)
                throw InvalidInput("nn: conv kernel larger than padded input");
            cur = {l.out_ch, oh, ow};
            break;
        }
        case LayerKind::MaxPool2d: {
            const int oh = cur.h / l.kh;
            const int ow = cur.w / l.kw;
            if (oh < 1 || ow < 1)
                throw InvalidInput("nn: pool kernel larger than input");
            cur = {cur.c, oh, ow};
            break;
        }
        case LayerKind::Dropout:
            if (l.p < 0.0 || l.p >= 1.0)
                throw InvalidInput("nn: dropout probability must be in [0,1)");
            break;
        case LayerKind::Flatten:
            cur = {1, 1, static_cast<int>(cur.size())};
            break;
        case LayerKind::ReLU:
        case LayerKind::Sigmoid:
            break;
        }
        shapes.push_back(cur);
    }
}

std::uint64_t spec_digest(const NetworkSpec& spec)
{
    // FNV-1a over the structural fields
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::int64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= static_cast<std::uint8_t>(v >> (8 * i));
            h *= 1099511628211ULL;
        }
    };
    mix(spec.input.c);
    mix(spec.input.h);
    mix(spec.input.w);
    for (const LayerSpec& l : spec.layers) {
        mix(static_cast<int>(l.kind));
        mix(l.in);
        mix(l.out);
        mix(l.in_ch);
        mix(l.out_ch);
        mix(l.kh);
        mix(l.kw);
        mix(l.pt);
        mix(l.pb);
        mix(l.pl);
        mix(l.pr);
        mix(static_cast<std::int64_t>(l.p * 1e6));
    }
    return h;
}

void Network::init_params(std::uint64_t seed)
{
    params.assign(spec.param_count, 0.0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind == LayerKind::Dense) {
            const double a = std::sqrt(6.0 / (l.in + l.out));
            std::uniform_real_distribution<double> dist(-a, a);
            double* w = params.data() + spec.param_offsets[i];
            for (int k = 0; k < l.in * l.out; ++k)
                w[k] = dist(rng);
            // biases stay zero
        } else if (l.kind == LayerKind::Conv2d) {
            const int fan_in = l.in_ch * l.kh * l.kw;
            const int fan_out = l.out_ch * l.kh * l.kw;
            const double a = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-a, a);
            double* w = params.data() + spec.param_offsets[i];
            for (int k = 0; k < l.out_ch * fan_in; ++k)
                w[k] = dist(rng);
        }
    }
}

std::span<double> Network::layer_params(std::size_t layer)
{
    return {params.data() + spec.param_offsets[layer], layer_param_count(spec.layers[layer])};
}

std::span<const double> Network::layer_params(std::size_t layer) const
{
    return {params.data() + spec.param_offsets[layer], layer_param_count(spec.layers[layer])};
}

Workspace::Workspace(const NetworkSpec& spec)
{
    acts.resize(spec.layers.size() + 1);
    acts[0].resize(spec.input.size());
    deltas.resize(spec.layers.size() + 1);
    deltas[0].resize(spec.input.size());
    drop_mask.resize(spec.layers.size());
    pool_arg.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        acts[i + 1].resize(spec.shapes[i].size());
        deltas[i + 1].resize(spec.shapes[i].size());
        if (spec.layers[i].kind == LayerKind::Dropout)
            drop_mask[i].resize(spec.shapes[i].size());
        if (spec.layers[i].kind == LayerKind::MaxPool2d)
            pool_arg[i].resize(spec.shapes[i].size());
    }
    grad.assign(spec.param_count, 0.0);
}

void Workspace::zero_grad()
{
    std::fill(grad.begin(), grad.end(), 0.0);
}

namespace {

void dense_forward(const LayerSpec& l, std::span<const double> w, const double* in, double* out)
{
    const double* bias = w.data() + static_cast<std::size_t>(l.in) * l.out;
    for (int j = 0; j < l.out; ++j) {
        const double* row = w.data() + static_cast<std::size_t>(j) * l.in;
        double acc = bias[j];
        for (int i = 0; i < l.in; ++i)
            acc += row[i] * in[i];
        out[j] = acc;
    }
}

void conv_forward(const LayerSpec& l, const Shape3& in_s, const Shape3& out_s,
                  std::span<const double> w, const double* in, double* out)
{
    const double* bias = w.data() + static_cast<std::size_t>(l.out_ch) * l.in_ch * l.kh * l.kw;
    const std::size_t in_plane = static_cast<std::size_t>(in_s.h) * in_s.w;
    for (int oc = 0; oc < out_s.c; ++oc) {
        const double* wk = w.data() + static_cast<std::size_t>(oc) * l.in_ch * l.kh * l.kw;
        for (int oy = 0; oy < out_s.h; ++oy) {
            for (int ox = 0; ox < out_s.w; ++ox) {
                double acc = bias[oc];
                for (int ic = 0; ic < l.in_ch; ++ic) {
                    const double* plane = in + ic * in_plane;
                    const double* kk = wk + static_cast<std::size_t>(ic) * l.kh * l.kw;
                    for (int ky = 0; ky < l.kh; ++ky) {
                        const int iy = oy + ky - l.pt;
                        if (iy < 0 || iy >= in_s.h)
                            continue;
                        const double* row = plane + static_cast<std::size_t>(iy) * in_s.w;
                        const double* krow = kk + static_cast<std::size_t>(ky) * l.kw;
                        for (int kx = 0; kx < l.kw; ++kx) {
                            const int ix = ox + kx - l.pl;
                            if (ix < 0 || ix >= in_s.w)
                                continue;
                            acc += krow[kx] * row[ix];
                        }
                    }
                }
                out[(static_cast<std::size_t>(oc) * out_s.h + oy) * out_s.w + ox] = acc;
            }
        }
    }
}

} // namespace

std::span<const double> forward(const Network& net, std::span<const double> input,
                                Workspace& ws, bool training, std::mt19937_64* rng)
{
    const NetworkSpec& spec = net.spec;
    if (input.size() != spec.input.size())
        throw InvalidInput("nn: input shape mismatch");
    std::copy(input.begin(), input.end(), ws.acts[0].begin());
    ws.last_training = training;

    Shape3 in_s = spec.input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const Shape3& out_s = spec.shapes[i];
        const double* in = ws.acts[i].data();
        double* out = ws.acts[i + 1].data();
        switch (l.kind) {
        case LayerKind::Dense:
            dense_forward(l, net.layer_params(i), in, out);
            break;
        case LayerKind::Conv2d:
            conv_forward(l, in_s, out_s, net.layer_params(i), in, out);
            break;
        case LayerKind::ReLU:
            for (std::size_t k = 0; k < out_s.size(); ++k)
                out[k] = in[k] > 0.0 ? in[k] : 0.0;
            break;
        case LayerKind::Sigmoid:
            for (std::size_t k = 0; k < out_s.size(); ++k)
                out[k] = 1.0 / (1.0 + std::exp(-in[k]));
            break;
        case LayerKind::Dropout:
            if (training && l.p > 0.0) {
                if (rng == nullptr)
                    throw TrainingError("nn: dropout in training mode needs an rng");
                std::bernoulli_distribution keep(1.0 - l.p);
                const double scale = 1.0 / (1.0 - l.p);
                for (std::size_t k = 0; k < out_s.size(); ++k) {
                    const bool kept = keep(*rng);
                    ws.drop_mask[i][k] = kept;
                    out[k] = kept ? in[k] * scale : 0.0;
                }
            } else {
                std::copy_n(in, out_s.size(), out);
                if (!ws.drop_mask[i].empty())
                    std::fill(ws.drop_mask[i].begin(), ws.drop_mask[i].end(), 1);
            }
            break;
        case LayerKind::Flatten:
            std::copy_n(in, out_s.size(), out);
            break;
        case LayerKind::MaxPool2d:
            for (int c = 0; c < out_s.c; ++c) {
                for (int oy = 0; oy < out_s.h; ++oy) {
                    for (int ox = 0; ox < out_s.w; ++ox) {
                        double best = -std::numeric_limits<double>::infinity();
                        int best_idx = -1;
                        for (int ky = 0; ky < l.kh; ++ky) {
                            for (int kx = 0; kx < l.kw; ++kx) {
                                const int iy = oy * l.kh + ky;
                                const int ix = ox * l.kw + kx;
                                const int idx = (c * in_s.h + iy) * in_s.w + ix;
                                if (in[idx] > best) {
                                    best = in[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        const std::size_t o = (static_cast<std::size_t>(c) * out_s.h + oy) * out_s.w + ox;
                        out[o] = best;
                        ws.pool_arg[i][o] = best_idx;
                    }
                }
            }
            break;
        }
        in_s = out_s;
    }
    return ws.acts.back();
}

double loss_value(Loss loss, std::span<const double> prediction, std::span<const double> target)
{
    if (prediction.size() != target.size())
        throw InvalidInput("nn: loss target size mismatch");
    double acc = 0.0;
    if (loss == Loss::BCE) {
        for (std::size_t k = 0; k < prediction.size(); ++k) {
            const double y = target[k];
            if (y < 0.0 || y > 1.0)
                throw InvalidInput("nn: BCE target outside [0,1]");
            const double p = std::clamp(prediction[k], kProbEps, 1.0 - kProbEps);
            acc += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        }
    } else {
        for (std::size_t k = 0; k < prediction.size(); ++k) {
            const double d = prediction[k] - target[k];
            acc += d * d;
        }
        acc /= static_cast<double>(prediction.size());
    }
    return acc;
}

void backward(const Network& net, Loss loss, std::span<const double> target, Workspace& ws)
{
    const NetworkSpec& spec = net.spec;
    const std::size_t n_layers = spec.layers.size();
    const std::vector<double>& pred = ws.acts[n_layers];
    if (target.size() != pred.size())
        throw InvalidInput("nn: loss target size mismatch");

    std::vector<double>& dout = ws.deltas[n_layers];
    if (loss == Loss::BCE) {
        for (std::size_t k = 0; k < pred.size(); ++k) {
            const double y = target[k];
            if (y < 0.0 || y > 1.0)
                throw InvalidInput("nn: BCE target outside [0,1]");
            const double p = std::clamp(pred[k], kProbEps, 1.0 - kProbEps);
            dout[k] = (p - y) / (p * (1.0 - p));
        }
    } else {
        const double scale = 2.0 / static_cast<double>(pred.size());
        for (std::size_t k = 0; k < pred.size(); ++k)
            dout[k] = scale * (pred[k] - target[k]);
    }

    for (std::size_t li = n_layers; li-- > 0;) {
        const LayerSpec& l = spec.layers[li];
        const Shape3 in_s = li == 0 ? spec.input : spec.shapes[li - 1];
        const Shape3& out_s = spec.shapes[li];
        const double* in = ws.acts[li].data();
        const double* out = ws.acts[li + 1].data();
        const double* dO = ws.deltas[li + 1].data();
        std::vector<double>& dI = ws.deltas[li];
        std::fill(dI.begin(), dI.end(), 0.0);

        switch (l.kind) {
        case LayerKind::Dense: {
            std::span<const double> w = net.layer_params(li);
            double* gw = ws.grad.data() + spec.param_offsets[li];
            double* gb = gw + static_cast<std::size_t>(l.in) * l.out;
            for (int j = 0; j < l.out; ++j) {
                const double g = dO[j];
                gb[j] += g;
                const double* row = w.data() + static_cast<std::size_t>(j) * l.in;
                double* grow = gw + static_cast<std::size_t>(j) * l.in;
                for (int i = 0; i < l.in; ++i) {
                    grow[i] += g * in[i];
                    dI[i] += g * row[i];
                }
            }
            break;
        }
        case LayerKind::Conv2d: {
            std::span<const double> w = net.layer_params(li);
            double* gw = ws.grad.data() + spec.param_offsets[li];
            double* gb = gw + static_cast<std::size_t>(l.out_ch) * l.in_ch * l.kh * l.kw;
            const std::size_t in_plane = static_cast<std::size_t>(in_s.h) * in_s.w;
            for (int oc = 0; oc < out_s.c; ++oc) {
                const double* wk = w.data() + static_cast<std::size_t>(oc) * l.in_ch * l.kh * l.kw;
                double* gk = gw + static_cast<std::size_t>(oc) * l.in_ch * l.kh * l.kw;
                for (int oy = 0; oy < out_s.h; ++oy) {
                    for (int ox = 0; ox < out_s.w; ++ox) {
                        const double g = dO[(static_cast<std::size_t>(oc) * out_s.h + oy) * out_s.w + ox];
                        if (g == 0.0)
                            continue;
                        gb[oc] += g;
                        for (int ic = 0; ic < l.in_ch; ++ic) {
                            const double* plane = in + ic * in_plane;
                            double* dplane = dI.data() + ic * in_plane;
                            const double* kk = wk + static_cast<std::size_t>(ic) * l.kh * l.kw;
                            double* gkk = gk + static_cast<std::size_t>(ic) * l.kh * l.kw;
                            for (int ky = 0; ky < l.kh; ++ky) {
                                const int iy = oy + ky - l.pt;
                                if (iy < 0 || iy >= in_s.h)
                                    continue;
                                for (int kx = 0; kx < l.kw; ++kx) {
                                    const int ix = ox + kx - l.pl;
                                    if (ix < 0 || ix >= in_s.w)
                                        continue;
                                    const std::size_t ii = static_cast<std::size_t>(iy) * in_s.w + ix;
                                    gkk[static_cast<std::size_t>(ky) * l.kw + kx] += g * plane[ii];
                                    dplane[ii] += g * kk[static_cast<std::size_t>(ky) * l.kw + kx];
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::ReLU:
            for (std::size_t k = 0; k < out_s.size(); ++k)
                dI[k] = in[k] > 0.0 ? dO[k] : 0.0;
            break;
        case LayerKind::Sigmoid:
            for (std::size_t k = 0; k < out_s.size(); ++k)
                dI[k] = dO[k] * out[k] * (1.0 - out[k]);
            break;
        case LayerKind::Dropout: {
            if (ws.last_training && l.p > 0.0) {
                const double scale = 1.0 / (1.0 - l.p);
                for (std::size_t k = 0; k < out_s.size(); ++k)
                    dI[k] = ws.drop_mask[li][k] ? dO[k] * scale : 0.0;
            } else {
                std::copy_n(dO, out_s.size(), dI.begin());
            }
            break;
        }
        case LayerKind::Flatten:
            std::copy_n(dO, out_s.size(), dI.begin());
            break;
        case LayerKind::MaxPool2d:
            for (std::size_t k = 0; k < out_s.size(); ++k)
                dI[ws.pool_arg[li][k]] += dO[k];
            break;
        }
    }
}

void sgd_step(Network& net, std::span<const double> grad, double lr)
{
    if (grad.size() != net.params.size())
        throw TrainingError("nn: gradient size mismatch");
    for (const double g : grad)
        if (!std::isfinite(g))
            throw TrainingError("nn: non-finite gradient");
    for (std::size_t k = 0; k < grad.size(); ++k)
        net.params[k] -= lr * grad[k];
}

namespace {

constexpr char kCkptMagic[4] = {'E', 'V', 'N', 'N'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in)
{
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in)
        throw DecodeError("checkpoint: truncated file");
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const Network& net)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw InvalidInput("checkpoint: cannot open for writing: " + path);
    out.write(kCkptMagic, 4);
    write_pod(out, kCkptVersion);
    write_pod(out, spec_digest(net.spec));
    write_pod(out, net.spec.input);
    const std::uint64_t n_layers = net.spec.layers.size();
    write_pod(out, n_layers);
    for (const LayerSpec& l : net.spec.layers)
        write_pod(out, l);
    const std::uint64_t n_params = net.params.size();
    write_pod(out, n_params);
    out.write(reinterpret_cast<const char*>(net.params.data()),
              static_cast<std::streamsize>(n_params * sizeof(double)));
    if (!out)
        throw Error("checkpoint: write failed: " + path);
}

Network load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InvalidInput("checkpoint: cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw DecodeError("checkpoint: bad magic");
    if (read_pod<std::uint32_t>(in) != kCkptVersion)
        throw DecodeError("checkpoint: unsupported version");
    const std::uint64_t digest = read_pod<std::uint64_t>(in);

    Network net;
    net.spec.input = read_pod<Shape3>(in);
    const std::uint64_t n_layers = read_pod<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n_layers; ++i)
        net.spec.layers.push_back(read_pod<LayerSpec>(in));
    net.spec.finalize();
    if (spec_digest(net.spec) != digest)
        throw DecodeError("checkpoint: spec digest mismatch");
    const std::uint64_t n_params = read_pod<std::uint64_t>(in);
    if (n_params != net.spec.param_count)
        throw DecodeError("checkpoint: parameter count mismatch");
    net.params.resize(n_params);
    in.read(reinterpret_cast<char*>(net.params.data()),
            static_cast<std::streamsize>(n_params * sizeof(double)));
    if (!in)
        throw DecodeError("checkpoint: truncated parameter blob");
    return net;
}

} // namespace evetac::nn
