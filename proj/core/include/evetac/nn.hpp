#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace evetac::nn {

struct Shape3 {
    int c = 1, h = 1, w = 1;
    std::size_t size() const
    {
        return static_cast<std::size_t>(c) * h * w;
    }
    bool operator==(const Shape3&) const = default;
};

enum class LayerKind { Dense, Conv2d, ReLU, Sigmoid, Dropout, Flatten, MaxPool2d };

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    int in = 0, out = 0;                     // Dense
    int in_ch = 0, out_ch = 0;               // Conv2d
    int kh = 0, kw = 0;                      // Conv2d / MaxPool2d kernel
    int pt = 0, pb = 0, pl = 0, pr = 0;      // Conv2d zero padding
    double p = 0.0;                          // Dropout probability

    static LayerSpec dense(int in, int out);
    static LayerSpec conv2d(int in_ch, int out_ch, int kh, int kw,
                            int pt = 0, int pb = 0, int pl = 0, int pr = 0);
    static LayerSpec relu();
    static LayerSpec sigmoid();
    static LayerSpec dropout(double p);
    static LayerSpec flatten();
    static LayerSpec max_pool(int kh, int kw);
};

struct NetworkSpec {
    Shape3 input;
    std::vector<LayerSpec> layers;

    // filled by finalize()
    std::vector<Shape3> shapes;              // output shape per layer
    std::vector<std::size_t> param_offsets;  // into the parameter vector
    std::size_t param_count = 0;

    void finalize(); // shape propagation; throws on inconsistent specs
    Shape3 output_shape() const { return shapes.empty() ? input : shapes.back(); }
};

std::uint64_t spec_digest(const NetworkSpec& spec);

struct Network {
    NetworkSpec spec;
    std::vector<double> params;

    // Glorot-uniform weights, zero biases, reproducible per seed
    void init_params(std::uint64_t seed);
    std::span<double> layer_params(std::size_t layer);
    std::span<const double> layer_params(std::size_t layer) const;
};

enum class Loss { BCE, MSE };

/*
 * Scratch space for one forward/backward evaluation. Activations of every
 * layer boundary are cached so the backward pass can run without a second
 * forward. Parameter gradients accumulate across calls until zeroed.
 */
class Workspace {
public:
    explicit Workspace(const NetworkSpec& spec);

    std::vector<std::vector<double>> acts;   // acts[0] = input, acts[i+1] = layer i output
    std::vector<std::vector<std::uint8_t>> drop_mask;
    std::vector<std::vector<int>> pool_arg;
    std::vector<std::vector<double>> deltas;
    std::vector<double> grad;
    bool last_training = false;

    void zero_grad();
};

// Deterministic when training == false; rng is only touched by dropout.
std::span<const double> forward(const Network& net, std::span<const double> input,
                                Workspace& ws, bool training = false,
                                std::mt19937_64* rng = nullptr);

double loss_value(Loss loss, std::span<const double> prediction,
                  std::span<const double> target);

// Requires a preceding forward on the same workspace; adds parameter
// gradients into ws.grad.
void backward(const Network& net, Loss loss, std::span<const double> target, Workspace& ws);

// theta <- theta - lr * grad, elementwise; rejects non-finite gradients
void sgd_step(Network& net, std::span<const double> grad, double lr);

void save_checkpoint(const std::string& path, const Network& net);
Network load_checkpoint(const std::string& path);

} // namespace evetac::nn
