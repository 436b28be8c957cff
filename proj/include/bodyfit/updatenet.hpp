#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bodyfit/types.hpp"

namespace bodyfit {

enum class Activation : std::uint32_t { relu = 0, identity = 1 };

// Which input channels the network sees. Masked channels are zeroed with
// dimensions preserved, so one architecture serves every ablation.
enum class InputMode : std::uint32_t {
    full = 0,
    no_grad = 1,
    no_theta = 2,
    no_target = 3,
    target_only = 4,
};

const char* to_string(InputMode mode);
InputMode input_mode_from_string(const std::string& s);

struct NetworkArch {
    int input_dim = kNetInputDim;
    int hidden_dim = 256;
    int residual_blocks = 2;
    int output_dim = kParamDim;
    Activation activation = Activation::relu;
    InputMode input_mode = InputMode::full;

    std::size_t param_count() const;
    std::size_t forward_flops() const;  // 2 * multiply-accumulates
    bool operator==(const NetworkArch&) const = default;
};

// One network evaluation input: the reprojection gradient (scaled by
// 1/(1+||g||) so its magnitude stays bounded across iterations), the current
// flattened parameters, and the flattened target with visibility flags.
struct NetInput {
    VecX grad = VecX::Zero(kParamDim);
    VecX theta = VecX::Zero(kParamDim);
    VecX target = VecX::Zero(kTargetDim);

    VecX concat() const;
};

NetInput make_net_input(const VecX& raw_grad, const VecX& theta_flat,
                        const Keypoints2D& target);
NetInput ablated_input(NetInput input, InputMode mode);
// Same masking applied to an already-concatenated column batch, in place.
void apply_input_mode(MatX& columns, InputMode mode);

struct Layer {
    MatX weight;
    VecX bias;
};

// Per-layer gradients, same shapes as the weights.
struct NetGradients {
    Layer input;
    std::vector<Layer> blocks;
    Layer output;

    void set_zero();
    void scale(double s);
};

// Activations cached by a forward pass, consumed by backward. Tied to the
// weight revision that produced it; backward on a stale cache is an error.
struct ForwardCache {
    MatX input;                  // arch.input_dim x batch
    MatX hidden0;                // after the input layer
    std::vector<MatX> pre_act;   // per block, before activation
    std::vector<MatX> hidden;    // per block, after the residual add
    std::uint64_t revision = 0;
    bool valid = false;
};

/** Residual MLP predicting a per-parameter update from (gradient, state,
 *  target). The final layer is zero-initialized so an untrained network is a
 *  no-op. Forward/backward are pure given fixed weights; training mutates
 *  weights through apply_update, which bumps the revision counter. */
class UpdateNetwork {
public:
    UpdateNetwork() = default;
    UpdateNetwork(const NetworkArch& arch, std::uint64_t seed);

    const NetworkArch& arch() const { return arch_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t revision() const { return revision_; }
    std::size_t param_count() const { return arch_.param_count(); }

    VecX forward(const VecX& input) const;
    MatX forward_batch(const MatX& inputs, ForwardCache* cache = nullptr) const;

    // Gradients of sum(output .* output_grad) with respect to weights and,
    // optionally, the inputs. Accumulates into grads (callers zero it).
    void backward_batch(const ForwardCache& cache, const MatX& output_grad,
                        NetGradients& grads, MatX* input_grad = nullptr) const;

    NetGradients zero_gradients() const;
    void apply_update(const NetGradients& delta);  // weights += delta

    const Layer& input_layer() const { return input_; }
    const std::vector<Layer>& block_layers() const { return blocks_; }
    const Layer& output_layer() const { return output_; }
    Layer& mutable_input_layer() { ++revision_; return input_; }
    std::vector<Layer>& mutable_block_layers() { ++revision_; return blocks_; }
    Layer& mutable_output_layer() { ++revision_; return output_; }

    void set_input_mode(InputMode mode) { arch_.input_mode = mode; }

private:
    NetworkArch arch_;
    std::uint64_t seed_ = 0;
    std::uint64_t revision_ = 0;
    Layer input_;
    std::vector<Layer> blocks_;
    Layer output_;
};

// Versioned binary checkpoint: magic, version, architecture descriptor,
// seed, then weights as little-endian 64-bit reals in layer order.
void save_network(const UpdateNetwork& net, const std::string& path);
UpdateNetwork load_network(const std::string& path);

}  // namespace bodyfit
