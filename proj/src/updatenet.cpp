#include "bodyfit/updatenet.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "bodyfit/error.hpp"
#include "bodyfit/sampler.hpp"

namespace bodyfit {

const char* to_string(InputMode mode) {
    switch (mode) {
        case InputMode::full: return "full";
        case InputMode::no_grad: return "no_grad";
        case InputMode::no_theta: return "no_theta";
        case InputMode::no_target: return "no_target";
        case InputMode::target_only: return "target_only";
    }
    throw Error(ErrorCode::invalid_argument, "unknown input mode");
}

InputMode input_mode_from_string(const std::string& s) {
    if (s == "full") return InputMode::full;
    if (s == "no_grad") return InputMode::no_grad;
    if (s == "no_theta") return InputMode::no_theta;
    if (s == "no_target") return InputMode::no_target;
    if (s == "target_only") return InputMode::target_only;
    throw Error(ErrorCode::config, "unknown input mode '" + s + "'");
}

std::size_t NetworkArch::param_count() const {
    std::size_t n = static_cast<std::size_t>(input_dim) * hidden_dim + hidden_dim;
    n += static_cast<std::size_t>(residual_blocks) *
         (static_cast<std::size_t>(hidden_dim) * hidden_dim + hidden_dim);
    n += static_cast<std::size_t>(hidden_dim) * output_dim + output_dim;
    return n;
}

std::size_t NetworkArch::forward_flops() const {
    const std::size_t macs =
        static_cast<std::size_t>(input_dim) * hidden_dim +
        static_cast<std::size_t>(residual_blocks) * hidden_dim * hidden_dim +
        static_cast<std::size_t>(hidden_dim) * output_dim;
    return 2 * macs;
}

VecX NetInput::concat() const {
    VecX v(grad.size() + theta.size() + target.size());
    v << grad, theta, target;
    return v;
}

NetInput make_net_input(const VecX& raw_grad, const VecX& theta_flat,
                        const Keypoints2D& target) {
    if (raw_grad.size() != kParamDim || theta_flat.size() != kParamDim) {
        throw Error(ErrorCode::shape_mismatch,
                    "network input channels must have " +
                        std::to_string(kParamDim) + " entries");
    }
    NetInput in;
    // Bound the gradient channel; raw reprojection gradients swing over
    // orders of magnitude between iterations.
    in.grad = raw_grad / (1.0 + raw_grad.norm());
    in.theta = theta_flat;
    in.target = target.flatten();
    if (in.target.size() != kTargetDim) {
        throw Error(ErrorCode::shape_mismatch,
                    "target must flatten to " + std::to_string(kTargetDim) +
                        " entries");
    }
    return in;
}

NetInput ablated_input(NetInput input, InputMode mode) {
    switch (mode) {
        case InputMode::full:
            break;
        case InputMode::no_grad:
            input.grad.setZero();
            break;
        case InputMode::no_theta:
            input.theta.setZero();
            break;
        case InputMode::no_target:
            input.target.setZero();
            break;
        case InputMode::target_only:
            input.grad.setZero();
            input.theta.setZero();
            break;
    }
    return input;
}

void apply_input_mode(MatX& columns, InputMode mode) {
    if (columns.rows() != kNetInputDim) {
        throw Error(ErrorCode::shape_mismatch,
                    "input batch must have " + std::to_string(kNetInputDim) +
                        " rows");
    }
    switch (mode) {
        case InputMode::full:
            break;
        case InputMode::no_grad:
            columns.topRows(kParamDim).setZero();
            break;
        case InputMode::no_theta:
            columns.middleRows(kParamDim, kParamDim).setZero();
            break;
        case InputMode::no_target:
            columns.bottomRows(kTargetDim).setZero();
            break;
        case InputMode::target_only:
            columns.topRows(2 * kParamDim).setZero();
            break;
    }
}

void NetGradients::set_zero() {
    input.weight.setZero();
    input.bias.setZero();
    for (auto& b : blocks) {
        b.weight.setZero();
        b.bias.setZero();
    }
    output.weight.setZero();
    output.bias.setZero();
}

void NetGradients::scale(double s) {
    input.weight *= s;
    input.bias *= s;
    for (auto& b : blocks) {
        b.weight *= s;
        b.bias *= s;
    }
    output.weight *= s;
    output.bias *= s;
}

namespace {

void validate_arch(const NetworkArch& a) {
    if (a.input_dim < 1 || a.hidden_dim < 1 || a.output_dim < 1 ||
        a.residual_blocks < 0) {
        throw Error(ErrorCode::config, "network architecture has empty layers");
    }
    if (a.activation != Activation::relu && a.activation != Activation::identity) {
        throw Error(ErrorCode::config, "unknown activation tag");
    }
}

}  // namespace

UpdateNetwork::UpdateNetwork(const NetworkArch& arch, std::uint64_t seed)
    : arch_(arch), seed_(seed) {
    validate_arch(arch);
    Rng rng(seed);
    auto fill = [&rng](MatX& w, double std) {
        double* p = w.data();
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            p[i] = std * rng.normal();
        }
    };

    input_.weight.resize(arch.hidden_dim, arch.input_dim);
    input_.bias = VecX::Zero(arch.hidden_dim);
    fill(input_.weight, std::sqrt(2.0 / arch.input_dim));

    blocks_.resize(arch.residual_blocks);
    for (auto& b : blocks_) {
        b.weight.resize(arch.hidden_dim, arch.hidden_dim);
        b.bias = VecX::Zero(arch.hidden_dim);
        fill(b.weight, std::sqrt(2.0 / arch.hidden_dim));
    }

    // Zero final layer: the untrained update is exactly no-op.
    output_.weight = MatX::Zero(arch.output_dim, arch.hidden_dim);
    output_.bias = VecX::Zero(arch.output_dim);
}

MatX UpdateNetwork::forward_batch(const MatX& inputs, ForwardCache* cache) const {
    if (input_.weight.size() == 0) {
        throw Error(ErrorCode::invalid_state, "network is not initialized");
    }
    if (inputs.rows() != arch_.input_dim) {
        throw Error(ErrorCode::shape_mismatch,
                    "network input must have " + std::to_string(arch_.input_dim) +
                        " rows, got " + std::to_string(inputs.rows()));
    }
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.input = inputs;
    if (arch_.input_mode != InputMode::full) {
        apply_input_mode(c.input, arch_.input_mode);
    }

    c.hidden0 = (input_.weight * c.input).colwise() + input_.bias;
    c.pre_act.resize(blocks_.size());
    c.hidden.resize(blocks_.size());
    const MatX* h = &c.hidden0;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        c.pre_act[b] = (blocks_[b].weight * (*h)).colwise() + blocks_[b].bias;
        if (arch_.activation == Activation::relu) {
            c.hidden[b] = *h + c.pre_act[b].cwiseMax(0.0);
        } else {
            c.hidden[b] = *h + c.pre_act[b];
        }
        h = &c.hidden[b];
    }
    MatX out = (output_.weight * (*h)).colwise() + output_.bias;

    c.revision = revision_;
    c.valid = true;
    return out;
}

VecX UpdateNetwork::forward(const VecX& input) const {
    return forward_batch(input, nullptr).col(0);
}

void UpdateNetwork::backward_batch(const ForwardCache& cache,
                                   const MatX& output_grad, NetGradients& grads,
                                   MatX* input_grad) const {
    if (!cache.valid || cache.revision != revision_) {
        throw Error(ErrorCode::invalid_state,
                    "forward cache is stale; rerun forward_batch");
    }
    if (output_grad.rows() != arch_.output_dim ||
        output_grad.cols() != cache.input.cols()) {
        throw Error(ErrorCode::shape_mismatch, "output gradient shape is off");
    }
    if (grads.input.weight.rows() != input_.weight.rows() ||
        grads.input.weight.cols() != input_.weight.cols() ||
        grads.blocks.size() != blocks_.size()) {
        throw Error(ErrorCode::shape_mismatch,
                    "gradient accumulator does not match the architecture");
    }

    const MatX& last = blocks_.empty() ? cache.hidden0 : cache.hidden.back();
    grads.output.weight.noalias() += output_grad * last.transpose();
    grads.output.bias.noalias() += output_grad.rowwise().sum();

    MatX dh = output_.weight.transpose() * output_grad;
    for (int b = static_cast<int>(blocks_.size()) - 1; b >= 0; --b) {
        const MatX& h_in = (b == 0) ? cache.hidden0 : cache.hidden[b - 1];
        MatX dact;
        if (arch_.activation == Activation::relu) {
            dact = dh.cwiseProduct(
                (cache.pre_act[b].array() > 0.0).cast<double>().matrix());
        } else {
            dact = dh;
        }
        grads.blocks[b].weight.noalias() += dact * h_in.transpose();
        grads.blocks[b].bias.noalias() += dact.rowwise().sum();
        // Residual: gradient flows both through the block and around it.
        dh.noalias() += blocks_[b].weight.transpose() * dact;
    }

    grads.input.weight.noalias() += dh * cache.input.transpose();
    grads.input.bias.noalias() += dh.rowwise().sum();

    if (input_grad) {
        *input_grad = input_.weight.transpose() * dh;
        // Masked channels never reach the network, so nothing flows back.
        if (arch_.input_mode != InputMode::full) {
            apply_input_mode(*input_grad, arch_.input_mode);
        }
    }
}

NetGradients UpdateNetwork::zero_gradients() const {
    NetGradients g;
    g.input.weight = MatX::Zero(arch_.hidden_dim, arch_.input_dim);
    g.input.bias = VecX::Zero(arch_.hidden_dim);
    g.blocks.resize(blocks_.size());
    for (auto& b : g.blocks) {
        b.weight = MatX::Zero(arch_.hidden_dim, arch_.hidden_dim);
        b.bias = VecX::Zero(arch_.hidden_dim);
    }
    g.output.weight = MatX::Zero(arch_.output_dim, arch_.hidden_dim);
    g.output.bias = VecX::Zero(arch_.output_dim);
    return g;
}

void UpdateNetwork::apply_update(const NetGradients& delta) {
    if (delta.input.weight.rows() != input_.weight.rows() ||
        delta.blocks.size() != blocks_.size() ||
        delta.output.weight.rows() != output_.weight.rows()) {
        throw Error(ErrorCode::shape_mismatch,
                    "update does not match the architecture");
    }
    input_.weight += delta.input.weight;
    input_.bias += delta.input.bias;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        blocks_[b].weight += delta.blocks[b].weight;
        blocks_[b].bias += delta.blocks[b].bias;
    }
    output_.weight += delta.output.weight;
    output_.bias += delta.output.bias;
    ++revision_;
}

namespace {

constexpr char kNetMagic[8] = {'B', 'F', 'N', 'E', 'T', 'W', 'K', '1'};
constexpr std::uint32_t kNetVersion = 1;

void write_raw(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_raw(std::ifstream& in, void* p, std::size_t n, const std::string& path) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n)) {
        throw Error(ErrorCode::data, path + ": truncated checkpoint");
    }
}

void write_u32(std::ofstream& out, std::uint32_t v) { write_raw(out, &v, 4); }
void write_u64(std::ofstream& out, std::uint64_t v) { write_raw(out, &v, 8); }

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    std::uint32_t v;
    read_raw(in, &v, 4, path);
    return v;
}

std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
    std::uint64_t v;
    read_raw(in, &v, 8, path);
    return v;
}

void write_layer(std::ofstream& out, const Layer& l) {
    // Eigen stores column-major; weights go out in storage order.
    write_raw(out, l.weight.data(), sizeof(double) * l.weight.size());
    write_raw(out, l.bias.data(), sizeof(double) * l.bias.size());
}

void read_layer(std::ifstream& in, Layer& l, const std::string& path) {
    read_raw(in, l.weight.data(), sizeof(double) * l.weight.size(), path);
    read_raw(in, l.bias.data(), sizeof(double) * l.bias.size(), path);
}

}  // namespace

void save_network(const UpdateNetwork& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::io, "cannot open " + path + " for writing");
    }
    const NetworkArch& a = net.arch();
    write_raw(out, kNetMagic, sizeof(kNetMagic));
    write_u32(out, kNetVersion);
    write_u32(out, static_cast<std::uint32_t>(a.input_dim));
    write_u32(out, static_cast<std::uint32_t>(a.hidden_dim));
    write_u32(out, static_cast<std::uint32_t>(a.residual_blocks));
    write_u32(out, static_cast<std::uint32_t>(a.output_dim));
    write_u32(out, static_cast<std::uint32_t>(a.activation));
    write_u32(out, static_cast<std::uint32_t>(a.input_mode));
    write_u64(out, net.seed());
    write_u64(out, a.param_count());
    write_layer(out, net.input_layer());
    for (const Layer& b : net.block_layers()) {
        write_layer(out, b);
    }
    write_layer(out, net.output_layer());
    if (!out) {
        throw Error(ErrorCode::io, "failed writing " + path);
    }
}

UpdateNetwork load_network(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open " + path);
    }
    char magic[8];
    read_raw(in, magic, sizeof(magic), path);
    if (std::memcmp(magic, kNetMagic, sizeof(magic)) != 0) {
        throw Error(ErrorCode::data, path + ": not a network checkpoint");
    }
    if (read_u32(in, path) != kNetVersion) {
        throw Error(ErrorCode::data, path + ": unsupported checkpoint version");
    }
    NetworkArch a;
    a.input_dim = static_cast<int>(read_u32(in, path));
    a.hidden_dim = static_cast<int>(read_u32(in, path));
    a.residual_blocks = static_cast<int>(read_u32(in, path));
    a.output_dim = static_cast<int>(read_u32(in, path));
    const std::uint32_t act = read_u32(in, path);
    if (act > static_cast<std::uint32_t>(Activation::identity)) {
        throw Error(ErrorCode::data, path + ": unknown activation tag");
    }
    a.activation = static_cast<Activation>(act);
    const std::uint32_t mode = read_u32(in, path);
    if (mode > static_cast<std::uint32_t>(InputMode::target_only)) {
        throw Error(ErrorCode::data, path + ": unknown input mode tag");
    }
    a.input_mode = static_cast<InputMode>(mode);
    validate_arch(a);

    const std::uint64_t seed = read_u64(in, path);
    const std::uint64_t count = read_u64(in, path);
    if (count != a.param_count()) {
        throw Error(ErrorCode::data, path + ": parameter count does not match "
                                            "the architecture descriptor");
    }

    UpdateNetwork net(a, seed);
    read_layer(in, net.mutable_input_layer(), path);
    for (Layer& b : net.mutable_block_layers()) {
        read_layer(in, b, path);
    }
    read_layer(in, net.mutable_output_layer(), path);

    auto finite = [](const Layer& l) {
        return l.weight.allFinite() && l.bias.allFinite();
    };
    bool ok = finite(net.input_layer()) && finite(net.output_layer());
    for (const Layer& b : net.block_layers()) ok = ok && finite(b);
    if (!ok) {
        throw Error(ErrorCode::data, path + ": checkpoint contains non-finite weights");
    }
    return net;
}

}  // namespace bodyfit
