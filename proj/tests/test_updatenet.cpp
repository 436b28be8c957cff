#include <cstdio>

#include "doctest.h"

#include "bodyfit/error.hpp"
#include "bodyfit/sampler.hpp"
#include "bodyfit/updatenet.hpp"

using namespace bodyfit;

namespace {

MatX random_inputs(int rows, int cols, Rng& rng) {
    MatX m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform(-1.0, 1.0);
    }
    return m;
}

double weights_max_diff(const UpdateNetwork& a, const UpdateNetwork& b) {
    auto layer_diff = [](const Layer& x, const Layer& y) {
        return std::max((x.weight - y.weight).cwiseAbs().maxCoeff(),
                        (x.bias - y.bias).cwiseAbs().maxCoeff());
    };
    double d = layer_diff(a.input_layer(), b.input_layer());
    for (std::size_t i = 0; i < a.block_layers().size(); ++i) {
        d = std::max(d, layer_diff(a.block_layers()[i], b.block_layers()[i]));
    }
    return std::max(d, layer_diff(a.output_layer(), b.output_layer()));
}

// Flattened view over every weight for finite differencing.
std::vector<double*> weight_pointers(UpdateNetwork& net) {
    std::vector<double*> ptrs;
    auto add = [&ptrs](Layer& l) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) {
            ptrs.push_back(l.weight.data() + i);
        }
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) {
            ptrs.push_back(l.bias.data() + i);
        }
    };
    add(net.mutable_input_layer());
    for (Layer& b : net.mutable_block_layers()) add(b);
    add(net.mutable_output_layer());
    return ptrs;
}

std::vector<double> gradient_values(const NetGradients& g) {
    std::vector<double> vals;
    auto add = [&vals](const Layer& l) {
        vals.insert(vals.end(), l.weight.data(), l.weight.data() + l.weight.size());
        vals.insert(vals.end(), l.bias.data(), l.bias.data() + l.bias.size());
    };
    add(g.input);
    for (const Layer& b : g.blocks) add(b);
    add(g.output);
    return vals;
}

}  // namespace

TEST_CASE("architecture accounting matches the closed forms") {
    NetworkArch a;
    CHECK(a.input_dim == 242);
    CHECK(a.hidden_dim == 256);
    CHECK(a.residual_blocks == 2);
    CHECK(a.output_dim == 85);
    // 242*256+256 input, two 256x256(+256) blocks, 256*85+85 output.
    CHECK(a.param_count() == 215637);
    CHECK(a.forward_flops() == 429568);
    CHECK(a.forward_flops() < 1000000);
}

TEST_CASE("zero-initialized final layer makes the untrained net a no-op") {
    UpdateNetwork net(NetworkArch{}, 11);
    Rng rng(12);
    const MatX in = random_inputs(kNetInputDim, 5, rng);
    const MatX out = net.forward_batch(in);
    CHECK(out.rows() == kParamDim);
    CHECK(out.cols() == 5);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("initialization is deterministic in the seed") {
    UpdateNetwork a(NetworkArch{}, 99);
    UpdateNetwork b(NetworkArch{}, 99);
    UpdateNetwork c(NetworkArch{}, 100);
    CHECK(weights_max_diff(a, b) == 0.0);
    CHECK(weights_max_diff(a, c) > 0.0);

    Rng rng(13);
    const MatX in = random_inputs(kNetInputDim, 3, rng);
    CHECK((a.forward_batch(in) - b.forward_batch(in)).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("forward matches column-wise batched forward") {
    UpdateNetwork net(NetworkArch{}, 21);
    // Give the output layer some mass, otherwise everything is zero.
    NetGradients bump = net.zero_gradients();
    Rng rng(22);
    for (Eigen::Index i = 0; i < bump.output.weight.size(); ++i) {
        bump.output.weight.data()[i] = 0.01 * rng.normal();
    }
    net.apply_update(bump);

    const MatX in = random_inputs(kNetInputDim, 4, rng);
    const MatX batched = net.forward_batch(in);
    for (int c = 0; c < 4; ++c) {
        const VecX single = net.forward(in.col(c));
        // Not bitwise: Eigen picks different kernels for matrix-vector and
        // matrix-matrix products, so accumulation order differs.
        CHECK((batched.col(c) - single).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("tiny hand-computed network") {
    NetworkArch a;
    a.input_dim = 2;
    a.hidden_dim = 2;
    a.residual_blocks = 1;
    a.output_dim = 1;
    UpdateNetwork net(a, 0);

    // All constants are powers of two, so the arithmetic below is exact.
    net.mutable_input_layer().weight << 1.0, 0.0, 0.0, -1.0;
    net.mutable_input_layer().bias << 0.5, 0.25;
    net.mutable_block_layers()[0].weight << 0.0, 1.0, 1.0, 0.0;
    net.mutable_block_layers()[0].bias << 0.125, -0.5;
    net.mutable_output_layer().weight << 2.0, 4.0;
    net.mutable_output_layer().bias << -1.0;

    // x = (0.25, 0.5)
    // h0 = W1 x + b1            = (0.75, -0.25)
    // pre = W2 h0 + b2          = (-0.125, 0.25)
    // h1 = h0 + relu(pre)       = (0.75, 0)
    // out = 2*0.75 + 4*0 - 1    = 0.5
    VecX x(2);
    x << 0.25, 0.5;
    const VecX out = net.forward(x);
    CHECK(out.size() == 1);
    CHECK(out(0) == 0.5);
}

TEST_CASE("backward weight and input gradients match finite differences") {
    // Small hidden width keeps the weight count tractable for exhaustive FD.
    NetworkArch a;
    a.input_dim = kNetInputDim;
    a.hidden_dim = 8;
    a.residual_blocks = 2;
    a.output_dim = kParamDim;

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        UpdateNetwork net(a, seed);
        Rng rng(1000 + seed);
        // Random output layer too; the zero init would hide block gradients.
        NetGradients bump = net.zero_gradients();
        for (Eigen::Index i = 0; i < bump.output.weight.size(); ++i) {
            bump.output.weight.data()[i] = 0.3 * rng.normal();
        }
        net.apply_update(bump);

        const MatX in = random_inputs(a.input_dim, 3, rng);
        MatX g(a.output_dim, 3);
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            g.data()[i] = rng.normal();
        }

        // Scalar objective: sum over the batch of g .* output.
        auto loss = [&]() {
            return net.forward_batch(in).cwiseProduct(g).sum();
        };

        ForwardCache cache;
        net.forward_batch(in, &cache);
        NetGradients grads = net.zero_gradients();
        MatX input_grad;
        net.backward_batch(cache, g, grads, &input_grad);
        const std::vector<double> analytic = gradient_values(grads);

        const std::vector<double*> ptrs = weight_pointers(net);
        REQUIRE(ptrs.size() == analytic.size());
        const double h = 1e-6;
        double max_abs = 0.0;
        double max_fd = 0.0;
        for (std::size_t i = 0; i < ptrs.size(); ++i) {
            const double saved = *ptrs[i];
            *ptrs[i] = saved + h;
            const double hi = loss();
            *ptrs[i] = saved - h;
            const double lo = loss();
            *ptrs[i] = saved;
            const double fd = (hi - lo) / (2.0 * h);
            max_abs = std::max(max_abs, std::abs(analytic[i] - fd));
            max_fd = std::max(max_fd, std::abs(fd));
        }
        CHECK(max_abs / (1.0 + max_fd) < 1e-4);

        // Input gradient, column by column.
        MatX in_fd = in;
        double in_max_abs = 0.0;
        double in_max = 0.0;
        for (Eigen::Index i = 0; i < in.size(); ++i) {
            const double saved = in_fd.data()[i];
            in_fd.data()[i] = saved + h;
            const double hi = net.forward_batch(in_fd).cwiseProduct(g).sum();
            in_fd.data()[i] = saved - h;
            const double lo = net.forward_batch(in_fd).cwiseProduct(g).sum();
            in_fd.data()[i] = saved;
            const double fd = (hi - lo) / (2.0 * h);
            in_max_abs = std::max(in_max_abs, std::abs(input_grad.data()[i] - fd));
            in_max = std::max(in_max, std::abs(fd));
        }
        CHECK(in_max_abs / (1.0 + in_max) < 1e-4);
    }
}

TEST_CASE("identity activation output-layer gradient is an exact outer product") {
    NetworkArch a;
    a.input_dim = 6;
    a.hidden_dim = 4;
    a.residual_blocks = 1;
    a.output_dim = 3;
    a.activation = Activation::identity;
    UpdateNetwork net(a, 5);

    Rng rng(6);
    const MatX in = random_inputs(6, 2, rng);
    MatX g(3, 2);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();

    ForwardCache cache;
    net.forward_batch(in, &cache);
    NetGradients grads = net.zero_gradients();
    net.backward_batch(cache, g, grads);

    // With identity blocks the last hidden state is in the cache; the output
    // weight gradient of sum(g .* (W h + b)) is g h^T with no approximation.
    const MatX expected = g * cache.hidden.back().transpose();
    CHECK((grads.output.weight - expected).cwiseAbs().maxCoeff() == 0.0);
    CHECK((grads.output.bias - g.rowwise().sum()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identity activation makes the network affine") {
    NetworkArch a;
    a.activation = Activation::identity;
    UpdateNetwork net(a, 17);
    NetGradients bump = net.zero_gradients();
    Rng rng(18);
    for (Eigen::Index i = 0; i < bump.output.weight.size(); ++i) {
        bump.output.weight.data()[i] = 0.05 * rng.normal();
    }
    net.apply_update(bump);

    const VecX x = random_inputs(kNetInputDim, 1, rng).col(0);
    const VecX y = random_inputs(kNetInputDim, 1, rng).col(0);
    const VecX zero = VecX::Zero(kNetInputDim);
    // f(x + y) - f(x) - f(y) + f(0) vanishes for affine maps.
    const VecX resid =
        net.forward(x + y) - net.forward(x) - net.forward(y) + net.forward(zero);
    CHECK(resid.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("input ablation masks exactly the advertised channels") {
    Rng rng(23);
    NetInput in;
    for (int i = 0; i < kParamDim; ++i) {
        in.grad(i) = 1.0 + rng.uniform();
        in.theta(i) = 1.0 + rng.uniform();
    }
    for (int i = 0; i < kTargetDim; ++i) in.target(i) = 1.0 + rng.uniform();

    const NetInput full = ablated_input(in, InputMode::full);
    CHECK((full.concat() - in.concat()).cwiseAbs().maxCoeff() == 0.0);

    const NetInput ng = ablated_input(in, InputMode::no_grad);
    CHECK(ng.grad.cwiseAbs().maxCoeff() == 0.0);
    CHECK(ng.theta.cwiseAbs().minCoeff() > 0.0);
    CHECK(ng.target.cwiseAbs().minCoeff() > 0.0);

    const NetInput nt = ablated_input(in, InputMode::no_theta);
    CHECK(nt.grad.cwiseAbs().minCoeff() > 0.0);
    CHECK(nt.theta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(nt.target.cwiseAbs().minCoeff() > 0.0);

    const NetInput nx = ablated_input(in, InputMode::no_target);
    CHECK(nx.grad.cwiseAbs().minCoeff() > 0.0);
    CHECK(nx.theta.cwiseAbs().minCoeff() > 0.0);
    CHECK(nx.target.cwiseAbs().maxCoeff() == 0.0);

    const NetInput to = ablated_input(in, InputMode::target_only);
    CHECK(to.grad.cwiseAbs().maxCoeff() == 0.0);
    CHECK(to.theta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(to.target.cwiseAbs().minCoeff() > 0.0);
}

TEST_CASE("apply_input_mode agrees with per-instance ablation") {
    Rng rng(24);
    const InputMode modes[] = {InputMode::full, InputMode::no_grad,
                               InputMode::no_theta, InputMode::no_target,
                               InputMode::target_only};
    for (InputMode mode : modes) {
        MatX batch(kNetInputDim, 4);
        MatX expected(kNetInputDim, 4);
        for (int c = 0; c < 4; ++c) {
            NetInput in;
            for (int i = 0; i < kParamDim; ++i) {
                in.grad(i) = rng.normal();
                in.theta(i) = rng.normal();
            }
            for (int i = 0; i < kTargetDim; ++i) in.target(i) = rng.normal();
            batch.col(c) = in.concat();
            expected.col(c) = ablated_input(in, mode).concat();
        }
        apply_input_mode(batch, mode);
        CHECK((batch - expected).cwiseAbs().maxCoeff() == 0.0);
    }

    MatX wrong(kNetInputDim - 1, 2);
    CHECK_THROWS_AS(apply_input_mode(wrong, InputMode::no_grad), Error);
}

TEST_CASE("forward honors the architecture input mode") {
    NetworkArch a;
    a.input_mode = InputMode::no_grad;
    UpdateNetwork net(a, 31);
    NetGradients bump = net.zero_gradients();
    Rng rng(32);
    for (Eigen::Index i = 0; i < bump.output.weight.size(); ++i) {
        bump.output.weight.data()[i] = 0.02 * rng.normal();
    }
    net.apply_update(bump);

    const VecX x = random_inputs(kNetInputDim, 1, rng).col(0);
    VecX masked = x;
    masked.head(kParamDim).setZero();
    CHECK((net.forward(x) - net.forward(masked)).cwiseAbs().maxCoeff() == 0.0);

    // Changing only the masked channel never changes the output.
    VecX tweaked = x;
    tweaked.head(kParamDim).setConstant(123.0);
    CHECK((net.forward(x) - net.forward(tweaked)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("make_net_input bounds the gradient channel") {
    Keypoints2D target;
    target.points = Points2D::Zero(kJointCount, 2);
    target.visibility.assign(kJointCount, 1);

    Rng rng(41);
    VecX g(kParamDim);
    for (int i = 0; i < kParamDim; ++i) g(i) = 1e9 * rng.normal();
    const VecX theta = VecX::Zero(kParamDim);

    const NetInput in = make_net_input(g, theta, target);
    CHECK(in.grad.norm() < 1.0);
    const VecX expected = g / (1.0 + g.norm());
    CHECK((in.grad - expected).cwiseAbs().maxCoeff() <=
          1e-15 * expected.cwiseAbs().maxCoeff());

    const NetInput zero_in = make_net_input(VecX::Zero(kParamDim), theta, target);
    CHECK(zero_in.grad.cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(make_net_input(VecX::Zero(3), theta, target), Error);
}

TEST_CASE("checkpoint round-trip is bit-identical") {
    UpdateNetwork net(NetworkArch{}, 77);
    NetGradients bump = net.zero_gradients();
    Rng rng(78);
    for (Eigen::Index i = 0; i < bump.output.weight.size(); ++i) {
        bump.output.weight.data()[i] = 0.01 * rng.normal();
    }
    net.apply_update(bump);

    const std::string path = "test_net_roundtrip.bfnet";
    save_network(net, path);
    const UpdateNetwork loaded = load_network(path);
    std::remove(path.c_str());

    CHECK(loaded.arch() == net.arch());
    CHECK(loaded.seed() == net.seed());
    CHECK(weights_max_diff(net, loaded) == 0.0);

    const MatX in = random_inputs(kNetInputDim, 2, rng);
    CHECK((net.forward_batch(in) - loaded.forward_batch(in))
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("backward rejects a cache from older weights") {
    UpdateNetwork net(NetworkArch{}, 51);
    Rng rng(52);
    const MatX in = random_inputs(kNetInputDim, 2, rng);

    ForwardCache cache;
    net.forward_batch(in, &cache);
    net.apply_update(net.zero_gradients());  // revision bump, weights unchanged

    NetGradients grads = net.zero_gradients();
    const MatX g = MatX::Ones(kParamDim, 2);
    CHECK_THROWS_AS(net.backward_batch(cache, g, grads), Error);

    ForwardCache none;
    CHECK_THROWS_AS(net.backward_batch(none, g, grads), Error);
}

TEST_CASE("default-constructed network refuses to run") {
    UpdateNetwork net;
    CHECK_THROWS_AS(net.forward(VecX::Zero(kNetInputDim)), Error);
}
