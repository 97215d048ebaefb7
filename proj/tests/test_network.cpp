#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "msdc/errors.hpp"
#include "msdc/model.hpp"
#include "msdc/rng.hpp"

using namespace msdc;

namespace {

NetworkConfig tiny_config() {
    NetworkConfig cfg;
    cfg.input_len = 8;
    cfg.output_len = 2;
    cfg.num_states = 2;
    cfg.conv_channels = {2, 2};
    cfg.conv_kernels = {3, 2};
    cfg.fc_hidden = 4;
    return cfg;
}

NetworkConfig passthrough_config() {
    NetworkConfig cfg;
    cfg.input_len = 8;
    cfg.output_len = 2;
    cfg.num_states = 2;
    cfg.conv_channels = {1, 1, 1, 1, 1, 1};
    cfg.conv_kernels = {1, 1, 1, 1, 1, 1};
    cfg.fc_hidden = 2;
    return cfg;
}

// Parameters for the hand-computed fixture: conv1 doubles and shifts, conv
// 2..6 are identity, then two small hand-set FC layers.
Eigen::VectorXd passthrough_params(const NetworkConfig& cfg) {
    const ParamLayout layout = ParamLayout::build(cfg);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(layout.total);
    p(layout.conv[0].weight_offset) = 2.0;
    p(layout.conv[0].bias_offset) = 0.5;
    for (int l = 1; l < 6; ++l) p(layout.conv[l].weight_offset) = 1.0;
    // fc1 (2 x 8), row-major
    p(layout.fc1.weight_offset + 0) = 1.0;  // h0 <- f0
    p(layout.fc1.weight_offset + 7) = 1.0;  // h0 <- f7
    p(layout.fc1.weight_offset + 8 + 1) = 1.0;  // h1 <- f1
    p(layout.fc1.weight_offset + 8 + 6) = 1.0;  // h1 <- f6
    p(layout.fc1.bias_offset + 1) = -1.0;
    // fc2 (4 x 2), row-major
    const int w2 = layout.fc2.weight_offset;
    p(w2 + 0) = 1.0;
    p(w2 + 1) = 1.0;  // out0 = h0 + h1
    p(w2 + 2) = 1.0;
    p(w2 + 3) = -1.0;  // out1 = h0 - h1
    p(w2 + 5) = 2.0;   // out2 = 2 h1
    p(w2 + 6) = -1.0;  // out3 = -h0
    p(layout.fc2.bias_offset + 1) = 0.5;
    p(layout.fc2.bias_offset + 2) = -1.0;
    p(layout.fc2.bias_offset + 3) = 2.0;
    return p;
}

const Eigen::VectorXd kFixtureInput = [] {
    Eigen::VectorXd x(8);
    x << 0.1, -0.2, 0.3, -0.4, 0.5, -0.6, 0.7, -0.8;
    return x;
}();

}  // namespace

TEST_CASE("hand-computed forward pass through conv and FC arithmetic") {
    const NetworkConfig cfg = passthrough_config();
    DualCnnParams params;
    params.config = cfg;
    params.state_net = passthrough_params(cfg);
    params.value_net = passthrough_params(cfg);
    params.power_scale = 100.0;

    // conv stack: relu(2x + 0.5) per position, identity afterwards:
    // f = [0.7, 0.1, 1.1, 0, 1.5, 0, 1.9, 0]
    // fc1: h0 = f0 + f7 = 0.7, h1 = f1 + f6 - 1 = 1.0 (both positive)
    // fc2: out = [h0+h1, h0-h1+0.5, 2 h1-1, -h0+2] = [1.7, 0.2, 1.0, 1.3]
    const auto state = forward_state(params, kFixtureInput);
    CHECK(state.logits(0, 0) == doctest::Approx(1.7).epsilon(1e-12));
    CHECK(state.logits(0, 1) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(state.logits(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(state.logits(1, 1) == doctest::Approx(1.3).epsilon(1e-12));

    const double p00 = std::exp(1.7) / (std::exp(1.7) + std::exp(0.2));
    CHECK(state.probs(0, 0) == doctest::Approx(p00).epsilon(1e-12));
    CHECK(state.probs.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(state.probs.row(1).sum() == doctest::Approx(1.0).epsilon(1e-12));

    const auto powers = forward_power(params, kFixtureInput);
    CHECK(powers(0, 0) == doctest::Approx(100.0 * std::log1p(std::exp(1.7))).epsilon(1e-12));
    CHECK(powers(1, 1) == doctest::Approx(100.0 * std::log1p(std::exp(1.3))).epsilon(1e-12));
}

TEST_CASE("zero parameters: uniform state rows, softplus(0)*scale powers") {
    const NetworkConfig cfg = tiny_config();
    DualCnnParams params;
    params.config = cfg;
    params.state_net = Eigen::VectorXd::Zero(param_count(cfg));
    params.value_net = Eigen::VectorXd::Zero(param_count(cfg));
    params.power_scale = 1100.0;

    const auto state = forward_state(params, Eigen::VectorXd::Random(8));
    for (int t = 0; t < 2; ++t) {
        for (int s = 0; s < 2; ++s) CHECK(state.probs(t, s) == doctest::Approx(0.5));
    }
    const auto powers = forward_power(params, Eigen::VectorXd::Random(8));
    for (int t = 0; t < 2; ++t) {
        for (int s = 0; s < 2; ++s) {
            CHECK(powers(t, s) == doctest::Approx(1100.0 * std::log(2.0)));
            CHECK(powers(t, s) >= 0.0);
        }
    }
}

TEST_CASE("softmax rows sum to one for arbitrary finite logits") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd logits(5, 4);
        for (int r = 0; r < 5; ++r) {
            for (int c = 0; c < 4; ++c) logits(r, c) = rng.uniform(-100.0, 100.0);
        }
        const auto probs = softmax_rows(logits);
        for (int r = 0; r < 5; ++r) {
            CHECK(std::abs(probs.row(r).sum() - 1.0) <= 1e-6);
            for (int c = 0; c < 4; ++c) CHECK(probs(r, c) >= 0.0);
        }
    }
}

TEST_CASE("combine") {
    Eigen::MatrixXd probs(1, 3), powers(1, 3);
    probs << 0.2, 0.3, 0.5;
    powers << 0.0, 200.0, 1100.0;
    CHECK(combine(probs, powers)(0) == doctest::Approx(610.0));

    Eigen::MatrixXd onehot(1, 3), c(1, 3);
    onehot << 0, 0, 1;
    c << 5, 6, 7;
    CHECK(combine(onehot, c)(0) == doctest::Approx(7.0));

    Eigen::MatrixXd uniform(1, 2), c2(1, 2);
    uniform << 0.5, 0.5;
    c2 << 0.0, 100.0;
    CHECK(combine(uniform, c2)(0) == doctest::Approx(50.0));

    Eigen::MatrixXd wrong(2, 2);
    CHECK_THROWS_AS(combine(probs, wrong), DataError);
}

TEST_CASE("combine is bilinear in the raw matrices") {
    Rng rng(5);
    Eigen::MatrixXd p(4, 3), c(4, 3);
    for (int r = 0; r < 4; ++r) {
        for (int s = 0; s < 3; ++s) {
            p(r, s) = rng.uniform(-1.0, 1.0);
            c(r, s) = rng.uniform(-10.0, 10.0);
        }
    }
    const double alpha = 2.75;
    const Eigen::VectorXd scaled = combine(alpha * p, c);
    const Eigen::VectorXd base = combine(p, c);
    for (int r = 0; r < 4; ++r) CHECK(scaled(r) == doctest::Approx(alpha * base(r)).epsilon(1e-12));
}

TEST_CASE("decode_states breaks ties toward the lower index") {
    Eigen::MatrixXd probs(3, 2);
    probs << 0.9, 0.1, 0.5, 0.5, 0.1, 0.9;
    CHECK(decode_states(probs) == std::vector<int>{0, 0, 1});
    Eigen::MatrixXd two(2, 2);
    two << 0.1, 0.9, 0.6, 0.4;
    CHECK(decode_states(two) == std::vector<int>{1, 0});
}

TEST_CASE("loss_power") {
    Eigen::MatrixXd probs(2, 2), powers(2, 2);
    probs << 1, 0, 0, 1;
    powers << 5, 9, 9, 7;
    Eigen::VectorXd target(2);
    target << 5, 7;
    CHECK(loss_power(probs, powers, target) == doctest::Approx(0.0));

    // one-hot rows predicting y + 2 -> squared error 4 everywhere
    Eigen::MatrixXd powers2(2, 2);
    powers2 << 7, 0, 0, 9;
    CHECK(loss_power(probs, powers2, target) == doctest::Approx(4.0));

    Eigen::MatrixXd p3(2, 1), c3(2, 1);
    p3 << 1, 1;
    c3 << 13, 16;
    Eigen::VectorXd t3(2);
    t3 << 10, 20;
    CHECK(loss_power(p3, c3, t3) == doctest::Approx(12.5));
    CHECK(loss_power(p3, c3, t3) >= 0.0);
}

TEST_CASE("loss_state_ce") {
    Eigen::MatrixXd uniform = Eigen::MatrixXd::Zero(3, 4);
    CHECK(loss_state_ce(uniform, {0, 1, 3}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Eigen::MatrixXd logits(1, 2);
    logits << 1.0, 0.0;
    CHECK(loss_state_ce(logits, {1}) == doctest::Approx(std::log1p(std::exp(1.0))).epsilon(1e-9));
    CHECK(loss_state_ce(logits, {1}) == doctest::Approx(1.3133).epsilon(1e-4));

    Eigen::MatrixXd margin(1, 2);
    margin << 60.0, 0.0;
    CHECK(loss_state_ce(margin, {0}) == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(loss_state_ce(logits, {2}), DataError);
}

TEST_CASE("loss_msdc sums its two parts") {
    Rng rng(7);
    Eigen::MatrixXd logits(3, 2), powers(3, 2);
    Eigen::VectorXd target(3);
    for (int t = 0; t < 3; ++t) {
        target(t) = rng.uniform(0.0, 50.0);
        for (int s = 0; s < 2; ++s) {
            logits(t, s) = rng.uniform(-1.0, 1.0);
            powers(t, s) = rng.uniform(0.0, 50.0);
        }
    }
    const std::vector<int> labels{0, 1, 0};
    const double expected =
        loss_state_ce(logits, labels) + loss_power(softmax_rows(logits), powers, target);
    CHECK(loss_msdc(logits, powers, target, labels) == doctest::Approx(expected).epsilon(1e-12));
}

namespace {

struct FdProblem {
    DualCnnParams params;
    CrfParams crf;
    Eigen::MatrixXd inputs, target_power;
    Eigen::MatrixXi target_states;
};

FdProblem make_fd_problem(std::uint64_t seed) {
    FdProblem p;
    const NetworkConfig cfg = tiny_config();
    Rng rng(seed);
    p.params = init_dual_params(cfg, 40.0, rng);
    p.crf = CrfParams::zeros(cfg.num_states);
    for (int a = 0; a < cfg.num_states; ++a) {
        p.crf.start(a) = rng.uniform(-0.5, 0.5);
        p.crf.stop(a) = rng.uniform(-0.5, 0.5);
        for (int b = 0; b < cfg.num_states; ++b) p.crf.transition(a, b) = rng.uniform(-0.5, 0.5);
    }
    const int batch = 3;
    p.inputs.resize(cfg.input_len, batch);
    p.target_power.resize(cfg.output_len, batch);
    p.target_states.resize(cfg.output_len, batch);
    for (int b = 0; b < batch; ++b) {
        for (int i = 0; i < cfg.input_len; ++i) p.inputs(i, b) = rng.normal(0.0, 1.0);
        for (int t = 0; t < cfg.output_len; ++t) {
            p.target_power(t, b) = rng.uniform(0.0, 60.0);
            p.target_states(t, b) = static_cast<int>(rng.uniform_int(cfg.num_states));
        }
    }
    return p;
}

double eval_loss(FdProblem& p, LossKind kind) {
    DualWorkspace ws;
    return dual_loss(p.params, &p.crf, kind, CrfEmissionKind::log_prob, p.inputs, p.target_power,
                     p.target_states, 0, static_cast<int>(p.inputs.cols()),
                     static_cast<int>(p.inputs.cols()), ws, nullptr)
        .total;
}

double max_rel_error(FdProblem& p, LossKind kind) {
    DualWorkspace ws;
    ModelGradients grads;
    grads.set_zero(p.params, p.params.config.num_states);
    dual_loss(p.params, &p.crf, kind, CrfEmissionKind::log_prob, p.inputs, p.target_power,
              p.target_states, 0, static_cast<int>(p.inputs.cols()),
              static_cast<int>(p.inputs.cols()), ws, &grads);

    const double h = 1e-4;
    double worst = 0.0;
    auto check = [&](double analytic, double* slot) {
        const double saved = *slot;
        *slot = saved + h;
        const double up = eval_loss(p, kind);
        *slot = saved - h;
        const double down = eval_loss(p, kind);
        *slot = saved;
        const double fd = (up - down) / (2 * h);
        const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-3});
        worst = std::max(worst, std::abs(analytic - fd) / denom);
    };
    for (Eigen::Index i = 0; i < p.params.state_net.size(); ++i) {
        check(grads.state_net(i), &p.params.state_net(i));
    }
    for (Eigen::Index i = 0; i < p.params.value_net.size(); ++i) {
        check(grads.value_net(i), &p.params.value_net(i));
    }
    if (kind == LossKind::msdc_crf) {
        const int m = p.params.config.num_states;
        for (int a = 0; a < m; ++a) {
            check(grads.crf_start(a), &p.crf.start(a));
            check(grads.crf_stop(a), &p.crf.stop(a));
            for (int b = 0; b < m; ++b) check(grads.crf_transition(a, b), &p.crf.transition(a, b));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences (msdc)") {
    FdProblem p = make_fd_problem(101);
    CHECK(max_rel_error(p, LossKind::msdc) < 1e-4);
}

TEST_CASE("analytic gradients match central finite differences (msdc-crf)") {
    FdProblem p = make_fd_problem(202);
    CHECK(max_rel_error(p, LossKind::msdc_crf) < 1e-4);
}

TEST_CASE("gradient scales linearly with the batch denominator") {
    FdProblem p = make_fd_problem(303);
    DualWorkspace ws;
    ModelGradients g1, g2;
    g1.set_zero(p.params, 2);
    g2.set_zero(p.params, 2);
    dual_loss(p.params, &p.crf, LossKind::msdc, CrfEmissionKind::log_prob, p.inputs,
              p.target_power, p.target_states, 0, 3, 3, ws, &g1);
    dual_loss(p.params, &p.crf, LossKind::msdc, CrfEmissionKind::log_prob, p.inputs,
              p.target_power, p.target_states, 0, 3, 6, ws, &g2);
    for (Eigen::Index i = 0; i < g1.state_net.size(); ++i) {
        CHECK(g1.state_net(i) == doctest::Approx(2.0 * g2.state_net(i)).epsilon(1e-10));
    }
}

TEST_CASE("constructed stationary point has zero gradient") {
    const NetworkConfig cfg = tiny_config();
    DualCnnParams params;
    params.config = cfg;
    params.state_net = Eigen::VectorXd::Zero(param_count(cfg));
    params.value_net = Eigen::VectorXd::Zero(param_count(cfg));
    params.power_scale = 80.0;

    // Perfect power prediction (target = scale * softplus(0)) and balanced
    // labels cancel both loss terms' pulls.
    Eigen::MatrixXd inputs = Eigen::MatrixXd::Random(cfg.input_len, 2);
    Eigen::MatrixXd target_power =
        Eigen::MatrixXd::Constant(cfg.output_len, 2, 80.0 * std::log(2.0));
    Eigen::MatrixXi target_states(cfg.output_len, 2);
    target_states.col(0).setZero();
    target_states.col(1).setOnes();

    DualWorkspace ws;
    ModelGradients grads;
    grads.set_zero(params, cfg.num_states);
    dual_loss(params, nullptr, LossKind::msdc, CrfEmissionKind::log_prob, inputs, target_power,
              target_states, 0, 2, 2, ws, &grads);
    CHECK(grads.state_net.cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(grads.value_net.cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("chunked dual_loss equals the single-call batch loss and gradient") {
    FdProblem p = make_fd_problem(404);
    DualWorkspace ws;
    ModelGradients whole, part1, part2;
    whole.set_zero(p.params, 2);
    part1.set_zero(p.params, 2);
    part2.set_zero(p.params, 2);
    const BatchLoss full = dual_loss(p.params, &p.crf, LossKind::msdc_crf,
                                     CrfEmissionKind::log_prob, p.inputs, p.target_power,
                                     p.target_states, 0, 3, 3, ws, &whole);
    const BatchLoss a = dual_loss(p.params, &p.crf, LossKind::msdc_crf, CrfEmissionKind::log_prob,
                                  p.inputs, p.target_power, p.target_states, 0, 2, 3, ws, &part1);
    const BatchLoss b = dual_loss(p.params, &p.crf, LossKind::msdc_crf, CrfEmissionKind::log_prob,
                                  p.inputs, p.target_power, p.target_states, 2, 3, 3, ws, &part2);
    CHECK(full.total == doctest::Approx(a.total + b.total).epsilon(1e-12));
    part1.add_scaled(part2, 1.0);
    for (Eigen::Index i = 0; i < whole.state_net.size(); ++i) {
        CHECK(whole.state_net(i) == doctest::Approx(part1.state_net(i)).epsilon(1e-9));
    }
}

TEST_CASE("forward_state rejects wrong input lengths") {
    const NetworkConfig cfg = tiny_config();
    Rng rng(1);
    const DualCnnParams params = init_dual_params(cfg, 10.0, rng);
    CHECK_THROWS_AS(forward_state(params, Eigen::VectorXd::Zero(5)), DataError);
    CHECK_THROWS_AS(forward_power(params, Eigen::VectorXd::Zero(11)), DataError);
}
