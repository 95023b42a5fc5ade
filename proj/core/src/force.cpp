#include "evetac/force.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "evetac/errors.hpp"

namespace evetac {

namespace {

// fixed input scaling for the network; displacements are O(10) px
constexpr double kDispScale = 0.1;

void sum_disp(std::span<const double> disp, double& sx, double& sy)
{
    sx = 0.0;
    sy = 0.0;
    for (std::size_t i = 0; i + 1 < disp.size(); i += 2) {
        sx += disp[i];
        sy += disp[i + 1];
    }
}

} // namespace

void LinearForceModel::predict(std::span<const double> disp, double& fx, double& fy) const
{
    double sx, sy;
    sum_disp(disp, sx, sy);
    fx = coef[0][0] * sx + coef[0][1] * sy + bias[0];
    fy = coef[1][0] * sx + coef[1][1] * sy + bias[1];
}

LinearForceModel fit_linear(std::span<const ForceTrajectory> train)
{
    std::size_t n = 0;
    for (const ForceTrajectory& t : train)
        n += t.samples.size();
    if (n < 2)
        throw FitError("fit_linear: need at least 2 samples");

    Eigen::MatrixXd a(n, 3);
    Eigen::MatrixXd f(n, 2);
    std::size_t row = 0;
    for (const ForceTrajectory& t : train) {
        for (const ForceSample& s : t.samples) {
            double sx, sy;
            sum_disp(s.disp, sx, sy);
            a(row, 0) = sx;
            a(row, 1) = sy;
            a(row, 2) = 1.0;
            f(row, 0) = s.fx;
            f(row, 1) = s.fy;
            ++row;
        }
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < 3)
        throw FitError("fit_linear: rank-deficient design matrix");
    const Eigen::MatrixXd x = qr.solve(f); // 3x2

    LinearForceModel m;
    m.coef[0][0] = x(0, 0);
    m.coef[0][1] = x(1, 0);
    m.bias[0] = x(2, 0);
    m.coef[1][0] = x(0, 1);
    m.coef[1][1] = x(1, 1);
    m.bias[1] = x(2, 1);
    return m;
}

ForceEval evaluate(const LinearForceModel& model, const ForceTrajectory& eval)
{
    ForceEval out;
    if (eval.samples.empty())
        return out;
    for (const ForceSample& s : eval.samples) {
        double fx, fy;
        model.predict(s.disp, fx, fy);
        out.predictions.push_back({fx, fy});
        out.mae_x += std::abs(fx - s.fx);
        out.mae_y += std::abs(fy - s.fy);
    }
    out.mae_x /= static_cast<double>(eval.samples.size());
    out.mae_y /= static_cast<double>(eval.samples.size());
    return out;
}

nn::Network build_force_network(int dots)
{
    nn::Network net;
    net.spec.input = {1, 1, 2 * dots};
    net.spec.layers = {
        nn::LayerSpec::dense(2 * dots, 128), nn::LayerSpec::relu(), nn::LayerSpec::dropout(0.25),
        nn::LayerSpec::dense(128, 128),      nn::LayerSpec::relu(), nn::LayerSpec::dropout(0.25),
        nn::LayerSpec::dense(128, 2),
    };
    net.spec.finalize();
    return net;
}

namespace {

double test_loss(const nn::Network& net, nn::Workspace& ws, const ForceTrajectory& test,
                 std::vector<double>& scaled)
{
    double acc = 0.0;
    for (const ForceSample& s : test.samples) {
        scaled.assign(s.disp.begin(), s.disp.end());
        for (double& v : scaled)
            v *= kDispScale;
        const auto pred = nn::forward(net, scaled, ws, false);
        const double target[2] = {s.fx, s.fy};
        acc += nn::loss_value(nn::Loss::MSE, pred, target);
    }
    return test.samples.empty() ? 0.0 : acc / static_cast<double>(test.samples.size());
}

} // namespace

ForceNetResult fit_network(std::span<const ForceTrajectory> train, int epochs,
                           std::uint64_t seed, double lr)
{
    if (train.size() < 2)
        throw FitError("fit_network: need at least 2 trajectories for the train/test split");
    for (const ForceTrajectory& t : train)
        if (t.samples.empty())
            throw FitError("fit_network: empty trajectory");

    const int dots = static_cast<int>(train[0].samples[0].disp.size() / 2);

    // hold out one trajectory as the test set
    std::mt19937_64 rng(seed * 52387 + 11);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const ForceTrajectory& test = train[order.back()];
    std::vector<const ForceSample*> pool;
    for (std::size_t i = 0; i + 1 < order.size(); ++i)
        for (const ForceSample& s : train[order[i]].samples)
            pool.push_back(&s);
    if (pool.empty())
        throw FitError("fit_network: no training samples");

    ForceNetResult res;
    res.net = build_force_network(dots);
    res.net.init_params(seed);
    nn::Workspace ws(res.net.spec);
    std::vector<double> scaled;
    std::vector<double> best_params = res.net.params;
    double best = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    constexpr std::size_t kBatch = 32;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t b = 0; b < idx.size(); b += kBatch) {
            const std::size_t hi = std::min(idx.size(), b + kBatch);
            ws.zero_grad();
            for (std::size_t k = b; k < hi; ++k) {
                const ForceSample& s = *pool[idx[k]];
                scaled.assign(s.disp.begin(), s.disp.end());
                for (double& v : scaled)
                    v *= kDispScale;
                nn::forward(res.net, scaled, ws, true, &rng);
                const double target[2] = {s.fx, s.fy};
                nn::backward(res.net, nn::Loss::MSE, target, ws);
            }
            const double inv = 1.0 / static_cast<double>(hi - b);
            for (double& g : ws.grad)
                g *= inv;
            nn::sgd_step(res.net, ws.grad, lr);
        }
        const double tl = test_loss(res.net, ws, test, scaled);
        if (!std::isfinite(tl))
            throw TrainingError("fit_network: test loss diverged");
        if (tl < best) {
            best = tl;
            best_params = res.net.params;
            res.best_epoch = epoch + 1;
        }
    }
    res.net.params = best_params;
    res.best_test_loss = best;
    return res;
}

ForceEval evaluate(const nn::Network& net, const ForceTrajectory& eval)
{
    ForceEval out;
    if (eval.samples.empty())
        return out;
    nn::Workspace ws(net.spec);
    std::vector<double> scaled;
    for (const ForceSample& s : eval.samples) {
        scaled.assign(s.disp.begin(), s.disp.end());
        for (double& v : scaled)
            v *= kDispScale;
        const auto pred = nn::forward(net, scaled, ws, false);
        out.predictions.push_back({pred[0], pred[1]});
        out.mae_x += std::abs(pred[0] - s.fx);
        out.mae_y += std::abs(pred[1] - s.fy);
    }
    out.mae_x /= static_cast<double>(eval.samples.size());
    out.mae_y /= static_cast<double>(eval.samples.size());
    return out;
}

void write_force_csv(const std::string& path, std::span<const ForceTrajectory> trajectories)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw InvalidInput("cannot open for writing: " + path);
    out << "traj,fx,fy,disp...\n";
    out.precision(10);
    for (std::size_t t = 0; t < trajectories.size(); ++t) {
        for (const ForceSample& s : trajectories[t].samples) {
            out << t << ',' << s.fx << ',' << s.fy;
            for (double d : s.disp)
                out << ',' << d;
            out << '\n';
        }
    }
}

std::vector<ForceTrajectory> read_force_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot open: " + path);
    std::vector<ForceTrajectory> out;
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream row(line);
        std::string cell;
        ForceSample s;
        std::size_t traj = 0;
        int col = 0;
        while (std::getline(row, cell, ',')) {
            if (col == 0)
                traj = static_cast<std::size_t>(std::stoull(cell));
            else if (col == 1)
                s.fx = std::stod(cell);
            else if (col == 2)
                s.fy = std::stod(cell);
            else
                s.disp.push_back(std::stod(cell));
            ++col;
        }
        if (col < 3)
            throw InvalidInput("force csv: malformed row");
        if (out.size() <= traj)
            out.resize(traj + 1);
        out[traj].samples.push_back(std::move(s));
    }
    return out;
}

void save_linear_model(const std::string& path, const LinearForceModel& m)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw InvalidInput("cannot open for writing: " + path);
    out.precision(17);
    out << "linear\n"
        << m.coef[0][0] << ' ' << m.coef[0][1] << ' ' << m.bias[0] << '\n'
        << m.coef[1][0] << ' ' << m.coef[1][1] << ' ' << m.bias[1] << '\n';
}

LinearForceModel load_linear_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot open: " + path);
    std::string kind;
    in >> kind;
    if (kind != "linear")
        throw DecodeError("force model file: expected 'linear' header");
    LinearForceModel m;
    in >> m.coef[0][0] >> m.coef[0][1] >> m.bias[0] >> m.coef[1][0] >> m.coef[1][1] >> m.bias[1];
    if (!in)
        throw DecodeError("force model file: truncated");
    return m;
}

} // namespace evetac
