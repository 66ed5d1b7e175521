#include "bp/learner/maddpg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "bp/errors.hpp"

namespace bp::learner {

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) {
        throw ShapeMismatch("ReplayBuffer: capacity must be positive");
    }
    data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, std::mt19937_64& rng) const {
    if (data_.empty()) {
        throw ShapeMismatch("ReplayBuffer: sampling from an empty buffer");
    }
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) {
        i = pick(rng);
    }
    return idx;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch, std::mt19937_64& rng) const {
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t i : sample_indices(batch, rng)) {
        out.push_back(data_[i]);
    }
    return out;
}

namespace {

constexpr char kReplayMagic[8] = {'B', 'P', 'R', 'E', 'P', 'L', 'Y', '1'};

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw CheckpointError("replay buffer file is truncated");
    }
    return v;
}

void put_vectors(std::ostream& os, const std::vector<VectorXd>& vs) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(vs.size()));
    for (const VectorXd& v : vs) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(v.size()));
        os.write(reinterpret_cast<const char*>(v.data()),
                 static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(v.size())));
    }
}

std::vector<VectorXd> get_vectors(std::istream& is) {
    const auto n = get<std::uint32_t>(is);
    if (n > 1024) {
        throw CheckpointError("replay buffer file is corrupt (agent count)");
    }
    std::vector<VectorXd> vs(n);
    for (VectorXd& v : vs) {
        const auto len = get<std::uint32_t>(is);
        if (len > 1 << 20) {
            throw CheckpointError("replay buffer file is corrupt (vector length)");
        }
        v.resize(len);
        if (!is.read(reinterpret_cast<char*>(v.data()),
                     static_cast<std::streamsize>(sizeof(double) * len))) {
            throw CheckpointError("replay buffer file is truncated");
        }
    }
    return vs;
}

}  // namespace

void ReplayBuffer::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot write " + path.string());
    }
    os.write(kReplayMagic, sizeof(kReplayMagic));
    put<std::uint64_t>(os, capacity_);
    put<std::uint64_t>(os, next_);
    put<std::uint64_t>(os, data_.size());
    for (const Transition& t : data_) {
        put_vectors(os, t.obs);
        put_vectors(os, t.actions);
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rewards.size()));
        for (double r : t.rewards) put<double>(os, r);
        put_vectors(os, t.next_obs);
        put<std::uint8_t>(os, t.done ? 1 : 0);
    }
}

ReplayBuffer ReplayBuffer::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw CheckpointError("cannot read " + path.string());
    }
    char magic[sizeof(kReplayMagic)];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kReplayMagic, sizeof(magic)) != 0) {
        throw CheckpointError("replay buffer file has a bad header");
    }
    const auto capacity = get<std::uint64_t>(is);
    const auto next = get<std::uint64_t>(is);
    const auto count = get<std::uint64_t>(is);
    if (capacity == 0 || count > capacity || next >= capacity) {
        throw CheckpointError("replay buffer file is corrupt (sizes)");
    }
    ReplayBuffer buf(capacity);
    buf.next_ = next;
    buf.data_.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        Transition t;
        t.obs = get_vectors(is);
        t.actions = get_vectors(is);
        const auto nr = get<std::uint32_t>(is);
        if (nr > 1024) {
            throw CheckpointError("replay buffer file is corrupt (reward count)");
        }
        t.rewards.resize(nr);
        for (double& r : t.rewards) r = get<double>(is);
        t.next_obs = get_vectors(is);
        t.done = get<std::uint8_t>(is) != 0;
        buf.data_.push_back(std::move(t));
    }
    return buf;
}

// ---------------------------------------------------------------------------
// Networks

std::vector<AgentNets> make_agent_nets(const NetShapes& shapes, const VectorXd& action_scale,
                                       const MaddpgHyper& hyper, std::mt19937_64& rng) {
    std::vector<AgentNets> nets;
    const int critic_in = shapes.agents * (shapes.obs_dim + shapes.act_dim);
    for (int i = 0; i < shapes.agents; ++i) {
        std::vector<int> aw{shapes.obs_dim};
        aw.insert(aw.end(), shapes.actor_hidden.begin(), shapes.actor_hidden.end());
        aw.push_back(shapes.act_dim);
        std::vector<int> cw{critic_in};
        cw.insert(cw.end(), shapes.critic_hidden.begin(), shapes.critic_hidden.end());
        cw.push_back(1);

        AgentNets a;
        a.actor = policy::make_dense_net(aw, policy::Head::Tanh, action_scale, rng);
        a.critic = policy::make_dense_net(cw, policy::Head::Linear, VectorXd(), rng);
        if (hyper.spectral_norm) {
            a.actor = policy::normalize_actor(a.actor, {hyper.lipschitz}, &a.spectral,
                                              {1000, 1e-12, hyper.power.seed});
        }
        a.actor_target = a.actor;
        a.critic_target = a.critic;
        a.actor_opt = Adam(a.actor, {hyper.actor_lr, 0.9, 0.999, 1e-8, 0.0});
        a.critic_opt = Adam(a.critic, {hyper.critic_lr, 0.9, 0.999, 1e-8, 10.0});
        nets.push_back(std::move(a));
    }
    return nets;
}

void soft_update(policy::DenseNet& target, const policy::DenseNet& online, double tau) {
    if (target.layers.size() != online.layers.size()) {
        throw ShapeMismatch("soft_update: layer count mismatch");
    }
    for (std::size_t k = 0; k < target.layers.size(); ++k) {
        auto& t = target.layers[k];
        const auto& o = online.layers[k];
        if (t.W.rows() != o.W.rows() || t.W.cols() != o.W.cols()) {
            throw ShapeMismatch("soft_update: layer shape mismatch");
        }
        if (tau == 1.0) {
            t.W = o.W;
            t.b = o.b;
        } else {
            t.W = tau * o.W + (1.0 - tau) * t.W;
            t.b = tau * o.b + (1.0 - tau) * t.b;
        }
    }
    target.lipschitz = online.lipschitz;
}

VectorXd normalized_action(const policy::DenseNet& actor, const VectorXd& obs) {
    VectorXd a = policy::forward(actor, obs);
    if (actor.action_scale.size() == a.size()) {
        a = a.cwiseQuotient(actor.action_scale);
    }
    return a;
}

VectorXd explore(const VectorXd& action, double noise_scale, std::mt19937_64& rng, double lo,
                 double hi) {
    if (noise_scale < 0.0) {
        throw ShapeMismatch("explore: noise_scale must be non-negative");
    }
    VectorXd out = action;
    if (noise_scale > 0.0) {
        std::normal_distribution<double> n01(0.0, 1.0);
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            out(i) += noise_scale * n01(rng);
        }
    }
    return out.cwiseMax(lo).cwiseMin(hi);
}

namespace {

MatrixXd normalize_batch(const policy::DenseNet& actor, MatrixXd out) {
    if (actor.action_scale.size() == out.rows()) {
        out = actor.action_scale.cwiseInverse().asDiagonal() * out;
    }
    return out;
}

}  // namespace

UpdateStats maddpg_update(std::vector<AgentNets>& nets, std::span<const Transition> batch,
                          const MaddpgHyper& hyper) {
    if (batch.empty()) {
        throw ShapeMismatch("maddpg_update: empty batch");
    }
    const std::size_t n = nets.size();
    const auto B = static_cast<Eigen::Index>(batch.size());
    const auto obs_dim = batch.front().obs.front().size();
    const auto act_dim = batch.front().actions.front().size();
    const Eigen::Index obs_rows = static_cast<Eigen::Index>(n) * obs_dim;
    const Eigen::Index rows = obs_rows + static_cast<Eigen::Index>(n) * act_dim;

    MatrixXd X(rows, B);       // joint obs + joint actions
    MatrixXd Xnext(rows, B);   // joint next obs + target-policy actions
    MatrixXd R(n, B);
    VectorXd not_done(B);
    for (Eigen::Index b = 0; b < B; ++b) {
        const Transition& t = batch[static_cast<std::size_t>(b)];
        if (t.obs.size() != n || t.actions.size() != n || t.rewards.size() != n ||
            t.next_obs.size() != n) {
            throw ShapeMismatch("maddpg_update: transition does not match team size");
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            X.block(ii * obs_dim, b, obs_dim, 1) = t.obs[i];
            X.block(obs_rows + ii * act_dim, b, act_dim, 1) = t.actions[i];
            Xnext.block(ii * obs_dim, b, obs_dim, 1) = t.next_obs[i];
            R(ii, b) = t.rewards[i];
        }
        not_done(b) = t.done ? 0.0 : 1.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const MatrixXd next_o = Xnext.block(ii * obs_dim, 0, obs_dim, B);
        Xnext.block(obs_rows + ii * act_dim, 0, act_dim, B) =
            normalize_batch(nets[i].actor_target, policy::forward_batch(nets[i].actor_target, next_o));
    }

    UpdateStats stats;
    for (std::size_t i = 0; i < n; ++i) {
        AgentNets& a = nets[i];
        const auto ii = static_cast<Eigen::Index>(i);

        // Critic regression onto the TD target.
        const MatrixXd q_next = policy::forward_batch(a.critic_target, Xnext);
        const VectorXd y = R.row(ii).transpose() +
                           hyper.gamma * not_done.cwiseProduct(q_next.row(0).transpose());
        const ForwardCache cc = forward_cached(a.critic, X);
        const VectorXd err = cc.output.row(0).transpose() - y;
        const double loss = err.squaredNorm() / static_cast<double>(B);
        if (!std::isfinite(loss)) {
            throw NumericalFailure("maddpg_update: non-finite critic loss");
        }
        stats.critic_loss.push_back(loss);
        const MatrixXd up = (2.0 / static_cast<double>(B)) * err.transpose();
        a.critic_opt.step(a.critic, backprop_batch(a.critic, cc, up).grad);

        if (!hyper.update_actors) {
            continue;
        }

        // Actor ascent through its own action slot.
        const MatrixXd o_i = X.block(ii * obs_dim, 0, obs_dim, B);
        const ForwardCache ac = forward_cached(a.actor, o_i);
        MatrixXd Xa = X;
        Xa.block(obs_rows + ii * act_dim, 0, act_dim, B) = normalize_batch(a.actor, ac.output);
        const ForwardCache qc = forward_cached(a.critic, Xa);
        stats.actor_q.push_back(qc.output.mean());
        const MatrixXd q_up = MatrixXd::Constant(1, B, -1.0 / static_cast<double>(B));
        const MatrixXd dX = backprop_batch(a.critic, qc, q_up).input_grad;
        const MatrixXd da_norm = dX.block(obs_rows + ii * act_dim, 0, act_dim, B);
        const MatrixXd da = normalize_batch(a.actor, da_norm);
        a.actor_opt.step(a.actor, backprop_batch(a.actor, ac, da).grad);
    }

    for (AgentNets& a : nets) {
        if (hyper.update_actors && hyper.spectral_norm) {
            a.actor = policy::normalize_actor(a.actor, {hyper.lipschitz}, &a.spectral, hyper.power);
        }
        soft_update(a.actor_target, a.actor, hyper.tau);
        soft_update(a.critic_target, a.critic, hyper.tau);
    }
    return stats;
}

}  // namespace bp::learner
