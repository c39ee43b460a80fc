#include "efs/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "efs/errors.hpp"
#include "efs/verify.hpp"

namespace efs {

namespace {

// Row i of x(alpha) and the row's log-sum-exp of (v_i - alpha) / delta.
double softmax_row(const Eigen::MatrixXd& v, const Eigen::VectorXd& alpha, double delta, Eigen::Index i,
                   Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out)
{
    const Eigen::Index m = v.cols();
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
        out(j) = (v(i, j) - alpha(j)) / delta;
        top = std::max(top, out(j));
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
        out(j) = std::exp(out(j) - top);
        total += out(j);
    }
    out /= total;
    return top + std::log(total);
}

struct DualEval {
    double value = 0.0;
    Eigen::MatrixXd x;
    Eigen::VectorXd grad;
};

DualEval evaluate_dual(const Eigen::MatrixXd& v, const Eigen::VectorXd& alpha, double delta, double k)
{
    DualEval e;
    e.x.resize(v.rows(), v.cols());
    e.value = k * alpha.sum();
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        e.value += delta * softmax_row(v, alpha, delta, i, e.x.row(i));
    e.grad = Eigen::VectorXd::Constant(v.cols(), k) - e.x.colwise().sum().transpose();
    return e;
}

double primal_value(const Eigen::MatrixXd& v, const Eigen::MatrixXd& x, double delta)
{
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double p = x(i, j);
            total += p * v(i, j);
            if (p > 0.0)
                total -= delta * p * std::log(p);
        }
    return total;
}

} // namespace

DualSolution solve_offline(const Eigen::MatrixXd& values, double delta, std::size_t k, const SolverOptions& opts)
{
    if (!(delta > 0.0) || !std::isfinite(delta))
        throw InvalidParameter("regulariser delta must be positive");
    if (k == 0 || values.cols() == 0 || static_cast<std::size_t>(values.rows()) != k * values.cols())
        throw InvalidParameter("value matrix must be km x m with k >= 1");
    if (!values.allFinite())
        throw InvalidParameter("values must be finite");

    const Eigen::Index m = values.cols();
    const double kd = static_cast<double>(k);
    DualSolution sol;
    sol.alpha = Eigen::VectorXd::Zero(m);

    if (m > 1) {
        DualEval cur = evaluate_dual(values, sol.alpha, delta, kd);
        const double stop = opts.tolerance * std::max(1.0, kd);
        for (;;) {
            if (cur.grad.cwiseAbs().maxCoeff() <= stop)
                break;
            if (sol.iterations >= opts.max_iterations)
                throw SolverFailure("offline matching solver did not converge in " +
                                    std::to_string(opts.max_iterations) + " iterations");
            ++sol.iterations;

            // The dual is invariant along the all-ones direction, where the
            // Hessian vanishes; adding a multiple of 11^T keeps the system
            // definite and leaves the Newton direction orthogonal to 1.
            Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(m, m);
            for (Eigen::Index i = 0; i < values.rows(); ++i) {
                const Eigen::VectorXd row = cur.x.row(i).transpose();
                hess.diagonal() += row;
                hess.noalias() -= row * row.transpose();
            }
            hess /= delta;
            hess.array() += hess.trace() / static_cast<double>(m * m) + 1e-300;
            Eigen::VectorXd dir = hess.ldlt().solve(-cur.grad);
            double slope = cur.grad.dot(dir);
            if (!dir.allFinite() || !(slope < 0.0)) {
                dir = -cur.grad;
                slope = -cur.grad.squaredNorm();
            }

            double t = 1.0;
            bool moved = false;
            for (int back = 0; back < 60; ++back, t *= 0.5) {
                const Eigen::VectorXd trial = sol.alpha + t * dir;
                DualEval next = evaluate_dual(values, trial, delta, kd);
                // Near the optimum the decrease drops below the rounding of g;
                // there a smaller gradient is the only usable signal.
                const bool smaller_grad = next.grad.cwiseAbs().maxCoeff() < cur.grad.cwiseAbs().maxCoeff();
                const bool flat = std::abs(next.value - cur.value) <= 1e-13 * std::max(1.0, std::abs(cur.value));
                const bool armijo = next.value <= cur.value + 1e-4 * t * slope;
                if ((armijo && (next.value < cur.value || smaller_grad)) || (flat && smaller_grad)) {
                    sol.alpha = trial;
                    cur = std::move(next);
                    moved = true;
                    break;
                }
            }
            if (!moved) {
                // No representable decrease left; accept if the gradient is at rounding level.
                if (cur.grad.cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, kd))
                    break;
                throw SolverFailure("offline matching line search stalled at gradient " +
                                    std::to_string(cur.grad.cwiseAbs().maxCoeff()) + " after " +
                                    std::to_string(sol.iterations) + " iterations");
            }
        }
        sol.alpha.array() -= sol.alpha.minCoeff();
    }

    sol.x.resize(values.rows(), m);
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        softmax_row(values, sol.alpha, delta, i, sol.x.row(i));
    sol.opt = primal_value(values, sol.x, delta);
    sol.capacity_residual = (sol.x.colwise().sum().array() - kd).abs().maxCoeff();
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (Eigen::Index j = 0; j < m; ++j) {
            const double r = delta * std::log(sol.x(i, j)) - (values(i, j) - sol.alpha(j));
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
        sol.kkt_residual = std::max(sol.kkt_residual, hi - lo);
    }
    return sol;
}

std::string surrogate_source_name(std::size_t j) { return "surrogate-" + std::to_string(j); }

MatchingInstance::MatchingInstance(std::size_t m, std::size_t k, EdgeSampler sampler,
                                   std::shared_ptr<SampleLedger> ledger, Stream rng,
                                   std::optional<Eigen::MatrixXd> true_means)
: m_(m), k_(k), sampler_(std::move(sampler)), ledger_(std::move(ledger)), rng_(rng), means_(std::move(true_means))
{
    if (m_ == 0 || k_ == 0)
        throw InvalidParameter("matching instance needs m >= 1 and k >= 1");
    if (!sampler_ || !ledger_)
        throw InvalidParameter("matching instance needs a sampler and a ledger");
    if (means_ && (static_cast<std::size_t>(means_->rows()) != m_ * k_ ||
                   static_cast<std::size_t>(means_->cols()) != m_))
        throw InvalidParameter("true mean matrix must be km x m");
    if (means_ && (means_->minCoeff() < 0.0 || means_->maxCoeff() > 1.0))
        throw InvalidParameter("edge means must lie in [0,1]");
    for (std::size_t j = 0; j < m_; ++j)
        source_ids_.push_back(ledger_->register_source(surrogate_source_name(j)));
}

MatchingInstance MatchingInstance::bernoulli(const Eigen::MatrixXd& means, std::size_t k,
                                             std::shared_ptr<SampleLedger> ledger, Stream rng)
{
    const auto m = static_cast<std::size_t>(means.cols());
    EdgeSampler sampler = [means](std::size_t i, std::size_t j, Stream& r) {
        return r.uniform() < means(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ? 1.0 : 0.0;
    };
    return MatchingInstance(m, k, std::move(sampler), std::move(ledger), rng, means);
}

void MatchingInstance::check_edge(std::size_t i, std::size_t j) const
{
    if (i >= replicas() || j >= m_)
        throw InvalidParameter("edge index out of range");
}

double MatchingInstance::sample(std::size_t i, std::size_t j)
{
    check_edge(i, j);
    ledger_->record(source_ids_[j]);
    const double x = sampler_(i, j, rng_);
    if (!(x >= 0.0 && x <= 1.0))
        throw ContractViolation("edge value " + std::to_string(x) + " outside [0,1]");
    return x;
}

CoinPtr MatchingInstance::edge_coin(std::size_t i, std::size_t j)
{
    check_edge(i, j);
    std::optional<double> mean;
    if (means_)
        mean = (*means_)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    auto sampler = [s = sampler_, i, j](Stream& r) { return s(i, j, r); };
    const Stream base = rng_.derive("edge").derive(coins_made_++);
    auto src = std::make_shared<FunctionValueSource>(surrogate_source_name(j), std::move(sampler), mean, ledger_,
                                                     base.derive("draws"));
    return continuous_to_bernoulli(std::move(src), base.derive("aux"));
}

const std::optional<Eigen::MatrixXd>& verify::Oracle::true_means(const MatchingInstance& instance)
{
    return instance.means_;
}

GammaEstimate estimate_gamma(MatchingInstance& profile, double delta, double eta, const GammaOptions& opts)
{
    const std::size_t m = profile.m();
    const std::size_t k = profile.k();
    if (!(delta > 0.0) || !(eta > 0.0 && eta < 1.0))
        throw InvalidParameter("gamma estimate needs delta > 0 and eta in (0,1)");
    if (!opts.desk_override && static_cast<double>(k) < gamma_min_load(m, delta, eta))
        throw InvalidParameter("load k = " + std::to_string(k) + " is below the gamma bound's requirement " +
                               std::to_string(gamma_min_load(m, delta, eta)) + "; use the desk override");
    GammaEstimate out;
    out.samples_per_edge = opts.samples_per_edge.value_or(gamma_sample_size(m, k, delta, eta));
    if (out.samples_per_edge == 0)
        throw InvalidParameter("gamma estimate needs at least one sample per edge");
    if (opts.samples_per_edge && !opts.desk_override && *opts.samples_per_edge < gamma_sample_size(m, k, delta, eta))
        throw InvalidParameter("samples per edge below the gamma bound's requirement; use the desk override");

    const std::uint64_t before = profile.ledger()->total();
    Eigen::MatrixXd mean(static_cast<Eigen::Index>(profile.replicas()), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < profile.replicas(); ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::uint64_t n = 0; n < out.samples_per_edge; ++n)
                acc += profile.sample(i, j);
            mean(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                acc / static_cast<double>(out.samples_per_edge);
        }
    out.draws = profile.ledger()->total() - before;
    out.opt_hat = solve_offline(mean, delta, k).opt;
    out.gamma = 4.0 * out.opt_hat / static_cast<double>(k);
    return out;
}

std::vector<std::size_t> OnlineMatchState::available() const
{
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < m; ++j)
        if (loads[j] < k)
            out.push_back(j);
    return out;
}

std::vector<double> step_duals(const OnlineMatchState& state, double eta)
{
    const auto avail = state.available();
    if (avail.empty())
        throw InvariantViolation("no surrogate has spare capacity");
    std::vector<double> loads;
    for (auto j : avail)
        loads.push_back(static_cast<double>(state.loads[j]));
    const auto w = verify::exact_exp_weights(loads, eta);
    std::vector<double> alpha(state.m, 0.0);
    for (std::size_t n = 0; n < avail.size(); ++n)
        alpha[avail[n]] = w[n];
    return alpha;
}

MatchStep match_replica(MatchingInstance& instance, std::size_t i, const std::vector<double>& alpha, double gamma,
                        double delta, const std::vector<std::size_t>& available, Stream& aux, const MatchOptions& opts)
{
    if (!(delta > 0.0) || !(gamma >= 0.0) || !std::isfinite(gamma))
        throw InvalidParameter("match_replica needs delta > 0 and finite gamma >= 0");
    if (alpha.size() != instance.m())
        throw InvalidParameter("dual vector must have one entry per surrogate");
    if (available.empty())
        throw InvalidParameter("available set is empty");
    for (auto j : available) {
        if (j >= instance.m())
            throw InvalidParameter("available surrogate out of range");
        if (!(alpha[j] >= 0.0 && alpha[j] <= 1.0))
            throw InvalidParameter("duals must lie in [0,1]");
    }

    const double h = gamma;
    MatchStep step;
    step.lambda = (h + 1.0) / delta;
    if (available.size() == 1) {
        step.surrogate = available.front();
        return step;
    }

    std::vector<CoinPtr> coins;
    coins.reserve(available.size());
    for (auto j : available) {
        CoinPtr value = instance.edge_coin(i, j);
        if (h == 0.0) {
            coins.push_back(std::move(value));
            continue;
        }
        // (h - gamma alpha_j) / h = 1 - alpha_j.
        coins.push_back(mix(std::move(value), constant_coin(1.0 - alpha[j], aux.split()), 1.0 / (h + 1.0), aux.split()));
    }
    const SampleLedger& ledger = *instance.ledger();
    const RaceResult r = opts.allow_fast_race ? exp_race(coins, step.lambda, aux, ledger, opts.race)
                                              : basic_exp_race(coins, step.lambda, aux, ledger, opts.race);
    step.surrogate = available[r.winner];
    step.base_draws = r.base_draws;
    return step;
}

OnlineMatchResult online_regularized_match(MatchingInstance& instance, const RegularizedParams& params, Stream& aux,
                                           const MatchOptions& opts)
{
    if (!(params.delta > 0.0) || !(params.eta > 0.0 && params.eta < 1.0) || !(params.gamma >= 0.0))
        throw InvalidParameter("online matching needs delta > 0, eta in (0,1), gamma >= 0");
    const std::uint64_t before = instance.ledger()->total();
    OnlineMatchState state(instance.m(), instance.k());
    OnlineMatchResult out;
    out.steps.reserve(instance.replicas());
    for (std::size_t i = 0; i < instance.replicas(); ++i) {
        StepLog log;
        log.available = state.available();
        log.alpha = step_duals(state, params.eta);
        const MatchStep step =
            match_replica(instance, i, log.alpha, params.gamma, params.delta, log.available, aux, opts);
        ++state.loads[step.surrogate];
        state.assignment.push_back(step.surrogate);
        log.surrogate = step.surrogate;
        log.base_draws = step.base_draws;
        out.steps.push_back(std::move(log));
    }
    for (auto load : state.loads)
        if (load != instance.k())
            throw InvariantViolation("online matching ended with a surrogate below load k");
    out.assignment = std::move(state.assignment);
    out.loads = std::move(state.loads);
    out.total_edge_samples = instance.ledger()->total() - before;
    return out;
}

std::vector<double> step_distribution(const Eigen::MatrixXd& means, std::size_t i, const StepLog& step, double gamma,
                                      double delta)
{
    std::vector<double> u;
    for (auto j : step.available)
        u.push_back(means(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - gamma * step.alpha[j]);
    const auto w = verify::exact_exp_weights(u, 1.0 / delta);
    std::vector<double> p(static_cast<std::size_t>(means.cols()), 0.0);
    for (std::size_t n = 0; n < step.available.size(); ++n)
        p[step.available[n]] = w[n];
    return p;
}

double regularized_welfare(const Eigen::MatrixXd& means, const OnlineMatchResult& run, double gamma, double delta)
{
    double total = 0.0;
    for (std::size_t i = 0; i < run.steps.size(); ++i) {
        const auto p = step_distribution(means, i, run.steps[i], gamma, delta);
        for (std::size_t j = 0; j < p.size(); ++j) {
            total += p[j] * means(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (p[j] > 0.0)
                total -= delta * p[j] * std::log(p[j]);
        }
    }
    return total;
}

AgentType FinitePrior::sample(Stream& rng) const
{
    if (types.empty() || types.size() != probs.size())
        throw InvalidParameter("prior needs matching, non-empty types and probabilities");
    double total = 0.0;
    for (double p : probs)
        total += p;
    double u = rng.uniform() * total;
    for (std::size_t n = 0; n < types.size(); ++n) {
        if (u < probs[n])
            return types[n];
        u -= probs[n];
    }
    // Rounding can leave u at the top edge; the last positive cell owns it.
    for (std::size_t n = types.size(); n-- > 0;)
        if (probs[n] > 0.0)
            return types[n];
    throw InvalidParameter("prior has no positive probability");
}

std::size_t FinitePrior::index_of(const AgentType& t) const
{
    for (std::size_t n = 0; n < types.size(); ++n)
        if (types[n].id == t.id && types[n].scale == t.scale)
            return n;
    throw InvalidParameter("type is not in the prior's support");
}

double BayesianSetting::value(const AgentType& t, std::size_t outcome) const
{
    if (!(t.scale >= 0.0 && t.scale <= 1.0))
        throw InvalidParameter("type scale must lie in [0,1]");
    const double v = t.scale * valuation(t.id, outcome);
    if (!(v >= 0.0 && v <= 1.0))
        throw ContractViolation("valuation " + std::to_string(v) + " outside [0,1]");
    return v;
}

std::size_t BayesianSetting::induced(std::size_t agent, const AgentType& s, Stream& rng) const
{
    if (agent >= agents())
        throw InvalidParameter("agent index out of range");
    std::vector<AgentType> profile(agents());
    for (std::size_t a = 0; a < agents(); ++a)
        profile[a] = a == agent ? s : priors[a].sample(rng);
    return algorithm(profile, rng);
}

BayesianSetting urn_setting(std::shared_ptr<const UrnEnvironment> env, FinitePrior prior,
                            std::function<std::size_t(const AgentType&, Stream&)> rule)
{
    BayesianSetting b;
    b.priors = {std::move(prior)};
    b.valuation = [env](std::size_t id, std::size_t o) { return env->value({id, 1.0}, o); };
    b.algorithm = [env, rule = std::move(rule)](const std::vector<AgentType>& profile, Stream& rng) {
        return env->sample_outcome(rule(profile.at(0), rng), rng);
    };
    return b;
}

namespace {

SurrogateChoice select_core(const BayesianSetting& setting, std::size_t agent, const AgentType& t,
                      const SelectOptions& opts, Session& s)
{
    if (agent >= setting.agents())
        throw InvalidParameter("agent index out of range");
    if (opts.m == 0 || opts.k == 0)
        throw InvalidParameter("surrogate selection needs m >= 1 and k >= 1");
    const FinitePrior& prior = setting.priors[agent];
    const std::size_t km = opts.m * opts.k;

    SurrogateChoice out;
    out.real_index = static_cast<std::size_t>(s.rng.below(km));
    std::vector<AgentType> replicas(km);
    for (std::size_t i = 0; i < km; ++i)
        replicas[i] = i == out.real_index ? t : prior.sample(s.rng);
    std::vector<AgentType> surrogates(opts.m);
    for (auto& x : surrogates)
        x = prior.sample(s.rng);
    out.replicas = replicas;
    out.surrogates = surrogates;

    auto edges = [&setting, agent, surrogates](const std::vector<AgentType>& rows) {
        return [&setting, agent, surrogates, rows](std::size_t i, std::size_t j, Stream& rng) {
            return setting.value(rows[i], setting.induced(agent, surrogates[j], rng));
        };
    };

    const std::uint64_t before = s.ledger->total();
    if (opts.m == 1) {
        out.type = surrogates.front();
        out.assignment.assign(km, 0);
        return out;
    }
    if (opts.gamma) {
        out.gamma = *opts.gamma;
    } else {
        // Independent replica profile against the same surrogates; the real report is not used.
        std::vector<AgentType> fresh(km);
        for (auto& x : fresh)
            x = prior.sample(s.rng);
        MatchingInstance profile(opts.m, opts.k, edges(fresh), s.ledger, s.rng.split());
        const auto est = estimate_gamma(profile, opts.delta, opts.eta, opts.gamma_options);
        out.gamma = est.gamma;
        out.opt_hat = est.opt_hat;
    }
    MatchingInstance live(opts.m, opts.k, edges(replicas), s.ledger, s.rng.split());
    Stream aux = s.rng.split();
    const auto run = online_regularized_match(live, {opts.delta, opts.eta, out.gamma, 0.0}, aux, opts.match);
    out.assignment = run.assignment;
    out.surrogate = run.assignment[out.real_index];
    out.type = surrogates[out.surrogate];
    out.edge_samples = s.ledger->total() - before;
    return out;
}

} // namespace

SurrogateChoice surrogate_select(const BayesianSetting& setting, std::size_t agent, const AgentType& t,
                                 const SelectOptions& opts, Session& s)
{
    SurrogateChoice out = select_core(setting, agent, t, opts, s);
    out.outcome = setting.induced(agent, out.type, s.rng);
    return out;
}

BicReduction::BicReduction(BayesianSetting setting, ReductionOptions opts)
: setting_(std::move(setting)), params_(reduction_params(opts.m, opts.eps, opts.c))
{
    if (setting_.agents() == 0 || !setting_.valuation || !setting_.algorithm)
        throw InvalidParameter("reduction needs at least one agent, a valuation and an algorithm");
    if ((opts.k || opts.delta || opts.eta || opts.samples_per_edge) && !opts.desk_override)
        throw InvalidParameter("overriding derived parameters requires the desk override");
    if (opts.k)
        params_.k = *opts.k;
    if (opts.delta)
        params_.delta = *opts.delta;
    if (opts.eta)
        params_.eta = *opts.eta;
    if (params_.k == 0)
        throw InvalidParameter("load k must be positive");

    select_.m = params_.m;
    select_.k = static_cast<std::size_t>(params_.k);
    // m = 1 never races; any positive regulariser will do.
    select_.delta = params_.m == 1 && params_.delta == 0.0 ? 1.0 : params_.delta;
    select_.eta = params_.eta;
    select_.gamma = opts.gamma;
    select_.gamma_options.desk_override = opts.desk_override;
    select_.gamma_options.samples_per_edge = opts.samples_per_edge;
    select_.match = opts.match;
}

ReducedOutcome BicReduction::allocate(const std::vector<AgentType>& reports, Session& s) const
{
    if (reports.size() != setting_.agents())
        throw InvalidParameter("one report per agent is required");
    ReducedOutcome out;
    out.surrogates.reserve(reports.size());
    for (std::size_t a = 0; a < reports.size(); ++a) {
        out.selections.push_back(select_core(setting_, a, reports[a], select_, s));
        out.surrogates.push_back(out.selections.back().type);
    }
    out.outcome = setting_.algorithm(out.surrogates, s.rng);
    for (auto& sel : out.selections)
        sel.outcome = out.outcome;
    return out;
}

ReducedRun BicReduction::run(const std::vector<AgentType>& reports, Session& s) const
{
    ReducedRun out;
    out.lambda_draw = s.rng.uniform();
    const ReducedOutcome base = allocate(reports, s);
    out.outcome = base.outcome;
    out.surrogates = base.surrogates;
    out.selections = base.selections;
    out.payments.resize(reports.size());
    for (std::size_t a = 0; a < reports.size(); ++a) {
        auto scaled = reports;
        scaled[a] = UrnEnvironment::scale_type(out.lambda_draw, reports[a]);
        const std::size_t other = allocate(scaled, s).outcome;
        out.payments[a] = setting_.value(reports[a], out.outcome) - setting_.value(reports[a], other);
    }
    return out;
}

BicReduction reduce_to_bic(BayesianSetting setting, ReductionOptions opts)
{
    return BicReduction(std::move(setting), std::move(opts));
}

} // namespace efs
