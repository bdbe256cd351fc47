#include "pbrak/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "pbrak/errors.hpp"
#include "pbrak/kernels.hpp"

namespace pbrak {

namespace {

VarId var_at(int n, int k) {
    return k < n ? VarId{VarKind::position, k + 1} : VarId{VarKind::momentum, k - n + 1};
}

bool all_finite(const double* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(v[i])) return false;
    return true;
}

}  // namespace

SystemSpec SystemSpec::analyze(int n_dof, Expr hamiltonian) {
    if (n_dof < 1) throw InvalidArgument("n_dof must be at least 1");
    if (max_var_index(hamiltonian) > n_dof)
        throw InvalidArgument("hamiltonian references a variable index above n_dof");

    SystemSpec s;
    s.n_ = n_dof;
    s.h_ = std::move(hamiltonian);
    const int dim = 2 * n_dof;
    s.grad_.resize(dim);
    s.hess_.resize(dim * dim);
    for (int i = 0; i < dim; ++i) s.grad_[i] = differentiate(s.h_, var_at(n_dof, i));
    bool quadratic = true;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            Expr h = differentiate(s.grad_[i], var_at(n_dof, j));
            if (!constant_value(h)) quadratic = false;
            s.hess_[i * dim + j] = std::move(h);
        }
    s.kind_ = quadratic ? SystemKind::quadratic : SystemKind::general;
    if (quadratic) {
        s.s_ = Mat(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) s.s_(i, j) = *constant_value(s.hess_[i * dim + j]);
        PhaseState zero(std::vector<double>(n_dof, 0.0), std::vector<double>(n_dof, 0.0));
        s.b_.resize(dim);
        for (int i = 0; i < dim; ++i) s.b_[i] = evaluate(s.grad_[i], zero);
        s.has_affine_ = std::any_of(s.b_.begin(), s.b_.end(), [](double v) { return v != 0.0; });
    }
    return s;
}

SystemSpec SystemSpec::parse(std::string_view hamiltonian_text, int n_dof) {
    return analyze(n_dof, parse_expression(hamiltonian_text, n_dof));
}

void SystemSpec::eval_gradient(const PhaseState& z, std::vector<double>& g) const {
    const int dim = 2 * n_;
    g.resize(dim);
    if (kind_ == SystemKind::quadratic) {
        // grad = S z + b
        std::vector<double> zv(dim);
        std::copy(z.x.begin(), z.x.end(), zv.begin());
        std::copy(z.p.begin(), z.p.end(), zv.begin() + n_);
        kernels::matvec(g.data(), s_.data(), zv.data(), dim, dim);
        kernels::axpy(1.0, b_.data(), g.data(), dim);
        return;
    }
    for (int i = 0; i < dim; ++i) g[i] = evaluate(grad_[i], z);
}

void SystemSpec::eval_hessian(const PhaseState& z, Mat& h) const {
    const int dim = 2 * n_;
    if (kind_ == SystemKind::quadratic) {
        h = s_;
        return;
    }
    h = Mat(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) h(i, j) = evaluate(hess_[i * dim + j], z);
}

namespace {

// Fixed-step integrator over the optionally augmented state
// y = (x, p [, M row-major]).
class Stepper {
public:
    Stepper(const SystemSpec& sys, const IntegratorOpts& opts, bool with_tangent)
        : sys_(sys),
          opts_(opts),
          with_tangent_(with_tangent),
          n_(sys.dof()),
          dim_(sys.dim()),
          total_(with_tangent ? sys.dim() + sys.dim() * sys.dim() : sys.dim()),
          zbuf_(std::vector<double>(sys.dof(), 0.0), std::vector<double>(sys.dof(), 0.0)) {
        k1_.resize(total_);
        k2_.resize(total_);
        k3_.resize(total_);
        k4_.resize(total_);
        ytmp_.resize(total_);
    }

    std::vector<double> pack(const PhaseState& z) const {
        std::vector<double> y(total_, 0.0);
        std::copy(z.x.begin(), z.x.end(), y.begin());
        std::copy(z.p.begin(), z.p.end(), y.begin() + n_);
        if (with_tangent_)
            for (int i = 0; i < dim_; ++i) y[dim_ + i * dim_ + i] = 1.0;
        return y;
    }

    PhaseState unpack_state(const std::vector<double>& y, double t) const {
        PhaseState z(std::vector<double>(y.begin(), y.begin() + n_),
                     std::vector<double>(y.begin() + n_, y.begin() + dim_), t);
        return z;
    }

    Mat unpack_map(const std::vector<double>& y) const {
        Mat m(dim_, dim_);
        std::copy(y.begin() + dim_, y.end(), m.data());
        return m;
    }

    // Advance y from absolute time `from` to `to` in uniform steps of
    // magnitude at most opts.dt.
    void advance(std::vector<double>& y, double from, double to) {
        const double span = to - from;
        if (span == 0.0) return;
        const long steps = std::max(1L, static_cast<long>(std::ceil(std::abs(span) / opts_.dt - 1e-12)));
        const double h = span / static_cast<double>(steps);
        for (long i = 0; i < steps; ++i) {
            const double t = from + static_cast<double>(i) * h;
            if (opts_.method == IntegratorMethod::rk4)
                rk4_step(y, h);
            else
                midpoint_step(y, h, t);
            if (!all_finite(y.data(), dim_))
                throw IntegrationError("trajectory blew up to a non-finite state", t + h);
        }
    }

private:
    void rhs(const std::vector<double>& y, std::vector<double>& dy) {
        std::copy(y.begin(), y.begin() + n_, zbuf_.x.begin());
        std::copy(y.begin() + n_, y.begin() + dim_, zbuf_.p.begin());
        sys_.eval_gradient(zbuf_, grad_);
        for (int i = 0; i < n_; ++i) {
            dy[i] = grad_[n_ + i];
            dy[n_ + i] = -grad_[i];
        }
        if (!with_tangent_) return;
        sys_.eval_hessian(zbuf_, hessbuf_);
        // Mdot = J (S M)
        sm_.resize(dim_ * dim_);
        kernels::matmul(sm_.data(), hessbuf_.data(), y.data() + dim_, dim_, dim_, dim_);
        double* mdot = dy.data() + dim_;
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < dim_; ++j) {
                mdot[i * dim_ + j] = sm_[(n_ + i) * dim_ + j];
                mdot[(n_ + i) * dim_ + j] = -sm_[i * dim_ + j];
            }
    }

    void rk4_step(std::vector<double>& y, double h) {
        rhs(y, k1_);
        kernels::scale_add(ytmp_.data(), y.data(), 0.5 * h, k1_.data(), total_);
        rhs(ytmp_, k2_);
        kernels::scale_add(ytmp_.data(), y.data(), 0.5 * h, k2_.data(), total_);
        rhs(ytmp_, k3_);
        kernels::scale_add(ytmp_.data(), y.data(), h, k3_.data(), total_);
        rhs(ytmp_, k4_);
        kernels::rk4_combine(y.data(), k1_.data(), k2_.data(), k3_.data(), k4_.data(), h, total_);
    }

    void midpoint_step(std::vector<double>& y, double h, double t) {
        // z_{n+1} = z_n + h f((z_n + z_{n+1}) / 2), solved by fixed point.
        std::vector<double> znext(y.begin(), y.begin() + dim_);
        std::vector<double> zmid(dim_), f(total_);
        rhs(y, f);  // predictor: explicit Euler
        kernels::axpy(h, f.data(), znext.data(), dim_);
        bool converged = false;
        for (int it = 0; it < 64; ++it) {
            for (int i = 0; i < dim_; ++i) zmid[i] = 0.5 * (y[i] + znext[i]);
            std::vector<double> ymid(zmid);
            ymid.resize(total_);
            rhs(ymid, f);
            double delta = 0.0, scale = 1.0;
            for (int i = 0; i < dim_; ++i) {
                double v = y[i] + h * f[i];
                delta = std::max(delta, std::abs(v - znext[i]));
                scale = std::max(scale, std::abs(v));
                znext[i] = v;
            }
            if (delta <= 1e-14 * scale) {
                converged = true;
                break;
            }
        }
        if (!converged) throw IntegrationError("implicit midpoint iteration did not converge", t);

        if (with_tangent_) {
            // M_{n+1} = (I - h/2 A)^{-1} (I + h/2 A) M_n with A = J S(z_mid)
            for (int i = 0; i < dim_; ++i) zmid[i] = 0.5 * (y[i] + znext[i]);
            std::copy(zmid.begin(), zmid.begin() + n_, zbuf_.x.begin());
            std::copy(zmid.begin() + n_, zmid.end(), zbuf_.p.begin());
            sys_.eval_hessian(zbuf_, hessbuf_);
            Mat a = j_times(hessbuf_);
            Mat plus = Mat::identity(dim_) + (0.5 * h) * a;
            Mat minus = Mat::identity(dim_) - (0.5 * h) * a;
            Mat mcur(dim_, dim_);
            std::copy(y.begin() + dim_, y.end(), mcur.data());
            Mat mnext = lu_solve(std::move(minus), matmul(plus, mcur));
            std::copy(mnext.data(), mnext.data() + dim_ * dim_, y.begin() + dim_);
        }
        std::copy(znext.begin(), znext.end(), y.begin());
    }

    const SystemSpec& sys_;
    IntegratorOpts opts_;
    bool with_tangent_;
    int n_, dim_;
    std::size_t total_;
    PhaseState zbuf_;
    std::vector<double> k1_, k2_, k3_, k4_, ytmp_, grad_, sm_;
    Mat hessbuf_;
};

// exp(dt [[J S, J b], [0, 0]]): top-left block propagates the state, the
// last column carries the affine drift.
void closed_form_step(const SystemSpec& sys, double dt, Mat& phi, std::vector<double>& drift) {
    const int dim = sys.dim();
    Mat js = j_times(sys.constant_hessian());
    if (!sys.has_affine_term()) {
        phi = expm(dt * js);
        drift.assign(dim, 0.0);
        return;
    }
    const auto& b = sys.gradient_at_zero();
    std::vector<double> jb(dim);
    for (int i = 0; i < dim / 2; ++i) {
        jb[i] = b[dim / 2 + i];
        jb[dim / 2 + i] = -b[i];
    }
    Mat aug(dim + 1, dim + 1);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) aug(i, j) = js(i, j);
        aug(i, dim) = jb[i];
    }
    Mat e = expm(dt * aug);
    phi = Mat(dim, dim);
    drift.resize(dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) phi(i, j) = e(i, j);
        drift[i] = e(i, dim);
    }
}

TangentMap finish_map(Mat m, double tau, double t, const IntegratorOpts& opts) {
    TangentMap tm{std::move(m), tau, t, 0.0};
    tm.defect = symplectic_defect(tm.m);
    if (opts.warn_on_defect && tm.defect > opts.symplectic_tol) {
        std::fprintf(stderr,
                     "pbrak: warning: tangent map M(%g;%g) symplectic defect %.3e exceeds "
                     "tolerance %.3e\n",
                     t, tau, tm.defect, opts.symplectic_tol);
    }
    return tm;
}

void check_initial(const SystemSpec& sys, const PhaseState& z0, double tau) {
    if (z0.dof() != sys.dof() || static_cast<int>(z0.p.size()) != sys.dof())
        throw InvalidArgument("initial state dimension does not match the system");
    if (z0.time != tau) throw InvalidArgument("z0.time must equal tau");
    if (!all_finite(z0.x.data(), z0.x.size()) || !all_finite(z0.p.data(), z0.p.size()))
        throw InvalidArgument("initial state has non-finite entries");
}

}  // namespace

std::vector<FlowSample> flow_with_tangent_at(const SystemSpec& sys, const PhaseState& z0,
                                             double tau, const std::vector<double>& times,
                                             const IntegratorOpts& opts) {
    check_initial(sys, z0, tau);
    const int n = sys.dof();
    const int dim = sys.dim();

    std::map<double, FlowSample> at;
    for (double t : times) at.emplace(t, FlowSample{});

    if (sys.kind() == SystemKind::quadratic && !opts.force_integrator) {
        std::vector<double> zv(dim);
        std::copy(z0.x.begin(), z0.x.end(), zv.begin());
        std::copy(z0.p.begin(), z0.p.end(), zv.begin() + n);
        for (auto& [t, sample] : at) {
            Mat phi;
            std::vector<double> drift;
            closed_form_step(sys, t - tau, phi, drift);
            std::vector<double> zt(dim);
            kernels::matvec(zt.data(), phi.data(), zv.data(), dim, dim);
            kernels::axpy(1.0, drift.data(), zt.data(), dim);
            sample.state = PhaseState(std::vector<double>(zt.begin(), zt.begin() + n),
                                      std::vector<double>(zt.begin() + n, zt.end()), t);
            sample.map = finish_map(std::move(phi), tau, t, opts);
        }
    } else {
        // One sweep forward from tau, one backward, snapshotting at the
        // requested times.
        for (int dir = 0; dir < 2; ++dir) {
            std::vector<double> targets;
            for (const auto& [t, sample] : at)
                if ((dir == 0 && t >= tau) || (dir == 1 && t < tau)) targets.push_back(t);
            if (targets.empty()) continue;
            if (dir == 0)
                std::sort(targets.begin(), targets.end());
            else
                std::sort(targets.rbegin(), targets.rend());

            Stepper stepper(sys, opts, true);
            std::vector<double> y = stepper.pack(z0);
            double cur = tau;
            for (double t : targets) {
                stepper.advance(y, cur, t);
                cur = t;
                auto& sample = at.at(t);
                sample.state = stepper.unpack_state(y, t);
                sample.map = finish_map(stepper.unpack_map(y), tau, t, opts);
            }
        }
    }

    std::vector<FlowSample> out;
    out.reserve(times.size());
    for (double t : times) out.push_back(at.at(t));
    return out;
}

PhaseState flow(const SystemSpec& sys, const PhaseState& z0, double tau, double t,
                const IntegratorOpts& opts) {
    check_initial(sys, z0, tau);
    const int n = sys.dof();
    const int dim = sys.dim();
    if (sys.kind() == SystemKind::quadratic && !opts.force_integrator) {
        Mat phi;
        std::vector<double> drift;
        closed_form_step(sys, t - tau, phi, drift);
        std::vector<double> zv(dim), zt(dim);
        std::copy(z0.x.begin(), z0.x.end(), zv.begin());
        std::copy(z0.p.begin(), z0.p.end(), zv.begin() + n);
        kernels::matvec(zt.data(), phi.data(), zv.data(), dim, dim);
        kernels::axpy(1.0, drift.data(), zt.data(), dim);
        return PhaseState(std::vector<double>(zt.begin(), zt.begin() + n),
                          std::vector<double>(zt.begin() + n, zt.end()), t);
    }
    Stepper stepper(sys, opts, false);
    std::vector<double> y = stepper.pack(z0);
    stepper.advance(y, tau, t);
    return stepper.unpack_state(y, t);
}

TangentMap tangent_map(const SystemSpec& sys, const PhaseState& z0, double tau, double t,
                       const IntegratorOpts& opts) {
    return flow_with_tangent_at(sys, z0, tau, {t}, opts)[0].map;
}

TangentMap linear_flow(const SystemSpec& sys, double tau, double t) {
    if (sys.kind() != SystemKind::quadratic)
        throw InvalidArgument("linear_flow requires a quadratic hamiltonian (constant Hessian)");
    Mat phi = expm((t - tau) * j_times(sys.constant_hessian()));
    TangentMap tm{std::move(phi), tau, t, 0.0};
    tm.defect = symplectic_defect(tm.m);
    return tm;
}

}  // namespace pbrak
