#pragma once

#include <string_view>
#include <vector>

#include "pbrak/expr.hpp"
#include "pbrak/mat.hpp"
#include "pbrak/state.hpp"

// Hamilton's equations zdot = J grad H(z) and the variational equations
// Mdot = J hess H(z(t)) M, integrated jointly so the trajectory and its
// tangent map share one clock. Systems with a constant Hessian are
// detected symbolically and take an exact matrix-exponential route
// unless the integrator is forced.

namespace pbrak {

enum class SystemKind { quadratic, general };
enum class IntegratorMethod { rk4, implicit_midpoint };

struct IntegratorOpts {
    IntegratorMethod method = IntegratorMethod::rk4;
    double dt = 1e-3;
    double symplectic_tol = 1e-6;
    // Integrate quadratic systems numerically instead of taking the
    // closed form; used by cross-checks.
    bool force_integrator = false;
    // Write a warning to stderr when a tangent map violates symplectic_tol.
    bool warn_on_defect = true;
};

// Matrix of derivatives of the flow with respect to initial data at
// base_time, rows/cols ordered (x_1..x_N, p_1..p_N).
struct TangentMap {
    Mat m;
    double base_time = 0.0;
    double target_time = 0.0;
    double defect = 0.0;  // ||M^T J M - J||_inf
};

class SystemSpec {
public:
    SystemSpec() = default;

    static SystemSpec analyze(int n_dof, Expr hamiltonian);
    static SystemSpec parse(std::string_view hamiltonian_text, int n_dof);

    int dof() const { return n_; }
    int dim() const { return 2 * n_; }
    const Expr& hamiltonian() const { return h_; }
    SystemKind kind() const { return kind_; }

    const Expr& grad_expr(int k) const { return grad_[k]; }
    const Expr& hess_expr(int i, int j) const { return hess_[i * 2 * n_ + j]; }

    // Quadratic systems only: H(z) = z^T S z / 2 + b^T z + c.
    const Mat& constant_hessian() const { return s_; }
    const std::vector<double>& gradient_at_zero() const { return b_; }
    bool has_affine_term() const { return has_affine_; }

    void eval_gradient(const PhaseState& z, std::vector<double>& g) const;
    void eval_hessian(const PhaseState& z, Mat& h) const;
    double energy(const PhaseState& z) const { return evaluate(h_, z); }

private:
    int n_ = 0;
    Expr h_;
    SystemKind kind_ = SystemKind::general;
    std::vector<Expr> grad_;
    std::vector<Expr> hess_;
    Mat s_;
    std::vector<double> b_;
    bool has_affine_ = false;
};

// State at time t of the trajectory through z0 at time tau; integrates
// backward when t < tau. Throws IntegrationError on blow-up.
PhaseState flow(const SystemSpec& sys, const PhaseState& z0, double tau, double t,
                const IntegratorOpts& opts = {});

// M(t; tau) integrated jointly with the trajectory; M(tau; tau) is the
// identity exactly.
TangentMap tangent_map(const SystemSpec& sys, const PhaseState& z0, double tau, double t,
                       const IntegratorOpts& opts = {});

// Closed form exp((t - tau) J S) for constant-Hessian systems;
// state-independent. Throws InvalidArgument for general systems.
TangentMap linear_flow(const SystemSpec& sys, double tau, double t);

struct FlowSample {
    PhaseState state;
    TangentMap map;
};

// Trajectory and tangent map sampled at several target times from one
// integration sweep per time direction. Samples align with `times`.
std::vector<FlowSample> flow_with_tangent_at(const SystemSpec& sys, const PhaseState& z0,
                                             double tau, const std::vector<double>& times,
                                             const IntegratorOpts& opts = {});

}  // namespace pbrak
