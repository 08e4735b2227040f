#include "tmsq/observables.hpp"

#include <cmath>
#include <functional>
#include <numbers>

namespace tmsq {

std::pair<OperatorMatrix, OperatorMatrix> quadrature_ops(const HilbertSpec& space,
                                                         const std::string& mode,
                                                         double theta) {
    if (!space.has(mode)) {
        fail(ErrorCode::unknown_subsystem,
             "no subsystem '" + mode + "' in " + space.describe());
    }
    OperatorMatrix a = embed(annihilation_op(space.dim_of(mode), mode), space, mode);
    Complex ph = std::polar(1.0, -theta);
    double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    OperatorMatrix left = ph * a;
    OperatorMatrix right = adjoint(left);
    OperatorMatrix x = inv_sqrt2 * (left + right);
    OperatorMatrix p = Complex(0.0, -inv_sqrt2) * (left - right);
    x.hermitian_hint = true;
    p.hermitian_hint = true;
    return {std::move(x), std::move(p)};
}

namespace {

void require_two_modes(const HilbertSpec& space) {
    if (!space.has("mode_a") || !space.has("mode_b")) {
        fail(ErrorCode::unknown_subsystem,
             "EPR variance needs subsystems 'mode_a' and 'mode_b', got " +
                 space.describe());
    }
}

struct ModeOps {
    OperatorMatrix a, b, n_a, n_b, ab;
    explicit ModeOps(const HilbertSpec& space)
        : a(embed(annihilation_op(space.dim_of("mode_a"), "mode_a"), space, "mode_a")),
          b(embed(annihilation_op(space.dim_of("mode_b"), "mode_b"), space, "mode_b")),
          n_a(adjoint(a) * a),
          n_b(adjoint(b) * b),
          ab(a * b) {
        n_a.hermitian_hint = true;
        n_b.hermitian_hint = true;
    }
};

template <typename State>
EprMoments collect_impl(const State& state) {
    require_two_modes(state.space);
    ModeOps ops(state.space);
    EprMoments m;
    m.n_a = expectation(ops.n_a, state).real();
    m.n_b = expectation(ops.n_b, state).real();
    m.a = expectation(ops.a, state);
    m.b = expectation(ops.b, state);
    m.ab = expectation(ops.ab, state);
    return m;
}

} // namespace

EprMoments collect_epr_moments(const KetState& psi) { return collect_impl(psi); }
EprMoments collect_epr_moments(const DensityOperator& rho) { return collect_impl(rho); }

double epr_variance(const EprMoments& m, double theta) {
    Complex ph = std::polar(1.0, -theta);
    Complex ph2 = std::polar(1.0, -2.0 * theta);
    double second = 2.0 + 2.0 * (m.n_a + m.n_b) + 4.0 * (ph2 * m.ab).real();
    double mean_u = std::sqrt(2.0) * (ph * (m.a + m.b)).real();
    double mean_v = -std::sqrt(2.0) * (ph * (m.a - m.b)).imag();
    return second - mean_u * mean_u - mean_v * mean_v;
}

double epr_variance(const KetState& psi, double theta) {
    return epr_variance(collect_epr_moments(psi), theta);
}

double epr_variance(const DensityOperator& rho, double theta) {
    return epr_variance(collect_epr_moments(rho), theta);
}

double squeezing_db(double v_ar) {
    if (!(v_ar > 0.0)) {
        fail(ErrorCode::invalid_variance,
             "variance must be > 0 to express in dB, got " + std::to_string(v_ar));
    }
    return -10.0 * std::log10(v_ar / 2.0);
}

double db_to_variance(double db) { return 2.0 * std::pow(10.0, -db / 10.0); }

ThetaScan optimize_theta(const EprMoments& m, int grid_points) {
    if (grid_points < 16) {
        fail(ErrorCode::config_invalid, "theta scan needs at least 16 grid points");
    }
    const double pi = std::numbers::pi;
    // epr_variance is pi-periodic in theta, so [0, pi) covers everything.
    double best_theta = 0.0;
    double best_v = epr_variance(m, 0.0);
    double step = pi / grid_points;
    for (int i = 1; i < grid_points; ++i) {
        double v = epr_variance(m, i * step);
        if (v < best_v) {
            best_v = v;
            best_theta = i * step;
        }
    }
    // Golden-section refinement in the bracket around the grid minimum.
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = best_theta - step, hi = best_theta + step;
    double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
    double fc = epr_variance(m, c), fd = epr_variance(m, d);
    while (hi - lo > 1e-5) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = epr_variance(m, c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = epr_variance(m, d);
        }
    }
    ThetaScan out;
    out.theta_opt = 0.5 * (lo + hi);
    out.v_ar_min = epr_variance(m, out.theta_opt);
    if (out.v_ar_min >= best_v) { // flat, or the grid point was already optimal
        out.theta_opt = best_theta;
        out.v_ar_min = best_v;
    }
    // Report within [0, pi).
    while (out.theta_opt < 0.0) out.theta_opt += pi;
    while (out.theta_opt >= pi) out.theta_opt -= pi;
    return out;
}

ThetaScan optimize_theta(const KetState& psi, int grid_points) {
    return optimize_theta(collect_epr_moments(psi), grid_points);
}

ThetaScan optimize_theta(const DensityOperator& rho, int grid_points) {
    return optimize_theta(collect_epr_moments(rho), grid_points);
}

namespace {

template <typename State>
Diagnostics diagnostics_impl(const State& state) {
    const HilbertSpec& space = state.space;
    Diagnostics d;
    auto mode_number = [&](const std::string& label) {
        OperatorMatrix a = embed(annihilation_op(space.dim_of(label), label), space, label);
        OperatorMatrix n = adjoint(a) * a;
        n.hermitian_hint = true;
        return expectation(n, state).real();
    };
    if (space.has("mode_a")) {
        d.n_a = mode_number("mode_a");
        d.leak_a = top_level_population(state, "mode_a", 2);
    }
    if (space.has("mode_b")) {
        d.n_b = mode_number("mode_b");
        d.leak_b = top_level_population(state, "mode_b", 2);
    }
    if (space.has("qubit")) {
        int levels = space.dim_of("qubit");
        d.qubit_populations.resize(levels);
        for (int l = 0; l < levels; ++l) {
            SparseMat proj(levels, levels);
            proj.insert(l, l) = Complex(1.0, 0.0);
            proj.makeCompressed();
            OperatorMatrix p{HilbertSpec::single("qubit", levels), proj, true};
            d.qubit_populations[l] = expectation(embed(p, space, "qubit"), state).real();
        }
        d.sigma_z = expectation(embed(atom_op(levels, AtomOp::sigma_z), space, "qubit"),
                                state)
                        .real();
    }
    return d;
}

} // namespace

Diagnostics diagnostics(const KetState& psi) { return diagnostics_impl(psi); }
Diagnostics diagnostics(const DensityOperator& rho) { return diagnostics_impl(rho); }

double ideal_epr_variance(double r) { return 2.0 * std::exp(-2.0 * r); }

double tmss_mean_photons(double r) {
    double s = std::sinh(r);
    return s * s;
}

} // namespace tmsq
