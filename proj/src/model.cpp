#include "tmsq/model.hpp"

#include <cmath>
#include <limits>

namespace tmsq {

DerivedParams derive(const ModelParams& p) {
    if (p.Omega.imag() != 0.0) {
        fail(ErrorCode::config_invalid,
             "drive amplitude must be real here; fold its phase into the qubit basis");
    }
    if (p.omega_d != p.omega_0) {
        fail(ErrorCode::config_invalid,
             "the reduction assumes a resonant drive: omega_d must equal omega_0");
    }
    DerivedParams d;
    double Om = p.Omega.real();
    d.eta = 2.0 * Om - p.Delta;
    if (d.eta == 0.0) {
        fail(ErrorCode::degenerate_detuning,
             "2*Omega equals Delta: dispersive shifts diverge");
    }
    d.chi_a = std::norm(p.g_a) / (4.0 * d.eta);
    d.chi_b = std::norm(p.g_b) / (4.0 * d.eta);
    d.lambda = p.g_a * p.g_b / (4.0 * d.eta);
    d.delta = -(d.chi_a + d.chi_b);
    d.delta_a = p.Delta;
    d.delta_b = -p.Delta - d.delta;
    d.omega_a = p.omega_0 + d.delta_a;
    d.omega_b = p.omega_0 + d.delta_b;
    d.omega_d = p.omega_0;
    return d;
}

RegimeReport validate_regime(const ModelParams& p, const DerivedParams& d,
                             const RegimeThresholds& th) {
    RegimeReport rep;
    auto add = [&rep](std::string name, double left, double right, double threshold,
                      bool strict) {
        RegimeCheck c;
        c.name = std::move(name);
        c.left = left;
        c.right = right;
        c.threshold = threshold;
        c.strict = strict;
        double num = std::abs(left), den = std::abs(right);
        c.ratio = den == 0.0 ? std::numeric_limits<double>::infinity() : num / den;
        c.pass = strict ? (c.ratio > threshold) : (c.ratio >= threshold);
        if (!c.pass) {
            rep.all_pass = false;
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s: ratio %.4g does not clear threshold %g",
                          c.name.c_str(), c.ratio, c.threshold);
            rep.warnings.emplace_back(buf);
        }
        rep.checks.push_back(std::move(c));
    };

    double ga = std::abs(p.g_a);
    double gb = std::abs(p.g_b);
    double Om = p.Omega.real();

    // Dropping counter-rotating qubit-mode terms needs the sum frequency far
    // above the detuning; the dispersive treatment needs the detuning far
    // above the coupling.
    add("corotating_mode_a", p.omega_0 + d.omega_a, p.omega_0 - d.omega_a, th.ratio, false);
    add("corotating_mode_b", p.omega_0 + d.omega_b, p.omega_0 - d.omega_b, th.ratio, false);
    add("dispersive_mode_a", p.omega_0 - d.omega_a, ga, th.ratio, false);
    add("dispersive_mode_b", p.omega_0 - d.omega_b, gb, th.ratio, false);

    // Resonant drive: the only scale separation available is transition
    // frequency vs drive amplitude 2*Omega. This is the check that trips first
    // when the drive becomes strong, so it is strict.
    add("drive_rwa", p.omega_0 + d.omega_d, 2.0 * Om, th.drive_rwa, true);

    // The f level must stay spectator: far detuned from both modes and from
    // the drive.
    add("f_level_vs_mode_a", p.omega_ef - d.omega_a, ga, th.ratio, false);
    add("f_level_vs_mode_b", p.omega_ef - d.omega_b, gb, th.ratio, false);
    add("f_level_vs_drive", p.omega_ef - d.omega_d, 2.0 * Om, th.ratio, false);

    // Dressed-frame separations behind the second-order effective dynamics.
    add("eta_separation", p.Delta + 2.0 * Om, d.eta, th.ratio, false);
    add("eta_vs_coupling", d.eta, std::max(ga, gb), th.ratio, false);
    add("stark_vs_detuning", p.Delta, d.delta, th.ratio, false);

    add("anharmonicity", p.omega_ef, p.omega_0, th.anharmonicity, false);
    return rep;
}

// --- time-dependent operators ----------------------------------------------

TimeDependentOperator::TimeDependentOperator(OperatorMatrix constant)
    : constant_(std::move(constant)) {}

void TimeDependentOperator::add_term(OperatorMatrix op, std::function<Complex(double)> coeff,
                                     double angular_frequency, std::string name) {
    if (op.space != constant_.space) {
        fail(ErrorCode::incompatible_spaces,
             "term space " + op.space.describe() + " vs " + constant_.space.describe());
    }
    terms_.push_back({std::move(op), std::move(coeff), angular_frequency, std::move(name)});
}

namespace {

// out += c * (m * x) without temporaries; m is row-major.
void accumulate_product(const SparseMat& m, Complex c, const DenseVec& x, DenseVec& out) {
    for (int row = 0; row < m.outerSize(); ++row) {
        Complex acc(0.0, 0.0);
        for (SparseMat::InnerIterator it(m, row); it; ++it) {
            acc += it.value() * x[it.col()];
        }
        out[row] += c * acc;
    }
}

} // namespace

void TimeDependentOperator::apply(double t, const DenseVec& x, DenseVec& out) const {
    out.setZero();
    accumulate_product(constant_.mat, Complex(1.0, 0.0), x, out);
    for (const auto& term : terms_) {
        accumulate_product(term.op.mat, term.coeff(t), x, out);
    }
}

SparseMat TimeDependentOperator::materialize(double t) const {
    SparseMat m = constant_.mat;
    for (const auto& term : terms_) {
        m = m + SparseMat(term.coeff(t) * term.op.mat);
    }
    return m;
}

double TimeDependentOperator::max_coefficient_frequency() const {
    double f = 0.0;
    for (const auto& term : terms_) {
        f = std::max(f, std::abs(term.angular_frequency));
    }
    return f;
}

double inf_norm(const SparseMat& m) {
    double best = 0.0;
    for (int row = 0; row < m.outerSize(); ++row) {
        double acc = 0.0;
        for (SparseMat::InnerIterator it(m, row); it; ++it) {
            acc += std::abs(it.value());
        }
        best = std::max(best, acc);
    }
    return best;
}

// --- Hamiltonian builders ---------------------------------------------------

namespace {

OperatorMatrix number_single(int dim, const std::string& label) {
    SparseMat m(dim, dim);
    std::vector<Eigen::Triplet<Complex>> trips;
    for (int n = 1; n < dim; ++n) trips.emplace_back(n, n, Complex(double(n), 0.0));
    m.setFromTriplets(trips.begin(), trips.end());
    return {HilbertSpec::single(label, dim), std::move(m), true};
}

void require_modes(const HilbertSpec& space, const char* who) {
    if (!space.has("mode_a") || !space.has("mode_b")) {
        fail(ErrorCode::level_mismatch,
             std::string(who) + " needs subsystems mode_a and mode_b, got " + space.describe());
    }
}

void require_qubit(const HilbertSpec& space, const ModelParams& p, int levels,
                   const char* who) {
    require_modes(space, who);
    if (!space.has("qubit") || space.dim_of("qubit") != levels) {
        fail(ErrorCode::level_mismatch,
             std::string(who) + " needs a " + std::to_string(levels) +
                 "-level qubit subsystem, got " + space.describe());
    }
    if (p.qubit_levels != levels) {
        fail(ErrorCode::level_mismatch,
             std::string(who) + " needs qubit_levels = " + std::to_string(levels) +
                 ", params say " + std::to_string(p.qubit_levels));
    }
}

struct EmbeddedOps {
    OperatorMatrix a, b, n_a, n_b, id;
};

EmbeddedOps make_mode_ops(const HilbertSpec& space) {
    int da = space.dim_of("mode_a");
    int db = space.dim_of("mode_b");
    return {embed(annihilation_op(da, "mode_a"), space, "mode_a"),
            embed(annihilation_op(db, "mode_b"), space, "mode_b"),
            embed(number_single(da, "mode_a"), space, "mode_a"),
            embed(number_single(db, "mode_b"), space, "mode_b"),
            identity_op(space)};
}

OperatorMatrix embed_atom(const HilbertSpec& space, AtomOp kind) {
    return embed(atom_op(space.dim_of("qubit"), kind), space, "qubit");
}

Complex real_c(double x) { return Complex(x, 0.0); }

} // namespace

TimeDependentOperator build_h_full(const ModelParams& p, const DerivedParams& d,
                                   const HilbertSpec& space) {
    require_qubit(space, p, 3, "build_h_full");
    if (p.g_a.imag() != 0.0 || p.g_b.imag() != 0.0 || p.Omega.imag() != 0.0) {
        fail(ErrorCode::config_invalid,
             "lab-frame dipole couplings must be real (absorb phases into mode bases)");
    }
    EmbeddedOps m = make_mode_ops(space);

    OperatorMatrix dipole = embed_atom(space, AtomOp::sigma_ge) + embed_atom(space, AtomOp::sigma_eg) +
                            embed_atom(space, AtomOp::sigma_ef) + embed_atom(space, AtomOp::sigma_fe);

    OperatorMatrix bare = real_c(d.omega_a) * m.n_a + real_c(d.omega_b) * m.n_b +
                          real_c(p.omega_0 / 2.0) * embed_atom(space, AtomOp::sigma_z) +
                          real_c(p.omega_0 / 2.0 + p.omega_ef) * embed_atom(space, AtomOp::sigma_ff);

    OperatorMatrix field = real_c(p.g_a.real()) * (m.a + adjoint(m.a)) +
                           real_c(p.g_b.real()) * (m.b + adjoint(m.b));

    TimeDependentOperator H(bare + field * dipole);
    double wd = d.omega_d;
    H.add_term(real_c(2.0 * p.Omega.real()) * dipole,
               [wd](double t) { return Complex(std::cos(wd * t), 0.0); }, wd, "drive");
    return H;
}

TimeDependentOperator build_h_rwa(const ModelParams& p, const DerivedParams& d,
                                  const HilbertSpec& space) {
    require_qubit(space, p, 2, "build_h_rwa");
    EmbeddedOps m = make_mode_ops(space);
    OperatorMatrix sig_eg = embed_atom(space, AtomOp::sigma_eg);
    OperatorMatrix sig_ge = embed_atom(space, AtomOp::sigma_ge);

    OperatorMatrix h0 = real_c(d.omega_a) * m.n_a + real_c(d.omega_b) * m.n_b +
                        real_c(p.omega_0 / 2.0) * embed_atom(space, AtomOp::sigma_z);
    OperatorMatrix coupling = (p.g_a * m.a + p.g_b * m.b) * sig_eg;

    TimeDependentOperator H(h0 + coupling + adjoint(coupling));
    double wd = d.omega_d;
    H.add_term(p.Omega * sig_eg,
               [wd](double t) { return std::exp(Complex(0.0, -wd * t)); }, wd, "drive");
    H.add_term(std::conj(p.Omega) * sig_ge,
               [wd](double t) { return std::exp(Complex(0.0, wd * t)); }, wd, "drive_hc");
    return H;
}

TimeDependentOperator build_v_i(const ModelParams& p, const DerivedParams& d,
                                const HilbertSpec& space) {
    require_qubit(space, p, 2, "build_v_i");
    EmbeddedOps m = make_mode_ops(space);
    OperatorMatrix sig_eg = embed_atom(space, AtomOp::sigma_eg);
    OperatorMatrix sig_ge = embed_atom(space, AtomOp::sigma_ge);

    TimeDependentOperator H(p.Omega * sig_eg + std::conj(p.Omega) * sig_ge);
    double da = d.delta_a, db = d.delta_b;
    H.add_term(p.g_a * (m.a * sig_eg),
               [da](double t) { return std::exp(Complex(0.0, -da * t)); }, da, "mode_a");
    H.add_term(std::conj(p.g_a) * (adjoint(m.a) * sig_ge),
               [da](double t) { return std::exp(Complex(0.0, da * t)); }, da, "mode_a_hc");
    H.add_term(p.g_b * (m.b * sig_eg),
               [db](double t) { return std::exp(Complex(0.0, -db * t)); }, db, "mode_b");
    H.add_term(std::conj(p.g_b) * (adjoint(m.b) * sig_ge),
               [db](double t) { return std::exp(Complex(0.0, db * t)); }, db, "mode_b_hc");
    return H;
}

TimeDependentOperator build_h_eff(const ModelParams& p, const DerivedParams& d,
                                  const HilbertSpec& space) {
    require_qubit(space, p, 2, "build_h_eff");
    EmbeddedOps m = make_mode_ops(space);
    OperatorMatrix p_plus = embed_atom(space, AtomOp::proj_plus);
    OperatorMatrix p_minus = embed_atom(space, AtomOp::proj_minus);

    OperatorMatrix stark =
        (real_c(d.chi_a) * (m.n_a + m.id) + real_c(d.chi_b) * m.n_b) * p_plus -
        (real_c(d.chi_a) * m.n_a + real_c(d.chi_b) * (m.n_b + m.id)) * p_minus;

    TimeDependentOperator H(stark);
    OperatorMatrix pair = d.lambda * ((m.a * m.b) * (p_minus - p_plus));
    double dl = d.delta;
    H.add_term(pair, [dl](double t) { return std::exp(Complex(0.0, dl * t)); }, dl, "pair");
    H.add_term(adjoint(pair), [dl](double t) { return std::exp(Complex(0.0, -dl * t)); }, dl,
               "pair_hc");
    return H;
}

OperatorMatrix build_h_minus(const DerivedParams& d, const HilbertSpec& space) {
    require_modes(space, "build_h_minus");
    EmbeddedOps m = make_mode_ops(space);
    OperatorMatrix pair = d.lambda * (m.a * m.b);
    OperatorMatrix h = pair + adjoint(pair);
    h.hermitian_hint = true;
    return h;
}

// --- squeezing operator -----------------------------------------------------

OperatorMatrix squeeze_operator(Complex zeta, const HilbertSpec& space,
                                double max_top_level_leak) {
    require_modes(space, "squeeze_operator");
    EmbeddedOps m = make_mode_ops(space);

    // Generator K = zeta a b - zeta* a^+ b^+ is anti-Hermitian, so iK is
    // Hermitian and exp(K) = V exp(-i diag) V^+ is unitary to roundoff.
    OperatorMatrix pair = zeta * (m.a * m.b);
    OperatorMatrix generator = pair - adjoint(pair);
    DenseMat herm = Complex(0.0, 1.0) * DenseMat(generator.mat);
    Eigen::SelfAdjointEigenSolver<DenseMat> es(herm);
    if (es.info() != Eigen::Success) {
        fail(ErrorCode::integrator_failure, "eigendecomposition of squeeze generator failed");
    }
    DenseVec phases(es.eigenvalues().size());
    for (int i = 0; i < phases.size(); ++i) {
        phases[i] = std::exp(Complex(0.0, -es.eigenvalues()[i]));
    }
    DenseMat u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();

    // The squeezed vacuum must fit in the truncation, otherwise the operator
    // silently misrepresents the state it is meant to produce.
    KetState squeezed_vacuum{space, u.col(0)};
    double leak = std::max(top_level_population(squeezed_vacuum, "mode_a", 2),
                           top_level_population(squeezed_vacuum, "mode_b", 2));
    if (leak > max_top_level_leak) {
        char buf[200];
        std::snprintf(buf, sizeof(buf),
                      "squeezed vacuum occupies top Fock levels at %.3e (limit %.3e); "
                      "raise the mode truncation or lower |zeta|",
                      leak, max_top_level_leak);
        fail(ErrorCode::truncation_leak, buf);
    }

    SparseMat sm = u.sparseView();
    return {space, std::move(sm), false};
}

// --- frame transforms -------------------------------------------------------

OperatorMatrix frame_u_drive(const ModelParams& p, double t) {
    int levels = p.qubit_levels;
    if (levels != 2 && levels != 3) {
        fail(ErrorCode::invalid_dimension,
             "qubit_levels must be 2 or 3, got " + std::to_string(levels));
    }
    double mag = std::abs(p.Omega);
    std::vector<Eigen::Triplet<Complex>> trips;
    if (mag == 0.0) {
        trips.emplace_back(0, 0, real_c(1.0));
        trips.emplace_back(1, 1, real_c(1.0));
    } else {
        // K = Omega|e><g| + Omega*|g><e| squares to |Omega|^2 on the g/e block,
        // so exp(-iKt) = cos(|O|t) - i sin(|O|t) K/|O| there.
        Complex phase = p.Omega / mag;
        double c = std::cos(mag * t), s = std::sin(mag * t);
        trips.emplace_back(0, 0, real_c(c));
        trips.emplace_back(1, 1, real_c(c));
        trips.emplace_back(1, 0, Complex(0.0, -s) * phase);
        trips.emplace_back(0, 1, Complex(0.0, -s) * std::conj(phase));
    }
    if (levels == 3) trips.emplace_back(2, 2, real_c(1.0));
    SparseMat m(levels, levels);
    m.setFromTriplets(trips.begin(), trips.end());
    return {HilbertSpec::single("qubit", levels), std::move(m), false};
}

OperatorMatrix frame_u_minus(const DerivedParams& d, const HilbertSpec& space, double t) {
    require_modes(space, "frame_u_minus");
    int stride_a = space.stride_of("mode_a"), dim_a = space.dim_of("mode_a");
    int stride_b = space.stride_of("mode_b"), dim_b = space.dim_of("mode_b");
    std::vector<Eigen::Triplet<Complex>> trips;
    trips.reserve(space.total_dim());
    for (int flat = 0; flat < space.total_dim(); ++flat) {
        int na = (flat / stride_a) % dim_a;
        int nb = (flat / stride_b) % dim_b;
        trips.emplace_back(flat, flat,
                           std::exp(Complex(0.0, (d.chi_a * na + d.chi_b * nb) * t)));
    }
    SparseMat m(space.total_dim(), space.total_dim());
    m.setFromTriplets(trips.begin(), trips.end());
    return {space, std::move(m), false};
}

} // namespace tmsq
