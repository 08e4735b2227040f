#include "tmsq/fockspace.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace tmsq {

namespace {

void require_same_space(const HilbertSpec& a, const HilbertSpec& b, const char* what) {
    if (a != b) {
        fail(ErrorCode::incompatible_spaces,
             std::string(what) + ": " + a.describe() + " vs " + b.describe());
    }
}

} // namespace

HilbertSpec::HilbertSpec(std::vector<Subsystem> parts) : parts_(std::move(parts)) {
    if (parts_.empty()) {
        fail(ErrorCode::invalid_dimension, "empty subsystem list");
    }
    for (const auto& p : parts_) {
        if (p.dim < 2) {
            fail(ErrorCode::invalid_dimension,
                 "subsystem '" + p.label + "' has dim " + std::to_string(p.dim) +
                     " (need >= 2)");
        }
        if (p.label.empty()) {
            fail(ErrorCode::invalid_dimension, "subsystem with empty label");
        }
    }
    for (size_t i = 0; i < parts_.size(); ++i) {
        for (size_t j = i + 1; j < parts_.size(); ++j) {
            if (parts_[i].label == parts_[j].label) {
                fail(ErrorCode::invalid_dimension,
                     "duplicate subsystem label '" + parts_[i].label + "'");
            }
        }
    }
    total_dim_ = 1;
    for (const auto& p : parts_) total_dim_ *= p.dim;
    strides_.assign(parts_.size(), 1);
    int acc = total_dim_;
    for (size_t i = 0; i < parts_.size(); ++i) {
        acc /= parts_[i].dim;
        strides_[i] = acc;
    }
}

HilbertSpec HilbertSpec::qubit_modes(int qubit_levels, int dim_a, int dim_b) {
    return HilbertSpec({{"qubit", qubit_levels}, {"mode_a", dim_a}, {"mode_b", dim_b}});
}

HilbertSpec HilbertSpec::modes_only(int dim_a, int dim_b) {
    return HilbertSpec({{"mode_a", dim_a}, {"mode_b", dim_b}});
}

HilbertSpec HilbertSpec::single(const std::string& label, int dim) {
    return HilbertSpec({{label, dim}});
}

bool HilbertSpec::has(const std::string& label) const {
    for (const auto& p : parts_) {
        if (p.label == label) return true;
    }
    return false;
}

int HilbertSpec::index_of(const std::string& label) const {
    for (size_t i = 0; i < parts_.size(); ++i) {
        if (parts_[i].label == label) return static_cast<int>(i);
    }
    fail(ErrorCode::unknown_subsystem, "no subsystem '" + label + "' in " + describe());
}

int HilbertSpec::dim_of(const std::string& label) const {
    return parts_[index_of(label)].dim;
}

int HilbertSpec::stride_of(const std::string& label) const {
    return strides_[index_of(label)];
}

int HilbertSpec::flat_index(const std::vector<int>& levels) const {
    if (levels.size() != parts_.size()) {
        fail(ErrorCode::invalid_state,
             "expected " + std::to_string(parts_.size()) + " levels, got " +
                 std::to_string(levels.size()));
    }
    int idx = 0;
    for (size_t i = 0; i < parts_.size(); ++i) {
        if (levels[i] < 0 || levels[i] >= parts_[i].dim) {
            fail(ErrorCode::invalid_state,
                 "level " + std::to_string(levels[i]) + " out of range for '" +
                     parts_[i].label + "' (dim " + std::to_string(parts_[i].dim) + ")");
        }
        idx += levels[i] * strides_[i];
    }
    return idx;
}

bool HilbertSpec::operator==(const HilbertSpec& other) const {
    if (parts_.size() != other.parts_.size()) return false;
    for (size_t i = 0; i < parts_.size(); ++i) {
        if (parts_[i].label != other.parts_[i].label) return false;
        if (parts_[i].dim != other.parts_[i].dim) return false;
    }
    return true;
}

std::string HilbertSpec::describe() const {
    std::ostringstream os;
    for (size_t i = 0; i < parts_.size(); ++i) {
        if (i) os << " x ";
        os << parts_[i].label << "(" << parts_[i].dim << ")";
    }
    return os.str();
}

void KetState::normalize() {
    double n = amp.norm();
    if (n <= 0.0) {
        fail(ErrorCode::invalid_state, "cannot normalize zero vector");
    }
    amp /= n;
}

double DensityOperator::hermiticity_defect() const {
    return (rho - rho.adjoint()).norm();
}

double DensityOperator::min_eigenvalue() const {
    DenseMat sym = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<DenseMat> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

const char* atom_op_name(AtomOp kind) {
    switch (kind) {
    case AtomOp::sigma_z:    return "sigma_z";
    case AtomOp::sigma_gg:   return "sigma_gg";
    case AtomOp::sigma_ee:   return "sigma_ee";
    case AtomOp::sigma_ff:   return "sigma_ff";
    case AtomOp::sigma_eg:   return "sigma_eg";
    case AtomOp::sigma_ge:   return "sigma_ge";
    case AtomOp::sigma_fe:   return "sigma_fe";
    case AtomOp::sigma_ef:   return "sigma_ef";
    case AtomOp::proj_plus:  return "proj_plus";
    case AtomOp::proj_minus: return "proj_minus";
    }
    return "unknown";
}

OperatorMatrix annihilation_op(int dim, const std::string& label) {
    if (dim < 2) {
        fail(ErrorCode::invalid_dimension,
             "annihilation operator needs dim >= 2, got " + std::to_string(dim));
    }
    SparseMat m(dim, dim);
    std::vector<Eigen::Triplet<Complex>> trips;
    trips.reserve(dim - 1);
    for (int n = 1; n < dim; ++n) {
        trips.emplace_back(n - 1, n, Complex(std::sqrt(double(n)), 0.0));
    }
    m.setFromTriplets(trips.begin(), trips.end());
    return {HilbertSpec::single(label, dim), std::move(m), false};
}

OperatorMatrix atom_op(int levels, AtomOp kind, const std::string& label) {
    if (levels != 2 && levels != 3) {
        fail(ErrorCode::invalid_dimension,
             "atom must have 2 or 3 levels, got " + std::to_string(levels));
    }
    bool needs_f = kind == AtomOp::sigma_ff || kind == AtomOp::sigma_fe ||
                   kind == AtomOp::sigma_ef;
    if (needs_f && levels < 3) {
        fail(ErrorCode::level_mismatch,
             std::string(atom_op_name(kind)) + " requires a third level");
    }
    std::vector<Eigen::Triplet<Complex>> trips;
    bool hermitian = false;
    auto one = [&](int r, int c, double v) { trips.emplace_back(r, c, Complex(v, 0.0)); };
    switch (kind) {
    case AtomOp::sigma_z:
        // |e><e| - |g><g|; the f level (if present) is untouched.
        one(0, 0, -1.0);
        one(1, 1, 1.0);
        hermitian = true;
        break;
    case AtomOp::sigma_gg: one(0, 0, 1.0); hermitian = true; break;
    case AtomOp::sigma_ee: one(1, 1, 1.0); hermitian = true; break;
    case AtomOp::sigma_ff: one(2, 2, 1.0); hermitian = true; break;
    case AtomOp::sigma_eg: one(1, 0, 1.0); break;
    case AtomOp::sigma_ge: one(0, 1, 1.0); break;
    case AtomOp::sigma_fe: one(2, 1, 1.0); break;
    case AtomOp::sigma_ef: one(1, 2, 1.0); break;
    case AtomOp::proj_plus:
        one(0, 0, 0.5); one(0, 1, 0.5); one(1, 0, 0.5); one(1, 1, 0.5);
        hermitian = true;
        break;
    case AtomOp::proj_minus:
        one(0, 0, 0.5); one(0, 1, -0.5); one(1, 0, -0.5); one(1, 1, 0.5);
        hermitian = true;
        break;
    }
    SparseMat m(levels, levels);
    m.setFromTriplets(trips.begin(), trips.end());
    return {HilbertSpec::single(label, levels), std::move(m), hermitian};
}

OperatorMatrix identity_op(const HilbertSpec& space) {
    SparseMat m(space.total_dim(), space.total_dim());
    m.setIdentity();
    return {space, std::move(m), true};
}

OperatorMatrix embed(const OperatorMatrix& op, const HilbertSpec& space,
                     const std::string& label) {
    if (op.space.subsystem_count() != 1) {
        fail(ErrorCode::incompatible_spaces,
             "embed expects a single-subsystem operator, got " + op.space.describe());
    }
    int slot_dim = space.dim_of(label);
    if (op.dim() != slot_dim) {
        fail(ErrorCode::incompatible_spaces,
             "operator dim " + std::to_string(op.dim()) + " does not match '" + label +
                 "' dim " + std::to_string(slot_dim));
    }
    int stride = space.stride_of(label);
    int outer = space.total_dim() / (slot_dim * stride);

    std::vector<Eigen::Triplet<Complex>> trips;
    trips.reserve(static_cast<size_t>(op.mat.nonZeros()) * outer * stride);
    for (int k = 0; k < op.mat.outerSize(); ++k) {
        for (SparseMat::InnerIterator it(op.mat, k); it; ++it) {
            for (int o = 0; o < outer; ++o) {
                int row_base = (o * slot_dim + static_cast<int>(it.row())) * stride;
                int col_base = (o * slot_dim + static_cast<int>(it.col())) * stride;
                for (int inn = 0; inn < stride; ++inn) {
                    trips.emplace_back(row_base + inn, col_base + inn, it.value());
                }
            }
        }
    }
    SparseMat m(space.total_dim(), space.total_dim());
    m.setFromTriplets(trips.begin(), trips.end());
    return {space, std::move(m), op.hermitian_hint};
}

OperatorMatrix tensor(const OperatorMatrix& lhs, const OperatorMatrix& rhs) {
    std::vector<HilbertSpec::Subsystem> parts;
    for (int i = 0; i < lhs.space.subsystem_count(); ++i) parts.push_back(lhs.space.part(i));
    for (int i = 0; i < rhs.space.subsystem_count(); ++i) parts.push_back(rhs.space.part(i));
    HilbertSpec joined(std::move(parts));

    int rd = rhs.dim();
    std::vector<Eigen::Triplet<Complex>> trips;
    trips.reserve(static_cast<size_t>(lhs.mat.nonZeros()) * rhs.mat.nonZeros());
    for (int k = 0; k < lhs.mat.outerSize(); ++k) {
        for (SparseMat::InnerIterator li(lhs.mat, k); li; ++li) {
            for (int k2 = 0; k2 < rhs.mat.outerSize(); ++k2) {
                for (SparseMat::InnerIterator ri(rhs.mat, k2); ri; ++ri) {
                    trips.emplace_back(static_cast<int>(li.row()) * rd + static_cast<int>(ri.row()),
                                       static_cast<int>(li.col()) * rd + static_cast<int>(ri.col()),
                                       li.value() * ri.value());
                }
            }
        }
    }
    SparseMat m(joined.total_dim(), joined.total_dim());
    m.setFromTriplets(trips.begin(), trips.end());
    return {joined, std::move(m), lhs.hermitian_hint && rhs.hermitian_hint};
}

OperatorMatrix adjoint(const OperatorMatrix& op) {
    SparseMat m = op.mat.adjoint();
    return {op.space, std::move(m), op.hermitian_hint};
}

OperatorMatrix operator+(const OperatorMatrix& lhs, const OperatorMatrix& rhs) {
    require_same_space(lhs.space, rhs.space, "operator+");
    SparseMat m = lhs.mat + rhs.mat;
    return {lhs.space, std::move(m), lhs.hermitian_hint && rhs.hermitian_hint};
}

OperatorMatrix operator-(const OperatorMatrix& lhs, const OperatorMatrix& rhs) {
    require_same_space(lhs.space, rhs.space, "operator-");
    SparseMat m = lhs.mat - rhs.mat;
    return {lhs.space, std::move(m), lhs.hermitian_hint && rhs.hermitian_hint};
}

OperatorMatrix operator*(const OperatorMatrix& lhs, const OperatorMatrix& rhs) {
    require_same_space(lhs.space, rhs.space, "operator*");
    SparseMat m = lhs.mat * rhs.mat;
    return {lhs.space, std::move(m), false};
}

OperatorMatrix operator*(Complex scale, const OperatorMatrix& op) {
    SparseMat m = scale * op.mat;
    bool herm = op.hermitian_hint && scale.imag() == 0.0;
    return {op.space, std::move(m), herm};
}

KetState vacuum_state(const HilbertSpec& space) {
    KetState psi{space, DenseVec::Zero(space.total_dim())};
    psi.amp[0] = Complex(1.0, 0.0);
    return psi;
}

KetState basis_state(const HilbertSpec& space, const std::vector<int>& levels) {
    KetState psi{space, DenseVec::Zero(space.total_dim())};
    psi.amp[space.flat_index(levels)] = Complex(1.0, 0.0);
    return psi;
}

DensityOperator density_from_ket(const KetState& psi) {
    return {psi.space, psi.amp * psi.amp.adjoint()};
}

KetState apply(const OperatorMatrix& op, const KetState& psi) {
    require_same_space(op.space, psi.space, "apply");
    return {psi.space, op.mat * psi.amp};
}

namespace {

// Expectations of operators marked Hermitian must come out real; a sizable
// imaginary part means the hint (or the state) is wrong.
Complex checked_expectation(Complex value, bool hermitian_hint) {
    if (hermitian_hint && std::abs(value.imag()) > 1e-10) {
        fail(ErrorCode::invalid_state,
             "hermitian expectation has imaginary part " + std::to_string(value.imag()));
    }
    return value;
}

} // namespace

Complex expectation(const OperatorMatrix& op, const KetState& psi) {
    require_same_space(op.space, psi.space, "expectation");
    return checked_expectation(psi.amp.dot(op.mat * psi.amp), op.hermitian_hint);
}

Complex expectation(const OperatorMatrix& op, const DensityOperator& rho) {
    require_same_space(op.space, rho.space, "expectation");
    // Tr(O rho) = sum_ij O_ij rho_ji over the sparse entries of O.
    Complex acc(0.0, 0.0);
    for (int k = 0; k < op.mat.outerSize(); ++k) {
        for (SparseMat::InnerIterator it(op.mat, k); it; ++it) {
            acc += it.value() * rho.rho(it.col(), it.row());
        }
    }
    return checked_expectation(acc, op.hermitian_hint);
}

namespace {

// Index bookkeeping shared by the partial-trace overloads: for each flat index
// of the full space, its projection onto the kept subsystems (mixed-radix over
// kept parts, original order) and onto the traced ones.
struct TraceMap {
    HilbertSpec reduced;
    int kept_dim = 1;
    int traced_dim = 1;
    std::vector<int> kept_of;
    std::vector<int> traced_of;
};

TraceMap build_trace_map(const HilbertSpec& space, const std::vector<std::string>& keep) {
    std::vector<bool> kept(space.subsystem_count(), false);
    for (const auto& label : keep) {
        int idx = space.index_of(label);
        if (kept[idx]) {
            fail(ErrorCode::unknown_subsystem, "subsystem '" + label + "' listed twice");
        }
        kept[idx] = true;
    }
    std::vector<HilbertSpec::Subsystem> parts;
    for (int i = 0; i < space.subsystem_count(); ++i) {
        if (kept[i]) parts.push_back(space.part(i));
    }
    if (parts.empty()) {
        fail(ErrorCode::unknown_subsystem, "partial trace must keep at least one subsystem");
    }

    TraceMap tm;
    tm.reduced = HilbertSpec(std::move(parts));
    for (int i = 0; i < space.subsystem_count(); ++i) {
        (kept[i] ? tm.kept_dim : tm.traced_dim) *= space.part(i).dim;
    }
    int d = space.total_dim();
    tm.kept_of.resize(d);
    tm.traced_of.resize(d);
    for (int flat = 0; flat < d; ++flat) {
        int k = 0, t = 0;
        int rem = flat;
        for (int i = 0; i < space.subsystem_count(); ++i) {
            int level = rem / space.stride_at(i);
            rem -= level * space.stride_at(i);
            if (kept[i]) {
                k = k * space.part(i).dim + level;
            } else {
                t = t * space.part(i).dim + level;
            }
        }
        tm.kept_of[flat] = k;
        tm.traced_of[flat] = t;
    }
    return tm;
}

} // namespace

DensityOperator partial_trace(const DensityOperator& rho,
                              const std::vector<std::string>& keep) {
    TraceMap tm = build_trace_map(rho.space, keep);
    // flat index grouped by traced value: slot[t * kept_dim + k]
    std::vector<int> slot(static_cast<size_t>(tm.kept_dim) * tm.traced_dim);
    for (int flat = 0; flat < rho.dim(); ++flat) {
        slot[static_cast<size_t>(tm.traced_of[flat]) * tm.kept_dim + tm.kept_of[flat]] = flat;
    }
    DenseMat out = DenseMat::Zero(tm.kept_dim, tm.kept_dim);
    for (int t = 0; t < tm.traced_dim; ++t) {
        const int* base = slot.data() + static_cast<size_t>(t) * tm.kept_dim;
        for (int r = 0; r < tm.kept_dim; ++r) {
            for (int c = 0; c < tm.kept_dim; ++c) {
                out(r, c) += rho.rho(base[r], base[c]);
            }
        }
    }
    return {tm.reduced, std::move(out)};
}

DensityOperator partial_trace(const KetState& psi, const std::vector<std::string>& keep) {
    TraceMap tm = build_trace_map(psi.space, keep);
    std::vector<int> slot(static_cast<size_t>(tm.kept_dim) * tm.traced_dim);
    for (int flat = 0; flat < psi.dim(); ++flat) {
        slot[static_cast<size_t>(tm.traced_of[flat]) * tm.kept_dim + tm.kept_of[flat]] = flat;
    }
    DenseMat out = DenseMat::Zero(tm.kept_dim, tm.kept_dim);
    DenseVec v(tm.kept_dim);
    for (int t = 0; t < tm.traced_dim; ++t) {
        const int* base = slot.data() + static_cast<size_t>(t) * tm.kept_dim;
        for (int r = 0; r < tm.kept_dim; ++r) v[r] = psi.amp[base[r]];
        out.noalias() += v * v.adjoint();
    }
    return {tm.reduced, std::move(out)};
}

OperatorMatrix contract_subsystem(const OperatorMatrix& op, const std::string& label,
                                  const DenseVec& bra, const DenseVec& ket) {
    int slot = op.space.index_of(label);
    int slot_dim = op.space.part(slot).dim;
    if (bra.size() != slot_dim || ket.size() != slot_dim) {
        fail(ErrorCode::incompatible_spaces,
             "contract vectors must have dim " + std::to_string(slot_dim));
    }
    int stride = op.space.stride_at(slot);

    std::vector<HilbertSpec::Subsystem> parts;
    for (int i = 0; i < op.space.subsystem_count(); ++i) {
        if (i != slot) parts.push_back(op.space.part(i));
    }
    if (parts.empty()) {
        fail(ErrorCode::incompatible_spaces, "cannot contract the only subsystem");
    }
    HilbertSpec reduced(std::move(parts));

    auto split = [&](int flat, int& outer, int& level, int& inner) {
        inner = flat % stride;
        int rest = flat / stride;
        level = rest % slot_dim;
        outer = rest / slot_dim;
    };
    std::vector<Eigen::Triplet<Complex>> trips;
    trips.reserve(static_cast<size_t>(op.mat.nonZeros()));
    for (int k = 0; k < op.mat.outerSize(); ++k) {
        for (SparseMat::InnerIterator it(op.mat, k); it; ++it) {
            int ro, rl, ri, co, cl, ci;
            split(static_cast<int>(it.row()), ro, rl, ri);
            split(static_cast<int>(it.col()), co, cl, ci);
            Complex w = std::conj(bra[rl]) * ket[cl] * it.value();
            if (w == Complex(0.0, 0.0)) continue;
            trips.emplace_back(ro * stride + ri, co * stride + ci, w);
        }
    }
    SparseMat m(reduced.total_dim(), reduced.total_dim());
    m.setFromTriplets(trips.begin(), trips.end());
    return {reduced, std::move(m), false};
}

namespace {

double level_tail_weight(const HilbertSpec& space, const std::string& label, int count,
                         const std::function<double(int)>& weight_of) {
    int slot_dim = space.dim_of(label);
    int stride = space.stride_of(label);
    if (count < 1 || count > slot_dim) {
        fail(ErrorCode::invalid_dimension,
             "top-level count " + std::to_string(count) + " out of range for '" + label + "'");
    }
    int cutoff = slot_dim - count;
    double acc = 0.0;
    for (int flat = 0; flat < space.total_dim(); ++flat) {
        int level = (flat / stride) % slot_dim;
        if (level >= cutoff) acc += weight_of(flat);
    }
    return acc;
}

} // namespace

double top_level_population(const KetState& psi, const std::string& label, int count) {
    return level_tail_weight(psi.space, label, count,
                             [&](int i) { return std::norm(psi.amp[i]); });
}

double top_level_population(const DensityOperator& rho, const std::string& label, int count) {
    return level_tail_weight(rho.space, label, count,
                             [&](int i) { return rho.rho(i, i).real(); });
}

} // namespace tmsq
