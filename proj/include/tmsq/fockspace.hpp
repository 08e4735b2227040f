#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "tmsq/errors.hpp"

namespace tmsq {

using Complex = std::complex<double>;
using SparseMat = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;
using DenseMat = Eigen::MatrixXcd;
using DenseVec = Eigen::VectorXcd;

// Ordered list of labelled subsystems. The first subsystem owns the slowest
// varying index of the composite basis: for {qubit, mode_a, mode_b} the flat
// index is (q * dim_a + n_a) * dim_b + n_b.
class HilbertSpec {
public:
    struct Subsystem {
        std::string label;
        int dim = 0;
    };

    HilbertSpec() = default;
    explicit HilbertSpec(std::vector<Subsystem> parts);

    // Conventional layouts used by the model layer.
    static HilbertSpec qubit_modes(int qubit_levels, int dim_a, int dim_b);
    static HilbertSpec modes_only(int dim_a, int dim_b);
    static HilbertSpec single(const std::string& label, int dim);

    int total_dim() const { return total_dim_; }
    int subsystem_count() const { return static_cast<int>(parts_.size()); }
    const Subsystem& part(int i) const { return parts_[i]; }

    bool has(const std::string& label) const;
    int index_of(const std::string& label) const; // throws unknown_subsystem
    int dim_of(const std::string& label) const;
    // Product of the dimensions of all later subsystems; incrementing the
    // subsystem level by one moves the flat index by this much.
    int stride_of(const std::string& label) const;
    int stride_at(int index) const { return strides_[index]; }

    // Flat index from per-subsystem levels (one entry per subsystem, in order).
    int flat_index(const std::vector<int>& levels) const;

    bool operator==(const HilbertSpec& other) const;
    bool operator!=(const HilbertSpec& other) const { return !(*this == other); }

    std::string describe() const;

private:
    std::vector<Subsystem> parts_;
    std::vector<int> strides_;
    int total_dim_ = 0;
};

// Sparse operator tied to a HilbertSpec. hermitian_hint is advisory: builders
// set it when the operator is Hermitian by construction so downstream code can
// skip symmetrisation checks.
struct OperatorMatrix {
    HilbertSpec space;
    SparseMat mat;
    bool hermitian_hint = false;

    int dim() const { return space.total_dim(); }
};

struct KetState {
    HilbertSpec space;
    DenseVec amp;

    int dim() const { return space.total_dim(); }
    double norm() const { return amp.norm(); }
    void normalize();
};

struct DensityOperator {
    HilbertSpec space;
    DenseMat rho;

    int dim() const { return space.total_dim(); }
    double trace_real() const { return rho.trace().real(); }
    double hermiticity_defect() const;
    double min_eigenvalue() const; // self-adjoint eigensolver, O(d^3)
};

// Three-level atom operators in the {g, e, f} basis (g=0, e=1, f=2). With
// levels == 2 the f row/column is absent and f-flavoured kinds are rejected.
enum class AtomOp {
    sigma_z,    // |e><e| - |g><g|
    sigma_gg,
    sigma_ee,
    sigma_ff,
    sigma_eg,   // |e><g|
    sigma_ge,   // |g><e|
    sigma_fe,   // |f><e|
    sigma_ef,   // |e><f|
    proj_plus,  // |+><+|, |+> = (|g>+|e>)/sqrt(2)
    proj_minus, // |-><-|, |-> = (|g>-|e>)/sqrt(2)
};

const char* atom_op_name(AtomOp kind);

// --- operator constructors -------------------------------------------------

// Lowering operator a on a single bosonic mode of the given truncation,
// <n-1|a|n> = sqrt(n). dim < 2 is rejected (no quanta to lower).
OperatorMatrix annihilation_op(int dim, const std::string& label = "mode");

OperatorMatrix atom_op(int levels, AtomOp kind, const std::string& label = "qubit");

OperatorMatrix identity_op(const HilbertSpec& space);

// Lift a single-subsystem operator onto `space` at the slot named `label`
// (identity on everything else). The operator's dimension must match.
OperatorMatrix embed(const OperatorMatrix& op, const HilbertSpec& space,
                     const std::string& label);

// Kronecker product; the result lives on the concatenated spec.
OperatorMatrix tensor(const OperatorMatrix& lhs, const OperatorMatrix& rhs);

OperatorMatrix adjoint(const OperatorMatrix& op);

// Same-space algebra. Throws incompatible_spaces on mismatch.
OperatorMatrix operator+(const OperatorMatrix& lhs, const OperatorMatrix& rhs);
OperatorMatrix operator-(const OperatorMatrix& lhs, const OperatorMatrix& rhs);
OperatorMatrix operator*(const OperatorMatrix& lhs, const OperatorMatrix& rhs);
OperatorMatrix operator*(Complex scale, const OperatorMatrix& op);

// --- states ----------------------------------------------------------------

KetState vacuum_state(const HilbertSpec& space);
// One level per subsystem, in spec order.
KetState basis_state(const HilbertSpec& space, const std::vector<int>& levels);
DensityOperator density_from_ket(const KetState& psi);

// --- contractions ----------------------------------------------------------

KetState apply(const OperatorMatrix& op, const KetState& psi);

Complex expectation(const OperatorMatrix& op, const KetState& psi);
Complex expectation(const OperatorMatrix& op, const DensityOperator& rho);

// Reduced density operator over the listed subsystems (result keeps the
// original spec order regardless of the order given here).
DensityOperator partial_trace(const DensityOperator& rho,
                              const std::vector<std::string>& keep);
DensityOperator partial_trace(const KetState& psi,
                              const std::vector<std::string>& keep);

// <bra| op |ket> taken over one subsystem only: contracts that slot with the
// given single-subsystem vectors and returns an operator on the remaining
// space. Used to project qubit-conditioned mode dynamics.
OperatorMatrix contract_subsystem(const OperatorMatrix& op, const std::string& label,
                                  const DenseVec& bra, const DenseVec& ket);

// Total population of the highest `count` levels of one subsystem; the
// truncation-health number reported alongside every run.
double top_level_population(const KetState& psi, const std::string& label, int count);
double top_level_population(const DensityOperator& rho, const std::string& label, int count);

} // namespace tmsq
