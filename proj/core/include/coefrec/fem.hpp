#pragma once

#include <span>
#include <vector>

#include "coefrec/mesh.hpp"
#include "coefrec/solver.hpp"
#include "coefrec/sparse.hpp"

namespace coefrec {

/// int over a simplex of prod_a lambda_a^m_a, divided by the simplex measure
/// (multiplicities indexed by local vertex).
double simplex_monomial_weight(int dim, std::span<const int> multiplicities);

/// Nodal interpolant of f. Throws InvalidArgument if f is not finite at some node.
GridFunction interpolate(const ScalarField& f, const MeshPtr& mesh);

/// Full-node stiffness matrix with entries int q grad(phi_i).grad(phi_j).
SparseSymMatrix assemble_stiffness(const GridFunction& q);

/// Full-node mass matrix with entries int sigma phi_i phi_j, integrated exactly for P1 sigma.
SparseSymMatrix assemble_mass(const GridFunction& sigma);

/// Unweighted mass and stiffness (sigma = 1, q = 1).
SparseSymMatrix assemble_mass(const MeshPtr& mesh);
SparseSymMatrix assemble_stiffness(const MeshPtr& mesh);

/// Vector of int f phi_i over all nodes.
std::vector<double> load_vector(const GridFunction& f);

/// Interior block of a full-node operator, stored on the mesh's interior pattern.
SparseSymMatrix restrict_to_interior(const SparseSymMatrix& full, const Mesh& mesh);

/// Right-hand side of a Dirichlet problem after eliminating boundary unknowns.
struct LoadAndLift {
    std::vector<double> rhs;  // indexed by interior numbering
    GridFunction lift;        // g on boundary nodes, 0 inside
};

LoadAndLift assemble_load_and_lift(const GridFunction& f, const GridFunction& g, const SparseSymMatrix& full);

/// Same elimination with an already assembled full-node load vector.
LoadAndLift lift_load(std::span<const double> load, const GridFunction& g, const SparseSymMatrix& full);

/// Scatters interior values into a full-node function whose boundary values come from `lift`.
GridFunction expand_interior(std::span<const double> interior, const GridFunction& lift);
std::vector<double> gather_interior(std::span<const double> full, const Mesh& mesh);

enum class NormKind { L2, H1semi, H1, Linf };

/// Exact norm of a P1 function.
double measure(NormKind kind, const GridFunction& u);

/// Exact L2 inner product of two P1 functions on the same mesh.
double inner_l2(const GridFunction& a, const GridFunction& b);

/// L2 norm over the elements whose vertices all lie at distance >= min_distance from the boundary.
double l2_norm_away_from_boundary(const GridFunction& u, double min_distance);

/// Relative L2 error ||approx - truth|| / ||truth||, with both on the same mesh.
double relative_l2_error(const GridFunction& approx, const GridFunction& truth);

/// Nodal evaluation of u at the nodes of a nested target mesh (refinement or coarsening).
GridFunction transfer(const GridFunction& u, const MeshPtr& target);

/// Transpose of coarse-to-fine transfer: maps a fine-node vector to the coarse mesh.
std::vector<double> restrict_dual(std::span<const double> fine, const Mesh& fine_mesh, const Mesh& coarse_mesh);

/// L2 projection of a function on a nested finer (or equal) mesh onto the target space
/// with zero boundary values.
GridFunction project_P_h(const GridFunction& f, const MeshPtr& target, const SolveOptions& options = {});

/// L2 projection onto the full P1 space of the target mesh (boundary values free).
GridFunction project_full(const GridFunction& f, const MeshPtr& target, const SolveOptions& options = {});

GridFunction clamp_to_box(const GridFunction& u, const Box& box);

/// Number of nodes where u lies on (or beyond) a face of the box.
std::size_t count_at_bounds(const GridFunction& u, const Box& box);

}  // namespace coefrec
