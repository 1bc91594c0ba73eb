#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "coefrec/sparse.hpp"

namespace coefrec {

using Point = std::array<double, 2>;  // y is unused (0) on the unit interval

/// Per-element constant data of a P1 simplex: measure and barycentric gradients.
struct ElementGeometry {
    double measure = 0.0;
    std::array<std::array<double, 2>, 3> grad{};  // grad[a] = gradient of the a-th barycentric function
};

/// Structured simplicial mesh of (0,1) or (0,1)^2.
///
/// Nodes are ordered lexicographically (x fastest), so node (i, j) has index
/// j*(n+1) + i. In 2-D every grid square [i,i+1]x[j,j+1] is split along its
/// lower-left to upper-right diagonal into (v00, v10, v11) and (v00, v11, v01).
/// Meshes are immutable and shared through `MeshPtr`.
class Mesh {
public:
    int dim() const { return dim_; }
    int n() const { return n_; }
    double h() const { return 1.0 / n_; }
    int vertices_per_element() const { return dim_ + 1; }

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t element_count() const { return elements_.size(); }
    std::size_t interior_count() const { return interior_nodes_.size(); }

    const std::vector<Point>& nodes() const { return nodes_; }
    const Point& node(std::size_t i) const { return nodes_[i]; }
    std::span<const int> element(std::size_t e) const {
        return {elements_[e].data(), static_cast<std::size_t>(dim_ + 1)};
    }
    const ElementGeometry& geometry(std::size_t e) const { return geometry_[e]; }
    Point barycenter(std::size_t e) const;

    bool is_boundary(std::size_t node) const { return boundary_[node] != 0; }
    const std::vector<std::size_t>& interior_nodes() const { return interior_nodes_; }
    /// Interior numbering of a node, or npos for boundary nodes.
    std::size_t interior_index(std::size_t node) const { return interior_index_[node]; }

    std::size_t node_index(int i, int j = 0) const {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(n_ + 1) + static_cast<std::size_t>(i);
    }

    /// Full (all-node) pattern shared by every assembled operator on this mesh.
    const std::shared_ptr<const SparsityPattern>& pattern() const { return pattern_; }
    /// Interior-interior pattern used after Dirichlet elimination.
    const std::shared_ptr<const SparsityPattern>& interior_pattern() const { return interior_pattern_; }
    /// slot(e, a, b): position in the full value array of the (a, b) local entry of element e.
    std::size_t slot(std::size_t e, int a, int b) const {
        const int m = dim_ + 1;
        return element_slots_[e * static_cast<std::size_t>(m * m) + static_cast<std::size_t>(a * m + b)];
    }
    /// For each interior-pattern entry, the position of the same (i, j) in the full pattern.
    const std::vector<std::size_t>& interior_gather() const { return interior_gather_; }

    /// Evaluates a nodal P1 field at an arbitrary point of the closed domain.
    double evaluate(std::span<const double> values, const Point& x) const;

    /// Distance from x to the boundary of the unit interval / square.
    double distance_to_boundary(const Point& x) const;

    friend std::shared_ptr<const Mesh> build_mesh(int dim, int n);

private:
    Mesh() = default;

    int dim_ = 1;
    int n_ = 1;
    std::vector<Point> nodes_;
    std::vector<std::array<int, 3>> elements_;
    std::vector<ElementGeometry> geometry_;
    std::vector<unsigned char> boundary_;
    std::vector<std::size_t> interior_nodes_;
    std::vector<std::size_t> interior_index_;
    std::shared_ptr<const SparsityPattern> pattern_;
    std::shared_ptr<const SparsityPattern> interior_pattern_;
    std::vector<std::size_t> element_slots_;
    std::vector<std::size_t> interior_gather_;
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Builds the structured mesh with n subdivisions per axis; dim must be 1 or 2 and n >= 1.
MeshPtr build_mesh(int dim, int n);

/// True when one mesh is a power-of-two refinement of the other (same dimension).
bool meshes_nested(const Mesh& a, const Mesh& b);

/// Continuous piecewise-linear function given by its nodal values.
class GridFunction {
public:
    GridFunction() = default;
    explicit GridFunction(MeshPtr mesh, double fill = 0.0);
    GridFunction(MeshPtr mesh, std::vector<double> values);

    const MeshPtr& mesh_ptr() const { return mesh_; }
    const Mesh& mesh() const { return *mesh_; }
    std::size_t size() const { return values_.size(); }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    bool all_finite() const;
    double min() const;
    double max() const;
    double max_abs() const;

    GridFunction& operator+=(const GridFunction& other);
    GridFunction& operator-=(const GridFunction& other);
    GridFunction& operator*=(double c);

private:
    MeshPtr mesh_;
    std::vector<double> values_;
};

GridFunction operator+(GridFunction a, const GridFunction& b);
GridFunction operator-(GridFunction a, const GridFunction& b);
GridFunction operator*(double c, GridFunction a);

/// Throws MeshMismatch unless both functions live on the same mesh object (or identical meshes).
void require_same_mesh(const GridFunction& a, const GridFunction& b, const char* context);
bool same_mesh(const Mesh& a, const Mesh& b);

/// Closed interval used for admissible-set clamping.
struct Box {
    double lower = 0.0;
    double upper = 0.0;

    Box() = default;
    Box(double lo, double hi);
    double midpoint() const { return 0.5 * (lower + upper); }
    bool contains(double v) const { return v >= lower && v <= upper; }
};

using ScalarField = std::function<double(const Point&)>;

}  // namespace coefrec
