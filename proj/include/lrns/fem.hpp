#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lrns/matrix.hpp"
#include "lrns/parallel.hpp"

namespace lrns {

/// Uniform bilinear-quad tessellation of the unit square: n cells per side,
/// (n+1)^2 nodes in row-major order, cell corners counter-clockwise.
struct StructuredMesh {
    std::size_t cells_per_side = 0;
    double h = 0.0;
    std::vector<double> node_x, node_y;

    std::size_t node_count() const { return (cells_per_side + 1) * (cells_per_side + 1); }
    std::size_t cell_count() const { return cells_per_side * cells_per_side; }

    std::size_t node_index(std::size_t ix, std::size_t iy) const {
        return iy * (cells_per_side + 1) + ix;
    }

    std::array<std::size_t, 4> cell_nodes(std::size_t c) const {
        const std::size_t cx = c % cells_per_side;
        const std::size_t cy = c / cells_per_side;
        return {node_index(cx, cy), node_index(cx + 1, cy), node_index(cx + 1, cy + 1),
                node_index(cx, cy + 1)};
    }
};

inline StructuredMesh build_mesh(std::size_t n) {
    detail::require(n >= 1, "build_mesh: need at least one cell per side");
    StructuredMesh mesh;
    mesh.cells_per_side = n;
    mesh.h = 1.0 / static_cast<double>(n);
    const std::size_t nn = n + 1;
    mesh.node_x.resize(nn * nn);
    mesh.node_y.resize(nn * nn);
    for (std::size_t iy = 0; iy < nn; ++iy)
        for (std::size_t ix = 0; ix < nn; ++ix) {
            mesh.node_x[iy * nn + ix] = static_cast<double>(ix) * mesh.h;
            mesh.node_y[iy * nn + ix] = static_cast<double>(iy) * mesh.h;
        }
    return mesh;
}

/// Interior/boundary split; boundary nodes carry a coordinate in {0, 1}.
struct DofMap {
    std::vector<std::size_t> interior;
    std::vector<std::size_t> boundary;
    std::vector<std::ptrdiff_t> interior_of_node;  // -1 for boundary nodes

    std::size_t interior_count() const { return interior.size(); }
};

inline DofMap build_dofmap(const StructuredMesh& mesh) {
    DofMap map;
    const std::size_t nn = mesh.cells_per_side + 1;
    map.interior_of_node.assign(nn * nn, -1);
    for (std::size_t iy = 0; iy < nn; ++iy)
        for (std::size_t ix = 0; ix < nn; ++ix) {
            const std::size_t node = mesh.node_index(ix, iy);
            const bool bnd = ix == 0 || iy == 0 || ix == nn - 1 || iy == nn - 1;
            if (bnd) {
                map.boundary.push_back(node);
            } else {
                map.interior_of_node[node] = static_cast<std::ptrdiff_t>(map.interior.size());
                map.interior.push_back(node);
            }
        }
    return map;
}

/// Symmetric sparse matrix in CSR with sorted column indices per row.
struct SparseSymMatrix {
    std::size_t dim = 0;
    std::vector<std::size_t> row_offsets;  // dim + 1
    std::vector<std::size_t> col_index;
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const {
        for (std::size_t p = row_offsets[i]; p < row_offsets[i + 1]; ++p)
            if (col_index[p] == j) return values[p];
        return 0.0;
    }

    void add_at(std::size_t i, std::size_t j, double v) {
        for (std::size_t p = row_offsets[i]; p < row_offsets[i + 1]; ++p) {
            if (col_index[p] == j) {
                values[p] += v;
                return;
            }
        }
        throw std::runtime_error("SparseSymMatrix::add_at: entry outside the stencil");
    }

    void matvec_into(std::span<const double> x, std::span<double> y) const {
        for (std::size_t i = 0; i < dim; ++i) {
            double s = 0.0;
            for (std::size_t p = row_offsets[i]; p < row_offsets[i + 1]; ++p)
                s += values[p] * x[col_index[p]];
            y[i] = s;
        }
    }

    Vector matvec(std::span<const double> x) const {
        detail::require(x.size() == dim, "SparseSymMatrix::matvec: dimension mismatch");
        Vector y(dim);
        matvec_into(x, y);
        return y;
    }

    double sum_entries() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
};

/// C = S * D with sparse S and dense D, row-parallel.
inline DenseMatrix sparse_dense_multiply(const SparseSymMatrix& s, const DenseMatrix& d) {
    detail::require(s.dim == d.rows, "sparse_dense_multiply: inner dimensions differ");
    DenseMatrix c(s.dim, d.cols);
    parallel_for(0, s.dim, [&](std::size_t i) {
        double* ci = c.row(i);
        for (std::size_t p = s.row_offsets[i]; p < s.row_offsets[i + 1]; ++p) {
            const double v = s.values[p];
            const double* dk = d.row(s.col_index[p]);
            for (std::size_t j = 0; j < d.cols; ++j) ci[j] += v * dk[j];
        }
    });
    return c;
}

inline DenseMatrix densify(const SparseSymMatrix& s) {
    DenseMatrix d(s.dim, s.dim);
    for (std::size_t i = 0; i < s.dim; ++i)
        for (std::size_t p = s.row_offsets[i]; p < s.row_offsets[i + 1]; ++p)
            d(i, s.col_index[p]) = s.values[p];
    return d;
}

inline void densify_add_into(const SparseSymMatrix& s, DenseMatrix& d) {
    for (std::size_t i = 0; i < s.dim; ++i)
        for (std::size_t p = s.row_offsets[i]; p < s.row_offsets[i + 1]; ++p)
            d(i, s.col_index[p]) += s.values[p];
}

namespace detail {

/// CSR skeleton over the 9-node stencil of the structured grid.
inline SparseSymMatrix stencil_pattern(const StructuredMesh& mesh) {
    const std::size_t nn = mesh.cells_per_side + 1;
    SparseSymMatrix s;
    s.dim = nn * nn;
    s.row_offsets.assign(s.dim + 1, 0);
    for (std::size_t iy = 0; iy < nn; ++iy)
        for (std::size_t ix = 0; ix < nn; ++ix) {
            std::size_t count = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto jx = static_cast<std::ptrdiff_t>(ix) + dx;
                    const auto jy = static_cast<std::ptrdiff_t>(iy) + dy;
                    if (jx >= 0 && jy >= 0 && jx < static_cast<std::ptrdiff_t>(nn) &&
                        jy < static_cast<std::ptrdiff_t>(nn))
                        ++count;
                }
            s.row_offsets[mesh.node_index(ix, iy) + 1] = count;
        }
    for (std::size_t i = 0; i < s.dim; ++i) s.row_offsets[i + 1] += s.row_offsets[i];
    s.col_index.assign(s.row_offsets.back(), 0);
    s.values.assign(s.row_offsets.back(), 0.0);
    for (std::size_t iy = 0; iy < nn; ++iy)
        for (std::size_t ix = 0; ix < nn; ++ix) {
            std::size_t p = s.row_offsets[mesh.node_index(ix, iy)];
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto jx = static_cast<std::ptrdiff_t>(ix) + dx;
                    const auto jy = static_cast<std::ptrdiff_t>(iy) + dy;
                    if (jx >= 0 && jy >= 0 && jx < static_cast<std::ptrdiff_t>(nn) &&
                        jy < static_cast<std::ptrdiff_t>(nn))
                        s.col_index[p++] = mesh.node_index(static_cast<std::size_t>(jx),
                                                           static_cast<std::size_t>(jy));
                }
        }
    return s;
}

struct GaussRule {
    std::array<double, 3> points{-0.7745966692414834, 0.0, 0.7745966692414834};
    std::array<double, 3> weights{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
};

inline double shape(std::size_t a, double xi, double eta) {
    switch (a) {
        case 0: return 0.25 * (1.0 - xi) * (1.0 - eta);
        case 1: return 0.25 * (1.0 + xi) * (1.0 - eta);
        case 2: return 0.25 * (1.0 + xi) * (1.0 + eta);
        default: return 0.25 * (1.0 - xi) * (1.0 + eta);
    }
}

inline std::array<double, 2> shape_grad_ref(std::size_t a, double xi, double eta) {
    switch (a) {
        case 0: return {-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)};
        case 1: return {0.25 * (1.0 - eta), -0.25 * (1.0 + xi)};
        case 2: return {0.25 * (1.0 + eta), 0.25 * (1.0 + xi)};
        default: return {-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)};
    }
}

/// Cell loop shared by every assembly. element(c, K) fills the 4x4 matrix K.
/// Sequential by default; the opt-in colored loop runs cells of one 2x2
/// color class in parallel, which is race-free (same-color cells share no
/// node) and pool-width independent (one contribution per entry per color).
template <class Element>
void assemble_cells(const StructuredMesh& mesh, SparseSymMatrix& s, Element&& element,
                    bool colored_parallel) {
    auto scatter = [&](std::size_t c) {
        std::array<std::array<double, 4>, 4> k{};
        element(c, k);
        const auto nodes = mesh.cell_nodes(c);
        for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t b = 0; b < 4; ++b) s.add_at(nodes[a], nodes[b], k[a][b]);
    };
    if (!colored_parallel) {
        for (std::size_t c = 0; c < mesh.cell_count(); ++c) scatter(c);
        return;
    }
    const std::size_t n = mesh.cells_per_side;
    for (std::size_t color = 0; color < 4; ++color) {
        const std::size_t ox = color % 2, oy = color / 2;
        std::vector<std::size_t> cells;
        for (std::size_t cy = oy; cy < n; cy += 2)
            for (std::size_t cx = ox; cx < n; cx += 2) cells.push_back(cy * n + cx);
        parallel_for(0, cells.size(), [&](std::size_t i) { scatter(cells[i]); });
    }
}

}  // namespace detail

struct AssemblyOptions {
    bool colored_parallel = false;
};

/// Mass matrix G_ij = integral(phi_j phi_i) with 3x3 Gauss per cell; SPD.
inline SparseSymMatrix assemble_mass(const StructuredMesh& mesh, AssemblyOptions opt = {}) {
    SparseSymMatrix s = detail::stencil_pattern(mesh);
    const detail::GaussRule gauss;
    const double jac = 0.25 * mesh.h * mesh.h;
    // the element mass matrix is cell-independent on the uniform grid
    std::array<std::array<double, 4>, 4> k{};
    for (std::size_t qx = 0; qx < 3; ++qx)
        for (std::size_t qy = 0; qy < 3; ++qy) {
            const double w = gauss.weights[qx] * gauss.weights[qy] * jac;
            for (std::size_t a = 0; a < 4; ++a)
                for (std::size_t b = 0; b < 4; ++b)
                    k[a][b] += w * detail::shape(a, gauss.points[qx], gauss.points[qy]) *
                               detail::shape(b, gauss.points[qx], gauss.points[qy]);
        }
    detail::assemble_cells(
        mesh, s, [&](std::size_t, std::array<std::array<double, 4>, 4>& out) { out = k; },
        opt.colored_parallel);
    return s;
}

/// Stiffness A_ij = integral(a grad(phi_j) . grad(phi_i)); the coefficient is
/// evaluated at quadrature points. Sign-indefinite coefficients are allowed
/// (perturbation fields are).
inline SparseSymMatrix assemble_stiffness(const StructuredMesh& mesh,
                                          const std::function<double(double, double)>& coeff,
                                          AssemblyOptions opt = {}) {
    SparseSymMatrix s = detail::stencil_pattern(mesh);
    const detail::GaussRule gauss;
    const double jac = 0.25 * mesh.h * mesh.h;
    const double scale = 2.0 / mesh.h;  // reference-to-physical gradient factor
    detail::assemble_cells(
        mesh, s,
        [&](std::size_t c, std::array<std::array<double, 4>, 4>& k) {
            const std::size_t cx = c % mesh.cells_per_side;
            const std::size_t cy = c / mesh.cells_per_side;
            const double x0 = static_cast<double>(cx) * mesh.h;
            const double y0 = static_cast<double>(cy) * mesh.h;
            for (std::size_t qx = 0; qx < 3; ++qx)
                for (std::size_t qy = 0; qy < 3; ++qy) {
                    const double xi = gauss.points[qx], eta = gauss.points[qy];
                    const double x = x0 + 0.5 * (xi + 1.0) * mesh.h;
                    const double y = y0 + 0.5 * (eta + 1.0) * mesh.h;
                    const double w = gauss.weights[qx] * gauss.weights[qy] * jac * coeff(x, y);
                    std::array<std::array<double, 2>, 4> grad;
                    for (std::size_t a = 0; a < 4; ++a) {
                        const auto g = detail::shape_grad_ref(a, xi, eta);
                        grad[a] = {scale * g[0], scale * g[1]};
                    }
                    for (std::size_t a = 0; a < 4; ++a)
                        for (std::size_t b = 0; b < 4; ++b)
                            k[a][b] += w * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]);
                }
        },
        opt.colored_parallel);
    return s;
}

/// Stiffness with a nodal coefficient field, interpolated bilinearly within
/// each cell; this is the representation KL modes arrive in.
inline SparseSymMatrix assemble_stiffness_nodal(const StructuredMesh& mesh,
                                                std::span<const double> nodal,
                                                AssemblyOptions opt = {}) {
    detail::require(nodal.size() == mesh.node_count(),
                    "assemble_stiffness_nodal: field size mismatch");
    SparseSymMatrix s = detail::stencil_pattern(mesh);
    const detail::GaussRule gauss;
    const double jac = 0.25 * mesh.h * mesh.h;
    const double scale = 2.0 / mesh.h;
    detail::assemble_cells(
        mesh, s,
        [&](std::size_t c, std::array<std::array<double, 4>, 4>& k) {
            const auto nodes = mesh.cell_nodes(c);
            for (std::size_t qx = 0; qx < 3; ++qx)
                for (std::size_t qy = 0; qy < 3; ++qy) {
                    const double xi = gauss.points[qx], eta = gauss.points[qy];
                    double aq = 0.0;
                    for (std::size_t a = 0; a < 4; ++a)
                        aq += nodal[nodes[a]] * detail::shape(a, xi, eta);
                    const double w = gauss.weights[qx] * gauss.weights[qy] * jac * aq;
                    std::array<std::array<double, 2>, 4> grad;
                    for (std::size_t a = 0; a < 4; ++a) {
                        const auto g = detail::shape_grad_ref(a, xi, eta);
                        grad[a] = {scale * g[0], scale * g[1]};
                    }
                    for (std::size_t a = 0; a < 4; ++a)
                        for (std::size_t b = 0; b < 4; ++b)
                            k[a][b] += w * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]);
                }
        },
        opt.colored_parallel);
    return s;
}

/// Load vector b_i = integral(f(., t) phi_i) with 3x3 Gauss per cell.
inline Vector assemble_load(const StructuredMesh& mesh,
                            const std::function<double(double, double, double)>& f, double t) {
    Vector b(mesh.node_count(), 0.0);
    const detail::GaussRule gauss;
    const double jac = 0.25 * mesh.h * mesh.h;
    for (std::size_t c = 0; c < mesh.cell_count(); ++c) {
        const std::size_t cx = c % mesh.cells_per_side;
        const std::size_t cy = c / mesh.cells_per_side;
        const double x0 = static_cast<double>(cx) * mesh.h;
        const double y0 = static_cast<double>(cy) * mesh.h;
        const auto nodes = mesh.cell_nodes(c);
        for (std::size_t qx = 0; qx < 3; ++qx)
            for (std::size_t qy = 0; qy < 3; ++qy) {
                const double xi = gauss.points[qx], eta = gauss.points[qy];
                const double x = x0 + 0.5 * (xi + 1.0) * mesh.h;
                const double y = y0 + 0.5 * (eta + 1.0) * mesh.h;
                const double w = gauss.weights[qx] * gauss.weights[qy] * jac * f(x, y, t);
                for (std::size_t a = 0; a < 4; ++a)
                    b[nodes[a]] += w * detail::shape(a, xi, eta);
            }
    }
    return b;
}

/// Interior block of a matrix; the same deletion applies to the mean, the
/// mass, and every perturbation so the splitting survives restriction.
inline SparseSymMatrix restrict_interior(const SparseSymMatrix& s, const DofMap& map) {
    detail::require(s.dim == map.interior_of_node.size(), "restrict_interior: size mismatch");
    SparseSymMatrix r;
    r.dim = map.interior_count();
    r.row_offsets.assign(r.dim + 1, 0);
    for (std::size_t ii = 0; ii < r.dim; ++ii) {
        const std::size_t node = map.interior[ii];
        std::size_t count = 0;
        for (std::size_t p = s.row_offsets[node]; p < s.row_offsets[node + 1]; ++p)
            if (map.interior_of_node[s.col_index[p]] >= 0) ++count;
        r.row_offsets[ii + 1] = count;
    }
    for (std::size_t i = 0; i < r.dim; ++i) r.row_offsets[i + 1] += r.row_offsets[i];
    r.col_index.assign(r.row_offsets.back(), 0);
    r.values.assign(r.row_offsets.back(), 0.0);
    for (std::size_t ii = 0; ii < r.dim; ++ii) {
        const std::size_t node = map.interior[ii];
        std::size_t q = r.row_offsets[ii];
        for (std::size_t p = s.row_offsets[node]; p < s.row_offsets[node + 1]; ++p) {
            const std::ptrdiff_t jj = map.interior_of_node[s.col_index[p]];
            if (jj >= 0) {
                r.col_index[q] = static_cast<std::size_t>(jj);
                r.values[q++] = s.values[p];
            }
        }
    }
    return r;
}

inline Vector restrict_vector(std::span<const double> full, const DofMap& map) {
    Vector out(map.interior_count());
    for (std::size_t ii = 0; ii < out.size(); ++ii) out[ii] = full[map.interior[ii]];
    return out;
}

/// A_IB * g_B for the boundary lifting; g is given per boundary node in the
/// DofMap's boundary order.
inline Vector boundary_product(const SparseSymMatrix& s, const DofMap& map,
                               std::span<const double> boundary_values) {
    detail::require(boundary_values.size() == map.boundary.size(),
                    "boundary_product: boundary value count mismatch");
    std::vector<double> full(map.interior_of_node.size(), 0.0);
    for (std::size_t b = 0; b < map.boundary.size(); ++b)
        full[map.boundary[b]] = boundary_values[b];
    Vector out(map.interior_count(), 0.0);
    for (std::size_t ii = 0; ii < out.size(); ++ii) {
        const std::size_t node = map.interior[ii];
        double acc = 0.0;
        for (std::size_t p = s.row_offsets[node]; p < s.row_offsets[node + 1]; ++p)
            acc += s.values[p] * full[s.col_index[p]];
        out[ii] = acc;
    }
    return out;
}

/// Reduced steady Dirichlet system: interior block and lifted load
/// (load_int - A_IB g_B). With g = 0 this is plain row/column deletion.
struct RestrictedSystem {
    SparseSymMatrix matrix;
    Vector load;
};

inline RestrictedSystem restrict_dirichlet(const SparseSymMatrix& a, std::span<const double> load,
                                           const DofMap& map,
                                           std::span<const double> boundary_values) {
    detail::require(load.size() == a.dim, "restrict_dirichlet: load size mismatch");
    RestrictedSystem sys;
    sys.matrix = restrict_interior(a, map);
    sys.load = restrict_vector(load, map);
    Vector lift = boundary_product(a, map, boundary_values);
    for (std::size_t i = 0; i < sys.load.size(); ++i) sys.load[i] -= lift[i];
    return sys;
}

}  // namespace lrns
