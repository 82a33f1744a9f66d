#include "sharedctl/inverse_game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sharedctl {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

MatrixXd vech_basis(Index n, Index k) {
    // k-th upper-triangle entry, row by row.
    Index idx = 0;
    for (Index a = 0; a < n; ++a) {
        for (Index b = a; b < n; ++b, ++idx) {
            if (idx != k) continue;
            MatrixXd E = MatrixXd::Zero(n, n);
            E(a, b) = 1.0;
            E(b, a) = 1.0;
            return E;
        }
    }
    return MatrixXd::Zero(n, n);
}

Index pin_index(const ThetaLayout& layout, Normalization pin) {
    return pin == Normalization::FirstInputWeight ? layout.r_offset() : layout.q_offset();
}

VectorXd lower_bounds(const ThetaLayout& layout, double r_floor) {
    VectorXd lb = VectorXd::Constant(layout.size(), -kInf);
    lb.segment(layout.q_offset(), layout.n).setZero();
    lb.segment(layout.r_offset(), layout.m_self).setConstant(r_floor);
    for (std::size_t k = 0; k < layout.cross.size(); ++k) {
        lb.segment(layout.cross_offset(k), layout.cross[k].second).setZero();
    }
    return lb;
}

} // namespace

Index ThetaLayout::cross_offset(std::size_t k) const {
    Index off = r_offset() + m_self;
    for (std::size_t i = 0; i < k; ++i) off += cross[i].second;
    return off;
}

Index ThetaLayout::size() const { return cross_offset(cross.size()); }

CostParams ThetaVector::cost() const {
    CostParams c;
    c.q = q;
    c.r_self = r_self;
    c.r_cross = r_cross;
    return c;
}

MatrixXd ThetaVector::P() const {
    // Invert vech: p_entries holds the upper triangle row by row.
    const auto len = static_cast<double>(p_entries.size());
    const auto n = static_cast<Index>(std::lround((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0));
    MatrixXd P(n, n);
    Index idx = 0;
    for (Index a = 0; a < n; ++a) {
        for (Index b = a; b < n; ++b, ++idx) {
            P(a, b) = p_entries[idx];
            P(b, a) = p_entries[idx];
        }
    }
    return P;
}

ResidualSystem build_residual_system(const GameSystem& sys, const std::vector<MatrixXd>& gains,
                                     std::size_t player, bool identify_cross) {
    if (gains.empty()) {
        throw Error(ErrorCode::InvalidArgument, "no gains supplied");
    }
    if (player >= sys.players()) {
        throw Error(ErrorCode::InvalidArgument, "player index out of range");
    }
    for (const auto& K : gains) {
        if (!K.allFinite()) throw Error(ErrorCode::NonFinite, "gain contains non-finite entries");
    }
    const MatrixXd A_cl = closed_loop_matrix(sys, gains);

    ResidualSystem rs;
    rs.player = player;
    ThetaLayout& L = rs.layout;
    L.n = sys.states();
    L.m_self = sys.input_dim(player);
    if (identify_cross) {
        for (std::size_t j = 0; j < sys.players(); ++j) {
            if (j != player) L.cross.emplace_back(j, sys.input_dim(j));
        }
    }

    const Index n = L.n;
    const Index m = L.m_self;
    const Index rows = L.p_count() + m * n;
    const MatrixXd& Ki = gains[player];
    const MatrixXd& Bi = sys.B(player);
    rs.M = MatrixXd::Zero(rows, L.size());

    // Each unknown contributes linearly; evaluate both blocks on unit inputs.
    auto write_column = [&](Index col, const MatrixXd& E1, const MatrixXd& E2) {
        Index r = 0;
        for (Index a = 0; a < n; ++a) {
            for (Index b = a; b < n; ++b) rs.M(r++, col) = E1(a, b);
        }
        for (Index k = 0; k < m; ++k) {
            for (Index c = 0; c < n; ++c) rs.M(r++, col) = E2(k, c);
        }
    };

    for (Index k = 0; k < L.p_count(); ++k) {
        const MatrixXd E = vech_basis(n, k);
        write_column(k, A_cl.transpose() * E + E * A_cl, Bi.transpose() * E);
    }
    for (Index a = 0; a < n; ++a) {
        MatrixXd E1 = MatrixXd::Zero(n, n);
        E1(a, a) = 1.0;
        write_column(L.q_offset() + a, E1, MatrixXd::Zero(m, n));
    }
    for (Index k = 0; k < m; ++k) {
        const MatrixXd E1 = Ki.row(k).transpose() * Ki.row(k);
        MatrixXd E2 = MatrixXd::Zero(m, n);
        E2.row(k) = -Ki.row(k);
        write_column(L.r_offset() + k, E1, E2);
    }
    for (std::size_t c = 0; c < L.cross.size(); ++c) {
        const auto [j, mj] = L.cross[c];
        for (Index k = 0; k < mj; ++k) {
            const MatrixXd E1 = gains[j].row(k).transpose() * gains[j].row(k);
            write_column(L.cross_offset(c) + k, E1, MatrixXd::Zero(m, n));
        }
    }
    return rs;
}

Identification identify_cost(const ResidualSystem& rs, const IdentifyOptions& options) {
    const ThetaLayout& L = rs.layout;
    const Index dim = L.size();
    if (rs.M.cols() != dim || rs.M.rows() == 0) {
        throw Error(ErrorCode::InvalidArgument, "residual system is not well-formed");
    }
    if (!(options.r_floor > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "input-weight floor must be > 0");
    }
    const Index pin = pin_index(L, options.pin);
    const VectorXd lb_full = lower_bounds(L, options.r_floor);

    // Free variables z are every unknown except the pin; columns are scaled to
    // unit norm so that tolerances are independent of the system's units.
    std::vector<Index> vars;
    for (Index k = 0; k < dim; ++k) {
        if (k != pin) vars.push_back(k);
    }
    const auto nz = static_cast<Index>(vars.size());
    MatrixXd G(rs.M.rows(), nz);
    VectorXd scale(nz);
    VectorXd lb(nz);
    for (Index v = 0; v < nz; ++v) {
        const double s = rs.M.col(vars[v]).norm();
        scale[v] = s > 0.0 ? s : 1.0;
        G.col(v) = rs.M.col(vars[v]) / scale[v];
        lb[v] = lb_full[vars[v]] * scale[v];
    }
    const VectorXd c = rs.M.col(pin);

    std::vector<bool> active(static_cast<std::size_t>(nz), false);
    VectorXd z = VectorXd::Zero(nz);
    for (Index v = 0; v < nz; ++v) {
        if (std::isfinite(lb[v])) {
            z[v] = lb[v];
            active[static_cast<std::size_t>(v)] = true;
        }
    }

    auto solve_passive = [&](VectorXd& y) {
        std::vector<Index> passive;
        for (Index v = 0; v < nz; ++v) {
            if (!active[static_cast<std::size_t>(v)]) passive.push_back(v);
        }
        VectorXd rhs = -c;
        for (Index v = 0; v < nz; ++v) {
            if (active[static_cast<std::size_t>(v)]) rhs -= G.col(v) * lb[v];
        }
        y = z;
        if (passive.empty()) return;
        MatrixXd Gp(G.rows(), static_cast<Index>(passive.size()));
        for (std::size_t p = 0; p < passive.size(); ++p) Gp.col(static_cast<Index>(p)) = G.col(passive[p]);
        const VectorXd sol = Gp.completeOrthogonalDecomposition().solve(rhs);
        for (std::size_t p = 0; p < passive.size(); ++p) y[passive[p]] = sol[static_cast<Index>(p)];
    };

    const double grad_tol = 1e-12 * (1.0 + c.norm());
    for (int outer = 0; outer < 20 * static_cast<int>(nz) + 20; ++outer) {
        for (int inner = 0; inner < 4 * static_cast<int>(nz) + 4; ++inner) {
            VectorXd y;
            solve_passive(y);
            double alpha = 1.0;
            Index blocking = -1;
            for (Index v = 0; v < nz; ++v) {
                if (active[static_cast<std::size_t>(v)] || !std::isfinite(lb[v])) continue;
                if (y[v] < lb[v]) {
                    const double a = (z[v] - lb[v]) / (z[v] - y[v]);
                    if (a < alpha) {
                        alpha = a;
                        blocking = v;
                    }
                }
            }
            if (blocking < 0) {
                z = y;
                break;
            }
            z += alpha * (y - z);
            for (Index v = 0; v < nz; ++v) {
                if (!active[static_cast<std::size_t>(v)] && std::isfinite(lb[v]) &&
                    (v == blocking || z[v] <= lb[v])) {
                    z[v] = lb[v];
                    active[static_cast<std::size_t>(v)] = true;
                }
            }
        }
        const VectorXd g = G.transpose() * (G * z + c);
        Index release = -1;
        double most_negative = -grad_tol;
        for (Index v = 0; v < nz; ++v) {
            if (active[static_cast<std::size_t>(v)] && g[v] < most_negative) {
                most_negative = g[v];
                release = v;
            }
        }
        if (release < 0) break;
        active[static_cast<std::size_t>(release)] = false;
    }

    Identification id;
    const VectorXd g = G.transpose() * (G * z + c);
    double kkt = 0.0;
    for (Index v = 0; v < nz; ++v) {
        if (active[static_cast<std::size_t>(v)]) {
            kkt = std::max(kkt, std::max(0.0, -g[v]));
        } else {
            kkt = std::max(kkt, std::abs(g[v]));
        }
        if (std::isfinite(lb[v])) kkt = std::max(kkt, std::max(0.0, lb[v] - z[v]));
    }
    id.kkt_residual = kkt / (1.0 + c.norm());

    VectorXd theta(dim);
    theta[pin] = 1.0;
    id.at_bound.assign(static_cast<std::size_t>(dim), false);
    for (Index v = 0; v < nz; ++v) {
        theta[vars[v]] = z[v] / scale[v];
        id.at_bound[static_cast<std::size_t>(vars[v])] = active[static_cast<std::size_t>(v)];
    }
    id.residual = (rs.M * theta).norm();

    ThetaVector& t = id.theta;
    t.raw = theta;
    t.pinned = pin;
    t.p_entries = theta.head(L.p_count());
    t.q = theta.segment(L.q_offset(), L.n);
    t.r_self = theta.segment(L.r_offset(), L.m_self);
    for (std::size_t k = 0; k < L.cross.size(); ++k) {
        const auto [j, mj] = L.cross[k];
        if (t.r_cross.size() <= j) t.r_cross.resize(j + 1);
        t.r_cross[j] = theta.segment(L.cross_offset(k), mj);
    }
    return id;
}

IdentificationConfidence identification_confidence(const ResidualSystem& rs,
                                                   const Identification& id,
                                                   const IdentifyOptions& options) {
    const Index dim = rs.layout.size();
    if (rs.M.cols() != dim || rs.M.rows() == 0 || id.theta.raw.size() != dim ||
        id.at_bound.size() != static_cast<std::size_t>(dim)) {
        throw Error(ErrorCode::InvalidArgument, "identification does not match residual system");
    }
    IdentificationConfidence out;
    out.active = id.at_bound;
    std::vector<Index> cols;
    for (Index k = 0; k < dim; ++k) {
        if (id.at_bound[static_cast<std::size_t>(k)]) {
            ++out.active_constraints;
        } else {
            cols.push_back(k);
        }
    }
    out.residual_norm = (rs.M * id.theta.raw).norm();
    const double denom = rs.M.norm() * id.theta.raw.norm();
    out.relative_residual = denom > 0.0 ? out.residual_norm / denom : 0.0;

    MatrixXd Ms(rs.M.rows(), static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) Ms.col(static_cast<Index>(k)) = rs.M.col(cols[k]);
    // A wide matrix has (cols - rows) implicit zero singular values.
    std::vector<double> sv(cols.size(), 0.0);
    if (!cols.empty()) {
        const VectorXd s = Eigen::JacobiSVD<MatrixXd>(Ms).singularValues();
        for (Index k = 0; k < s.size(); ++k) sv[static_cast<std::size_t>(k)] = s[k];
    }
    std::sort(sv.begin(), sv.end());
    const double sigma_max = sv.empty() ? 0.0 : sv.back();
    out.sigma_min = sv.empty() ? 0.0 : sv[0];
    out.sigma_second = sv.size() > 1 ? sv[1] : 0.0;
    const double floor = std::max(out.sigma_min, 1e-16 * sigma_max);
    out.null_space_gap = floor > 0.0 ? std::min(out.sigma_second / floor, 1e16) : 0.0;
    out.low_confidence = out.sigma_second < options.ill_conditioned;
    return out;
}

VectorXd theta_from_cost(const ThetaLayout& layout, const MatrixXd& P, const CostParams& cost,
                         Normalization pin) {
    VectorXd theta(layout.size());
    Index idx = 0;
    for (Index a = 0; a < layout.n; ++a) {
        for (Index b = a; b < layout.n; ++b) theta[idx++] = P(a, b);
    }
    theta.segment(layout.q_offset(), layout.n) = cost.q;
    theta.segment(layout.r_offset(), layout.m_self) = cost.r_self;
    for (std::size_t k = 0; k < layout.cross.size(); ++k) {
        const auto [j, mj] = layout.cross[k];
        theta.segment(layout.cross_offset(k), mj) = cost.cross(j, mj).diagonal();
    }
    return theta / theta[pin_index(layout, pin)];
}

} // namespace sharedctl
