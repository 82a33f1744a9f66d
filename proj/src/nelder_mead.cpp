#include "sharedctl/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace sharedctl {

NelderMeadResult nelder_mead(const std::function<double(const VectorXd&)>& f, const VectorXd& x0,
                             const NelderMeadOptions& options) {
    const Index d = x0.size();
    const bool boxed = options.lower.size() == d && options.upper.size() == d;
    auto project = [&](VectorXd x) {
        if (boxed) x = x.cwiseMax(options.lower).cwiseMin(options.upper);
        return x;
    };

    NelderMeadResult result;
    auto eval = [&](const VectorXd& x) {
        ++result.evaluations;
        const double v = f(x);
        return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    };
    auto out_of_budget = [&] { return result.evaluations >= options.max_evaluations; };
    auto cancelled = [&] {
        return options.cancel != nullptr && options.cancel->load(std::memory_order_relaxed);
    };

    std::vector<VectorXd> pts;
    std::vector<double> vals;
    pts.push_back(project(x0));
    vals.push_back(eval(pts[0]));
    for (Index i = 0; i < d && !out_of_budget(); ++i) {
        VectorXd p = pts[0];
        p[i] += options.initial_step;
        p = project(p);
        if (p[i] == pts[0][i]) {
            p[i] -= options.initial_step;
            p = project(p);
        }
        pts.push_back(p);
        vals.push_back(eval(p));
    }

    std::vector<std::size_t> order(pts.size());
    auto sort_simplex = [&] {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        std::vector<VectorXd> p2;
        std::vector<double> v2;
        for (auto k : order) {
            p2.push_back(pts[k]);
            v2.push_back(vals[k]);
        }
        pts = std::move(p2);
        vals = std::move(v2);
    };

    if (static_cast<Index>(pts.size()) == d + 1) {
        while (true) {
            sort_simplex();
            double diameter = 0.0;
            for (std::size_t k = 1; k < pts.size(); ++k) {
                diameter = std::max(diameter, (pts[k] - pts[0]).cwiseAbs().maxCoeff());
            }
            const double spread = vals.back() - vals.front();
            if (std::isfinite(vals.back()) && diameter <= options.x_tolerance &&
                spread <= options.f_tolerance * (1.0 + std::abs(vals.front()))) {
                result.converged = true;
                break;
            }
            if (out_of_budget()) break;
            if (cancelled()) {
                result.cancelled = true;
                break;
            }

            VectorXd centroid = VectorXd::Zero(d);
            for (Index k = 0; k < d; ++k) centroid += pts[static_cast<std::size_t>(k)];
            centroid /= static_cast<double>(d);
            const VectorXd& worst = pts.back();

            const VectorXd xr = project(centroid + (centroid - worst));
            const double fr = eval(xr);
            if (fr < vals.front()) {
                if (out_of_budget()) {
                    pts.back() = xr;
                    vals.back() = fr;
                    continue;
                }
                const VectorXd xe = project(centroid + 2.0 * (centroid - worst));
                const double fe = eval(xe);
                if (fe < fr) {
                    pts.back() = xe;
                    vals.back() = fe;
                } else {
                    pts.back() = xr;
                    vals.back() = fr;
                }
                continue;
            }
            if (fr < vals[vals.size() - 2]) {
                pts.back() = xr;
                vals.back() = fr;
                continue;
            }
            if (out_of_budget()) continue;
            // Contract toward the better of the worst point and its reflection.
            const bool outside = fr < vals.back();
            const VectorXd xc = outside ? VectorXd(project(centroid + 0.5 * (xr - centroid)))
                                        : VectorXd(project(centroid + 0.5 * (worst - centroid)));
            const double fc = eval(xc);
            if (fc < std::min(fr, vals.back())) {
                pts.back() = xc;
                vals.back() = fc;
                continue;
            }
            for (std::size_t k = 1; k < pts.size() && !out_of_budget(); ++k) {
                pts[k] = project(pts[0] + 0.5 * (pts[k] - pts[0]));
                vals[k] = eval(pts[k]);
            }
        }
    }

    const auto best = static_cast<std::size_t>(
        std::min_element(vals.begin(), vals.end()) - vals.begin());
    result.x = pts[best];
    result.f = vals[best];
    return result;
}

} // namespace sharedctl
