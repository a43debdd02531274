#include "towerlimits/observable.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "towerlimits/errors.hpp"
#include "towerlimits/induced_operator.hpp"

namespace towerlimits {

TowerObservable TowerObservable::holder(std::string name, std::function<double(double)> f,
                                        double exponent, double constant) {
    if (!f) throw InvalidInput("holder observable needs an evaluator");
    TowerObservable o;
    o.kind_ = ObservableKind::holder_on_interval;
    o.name_ = std::move(name);
    o.f_ = std::move(f);
    o.exponent_ = exponent;
    o.constant_ = constant;
    return o;
}

TowerObservable TowerObservable::cellwise(std::string name,
                                          std::vector<std::vector<double>> values) {
    if (values.empty()) throw InvalidInput("cellwise observable needs at least one cell");
    for (const auto& v : values)
        if (v.empty()) throw InvalidInput("cellwise observable: every cell needs a level value");
    TowerObservable o;
    o.kind_ = ObservableKind::cellwise_constant;
    o.name_ = std::move(name);
    o.cells_ = std::move(values);
    o.exponent_ = 0.0;
    o.constant_ = 0.0;
    return o;
}

double TowerObservable::operator()(double x) const {
    if (kind_ != ObservableKind::holder_on_interval)
        throw InvalidInput("observable '" + name_ + "' is cellwise, not a function on [0,1]");
    return f_(x);
}

double TowerObservable::value(std::size_t cell, std::size_t level) const {
    if (kind_ != ObservableKind::cellwise_constant)
        throw InvalidInput("observable '" + name_ + "' is not cellwise");
    return cells_.at(cell).at(level);
}

const std::vector<std::vector<double>>& TowerObservable::cell_values() const {
    if (kind_ != ObservableKind::cellwise_constant)
        throw InvalidInput("observable '" + name_ + "' is not cellwise");
    return cells_;
}

TowerObservable TowerObservable::scaled(double s) const {
    TowerObservable o = *this;
    o.name_ = std::to_string(s) + "*" + name_;
    o.constant_ *= std::abs(s);
    o.removed_mean_ *= s;
    if (kind_ == ObservableKind::holder_on_interval) {
        o.f_ = [f = f_, s](double x) { return s * f(x); };
    } else {
        for (auto& cell : o.cells_)
            for (double& v : cell) v *= s;
    }
    return o;
}

TowerObservable TowerObservable::with_mean_removed(double mean) const {
    TowerObservable o = *this;
    o.mean_removed_ = true;
    o.removed_mean_ = removed_mean_ + mean;
    if (kind_ == ObservableKind::holder_on_interval) {
        o.f_ = [f = f_, mean](double x) { return f(x) - mean; };
    } else {
        for (auto& cell : o.cells_)
            for (double& v : cell) v -= mean;
    }
    return o;
}

TowerObservable lsv_observable(std::string_view name, double alpha) {
    auto parse_param = [&](std::string_view text) {
        double v = 0;
        auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc{} || p != text.data() + text.size())
            throw InvalidInput("bad observable parameter in '" + std::string(name) + "'");
        return v;
    };
    if (name == "x") return TowerObservable::holder("x", [](double x) { return x; }, 1.0, 1.0);
    if (name == "logderiv")
        return TowerObservable::holder(
            "logderiv", [alpha](double x) { return std::log(lsv_derivative(x, alpha)); }, alpha,
            (1.0 + alpha) * std::pow(2.0, alpha));
    if (name == "one") return TowerObservable::holder("one", [](double) { return 1.0; }, 1.0, 0.0);
    if (name == "zero") return TowerObservable::holder("zero", [](double) { return 0.0; }, 1.0, 0.0);
    if (name.rfind("const:", 0) == 0) {
        const double c = parse_param(name.substr(6));
        return TowerObservable::holder(std::string(name), [c](double) { return c; }, 1.0, 0.0);
    }
    if (name.rfind("power:", 0) == 0) {
        const double p = parse_param(name.substr(6));
        if (!(p > 0)) throw InvalidInput("power observable needs a positive exponent");
        return TowerObservable::holder(std::string(name), [p](double x) { return std::pow(x, p); },
                                       std::min(p, 1.0), std::max(p, 1.0));
    }
    throw InvalidInput("unknown observable '" + std::string(name) +
                       "' (expected x, logderiv, one, zero, const:<c>, power:<p>)");
}

TowerObservable centered(const TowerObservable& f, const LsvSystem& sys) {
    // The uniform-grid density is least accurate near the neutral fixed point; the induced
    // map has a smooth density, so m(B) E_B(f_B) converges like K^-2.
    InducedOptions o;
    o.cells = 2048;
    o.n_max = std::max(50, branches_for_tail(sys.alpha(), 1e-6));
    return f.with_mean_removed(InducedTable(sys, f, o).invariant_mean());
}

double birkhoff_sum(const LsvSystem& sys, const TowerObservable& f, double x0, long n) {
    if (!(x0 >= 0.0 && x0 <= 1.0)) throw InvalidInput("birkhoff_sum: x0 must lie in [0, 1]");
    if (n < 0) throw InvalidInput("birkhoff_sum: n must be >= 0");
    return birkhoff_sum([&](double x) { return sys.map_unchecked(x); },
                        [&](double x) { return f(x); }, x0, n);
}

double induce_observable(const LsvSystem& sys, const TowerObservable& f, double x) {
    const long phi = sys.return_time(x);
    return birkhoff_sum([&](double u) { return sys.map_unchecked(u); },
                        [&](double u) { return f(u); }, x, phi);
}

}  // namespace towerlimits
