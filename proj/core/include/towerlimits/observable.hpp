#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "towerlimits/lsv.hpp"
#include "towerlimits/numerics.hpp"

namespace towerlimits {

enum class ObservableKind { holder_on_interval, cellwise_constant };

// Real observable on an interval map (a function on [0,1]) or on a finite tower (one value per
// (cell, level) state). Value type; cheap to copy.
class TowerObservable {
public:
    static TowerObservable holder(std::string name, std::function<double(double)> f,
                                  double exponent = 1.0, double constant = 1.0);
    static TowerObservable cellwise(std::string name, std::vector<std::vector<double>> values);

    ObservableKind kind() const { return kind_; }
    const std::string& name() const { return name_; }
    bool mean_removed() const { return mean_removed_; }
    double holder_exponent() const { return exponent_; }
    double holder_constant() const { return constant_; }
    // Constant added by with_mean_removed (0 when never centered).
    double removed_mean() const { return removed_mean_; }

    double operator()(double x) const;
    double value(std::size_t cell, std::size_t level) const;
    const std::vector<std::vector<double>>& cell_values() const;

    TowerObservable scaled(double s) const;
    // f - mean, flagged as mean-removed.
    TowerObservable with_mean_removed(double mean) const;

private:
    ObservableKind kind_ = ObservableKind::holder_on_interval;
    std::string name_;
    std::function<double(double)> f_;
    std::vector<std::vector<double>> cells_;
    double exponent_ = 1.0;
    double constant_ = 1.0;
    bool mean_removed_ = false;
    double removed_mean_ = 0.0;
};

// Named observables on [0,1] for the LSV map: "x", "logderiv" (log|T'|), "one", "zero",
// "const:<c>", "power:<p>" (x^p).
TowerObservable lsv_observable(std::string_view name, double alpha);

// f minus its invariant mean, computed as m(B) E_B(f_B) on a 2048-cell induced table.
TowerObservable centered(const TowerObservable& f, const LsvSystem& sys);

// Generic Birkhoff sum sum_{k<n} f(T^k x0).
template <class Map, class F>
double birkhoff_sum(const Map& map, const F& f, double x0, long n) {
    CompensatedSum<double> s;
    double x = x0;
    for (long k = 0; k < n; ++k) {
        s.add(f(x));
        if (k + 1 < n) x = map(x);
    }
    return s.value();
}

double birkhoff_sum(const LsvSystem& sys, const TowerObservable& f, double x0, long n);

// f_B(x) = sum_{k < phi(x)} f(T^k x) for x in B_n = (y_{n+1}, y_n].
double induce_observable(const LsvSystem& sys, const TowerObservable& f, double x);

}  // namespace towerlimits
