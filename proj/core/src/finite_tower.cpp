#include "towerlimits/finite_tower.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "towerlimits/errors.hpp"

namespace towerlimits {

namespace {

bool irreducible(const std::vector<TowerCell>& cells) {
    const std::size_t c = cells.size();
    for (std::size_t start = 0; start < c; ++start) {
        std::vector<bool> seen(c, false);
        std::vector<std::size_t> stack{start};
        seen[start] = true;
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            for (std::size_t j = 0; j < c; ++j)
                if (cells[i].row[j] > 0 && !seen[j]) {
                    seen[j] = true;
                    stack.push_back(j);
                }
        }
        for (bool s : seen)
            if (!s) return false;
    }
    return true;
}

}  // namespace

FiniteTower FiniteTower::build(std::vector<TowerCell> cells) {
    if (cells.empty()) throw InvalidInput("finite tower needs at least one cell");
    const std::size_t c = cells.size();
    for (std::size_t i = 0; i < c; ++i) {
        const auto& cell = cells[i];
        if (!(cell.mass > 0)) throw InvalidInput("cell " + std::to_string(i) + ": mass must be positive");
        if (cell.return_time < 1)
            throw InvalidInput("cell " + std::to_string(i) + ": return time must be >= 1");
        if (cell.row.size() != c)
            throw InvalidInput("cell " + std::to_string(i) + ": transfer row needs " +
                               std::to_string(c) + " entries");
        double s = 0;
        for (double p : cell.row) {
            if (!(p >= 0)) throw InvalidInput("cell " + std::to_string(i) + ": negative transfer weight");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-12)
            throw InvalidInput("cell " + std::to_string(i) + ": transfer row sums to " +
                               std::to_string(s) + ", not 1");
    }
    // Mass preservation: sum_i m_i P_ij = m_j.
    for (std::size_t j = 0; j < c; ++j) {
        double in = 0;
        for (std::size_t i = 0; i < c; ++i) in += cells[i].mass * cells[i].row[j];
        if (std::abs(in - cells[j].mass) > 1e-12 * std::max(1.0, cells[j].mass))
            throw InvalidInput("transfer rows do not preserve the base mass at cell " +
                               std::to_string(j) + " (inflow " + std::to_string(in) + ", mass " +
                               std::to_string(cells[j].mass) + ")");
    }
    int g = 0;
    for (const auto& cell : cells) g = std::gcd(g, cell.return_time);
    if (g != 1)
        throw InvalidInput("gcd of return times is " + std::to_string(g) +
                           "; the tower must be mixing (gcd of return times = 1)");
    if (!irreducible(cells))
        throw InvalidInput("base transfer chain is reducible; the tower must be mixing");

    double kac = 0;
    for (const auto& cell : cells) kac += cell.mass * cell.return_time;
    for (auto& cell : cells) cell.mass /= kac;

    FiniteTower t;
    t.cells_ = std::move(cells);
    for (std::size_t i = 0; i < c; ++i) {
        t.first_state_.push_back(static_cast<int>(t.cell_of_.size()));
        for (int l = 0; l < t.cells_[i].return_time; ++l) {
            t.cell_of_.push_back(static_cast<int>(i));
            t.level_of_.push_back(l);
        }
    }
    return t;
}

int FiniteTower::max_return_time() const {
    int m = 0;
    for (const auto& cell : cells_) m = std::max(m, cell.return_time);
    return m;
}

int FiniteTower::return_time_gcd() const {
    int g = 0;
    for (const auto& cell : cells_) g = std::gcd(g, cell.return_time);
    return g;
}

int FiniteTower::state_index(std::size_t cell, int level) const {
    if (cell >= cells_.size() || level < 0 || level >= cells_[cell].return_time)
        throw InvalidInput("state (cell, level) out of range");
    return first_state_[cell] + level;
}

Eigen::VectorXd FiniteTower::state_mass() const {
    Eigen::VectorXd mu(state_count());
    for (int s = 0; s < state_count(); ++s) mu(s) = cells_[cell_of_[s]].mass;
    return mu;
}

double FiniteTower::base_mass() const {
    double m = 0;
    for (const auto& cell : cells_) m += cell.mass;
    return m;
}

double FiniteTower::total_mass() const {
    CompensatedSum<double> s;
    for (const auto& cell : cells_) s.add(cell.mass * cell.return_time);
    return s.value();
}

double FiniteTower::mass_missing_base(int n) const {
    double m = 0;
    for (const auto& cell : cells_) m += cell.mass * std::max(0, cell.return_time - n - 1);
    return m;
}

Eigen::MatrixXd FiniteTower::markov_matrix() const {
    const int N = state_count();
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(N, N);
    for (int s = 0; s < N; ++s) {
        const auto& cell = cells_[cell_of_[s]];
        if (level_of_[s] + 1 < cell.return_time) {
            Q(s, s + 1) = 1.0;
        } else {
            for (std::size_t j = 0; j < cells_.size(); ++j) Q(s, first_state_[j]) = cell.row[j];
        }
    }
    return Q;
}

Eigen::MatrixXd FiniteTower::transfer_matrix() const {
    const Eigen::VectorXd mu = state_mass();
    const Eigen::MatrixXd Q = markov_matrix();
    return mu.cwiseInverse().asDiagonal() * Q.transpose() * mu.asDiagonal();
}

Eigen::MatrixXcd FiniteTower::twisted_transfer(const TowerObservable& f, double t) const {
    const Eigen::VectorXd v = state_values(f);
    Eigen::VectorXcd phase(state_count());
    for (int s = 0; s < state_count(); ++s) phase(s) = std::polar(1.0, t * v(s));
    return transfer_matrix().cast<cplx>() * phase.asDiagonal();
}

Eigen::MatrixXd FiniteTower::base_transfer() const {
    const std::size_t c = cells_.size();
    Eigen::MatrixXd R(c, c);
    for (std::size_t j = 0; j < c; ++j)
        for (std::size_t i = 0; i < c; ++i) R(j, i) = cells_[i].mass * cells_[i].row[j] / cells_[j].mass;
    return R;
}

Eigen::VectorXd FiniteTower::base_weights() const {
    Eigen::VectorXd w(cells_.size());
    for (std::size_t i = 0; i < cells_.size(); ++i) w(i) = cells_[i].mass;
    return w / w.sum();
}

Eigen::VectorXd FiniteTower::state_values(const TowerObservable& f) const {
    const auto& vals = f.cell_values();
    if (vals.size() != cells_.size())
        throw InvalidInput("observable '" + f.name() + "' has " + std::to_string(vals.size()) +
                           " cells, tower has " + std::to_string(cells_.size()));
    Eigen::VectorXd v(state_count());
    for (int s = 0; s < state_count(); ++s) {
        const auto& cv = vals[cell_of_[s]];
        if (static_cast<int>(cv.size()) != cells_[cell_of_[s]].return_time)
            throw InvalidInput("observable '" + f.name() + "': cell " +
                               std::to_string(cell_of_[s]) + " needs one value per level");
        v(s) = cv[level_of_[s]];
    }
    return v;
}

Eigen::VectorXd FiniteTower::induced_values(const TowerObservable& f) const {
    const Eigen::VectorXd v = state_values(f);
    Eigen::VectorXd fb = Eigen::VectorXd::Zero(cells_.size());
    for (int s = 0; s < state_count(); ++s) fb(cell_of_[s]) += v(s);
    return fb;
}

double FiniteTower::integrate(const TowerObservable& f) const {
    return state_mass().dot(state_values(f));
}

TowerObservable FiniteTower::centered(const TowerObservable& f) const {
    return f.with_mean_removed(integrate(f) / total_mass());
}

const TowerObservable& FiniteTower::observable(const std::string& name) const {
    auto it = observables_.find(name);
    if (it == observables_.end()) throw InvalidInput("tower has no observable named '" + name + "'");
    return it->second;
}

FiniteTower FiniteTower::with_observable(TowerObservable f) const {
    FiniteTower t = *this;
    (void)t.state_values(f);
    t.observables_.insert_or_assign(f.name(), std::move(f));
    return t;
}

namespace {

std::vector<std::pair<std::string, int>> tokenize(const std::string& line) {
    std::vector<std::pair<std::string, int>> out;
    std::size_t pos = 0;
    const std::size_t stop = std::min(line.find('#'), line.size());
    while (pos < stop) {
        pos = line.find_first_not_of(" \t\r", pos);
        if (pos == std::string::npos || pos >= stop) break;
        std::size_t end = std::min(line.find_first_of(" \t\r", pos), stop);
        out.emplace_back(line.substr(pos, end - pos), static_cast<int>(pos) + 1);
        pos = end;
    }
    return out;
}

template <class T>
T number(const std::pair<std::string, int>& tok, int line, const char* what) {
    T v{};
    const auto& s = tok.first;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ParseError(std::string("expected ") + what + ", got '" + s + "'", line, tok.second);
    return v;
}

}  // namespace

FiniteTower read_tower(std::istream& in) {
    std::string line;
    int line_no = 0;
    long count = -1;
    std::vector<TowerCell> cells;
    std::map<std::string, std::vector<std::vector<double>>> obs;
    std::map<std::string, int> obs_line;
    while (std::getline(in, line)) {
        ++line_no;
        const auto toks = tokenize(line);
        if (toks.empty()) continue;
        if (count < 0) {
            if (toks[0].first != "cells" || toks.size() != 2)
                throw ParseError("expected 'cells <count>'", line_no, toks[0].second);
            count = number<long>(toks[1], line_no, "a cell count");
            if (count < 1) throw ParseError("cell count must be >= 1", line_no, toks[1].second);
            continue;
        }
        if (toks[0].first == "obs") {
            if (toks.size() < 4)
                throw ParseError("expected 'obs <name> <cell> <values...>'", line_no, toks[0].second);
            const long cell = number<long>(toks[2], line_no, "a cell index");
            if (cell < 0 || cell >= count)
                throw ParseError("observable cell index out of range", line_no, toks[2].second);
            auto& v = obs[toks[1].first];
            v.resize(count);
            obs_line.emplace(toks[1].first, line_no);
            v[cell].clear();
            for (std::size_t k = 3; k < toks.size(); ++k)
                v[cell].push_back(number<double>(toks[k], line_no, "a real value"));
            continue;
        }
        if (static_cast<long>(cells.size()) >= count)
            throw ParseError("more cell lines than declared", line_no, toks[0].second);
        if (static_cast<long>(toks.size()) != 2 + count)
            throw ParseError("expected <mass> <phi> and " + std::to_string(count) + " transfer weights",
                             line_no, toks[0].second);
        TowerCell cell;
        cell.mass = number<double>(toks[0], line_no, "a mass");
        cell.return_time = number<int>(toks[1], line_no, "an integer return time");
        for (long j = 0; j < count; ++j) cell.row.push_back(number<double>(toks[2 + j], line_no, "a weight"));
        cells.push_back(std::move(cell));
    }
    if (count < 0) throw ParseError("empty tower file", line_no, 0);
    if (static_cast<long>(cells.size()) != count)
        throw ParseError("expected " + std::to_string(count) + " cell lines, found " +
                             std::to_string(cells.size()),
                         line_no + 1, 1);
    FiniteTower tower = [&] {
        try {
            return FiniteTower::build(std::move(cells));
        } catch (const InvalidInput& e) {
            throw ParseError(std::string("invalid tower: ") + e.what());
        }
    }();
    for (auto& [name, values] : obs) {
        try {
            tower = tower.with_observable(TowerObservable::cellwise(name, values));
        } catch (const InvalidInput& e) {
            throw ParseError(e.what(), obs_line[name], 1);
        }
    }
    return tower;
}

FiniteTower load_tower(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    return read_tower(in);
}

void write_tower(std::ostream& out, const FiniteTower& tower) {
    out << "cells " << tower.cell_count() << '\n';
    out << std::setprecision(17);
    for (const auto& cell : tower.cells()) {
        out << cell.mass << ' ' << cell.return_time;
        for (double p : cell.row) out << ' ' << p;
        out << '\n';
    }
    for (const auto& [name, f] : tower.observables()) {
        const auto& vals = f.cell_values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            out << "obs " << name << ' ' << i;
            for (double v : vals[i]) out << ' ' << v;
            out << '\n';
        }
    }
}

}  // namespace towerlimits
