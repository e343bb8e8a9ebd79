#pragma once

/**
 * @file ad.hpp
 * @brief Minimal tape-based reverse-mode automatic differentiation.
 *
 * Each arithmetic result involving a recorded variable appends one node with
 * at most two parents and the local partials. Constants never touch the tape.
 * The tape is thread-local; a Recording scope owns it for the duration of one
 * forward/backward sweep.
 */

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace cfdgcn::ad {

class Tape {
public:
    struct Node {
        std::int32_t a;
        std::int32_t b;
        double da;
        double db;
    };

    std::int32_t push(std::int32_t a, double da, std::int32_t b, double db) {
        nodes_.push_back({a, b, da, db});
        return static_cast<std::int32_t>(nodes_.size() - 1);
    }
    std::int32_t input() { return push(-1, 0.0, -1, 0.0); }

    std::size_t size() const { return nodes_.size(); }
    void clear() {
        nodes_.clear();
        adjoint_.clear();
    }

    /// Zeroed adjoint buffer sized to the tape; seed entries, then call sweep().
    std::vector<double>& adjoints() {
        adjoint_.assign(nodes_.size(), 0.0);
        return adjoint_;
    }
    void sweep() {
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            const double g = adjoint_[i];
            if (g == 0.0) continue;
            const Node& n = nodes_[i];
            if (n.a >= 0) adjoint_[n.a] += n.da * g;
            if (n.b >= 0) adjoint_[n.b] += n.db * g;
        }
    }
    double adjoint(std::int32_t id) const { return id >= 0 ? adjoint_[id] : 0.0; }

    static Tape*& active() {
        thread_local Tape* tape = nullptr;
        return tape;
    }

private:
    std::vector<Node> nodes_;
    std::vector<double> adjoint_;
};

/// Installs `tape` as this thread's active tape for the lifetime of the scope.
class Recording {
public:
    explicit Recording(Tape& tape) : previous_(Tape::active()) {
        tape.clear();
        Tape::active() = &tape;
    }
    ~Recording() { Tape::active() = previous_; }
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

private:
    Tape* previous_;
};

struct Var {
    double v = 0.0;
    std::int32_t id = -1;

    Var() = default;
    Var(double value) : v(value) {}  // NOLINT: implicit constants are the point
    Var(double value, std::int32_t node) : v(value), id(node) {}

    static Var input(double value) {
        Tape* t = Tape::active();
        if (t == nullptr) throw std::logic_error("ad::Var::input without an active tape");
        return {value, t->input()};
    }
    bool recorded() const { return id >= 0; }
};

inline double value(double x) { return x; }
inline double value(const Var& x) { return x.v; }

namespace detail {

inline Var unary(const Var& x, double v, double dx) {
    if (!x.recorded()) return Var(v);
    return {v, Tape::active()->push(x.id, dx, -1, 0.0)};
}

inline Var binary(const Var& x, const Var& y, double v, double dx, double dy) {
    if (!x.recorded() && !y.recorded()) return Var(v);
    if (!y.recorded()) return {v, Tape::active()->push(x.id, dx, -1, 0.0)};
    if (!x.recorded()) return {v, Tape::active()->push(y.id, dy, -1, 0.0)};
    return {v, Tape::active()->push(x.id, dx, y.id, dy)};
}

}  // namespace detail

inline Var operator+(const Var& x, const Var& y) { return detail::binary(x, y, x.v + y.v, 1.0, 1.0); }
inline Var operator-(const Var& x, const Var& y) { return detail::binary(x, y, x.v - y.v, 1.0, -1.0); }
inline Var operator*(const Var& x, const Var& y) { return detail::binary(x, y, x.v * y.v, y.v, x.v); }
inline Var operator/(const Var& x, const Var& y) {
    const double inv = 1.0 / y.v;
    return detail::binary(x, y, x.v * inv, inv, -x.v * inv * inv);
}
inline Var operator-(const Var& x) { return detail::unary(x, -x.v, -1.0); }

inline Var& operator+=(Var& x, const Var& y) { return x = x + y; }
inline Var& operator-=(Var& x, const Var& y) { return x = x - y; }
inline Var& operator*=(Var& x, const Var& y) { return x = x * y; }
inline Var& operator/=(Var& x, const Var& y) { return x = x / y; }

inline bool operator<(const Var& x, const Var& y) { return x.v < y.v; }
inline bool operator>(const Var& x, const Var& y) { return x.v > y.v; }
inline bool operator<=(const Var& x, const Var& y) { return x.v <= y.v; }
inline bool operator>=(const Var& x, const Var& y) { return x.v >= y.v; }

/// d/dx sqrt(x) at x = 0 is taken as 0 so stagnation points do not poison the sweep.
inline Var sqrt(const Var& x) {
    const double s = std::sqrt(x.v);
    return detail::unary(x, s, s > 0.0 ? 0.5 / s : 0.0);
}
inline Var abs(const Var& x) { return detail::unary(x, std::fabs(x.v), x.v >= 0.0 ? 1.0 : -1.0); }
inline Var sin(const Var& x) { return detail::unary(x, std::sin(x.v), std::cos(x.v)); }
inline Var cos(const Var& x) { return detail::unary(x, std::cos(x.v), -std::sin(x.v)); }

/// Ties select the first argument.
inline Var max(const Var& x, const Var& y) { return x.v >= y.v ? x : y; }
inline Var min(const Var& x, const Var& y) { return x.v <= y.v ? x : y; }

}  // namespace cfdgcn::ad
