#pragma once

#include "bvloop/expr.hpp"

#include <array>
#include <cmath>
#include <map>
#include <random>

namespace bvloop {

/// 2x2 exact-rational matrix.
struct Mat2 {
    std::array<Rat, 4> a{}; // row-major

    static Mat2 zero() { return {}; }
    static Mat2 identity()
    {
        Mat2 m;
        m.a[0] = 1;
        m.a[3] = 1;
        return m;
    }
    Rat tr() const { return a[0] + a[3]; }
    bool is_zero() const
    {
        for (const auto& x : a)
            if (x != 0)
                return false;
        return true;
    }
    Mat2 operator*(const Mat2& o) const
    {
        Mat2 r;
        r.a[0] = a[0] * o.a[0] + a[1] * o.a[2];
        r.a[1] = a[0] * o.a[1] + a[1] * o.a[3];
        r.a[2] = a[2] * o.a[0] + a[3] * o.a[2];
        r.a[3] = a[2] * o.a[1] + a[3] * o.a[3];
        return r;
    }
    Mat2 operator+(const Mat2& o) const
    {
        Mat2 r;
        for (int i = 0; i < 4; ++i)
            r.a[static_cast<size_t>(i)] = a[static_cast<size_t>(i)] + o.a[static_cast<size_t>(i)];
        return r;
    }
    Mat2 scaled(const Rat& c) const
    {
        Mat2 r;
        for (int i = 0; i < 4; ++i)
            r.a[static_cast<size_t>(i)] = a[static_cast<size_t>(i)] * c;
        return r;
    }
};

/// Monomial in the free bigraded-commutative symbol algebra. Symbols carry
/// parity bits (deg mod 2, gh mod 2); transposing symbols x, y costs
/// (-1)^{px py + qx qy}, and odd symbols square to zero.
struct SymMono {
    std::vector<std::pair<uint32_t, int>> factors; // (symbol id, exponent), sorted by id

    auto operator<=>(const SymMono&) const = default;
};

/// Concrete gl(2) evaluation backend. Every abstract generator occurrence
/// (id, dlevel, locale) expands over `components()` independent terms
/// omega_k (x) M_k with M_k a seeded random rational matrix shared across
/// dlevels and locales, and omega_k a fresh graded symbol. Formal
/// parameters receive random rational values; N evaluates to 2.
///
/// An expression that canonicalizes to zero abstractly evaluates to the
/// empty map; conversely a nonzero generic evaluation certifies a nonzero
/// expression. Evaluations from one GlEval instance share symbol and matrix
/// tables and may be compared or combined.
class GlEval {
public:
    using Value = std::map<SymMono, Mat2>;

    explicit GlEval(ContextPtr ctx, uint64_t seed = 12345, int components = 4)
        : ctx_(std::move(ctx)), rng_(seed), components_(components)
    {
    }

    int components() const { return components_; }

    Value eval(const GExpr& e)
    {
        Value acc;
        for (const auto& m : e.terms()) {
            Value v = eval_monomial(m);
            for (auto& [k, mat] : v)
                add_to(acc, k, mat);
        }
        prune(acc);
        return acc;
    }

    static bool is_zero(const Value& v)
    {
        for (const auto& [k, m] : v)
            if (!m.is_zero())
                return false;
        return true;
    }

    /// Largest matrix entry in absolute value, as a double.
    static double norm(const Value& v)
    {
        double best = 0;
        for (const auto& [k, m] : v)
            for (const auto& x : m.a)
                best = std::max(best, std::abs(to_double(x)));
        return best;
    }

    static Value sub(const Value& a, const Value& b)
    {
        Value r = a;
        for (const auto& [k, m] : b)
            add_to(r, k, m.scaled(-1));
        prune(r);
        return r;
    }

private:
    struct SymInfo {
        uint32_t id;
        int p, q; // parities
    };

    static void add_to(Value& acc, const SymMono& k, const Mat2& m)
    {
        auto it = acc.find(k);
        if (it == acc.end())
            acc.emplace(k, m);
        else
            it->second = it->second + m;
    }

    static void prune(Value& v)
    {
        for (auto it = v.begin(); it != v.end();)
            it = it->second.is_zero() ? v.erase(it) : std::next(it);
    }

    Rat random_rat()
    {
        std::uniform_int_distribution<int> num(-9, 9);
        std::uniform_int_distribution<int> den(1, 4);
        int n = num(rng_);
        if (n == 0)
            n = 1;
        return Rat(n, den(rng_));
    }

    const Mat2& matrix(uint16_t gen, int comp)
    {
        auto key = std::pair<uint16_t, int>(gen, comp);
        auto it = mats_.find(key);
        if (it == mats_.end()) {
            Mat2 m;
            for (auto& x : m.a)
                x = random_rat();
            it = mats_.emplace(key, m).first;
        }
        return it->second;
    }

    SymInfo symbol(uint16_t gen, uint16_t dlevel, int locale, int comp)
    {
        auto key = std::tuple<uint16_t, uint16_t, int, int>(gen, dlevel, locale, comp);
        auto it = syms_.find(key);
        if (it == syms_.end()) {
            Grading g = ctx_->grading(GenRef{gen, dlevel});
            SymInfo s{next_sym_++, g.deg & 1, g.gh & 1};
            it = syms_.emplace(key, s).first;
        }
        return it->second;
    }

    Rat param_value(int pid)
    {
        auto it = param_vals_.find(pid);
        if (it == param_vals_.end()) {
            Rat v = ctx_->param_name(pid) == "N" ? Rat(2) : random_rat();
            it = param_vals_.emplace(pid, v).first;
        }
        return it->second;
    }

    /// Multiplies a single graded symbol (power 1) onto a sorted monomial.
    /// Returns 0 sign if the product vanishes.
    int append_symbol(SymMono& m, const SymInfo& s)
    {
        int sign = 1;
        size_t pos = m.factors.size();
        // Walk left past symbols with larger id, collecting parities.
        while (pos > 0 && m.factors[pos - 1].first > s.id) {
            const auto& [oid, oexp] = m.factors[pos - 1];
            const SymInfo& o = sym_by_id_.at(oid);
            if (((s.p * o.p + s.q * o.q) & 1) && (oexp & 1))
                sign = -sign;
            --pos;
        }
        if (pos > 0 && m.factors[pos - 1].first == s.id) {
            if ((s.p + s.q) & 1)
                return 0; // odd square
            m.factors[pos - 1].second += 1;
        } else {
            m.factors.insert(m.factors.begin() + static_cast<long>(pos), {s.id, 1});
        }
        return sign;
    }

    Value eval_monomial(const Monomial& mono)
    {
        // Seed with the coefficient and parameter values.
        Rat c = mono.coeff;
        for (const auto& [pid, exp] : mono.params) {
            Rat v = param_value(pid);
            if (exp >= 0)
                for (int i = 0; i < exp; ++i)
                    c *= v;
            else
                for (int i = 0; i < -exp; ++i)
                    c /= v;
        }
        Value acc;
        acc.emplace(SymMono{}, Mat2::identity().scaled(c));

        auto items = monomial_items(*ctx_, mono);
        for (const auto& it : items) {
            Value factor;
            if (it.type == detail::Item::Scalar) {
                SymInfo s = symbol(it.gen.id, it.gen.dlevel, it.locale, 0);
                sym_by_id_.emplace(s.id, s);
                SymMono m;
                int sg = append_symbol(m, s);
                if (sg != 0)
                    factor.emplace(std::move(m), Mat2::identity().scaled(sg));
            } else {
                // word: sum over component assignments
                const auto& w = it.word;
                std::vector<int> comp(w.size(), 0);
                for (;;) {
                    SymMono m;
                    int sign = 1;
                    Mat2 prod = Mat2::identity();
                    for (size_t i = 0; i < w.size() && sign != 0; ++i) {
                        SymInfo s = symbol(w[i].id, w[i].dlevel, it.locale, comp[i]);
                        sym_by_id_.emplace(s.id, s);
                        int sg = append_symbol(m, s);
                        sign = sg == 0 ? 0 : sign * sg;
                        prod = prod * matrix(w[i].id, comp[i]);
                    }
                    if (sign != 0) {
                        Mat2 v = it.type == detail::Item::Trace
                                     ? Mat2::identity().scaled(prod.tr())
                                     : prod;
                        add_to(factor, m, v.scaled(sign));
                    }
                    // next component tuple
                    size_t d = 0;
                    while (d < comp.size()) {
                        if (++comp[d] < components_)
                            break;
                        comp[d] = 0;
                        ++d;
                    }
                    if (d == comp.size())
                        break;
                }
            }
            // acc *= factor (graded product on symbol monomials)
            Value next;
            for (const auto& [ka, ma] : acc) {
                for (const auto& [kb, mb] : factor) {
                    SymMono m = ka;
                    int sign = 1;
                    for (const auto& [sid, exp] : kb.factors) {
                        const SymInfo& s = sym_by_id_.at(sid);
                        for (int rep = 0; rep < exp && sign != 0; ++rep) {
                            int sg = append_symbol(m, s);
                            sign = sg == 0 ? 0 : sign * sg;
                        }
                        if (sign == 0)
                            break;
                    }
                    if (sign == 0)
                        continue;
                    add_to(next, m, (ma * mb).scaled(sign));
                }
            }
            prune(next);
            acc = std::move(next);
        }
        return acc;
    }

    ContextPtr ctx_;
    std::mt19937_64 rng_;
    int components_;
    uint32_t next_sym_ = 0;
    std::map<std::pair<uint16_t, int>, Mat2> mats_;
    std::map<std::tuple<uint16_t, uint16_t, int, int>, SymInfo> syms_;
    std::map<uint32_t, SymInfo> sym_by_id_;
    std::map<int, Rat> param_vals_;
};

} // namespace bvloop
