#pragma once

#include "bvloop/expr.hpp"

#include <set>

namespace bvloop {

namespace detail {

inline Monomial raw_product(const Context& ctx, const Monomial& a, const Monomial& b, bool& ok)
{
    Monomial m;
    m.coeff = a.coeff * b.coeff;
    m.params = param_mul(a.params, b.params);
    auto items = monomial_items(ctx, a);
    auto bi = monomial_items(ctx, b);
    // Disjoint locale union: b's integration points are shifted past a's.
    for (auto& it : bi) {
        if (it.locale > 0)
            it.locale += a.locale_count;
        items.push_back(std::move(it));
    }
    ok = normalize_monomial(ctx, std::move(items), m);
    return m;
}

} // namespace detail

/// Associative bilinear product: matrix composition on open words, wedge on
/// the scalar content. Graded-commutative on scalar-valued operands with the
/// bigraded Koszul sign.
inline GExpr wedge(const GExpr& a, const GExpr& b)
{
    a.check_same_context(b);
    const ContextPtr& ctx = a.context() ? a.context() : b.context();
    std::vector<Monomial> out;
    out.reserve(a.size() * b.size());
    for (const auto& ma : a.terms()) {
        for (const auto& mb : b.terms()) {
            bool ok = false;
            Monomial m = detail::raw_product(*ctx, ma, mb, ok);
            if (ok)
                out.push_back(std::move(m));
        }
    }
    return GExpr::from_monomials(ctx, std::move(out));
}

/// Shifted product a.b := (-1)^{gh a . deg b} a ^ b, applied monomial-pairwise.
/// Graded-commutative with respect to the total degree.
inline GExpr dot(const GExpr& a, const GExpr& b)
{
    a.check_same_context(b);
    const ContextPtr& ctx = a.context() ? a.context() : b.context();
    std::vector<Monomial> out;
    out.reserve(a.size() * b.size());
    for (const auto& ma : a.terms()) {
        const Grading ga = monomial_external_grading(*ctx, ma);
        for (const auto& mb : b.terms()) {
            const Grading gb = monomial_external_grading(*ctx, mb);
            bool ok = false;
            Monomial m = detail::raw_product(*ctx, ma, mb, ok);
            if (!ok)
                continue;
            if ((ga.gh * gb.deg) & 1)
                m.coeff = -m.coeff;
            out.push_back(std::move(m));
        }
    }
    return GExpr::from_monomials(ctx, std::move(out));
}

inline void require_algebra_valued(const GExpr& e, const char* who)
{
    for (const auto& m : e.terms())
        if (m.open.empty() && m.coeff != 0)
            throw std::invalid_argument(std::string(who) + ": operand must be algebra-valued");
}

/// Graded Lie bracket [a,b] = a^b - (-1)^{<a,b>} b^a (monomial-pairwise).
inline GExpr bracket(const GExpr& a, const GExpr& b)
{
    require_algebra_valued(a, "bracket");
    require_algebra_valued(b, "bracket");
    a.check_same_context(b);
    const ContextPtr& ctx = a.context() ? a.context() : b.context();
    std::vector<Monomial> out;
    for (const auto& ma : a.terms()) {
        const Grading ga = monomial_external_grading(*ctx, ma);
        for (const auto& mb : b.terms()) {
            const Grading gb = monomial_external_grading(*ctx, mb);
            bool ok = false;
            Monomial m = detail::raw_product(*ctx, ma, mb, ok);
            if (ok)
                out.push_back(std::move(m));
            Monomial r = detail::raw_product(*ctx, mb, ma, ok);
            if (ok) {
                r.coeff = koszul_parity(ga, gb) ? r.coeff : -r.coeff;
                out.push_back(std::move(r));
            }
        }
    }
    return GExpr::from_monomials(ctx, std::move(out));
}

/// Dot Lie bracket [a,b]. := (-1)^{gh a . deg b} [a,b]; graded-antisymmetric
/// and Jacobi with respect to the total degree.
inline GExpr dot_bracket(const GExpr& a, const GExpr& b)
{
    require_algebra_valued(a, "dot_bracket");
    require_algebra_valued(b, "dot_bracket");
    a.check_same_context(b);
    const ContextPtr& ctx = a.context() ? a.context() : b.context();
    std::vector<Monomial> out;
    for (const auto& ma : a.terms()) {
        const Grading ga = monomial_external_grading(*ctx, ma);
        for (const auto& mb : b.terms()) {
            const Grading gb = monomial_external_grading(*ctx, mb);
            const bool pre = (ga.gh * gb.deg) & 1;
            bool ok = false;
            Monomial m = detail::raw_product(*ctx, ma, mb, ok);
            if (ok) {
                if (pre)
                    m.coeff = -m.coeff;
                out.push_back(std::move(m));
            }
            Monomial r = detail::raw_product(*ctx, mb, ma, ok);
            if (ok) {
                bool neg = !(koszul_parity(ga, gb) ^ pre);
                if (neg)
                    r.coeff = -r.coeff;
                out.push_back(std::move(r));
            }
        }
    }
    return GExpr::from_monomials(ctx, std::move(out));
}

/// Closes the open word of each monomial into a trace factor. The trace of
/// an empty word contributes the algebra-dimension parameter N.
inline GExpr trace(const GExpr& a)
{
    const ContextPtr& ctx = a.context();
    if (ctx && ctx->find_param("N") < 0)
        ctx->add_param("N");
    std::vector<Monomial> out;
    for (const auto& ma : a.terms()) {
        auto items = monomial_items(*ctx, ma);
        bool had_open = false;
        for (auto& it : items)
            if (it.type == detail::Item::Open) {
                it.type = detail::Item::Trace;
                had_open = true;
            }
        if (!had_open) {
            detail::Item it;
            it.type = detail::Item::Trace;
            it.locale = ma.open_locale;
            items.push_back(std::move(it));
        }
        Monomial m;
        m.coeff = ma.coeff;
        m.params = ma.params;
        m.locale_count = ma.locale_count;
        if (normalize_monomial(*ctx, std::move(items), m))
            out.push_back(std::move(m));
    }
    return GExpr::from_monomials(ctx, std::move(out));
}

/// Ad-invariant pairing <a,b> = Tr(a ^ b).
inline GExpr pairing(const GExpr& a, const GExpr& b) { return trace(wedge(a, b)); }

/// Shifted pairing <a,b>. = (-1)^{gh a. deg b} <a,b>.
inline GExpr dot_pairing(const GExpr& a, const GExpr& b) { return trace(dot(a, b)); }

enum class LeibnizMode {
    FormDegree, // transport sign (-1)^{deg of passed factors}
    TotalDegree // transport sign (-1)^{total degree of passed factors}
};

/// Background covariant differential d_{A0}. Raises dlevel of one factor at
/// a time with the chosen Leibniz transport; d(d(x)) = 0 via the flatness
/// truncation. Background transports and parameters are d-constants.
inline GExpr differential(const GExpr& x, LeibnizMode mode = LeibnizMode::FormDegree)
{
    const ContextPtr& ctx = x.context();
    if (!ctx)
        return x;
    std::vector<Monomial> out;
    auto transport_parity = [&](const Grading& before) {
        return mode == LeibnizMode::FormDegree ? (before.deg & 1) : (before.total() & 1);
    };
    auto is_constant = [&](const GenRef& g) {
        GenKind k = ctx->gen(g.id).kind;
        return k == GenKind::BackgroundTransport || k == GenKind::Parameter;
    };
    for (const auto& mono : x.terms()) {
        auto items = monomial_items(*ctx, mono);
        auto before_item = [&](size_t i) {
            Grading g;
            for (size_t j = 0; j < i; ++j)
                g += detail::transport_view(items[j].grading, items[j].locale, items[i].locale);
            return g;
        };
        for (size_t i = 0; i < items.size(); ++i) {
            const auto& it = items[i];
            const Grading passed = before_item(i);
            if (it.type == detail::Item::Scalar) {
                if (!is_constant(it.gen)) {
                    auto copy = items;
                    copy[i].gen.dlevel++;
                    copy[i].grading.deg++;
                    Monomial m;
                    m.coeff = transport_parity(passed) ? -mono.coeff : mono.coeff;
                    m.params = mono.params;
                    m.locale_count = mono.locale_count;
                    if (normalize_monomial(*ctx, std::move(copy), m))
                        out.push_back(std::move(m));
                }
            } else {
                Grading inner{};
                for (size_t p = 0; p < it.word.size(); ++p) {
                    const Grading gl = ctx->grading(it.word[p]);
                    if (!is_constant(it.word[p])) {
                        auto copy = items;
                        copy[i].word[p].dlevel++;
                        copy[i].grading.deg++;
                        Monomial m;
                        m.coeff = transport_parity(passed + inner) ? -mono.coeff : mono.coeff;
                        m.params = mono.params;
                        m.locale_count = mono.locale_count;
                        if (normalize_monomial(*ctx, std::move(copy), m))
                            out.push_back(std::move(m));
                    }
                    inner += gl;
                }
            }
        }
    }
    return GExpr::from_monomials(ctx, std::move(out));
}

/// Drops every monomial containing any of the listed generators (at any
/// derivative level). "Set antifields to zero" style restrictions.
inline GExpr substitute_zero(const GExpr& x, const std::set<int>& gen_ids)
{
    return x.filter([&](const Monomial& m) {
        for (const auto& s : m.scalars)
            if (gen_ids.count(s.gen.id))
                return false;
        for (const auto& t : m.traces)
            for (const auto& g : t.word)
                if (gen_ids.count(g.id))
                    return false;
        for (const auto& g : m.open)
            if (gen_ids.count(g.id))
                return false;
        return true;
    });
}

/// Substitutes a grading-homogeneous expression for every occurrence of a
/// generator; occurrences at derivative level k receive d^k(replacement).
/// The replacement grading must match the generator's, so no Koszul
/// transport arises at the splice point. The replacement itself is never
/// re-scanned, so self-referential rules (A -> A + ...) terminate.
inline GExpr substitute(const GExpr& x, int gen_id, const GExpr& replacement)
{
    const ContextPtr& ctx = x.context();
    if (!ctx)
        return x;
    const Grading gg = ctx->gen(gen_id).grading;
    if (!replacement.is_zero() && !replacement.homogeneous(gg))
        throw std::invalid_argument("substitute: replacement grading must match generator");
    const GExpr repl_d[2] = {replacement, differential(replacement)};

    using Items = std::vector<detail::Item>;
    std::vector<Monomial> out;

    // Depth-first expansion over occurrences; (ii, pp) is the scan cursor
    // and inserted content is skipped.
    std::function<void(Items, Rat, ParamMono, int, size_t, size_t)> walk =
        [&](Items items, Rat coeff, ParamMono params, int locale_count, size_t ii, size_t pp) {
            for (size_t i = ii; i < items.size(); ++i) {
                auto& it = items[i];
                if (it.type == detail::Item::Scalar) {
                    if (i >= ii && (i > ii || pp == 0) && it.gen.id == gen_id) {
                        const GExpr& r = repl_d[std::min<int>(it.gen.dlevel, 1)];
                        for (const auto& rm : r.terms()) {
                            Items copy = items;
                            auto rit = monomial_items(*ctx, rm);
                            copy.erase(copy.begin() + static_cast<long>(i));
                            long at = static_cast<long>(i);
                            for (auto& q : rit) {
                                q.locale = it.locale;
                                copy.insert(copy.begin() + at, q);
                                ++at;
                            }
                            walk(std::move(copy), coeff * rm.coeff, param_mul(params, rm.params),
                                 locale_count, i + rit.size(), 0);
                        }
                        return;
                    }
                } else {
                    size_t start = (i == ii) ? pp : 0;
                    for (size_t p = start; p < it.word.size(); ++p) {
                        if (it.word[p].id != gen_id)
                            continue;
                        const GExpr& r = repl_d[std::min<int>(it.word[p].dlevel, 1)];
                        for (const auto& rm : r.terms()) {
                            if (!rm.scalars.empty() || !rm.traces.empty())
                                throw std::invalid_argument(
                                    "substitute: replacement for a word letter must be a plain word");
                            Items copy = items;
                            auto& w = copy[i].word;
                            w.erase(w.begin() + static_cast<long>(p));
                            w.insert(w.begin() + static_cast<long>(p), rm.open.begin(), rm.open.end());
                            copy[i].grading = detail::word_grading(*ctx, w);
                            walk(std::move(copy), coeff * rm.coeff, param_mul(params, rm.params),
                                 locale_count, i, p + rm.open.size());
                        }
                        return;
                    }
                }
            }
            Monomial m;
            m.coeff = std::move(coeff);
            m.params = std::move(params);
            m.locale_count = locale_count;
            if (normalize_monomial(*ctx, std::move(items), m))
                out.push_back(std::move(m));
        };

    for (const auto& mono : x.terms())
        walk(monomial_items(*ctx, mono), mono.coeff, mono.params, mono.locale_count, 0, 0);
    return GExpr::from_monomials(ctx, std::move(out));
}

/// Contains-generator query (any derivative level).
inline bool contains_generator(const GExpr& x, int gen_id)
{
    for (const auto& m : x.terms()) {
        for (const auto& s : m.scalars)
            if (s.gen.id == gen_id)
                return true;
        for (const auto& t : m.traces)
            for (const auto& g : t.word)
                if (g.id == gen_id)
                    return true;
        for (const auto& g : m.open)
            if (g.id == gen_id)
                return true;
    }
    return false;
}

} // namespace bvloop
