#pragma once

#include "bvloop/ops.hpp"

#include <map>
#include <string>

namespace bvloop {

namespace detail {

/// Leibniz differential restricted to the factors of one integration locale.
/// Transport signs still count every factor passed, whatever its locale.
inline GExpr differential_at_locale(const GExpr& x, int locale)
{
    const ContextPtr& ctx = x.context();
    std::vector<Monomial> out;
    for (const auto& mono : x.terms()) {
        auto items = monomial_items(*ctx, mono);
        Grading passed{};
        for (size_t i = 0; i < items.size(); ++i) {
            const auto& it = items[i];
            auto constant = [&](const GenRef& g) {
                GenKind k = ctx->gen(g.id).kind;
                return k == GenKind::BackgroundTransport || k == GenKind::Parameter;
            };
            if (it.locale == locale) {
                if (it.type == Item::Scalar) {
                    if (!constant(it.gen)) {
                        auto copy = items;
                        copy[i].gen.dlevel++;
                        copy[i].grading.deg++;
                        Monomial m;
                        m.coeff = (passed.deg & 1) ? -mono.coeff : mono.coeff;
                        m.params = mono.params;
                        m.locale_count = mono.locale_count;
                        if (normalize_monomial(*ctx, std::move(copy), m))
                            out.push_back(std::move(m));
                    }
                } else {
                    Grading inner{};
                    for (size_t p = 0; p < it.word.size(); ++p) {
                        const Grading gl = ctx->grading(it.word[p]);
                        if (!constant(it.word[p])) {
                            auto copy = items;
                            copy[i].word[p].dlevel++;
                            copy[i].grading.deg++;
                            Monomial m;
                            m.coeff = ((passed + inner).deg & 1) ? -mono.coeff : mono.coeff;
                            m.params = mono.params;
                            m.locale_count = mono.locale_count;
                            if (normalize_monomial(*ctx, std::move(copy), m))
                                out.push_back(std::move(m));
                        }
                        inner += gl;
                    }
                }
            }
            passed += detail::transport_view(it.grading, it.locale, locale);
        }
    }
    return GExpr::from_monomials(ctx, std::move(out));
}

} // namespace detail

/// One used Stokes relation in a reduction trace.
struct StokesUse {
    std::string source;  // serialized boundary-free source monomial
    std::string factor;  // rational multiple (per parameter monomial)
};

struct StokesReduction {
    GExpr reduced;
    std::vector<StokesUse> uses;
};

/// Canonical representative of an integral expression modulo the relations
/// int d(anything) = 0 on each integration locale (Stokes on a closed
/// manifold). Relations are generated from the d-orbit of the expression's
/// own monomials and eliminated by exact Gaussian reduction with the
/// smallest monomial key as pivot, so representatives are deterministic.
/// An expression lying in the relation span reduces to zero.
inline StokesReduction stokes_reduce(const GExpr& e)
{
    const ContextPtr& ctx = e.context();
    if (!ctx || e.is_zero())
        return {e, {}};

    // Sources live in the param-free key space: strip coefficient/params.
    auto strip = [&](const Monomial& m) {
        Monomial k = m;
        k.coeff = 1;
        k.params.clear();
        return k;
    };

    auto mono_expr = [&](Monomial m) { return GExpr::from_monomials(ctx, {std::move(m)}); };

    // Collect the d-orbit: remove one derivative in every possible way, take
    // each such source's full Leibniz image, iterate to a fixed point.
    std::map<std::string, Monomial> seen;     // key-sexpr -> stripped monomial
    std::map<std::string, Monomial> sources;  // candidates for relations
    std::vector<Monomial> frontier;
    for (const auto& m : e.terms()) {
        Monomial k = strip(m);
        std::string s = to_sexpr(mono_expr(k));
        if (seen.emplace(s, k).second)
            frontier.push_back(k);
    }
    auto push_sources = [&](const Monomial& m, std::vector<Monomial>& next) {
        auto items = monomial_items(*ctx, m);
        for (size_t i = 0; i < items.size(); ++i) {
            auto lower = [&](std::vector<detail::Item> copy) {
                Monomial src;
                src.coeff = 1;
                src.locale_count = m.locale_count;
                if (!normalize_monomial(*ctx, std::move(copy), src))
                    return;
                std::string key = to_sexpr(mono_expr(src));
                if (!sources.emplace(key, src).second)
                    return;
                // The relation support may contain new monomials.
                for (int loc = 1; loc <= m.locale_count; ++loc) {
                    GExpr rel = detail::differential_at_locale(mono_expr(src), loc);
                    for (const auto& rm : rel.terms()) {
                        Monomial k = strip(rm);
                        std::string s = to_sexpr(mono_expr(k));
                        if (seen.emplace(s, k).second)
                            next.push_back(k);
                    }
                }
            };
            if (items[i].type == detail::Item::Scalar) {
                if (items[i].gen.dlevel > 0) {
                    auto copy = items;
                    copy[i].gen.dlevel--;
                    copy[i].grading.deg--;
                    lower(std::move(copy));
                }
            } else {
                for (size_t p = 0; p < items[i].word.size(); ++p) {
                    if (items[i].word[p].dlevel > 0) {
                        auto copy = items;
                        copy[i].word[p].dlevel--;
                        copy[i].grading.deg--;
                        lower(std::move(copy));
                    }
                }
            }
        }
    };
    while (!frontier.empty()) {
        std::vector<Monomial> next;
        for (const auto& m : frontier)
            push_sources(m, next);
        frontier = std::move(next);
    }

    // Build relation rows (param-free) and echelonize.
    struct Row {
        GExpr expr;
        std::string source;
    };
    std::vector<Row> rows;
    auto leading_key = [&](const GExpr& x) { return to_sexpr(mono_expr(strip(x.terms().front()))); };
    auto reduce_by_rows = [&](GExpr v, std::vector<std::pair<std::string, Rat>>* used) {
        bool changed = true;
        while (changed && !v.is_zero()) {
            changed = false;
            for (const auto& r : rows) {
                // eliminate r's leading key from v if present
                const Monomial& lead = r.expr.terms().front();
                for (const auto& vm : v.terms()) {
                    if (strip(vm).key() == strip(lead).key()) {
                        Rat f = vm.coeff / lead.coeff;
                        GExpr scaledRel = r.expr.scaled(-f, vm.params);
                        v += scaledRel;
                        if (used)
                            used->emplace_back(r.source, to_string(f));
                        changed = true;
                        break;
                    }
                }
                if (v.is_zero())
                    break;
            }
        }
        return v;
    };

    // Deterministic relation order: by source key.
    for (const auto& [key, src] : sources) {
        for (int loc = 1; loc <= src.locale_count; ++loc) {
            GExpr rel = detail::differential_at_locale(mono_expr(src), loc);
            rel = reduce_by_rows(std::move(rel), nullptr);
            if (!rel.is_zero())
                rows.push_back({std::move(rel), key});
        }
    }

    std::vector<std::pair<std::string, Rat>> used;
    std::vector<std::pair<std::string, Rat>>* up = &used;
    GExpr red = reduce_by_rows(e, up);
    StokesReduction out{std::move(red), {}};
    for (auto& [src, f] : used)
        out.uses.push_back({src, to_string(f)});
    return out;
}

/// Selects the form-degree-n part of a scalar expression and wraps it in an
/// integral marker; Stokes and cyclic-trace normalization are then in force.
/// Lower-degree monomials integrate to zero and are dropped.
inline GExpr integrate_top(const GExpr& x)
{
    const ContextPtr& ctx = x.context();
    if (!ctx)
        return x;
    const int n = ctx->dim();
    std::vector<Monomial> kept;
    for (const auto& m : x.terms()) {
        if (m.is_integral())
            throw std::invalid_argument("integrate_top: operand already carries an integral marker");
        if (!m.open.empty())
            throw std::invalid_argument("integrate_top: operand must be scalar-valued (trace first)");
        if (monomial_grading(*ctx, m).deg != n)
            continue;
        auto items = monomial_items(*ctx, m);
        for (auto& it : items)
            it.locale = 1;
        Monomial w;
        w.coeff = m.coeff;
        w.params = m.params;
        w.locale_count = 1;
        if (normalize_monomial(*ctx, std::move(items), w))
            kept.push_back(std::move(w));
    }
    GExpr wrapped = GExpr::from_monomials(ctx, std::move(kept));
    return stokes_reduce(wrapped).reduced;
}

} // namespace bvloop
