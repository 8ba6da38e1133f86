#pragma once

#include "bvloop/context.hpp"
#include "bvloop/grading.hpp"
#include "bvloop/rational.hpp"

#include <algorithm>
#include <cassert>
#include <compare>
#include <vector>

namespace bvloop {

/// Monomial in the formal parameters: sorted (param id, exponent) pairs,
/// exponents nonzero (negative allowed, e.g. 1/(i hbar) powers).
using ParamMono = std::vector<std::pair<int, int>>;

inline ParamMono param_mul(const ParamMono& a, const ParamMono& b)
{
    ParamMono out;
    out.reserve(a.size() + b.size());
    size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
            out.push_back(a[i++]);
        } else if (i == a.size() || b[j].first < a[i].first) {
            out.push_back(b[j++]);
        } else {
            int e = a[i].second + b[j].second;
            if (e != 0)
                out.emplace_back(a[i].first, e);
            ++i;
            ++j;
        }
    }
    return out;
}

inline ParamMono param_pow(int pid, int exp)
{
    if (exp == 0)
        return {};
    return {{pid, exp}};
}

/// Trace factor: a cyclic word of algebra-valued generator occurrences,
/// stored in canonical rotation, tagged with its integration locale
/// (0 = not under an integral sign).
struct TraceFactor {
    std::vector<GenRef> word;
    int locale = 0;

    auto operator<=>(const TraceFactor&) const = default;
};

struct ScalarFactor {
    GenRef gen;
    int locale = 0;

    auto operator<=>(const ScalarFactor&) const = default;
};

/// One canonical monomial: exact coefficient times parameter monomial times
/// a product of scalar generators, trace factors and one open (matrix-valued)
/// word. Canonical layout for Koszul bookkeeping is
///   [scalars][traces][open word]
/// and every normalization routine measures transport signs against it.
/// Factors sharing a locale sit at one point of M, so their form degrees add
/// and the monomial dies if any locale exceeds the context dimension.
struct Monomial {
    Rat coeff = 1;
    ParamMono params;
    std::vector<ScalarFactor> scalars;
    std::vector<TraceFactor> traces;
    std::vector<GenRef> open;
    int open_locale = 0;
    int locale_count = 0; // number of integral markers (distinct locales >= 1)

    bool is_zero() const { return coeff == 0; }
    bool is_integral() const { return locale_count > 0; }

    /// Structural key (everything except the numeric coefficient).
    auto key() const
    {
        return std::tie(locale_count, scalars, traces, open, open_locale, params);
    }
    bool same_key(const Monomial& o) const { return key() == o.key(); }
    bool key_less(const Monomial& o) const { return key() < o.key(); }
};

namespace detail {

/// Working item used while normalizing a product of factors.
struct Item {
    enum Type { Scalar, Trace, Open } type;
    Grading grading;
    GenRef gen;                 // Scalar
    std::vector<GenRef> word;   // Trace / Open segment
    int locale = 0;
};

inline Grading ref_grading(const Context& ctx, const GenRef& g) { return ctx.grading(g); }

inline Grading word_grading(const Context& ctx, const std::vector<GenRef>& w)
{
    Grading g;
    for (const auto& r : w)
        g += ctx.grading(r);
    return g;
}

/// Canonical rotation of a cyclic word. Chooses the lexicographically
/// minimal rotation under the generator order (rank, dlevel), lowest
/// rotation index breaking ties, and accumulates the Koszul sign of the
/// rotation. Returns 0 if the word is identified with minus itself.
inline int canonical_rotate(const Context& ctx, std::vector<GenRef>& w)
{
    const size_t m = w.size();
    if (m <= 1)
        return 1;
    auto keyof = [&](const GenRef& g) { return std::pair<uint32_t, uint16_t>(ctx.rank(g.id), g.dlevel); };
    auto less_rot = [&](size_t a, size_t b) {
        for (size_t i = 0; i < m; ++i) {
            auto ka = keyof(w[(a + i) % m]);
            auto kb = keyof(w[(b + i) % m]);
            if (ka != kb)
                return ka < kb ? -1 : 1;
        }
        return 0;
    };
    // Koszul sign of rotating left by one: first letter moves past the rest.
    std::vector<int> rotsign(m, 1);
    {
        Grading total = word_grading(ctx, w);
        int sign = 1;
        for (size_t r = 1; r < m; ++r) {
            const Grading g1 = ctx.grading(w[r - 1]);
            Grading rest = total - g1;
            sign *= koszul_sign(g1, rest);
            rotsign[r] = sign;
        }
    }
    size_t best = 0;
    for (size_t r = 1; r < m; ++r) {
        int c = less_rot(r, best);
        if (c < 0)
            best = r;
    }
    // Words fixed by a nontrivial rotation with opposite sign vanish.
    for (size_t r = 0; r < m; ++r) {
        if (r != best && less_rot(r, best) == 0 && rotsign[r] != rotsign[best])
            return 0;
    }
    std::rotate(w.begin(), w.begin() + static_cast<long>(best), w.end());
    return rotsign[best];
}

inline std::pair<uint32_t, uint16_t> gen_key(const Context& ctx, const GenRef& g)
{
    return {ctx.rank(g.id), g.dlevel};
}

/// Grading a factor shows to the outside world. Integration consumes the
/// form degree of its block (the integral of a top form is a number), so a
/// factor under an integral marker transports with ghost parity only;
/// factors sharing one integration point keep their full bidegree relative
/// to each other.
struct FactorView {
    Grading full;
    int locale;
};

inline Grading external_grading(const FactorView& f)
{
    return f.locale > 0 ? Grading{0, f.full.gh} : f.full;
}

inline int factor_koszul(const FactorView& a, const FactorView& b)
{
    if (a.locale > 0 && a.locale == b.locale)
        return koszul_parity(a.full, b.full);
    return koszul_parity(external_grading(a), external_grading(b));
}

/// Self-transposition parity (odd squares vanish).
inline int factor_self_parity(const FactorView& a, const FactorView& b)
{
    if (a.locale == b.locale)
        return koszul_parity(a.full, a.full);
    return koszul_parity(external_grading(a), external_grading(b));
}

/// Grading a factor presents to an operator working at `target_locale`
/// (0 = an unintegrated point). Blocks under other integrals show ghost
/// parity only.
inline Grading transport_view(const Grading& full, int factor_locale, int target_locale)
{
    if (factor_locale == 0 || factor_locale == target_locale)
        return full;
    return Grading{0, full.gh};
}

inline bool word_less(const Context& ctx, const std::vector<GenRef>& a, const std::vector<GenRef>& b)
{
    if (a.size() != b.size())
        return a.size() < b.size();
    for (size_t i = 0; i < a.size(); ++i) {
        auto ka = gen_key(ctx, a[i]);
        auto kb = gen_key(ctx, b[i]);
        if (ka != kb)
            return ka < kb;
    }
    return false;
}

inline bool word_equal(const Context& ctx, const std::vector<GenRef>& a, const std::vector<GenRef>& b)
{
    return !word_less(ctx, a, b) && !word_less(ctx, b, a);
}

} // namespace detail

/// Normalizes a raw factor sequence into canonical monomial layout.
/// `items` lists factors in multiplication order; `mono` carries coefficient
/// and params already. Returns false if the monomial vanished.
///
/// Rules applied, in order: flat-background truncation (dlevel >= 2),
/// scalar extraction out of words, canonical trace rotation, stable Koszul
/// sort into [scalars][traces][open], odd-square vanishing, per-locale top
/// form-degree truncation, canonical locale relabeling.
inline bool normalize_monomial(const Context& ctx, std::vector<detail::Item> items, Monomial& mono)
{
    using detail::Item;
    int sign = 1;

    // dlevel cap: d_{A0} is flat, two derivatives kill any generator.
    for (const auto& it : items) {
        if (it.type == Item::Scalar) {
            if (it.gen.dlevel >= 2)
                return false;
        } else {
            for (const auto& g : it.word)
                if (g.dlevel >= 2)
                    return false;
        }
    }

    // Pull non-algebra letters out of trace/open words.
    std::vector<Item> flat;
    flat.reserve(items.size());
    for (auto& it : items) {
        if (it.type == Item::Scalar) {
            it.grading = ctx.grading(it.gen);
            flat.push_back(std::move(it));
            continue;
        }
        std::vector<GenRef> kept;
        Grading prefix{};
        std::vector<Item> pulled;
        for (const auto& g : it.word) {
            const auto& info = ctx.gen(g.id);
            const Grading gg = ctx.grading(g);
            if (!info.algebra_valued) {
                if (koszul_parity(gg, prefix))
                    sign = -sign;
                Item s;
                s.type = Item::Scalar;
                s.gen = g;
                s.grading = gg;
                s.locale = it.locale;
                pulled.push_back(std::move(s));
            } else {
                kept.push_back(g);
                prefix += gg;
            }
        }
        for (auto& p : pulled)
            flat.push_back(std::move(p));
        if (it.type == Item::Trace && kept.empty()) {
            // Tr(1) = N, the algebra dimension parameter.
            // (Context interns "N" lazily; callers register it up front.)
            int pid = ctx.find_param("N");
            if (pid < 0)
                throw std::logic_error("trace of empty word requires interned parameter N");
            mono.params = param_mul(mono.params, param_pow(pid, 1));
            continue;
        }
        it.word = std::move(kept);
        it.grading = detail::word_grading(ctx, it.word);
        flat.push_back(std::move(it));
    }
    items = std::move(flat);

    // Canonical trace rotation.
    for (auto& it : items) {
        if (it.type == Item::Trace) {
            int s = detail::canonical_rotate(ctx, it.word);
            if (s == 0)
                return false;
            sign *= s;
        }
    }

    // Stable Koszul bubble sort into [scalars][traces][open...], scalars by
    // (rank, dlevel), traces by word. Open segments keep relative order.
    auto order_class = [](const Item& it) {
        switch (it.type) {
        case Item::Scalar: return 0;
        case Item::Trace: return 1;
        default: return 2;
        }
    };
    auto precedes = [&](const Item& a, const Item& b) {
        int ca = order_class(a), cb = order_class(b);
        if (ca != cb)
            return ca < cb;
        if (ca == 0)
            return detail::gen_key(ctx, a.gen) < detail::gen_key(ctx, b.gen);
        if (ca == 1)
            return detail::word_less(ctx, a.word, b.word);
        return false; // open segments never reorder
    };
    auto fview = [](const detail::Item& it) { return detail::FactorView{it.grading, it.locale}; };
    for (size_t pass = 0; pass + 1 < items.size(); ++pass) {
        bool moved = false;
        for (size_t i = 0; i + 1 < items.size(); ++i) {
            if (precedes(items[i + 1], items[i])) {
                if (detail::factor_koszul(fview(items[i]), fview(items[i + 1])))
                    sign = -sign;
                std::swap(items[i], items[i + 1]);
                moved = true;
            }
        }
        if (!moved)
            break;
    }

    // Odd squares vanish: two identical adjacent scalar/trace factors whose
    // transposition is odd.
    for (size_t i = 0; i + 1 < items.size(); ++i) {
        const auto& a = items[i];
        const auto& b = items[i + 1];
        if (a.type != b.type || a.type == Item::Open)
            continue;
        bool equal = a.type == Item::Scalar
                         ? detail::gen_key(ctx, a.gen) == detail::gen_key(ctx, b.gen)
                         : detail::word_equal(ctx, a.word, b.word);
        if (equal && detail::factor_self_parity(fview(a), fview(b)))
            return false;
    }

    // Per-locale top-degree truncation.
    {
        std::map<int, int> locdeg;
        for (const auto& it : items)
            locdeg[it.locale] += it.grading.deg;
        for (auto& [loc, d] : locdeg) {
            (void)loc;
            if (d > ctx.dim())
                return false;
        }
    }

    // Canonical locale labels: signature = sorted factor keys per locale.
    {
        std::map<int, std::vector<std::string>> sigs;
        auto keystr = [&](const Item& it) {
            std::string s = it.type == Item::Scalar ? "s" : (it.type == Item::Trace ? "t" : "o");
            auto app = [&](const GenRef& g) {
                s += ':' + std::to_string(ctx.rank(g.id)) + '.' + std::to_string(g.dlevel);
            };
            if (it.type == Item::Scalar)
                app(it.gen);
            else
                for (const auto& g : it.word)
                    app(g);
            return s;
        };
        bool any = false;
        for (const auto& it : items)
            if (it.locale > 0) {
                sigs[it.locale].push_back(keystr(it));
                any = true;
            }
        if (any) {
            std::vector<std::pair<std::vector<std::string>, int>> ordered;
            for (auto& [loc, v] : sigs) {
                std::sort(v.begin(), v.end());
                ordered.emplace_back(v, loc);
            }
            std::sort(ordered.begin(), ordered.end());
            std::map<int, int> relabel;
            for (size_t i = 0; i < ordered.size(); ++i)
                relabel[ordered[i].second] = static_cast<int>(i) + 1;
            for (auto& it : items)
                if (it.locale > 0)
                    it.locale = relabel[it.locale];
            mono.locale_count = static_cast<int>(ordered.size());
            // Final stable sort refined by locale; equal-content factors at
            // distinct locales commute with a tracked sign.
            auto precedes2 = [&](const Item& a, const Item& b) {
                if (precedes(a, b))
                    return true;
                if (precedes(b, a))
                    return false;
                return a.locale < b.locale;
            };
            for (size_t pass = 0; pass + 1 < items.size(); ++pass) {
                bool moved = false;
                for (size_t i = 0; i + 1 < items.size(); ++i) {
                    if (precedes2(items[i + 1], items[i])) {
                        if (detail::factor_koszul(fview(items[i]), fview(items[i + 1])))
                            sign = -sign;
                        std::swap(items[i], items[i + 1]);
                        moved = true;
                    }
                }
                if (!moved)
                    break;
            }
        } else {
            mono.locale_count = 0;
        }
    }

    // Emit canonical layout.
    mono.scalars.clear();
    mono.traces.clear();
    mono.open.clear();
    mono.open_locale = 0;
    for (auto& it : items) {
        switch (it.type) {
        case Item::Scalar:
            mono.scalars.push_back({it.gen, it.locale});
            break;
        case Item::Trace:
            mono.traces.push_back({std::move(it.word), it.locale});
            break;
        case Item::Open:
            mono.open.insert(mono.open.end(), it.word.begin(), it.word.end());
            mono.open_locale = it.locale;
            break;
        }
    }
    if (sign < 0)
        mono.coeff = -mono.coeff;
    return mono.coeff != 0;
}

/// Items view of a canonical monomial (for products and operators).
inline std::vector<detail::Item> monomial_items(const Context& ctx, const Monomial& m)
{
    using detail::Item;
    std::vector<Item> items;
    items.reserve(m.scalars.size() + m.traces.size() + 1);
    for (const auto& s : m.scalars) {
        Item it;
        it.type = Item::Scalar;
        it.gen = s.gen;
        it.grading = ctx.grading(s.gen);
        it.locale = s.locale;
        items.push_back(std::move(it));
    }
    for (const auto& t : m.traces) {
        Item it;
        it.type = Item::Trace;
        it.word = t.word;
        it.grading = detail::word_grading(ctx, t.word);
        it.locale = t.locale;
        items.push_back(std::move(it));
    }
    if (!m.open.empty()) {
        Item it;
        it.type = Item::Open;
        it.word = m.open;
        it.grading = detail::word_grading(ctx, m.open);
        it.locale = m.open_locale;
        items.push_back(std::move(it));
    }
    return items;
}

inline Grading monomial_grading(const Context& ctx, const Monomial& m)
{
    Grading g;
    for (const auto& s : m.scalars)
        g += ctx.grading(s.gen);
    for (const auto& t : m.traces)
        g += detail::word_grading(ctx, t.word);
    g += detail::word_grading(ctx, m.open);
    return g;
}

/// Grading of a monomial as seen from outside its integral markers: form
/// degree only from unintegrated factors, ghost number from everything.
inline Grading monomial_external_grading(const Context& ctx, const Monomial& m)
{
    Grading full = monomial_grading(ctx, m);
    Grading g{0, full.gh};
    for (const auto& s : m.scalars)
        if (s.locale == 0)
            g.deg += ctx.grading(s.gen).deg;
    for (const auto& t : m.traces)
        if (t.locale == 0)
            g.deg += detail::word_grading(ctx, t.word).deg;
    if (m.open_locale == 0)
        g.deg += detail::word_grading(ctx, m.open).deg;
    return g;
}

} // namespace bvloop
