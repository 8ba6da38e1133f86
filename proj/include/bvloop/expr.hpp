#pragma once

#include "bvloop/monomial.hpp"

#include <functional>
#include <optional>
#include <stdexcept>

namespace bvloop {

/// Canonical formal sum of monomials bound to one context. Value type:
/// every operation returns a freshly canonicalized expression, inputs are
/// never mutated, so concurrent use over shared expressions is safe.
class GExpr {
public:
    GExpr() = default;
    explicit GExpr(ContextPtr ctx) : ctx_(std::move(ctx)) {}

    static GExpr zero(ContextPtr ctx) { return GExpr(std::move(ctx)); }

    static GExpr constant(ContextPtr ctx, Rat c, ParamMono params = {})
    {
        GExpr e(std::move(ctx));
        if (c != 0) {
            Monomial m;
            m.coeff = std::move(c);
            m.params = std::move(params);
            e.terms_.push_back(std::move(m));
        }
        return e;
    }

    static GExpr generator(ContextPtr ctx, const std::string& name, int dlevel = 0)
    {
        int id = ctx->generator(name);
        return generator(std::move(ctx), GenRef{static_cast<uint16_t>(id), static_cast<uint16_t>(dlevel)});
    }

    static GExpr generator(ContextPtr ctx, GenRef g)
    {
        GExpr e(ctx);
        const auto& info = ctx->gen(g.id);
        Monomial m;
        if (info.algebra_valued)
            m.open.push_back(g);
        else
            m.scalars.push_back({g, 0});
        if (g.dlevel >= 2 || ctx->grading(g).deg > ctx->dim())
            return zero(std::move(ctx));
        e.terms_.push_back(std::move(m));
        return e;
    }

    static GExpr param(ContextPtr ctx, const std::string& name, int exp = 1)
    {
        int pid = ctx->add_param(name);
        return constant(std::move(ctx), 1, param_pow(pid, exp));
    }

    static GExpr from_monomials(ContextPtr ctx, std::vector<Monomial> ms)
    {
        GExpr e(std::move(ctx));
        e.terms_ = std::move(ms);
        e.canonicalize();
        return e;
    }

    const ContextPtr& context() const { return ctx_; }
    const std::vector<Monomial>& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    size_t size() const { return terms_.size(); }

    GExpr operator+(const GExpr& o) const
    {
        check_same_context(o);
        GExpr out(ctx_ ? ctx_ : o.ctx_);
        out.terms_ = terms_;
        out.terms_.insert(out.terms_.end(), o.terms_.begin(), o.terms_.end());
        out.canonicalize();
        return out;
    }

    GExpr operator-() const
    {
        GExpr out(*this);
        for (auto& m : out.terms_)
            m.coeff = -m.coeff;
        return out;
    }

    GExpr operator-(const GExpr& o) const { return *this + (-o); }

    GExpr scaled(const Rat& c, const ParamMono& p = {}) const
    {
        if (c == 0)
            return zero(ctx_);
        GExpr out(*this);
        for (auto& m : out.terms_) {
            m.coeff *= c;
            m.params = param_mul(m.params, p);
        }
        out.sort_terms();
        return out;
    }

    GExpr& operator+=(const GExpr& o) { return *this = *this + o; }
    GExpr& operator-=(const GExpr& o) { return *this = *this - o; }

    bool operator==(const GExpr& o) const
    {
        if (terms_.size() != o.terms_.size())
            return false;
        for (size_t i = 0; i < terms_.size(); ++i) {
            if (!terms_[i].same_key(o.terms_[i]) || terms_[i].coeff != o.terms_[i].coeff)
                return false;
        }
        return true;
    }

    /// True when every monomial carries grading g.
    bool homogeneous(const Grading& g) const
    {
        for (const auto& m : terms_)
            if (monomial_grading(*ctx_, m) != g)
                return false;
        return true;
    }

    std::optional<Grading> uniform_grading() const
    {
        if (terms_.empty())
            return std::nullopt;
        Grading g = monomial_grading(*ctx_, terms_.front());
        for (const auto& m : terms_)
            if (monomial_grading(*ctx_, m) != g)
                return std::nullopt;
        return g;
    }

    GExpr filter(const std::function<bool(const Monomial&)>& keep) const
    {
        GExpr out(ctx_);
        for (const auto& m : terms_)
            if (keep(m))
                out.terms_.push_back(m);
        return out;
    }

    /// Monomials of a fixed bidegree (component extraction).
    GExpr component(const Grading& g) const
    {
        return filter([&](const Monomial& m) { return monomial_grading(*ctx_, m) == g; });
    }

    GExpr ghost_component(int gh) const
    {
        return filter([&](const Monomial& m) { return monomial_grading(*ctx_, m).gh == gh; });
    }

    void check_same_context(const GExpr& o) const
    {
        if (ctx_ && o.ctx_ && ctx_ != o.ctx_)
            throw std::invalid_argument("expressions bound to different contexts");
    }

    /// Merges equal keys, drops zeros, sorts. Idempotent.
    void canonicalize()
    {
        sort_terms();
        std::vector<Monomial> merged;
        for (auto& m : terms_) {
            if (m.coeff == 0)
                continue;
            if (!merged.empty() && merged.back().same_key(m)) {
                merged.back().coeff += m.coeff;
                if (merged.back().coeff == 0)
                    merged.pop_back();
            } else {
                merged.push_back(std::move(m));
            }
        }
        terms_ = std::move(merged);
    }

private:
    void sort_terms()
    {
        std::sort(terms_.begin(), terms_.end(),
                  [](const Monomial& a, const Monomial& b) { return a.key_less(b); });
    }

    ContextPtr ctx_;
    std::vector<Monomial> terms_;
};

} // namespace bvloop
