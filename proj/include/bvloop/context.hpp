#pragma once

#include "bvloop/grading.hpp"
#include "bvloop/rational.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace bvloop {

enum class GenKind : uint8_t {
    Field = 0,
    Ghost = 1,
    Antifield = 2,
    BackgroundTransport = 3,
    Parameter = 4,
};

inline const char* to_string(GenKind k)
{
    switch (k) {
    case GenKind::Field: return "field";
    case GenKind::Ghost: return "ghost";
    case GenKind::Antifield: return "antifield";
    case GenKind::BackgroundTransport: return "background-transport";
    case GenKind::Parameter: return "parameter";
    }
    return "?";
}

inline GenKind gen_kind_from_string(const std::string& s)
{
    if (s == "field") return GenKind::Field;
    if (s == "ghost") return GenKind::Ghost;
    if (s == "antifield") return GenKind::Antifield;
    if (s == "background-transport") return GenKind::BackgroundTransport;
    if (s == "parameter") return GenKind::Parameter;
    throw std::invalid_argument("unknown generator kind '" + s + "'");
}

struct GenInfo {
    std::string name;
    Grading grading;
    GenKind kind = GenKind::Field;
    bool algebra_valued = true;
    int partner = -1; // index of the paired (anti)field, -1 if none
};

/// A generator occurrence: interned id plus the number of d_{A0} applied.
/// d_{A0} is flat, so dlevel >= 2 makes the enclosing monomial zero.
struct GenRef {
    uint16_t id = 0;
    uint16_t dlevel = 0;

    auto operator<=>(const GenRef&) const = default;
};

/// Dimension-n workspace: interned generators and formal parameters.
/// Immutable from the expression layer's point of view; expressions hold a
/// pointer to their context and may only be combined within one context.
class Context {
public:
    explicit Context(int n) : n_(n)
    {
        if (n < 1)
            throw std::invalid_argument("context dimension must be >= 1");
    }

    int dim() const { return n_; }

    int add_generator(GenInfo info)
    {
        if (by_name_.count(info.name))
            throw std::invalid_argument("duplicate generator '" + info.name + "'");
        if (info.grading.deg < 0 || info.grading.deg > n_)
            throw std::invalid_argument("generator '" + info.name + "' has form degree outside [0, n]");
        int id = static_cast<int>(gens_.size());
        by_name_[info.name] = id;
        gens_.push_back(std::move(info));
        rebuild_ranks();
        return id;
    }

    const GenInfo& gen(int id) const { return gens_.at(static_cast<size_t>(id)); }
    size_t gen_count() const { return gens_.size(); }

    void set_partners(int a, int b)
    {
        gens_.at(static_cast<size_t>(a)).partner = b;
        gens_.at(static_cast<size_t>(b)).partner = a;
    }

    int find_generator(const std::string& name) const
    {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? -1 : it->second;
    }

    int generator(const std::string& name) const
    {
        int id = find_generator(name);
        if (id < 0)
            throw std::invalid_argument("unknown generator '" + name + "'");
        return id;
    }

    /// Canonical order key: (kind, name, derivative-level) lexicographic.
    /// dlevel is compared by the caller; this returns the (kind, name) rank.
    uint32_t rank(int id) const { return ranks_.at(static_cast<size_t>(id)); }

    Grading grading(const GenRef& g) const
    {
        Grading gr = gen(g.id).grading;
        gr.deg += g.dlevel;
        return gr;
    }

    int add_param(const std::string& name)
    {
        auto it = param_by_name_.find(name);
        if (it != param_by_name_.end())
            return it->second;
        int id = static_cast<int>(params_.size());
        param_by_name_[name] = id;
        params_.push_back(name);
        return id;
    }

    const std::string& param_name(int id) const { return params_.at(static_cast<size_t>(id)); }
    int find_param(const std::string& name) const
    {
        auto it = param_by_name_.find(name);
        return it == param_by_name_.end() ? -1 : it->second;
    }
    size_t param_count() const { return params_.size(); }

private:
    void rebuild_ranks()
    {
        // Sort ids by (kind, name); rank = position. Stable across inserts
        // only in the sense that expressions are canonicalized against the
        // final table; contexts are fully populated before use.
        std::vector<int> ids(gens_.size());
        for (size_t i = 0; i < ids.size(); ++i)
            ids[i] = static_cast<int>(i);
        std::sort(ids.begin(), ids.end(), [&](int a, int b) {
            const auto& ga = gens_[static_cast<size_t>(a)];
            const auto& gb = gens_[static_cast<size_t>(b)];
            if (ga.kind != gb.kind)
                return ga.kind < gb.kind;
            return ga.name < gb.name;
        });
        ranks_.assign(gens_.size(), 0);
        for (size_t pos = 0; pos < ids.size(); ++pos)
            ranks_[static_cast<size_t>(ids[pos])] = static_cast<uint32_t>(pos);
    }

    int n_;
    std::vector<GenInfo> gens_;
    std::map<std::string, int> by_name_;
    std::vector<uint32_t> ranks_;
    std::vector<std::string> params_;
    std::map<std::string, int> param_by_name_;
};

using ContextPtr = std::shared_ptr<Context>;

} // namespace bvloop
