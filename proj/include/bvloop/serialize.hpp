#pragma once

#include "bvloop/expr.hpp"

#include <json.hpp>

#include <sstream>

namespace bvloop {

/// Canonical S-expression form:
///   (sum (mono <coeff> (params (name exp)...) (int k)?
///         (s <gen>)... (tr <gen>...)... (w <gen>...)? ) ...)
/// with each generator printed as name[:d]^loc{deg,gh}. Gradings are
/// informative on output; the parser validates them against the context.
/// Round-trips bit-exactly through canon.

namespace ser {

inline std::string gen_token(const Context& ctx, const GenRef& g, int locale)
{
    const auto& info = ctx.gen(g.id);
    std::string s = info.name;
    if (g.dlevel > 0)
        s += ":" + std::to_string(g.dlevel);
    if (locale > 0)
        s += "@" + std::to_string(locale);
    Grading gr = ctx.grading(g);
    s += "{" + std::to_string(gr.deg) + "," + std::to_string(gr.gh) + "}";
    return s;
}

} // namespace ser

inline std::string to_sexpr(const GExpr& e)
{
    const auto& ctx = *e.context();
    std::ostringstream os;
    os << "(sum";
    for (const auto& m : e.terms()) {
        os << " (mono " << to_string(m.coeff);
        if (!m.params.empty()) {
            os << " (params";
            for (const auto& [pid, exp] : m.params)
                os << " (" << ctx.param_name(pid) << " " << exp << ")";
            os << ")";
        }
        if (m.locale_count > 0)
            os << " (int " << m.locale_count << ")";
        for (const auto& s : m.scalars)
            os << " (s " << ser::gen_token(ctx, s.gen, s.locale) << ")";
        for (const auto& t : m.traces) {
            os << " (tr";
            for (const auto& g : t.word)
                os << " " << ser::gen_token(ctx, g, t.locale);
            os << ")";
        }
        if (!m.open.empty()) {
            os << " (w";
            for (const auto& g : m.open)
                os << " " << ser::gen_token(ctx, g, m.open_locale);
            os << ")";
        }
        os << ")";
    }
    os << ")";
    return os.str();
}

namespace ser {

struct Tok {
    enum Type { LParen, RParen, Atom, End } type;
    std::string text;
    size_t pos;
};

class Lexer {
public:
    explicit Lexer(std::string s) : s_(std::move(s)) {}
    Tok next()
    {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_])))
            ++i_;
        if (i_ >= s_.size())
            return {Tok::End, "", i_};
        if (s_[i_] == '(')
            return {Tok::LParen, "(", i_++};
        if (s_[i_] == ')')
            return {Tok::RParen, ")", i_++};
        size_t start = i_;
        while (i_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[i_])) && s_[i_] != '(' && s_[i_] != ')')
            ++i_;
        return {Tok::Atom, s_.substr(start, i_ - start), start};
    }

private:
    std::string s_;
    size_t i_ = 0;
};

[[noreturn]] inline void fail(const char* what, size_t pos)
{
    throw std::invalid_argument("s-expression parse error at offset " + std::to_string(pos) + ": " + what);
}

/// name[:d][@loc][{deg,gh}] -> (GenRef, locale)
inline std::pair<GenRef, int> parse_gen_token(const Context& ctx, const std::string& tok, size_t pos)
{
    std::string t = tok;
    // strip optional grading suffix
    if (auto b = t.find('{'); b != std::string::npos) {
        if (t.back() != '}')
            fail("malformed grading suffix", pos);
        t = t.substr(0, b);
    }
    int locale = 0;
    if (auto a = t.find('@'); a != std::string::npos) {
        locale = std::stoi(t.substr(a + 1));
        t = t.substr(0, a);
    }
    int dlevel = 0;
    if (auto c = t.find(':'); c != std::string::npos) {
        dlevel = std::stoi(t.substr(c + 1));
        t = t.substr(0, c);
    }
    int id = ctx.find_generator(t);
    if (id < 0)
        fail("unknown generator", pos);
    return {GenRef{static_cast<uint16_t>(id), static_cast<uint16_t>(dlevel)}, locale};
}

} // namespace ser

/// Parses the canonical S-expression form. Accepts `w` (wedge word), `tr`,
/// `s`, and also `·`-tagged words, which are converted through the dot
/// prefactor into the internal wedge layout.
inline GExpr parse_sexpr(ContextPtr ctx, const std::string& text)
{
    using ser::Tok;
    ser::Lexer lx(text);
    auto expect = [&](Tok::Type ty, const char* what) {
        Tok t = lx.next();
        if (t.type != ty)
            ser::fail(what, t.pos);
        return t;
    };
    expect(Tok::LParen, "expected (sum ...)");
    Tok head = lx.next();
    if (head.type != Tok::Atom || head.text != "sum")
        ser::fail("expected sum", head.pos);

    std::vector<Monomial> monos;
    for (;;) {
        Tok t = lx.next();
        if (t.type == Tok::RParen)
            break;
        if (t.type != Tok::LParen)
            ser::fail("expected (mono ...)", t.pos);
        Tok mh = lx.next();
        if (mh.type != Tok::Atom || mh.text != "mono")
            ser::fail("expected mono", mh.pos);
        Tok ct = lx.next();
        if (ct.type != Tok::Atom)
            ser::fail("expected coefficient", ct.pos);

        Monomial m;
        m.coeff = parse_rat(ct.text);
        std::vector<detail::Item> items;
        bool dot_mode_any = false;
        for (;;) {
            Tok u = lx.next();
            if (u.type == Tok::RParen)
                break;
            if (u.type != Tok::LParen)
                ser::fail("expected factor list", u.pos);
            Tok tag = lx.next();
            if (tag.type != Tok::Atom)
                ser::fail("expected factor tag", tag.pos);
            if (tag.text == "params") {
                for (;;) {
                    Tok p = lx.next();
                    if (p.type == Tok::RParen)
                        break;
                    if (p.type != Tok::LParen)
                        ser::fail("expected (name exp)", p.pos);
                    Tok nm = lx.next();
                    Tok ex = lx.next();
                    if (nm.type != Tok::Atom || ex.type != Tok::Atom)
                        ser::fail("expected (name exp)", p.pos);
                    int pid = ctx->add_param(nm.text);
                    m.params = param_mul(m.params, param_pow(pid, std::stoi(ex.text)));
                    expect(Tok::RParen, "expected )");
                }
            } else if (tag.text == "int") {
                Tok k = expect(Tok::Atom, "expected locale count");
                m.locale_count = std::stoi(k.text);
                expect(Tok::RParen, "expected )");
            } else if (tag.text == "s") {
                Tok gt = expect(Tok::Atom, "expected generator");
                auto [g, loc] = ser::parse_gen_token(*ctx, gt.text, gt.pos);
                detail::Item it;
                it.type = detail::Item::Scalar;
                it.gen = g;
                it.locale = loc;
                items.push_back(std::move(it));
                expect(Tok::RParen, "expected )");
            } else if (tag.text == "tr" || tag.text == "w" || tag.text == "\xc2\xb7") {
                detail::Item it;
                it.type = tag.text == "tr" ? detail::Item::Trace : detail::Item::Open;
                bool dotted = tag.text == "\xc2\xb7";
                std::vector<std::pair<GenRef, int>> letters;
                for (;;) {
                    Tok gt = lx.next();
                    if (gt.type == Tok::RParen)
                        break;
                    if (gt.type != Tok::Atom)
                        ser::fail("expected generator", gt.pos);
                    letters.push_back(ser::parse_gen_token(*ctx, gt.text, gt.pos));
                }
                if (!letters.empty()) {
                    it.locale = letters.front().second;
                    for (auto& [g, loc] : letters) {
                        if (loc != it.locale)
                            ser::fail("mixed locales inside one word", 0);
                        it.word.push_back(g);
                    }
                }
                if (dotted && it.word.size() > 1) {
                    // dot-composed word: fold in the (-1)^{gh.deg} prefactors
                    dot_mode_any = true;
                    Grading acc = ctx->grading(it.word[0]);
                    for (size_t i = 1; i < it.word.size(); ++i) {
                        Grading gi = ctx->grading(it.word[i]);
                        if ((acc.gh * gi.deg) & 1)
                            m.coeff = -m.coeff;
                        acc += gi;
                    }
                }
                items.push_back(std::move(it));
            } else {
                ser::fail("unknown factor tag", tag.pos);
            }
        }
        (void)dot_mode_any;
        Monomial out = m;
        out.scalars.clear();
        out.traces.clear();
        out.open.clear();
        if (normalize_monomial(*ctx, std::move(items), out))
            monos.push_back(std::move(out));
    }
    return GExpr::from_monomials(std::move(ctx), std::move(monos));
}

/// JSON mirror of the S-expression form.
inline nlohmann::json expr_to_json(const GExpr& e)
{
    const auto& ctx = *e.context();
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& m : e.terms()) {
        nlohmann::json jm;
        jm["coeff"] = to_string(m.coeff);
        if (!m.params.empty()) {
            nlohmann::json jp = nlohmann::json::object();
            for (const auto& [pid, exp] : m.params)
                jp[ctx.param_name(pid)] = exp;
            jm["params"] = jp;
        }
        if (m.locale_count > 0)
            jm["integrals"] = m.locale_count;
        auto genj = [&](const GenRef& g, int loc) {
            nlohmann::json jg;
            jg["gen"] = ctx.gen(g.id).name;
            if (g.dlevel)
                jg["d"] = g.dlevel;
            if (loc)
                jg["loc"] = loc;
            Grading gr = ctx.grading(g);
            jg["deg"] = gr.deg;
            jg["gh"] = gr.gh;
            return jg;
        };
        if (!m.scalars.empty()) {
            nlohmann::json js = nlohmann::json::array();
            for (const auto& s : m.scalars)
                js.push_back(genj(s.gen, s.locale));
            jm["scalars"] = js;
        }
        if (!m.traces.empty()) {
            nlohmann::json jt = nlohmann::json::array();
            for (const auto& t : m.traces) {
                nlohmann::json w = nlohmann::json::array();
                for (const auto& g : t.word)
                    w.push_back(genj(g, t.locale));
                jt.push_back(w);
            }
            jm["traces"] = jt;
        }
        if (!m.open.empty()) {
            nlohmann::json w = nlohmann::json::array();
            for (const auto& g : m.open)
                w.push_back(genj(g, m.open_locale));
            jm["word"] = w;
        }
        terms.push_back(jm);
    }
    return nlohmann::json{{"sum", terms}};
}

inline GExpr expr_from_json(ContextPtr ctx, const nlohmann::json& j)
{
    std::vector<Monomial> monos;
    for (const auto& jm : j.at("sum")) {
        Monomial m;
        m.coeff = parse_rat(jm.at("coeff").get<std::string>());
        if (jm.contains("params"))
            for (auto it = jm["params"].begin(); it != jm["params"].end(); ++it)
                m.params = param_mul(m.params, param_pow(ctx->add_param(it.key()), it.value().get<int>()));
        if (jm.contains("integrals"))
            m.locale_count = jm["integrals"].get<int>();
        std::vector<detail::Item> items;
        auto parse_gen = [&](const nlohmann::json& jg) -> std::pair<GenRef, int> {
            int id = ctx->generator(jg.at("gen").get<std::string>());
            int dl = jg.contains("d") ? jg["d"].get<int>() : 0;
            int loc = jg.contains("loc") ? jg["loc"].get<int>() : 0;
            return {GenRef{static_cast<uint16_t>(id), static_cast<uint16_t>(dl)}, loc};
        };
        if (jm.contains("scalars"))
            for (const auto& jg : jm["scalars"]) {
                detail::Item it;
                it.type = detail::Item::Scalar;
                std::tie(it.gen, it.locale) = parse_gen(jg);
                items.push_back(std::move(it));
            }
        if (jm.contains("traces"))
            for (const auto& jw : jm["traces"]) {
                detail::Item it;
                it.type = detail::Item::Trace;
                for (const auto& jg : jw) {
                    auto [g, loc] = parse_gen(jg);
                    it.word.push_back(g);
                    it.locale = loc;
                }
                items.push_back(std::move(it));
            }
        if (jm.contains("word")) {
            detail::Item it;
            it.type = detail::Item::Open;
            for (const auto& jg : jm["word"]) {
                auto [g, loc] = parse_gen(jg);
                it.word.push_back(g);
                it.locale = loc;
            }
            items.push_back(std::move(it));
        }
        if (normalize_monomial(*ctx, std::move(items), m))
            monos.push_back(std::move(m));
    }
    return GExpr::from_monomials(std::move(ctx), std::move(monos));
}

} // namespace bvloop
