#include "efs/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "efs/errors.hpp"

namespace efs {

namespace {

struct Arity {
    std::size_t params;
    std::size_t args;
};

const std::map<std::string, Arity>& arities()
{
    static const std::map<std::string, Arity> a{
        {"const", {1, 0}},   {"scale", {1, 1}}, {"complement", {0, 1}}, {"double", {1, 1}},
        {"exp", {1, 1}},     {"exp-lazy", {1, 1}}, {"pgf", {0, 1}},      {"average", {0, 2}},
        {"mix", {1, 2}},     {"add", {1, 2}},
    };
    return a;
}

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty())
            out.push_back(std::move(cur));
        cur.clear();
    };
    for (char c : text) {
        if (c == '(' || c == ')') {
            flush();
            out.emplace_back(1, c);
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else {
            cur += c;
        }
    }
    flush();
    return out;
}

double number(const std::string& tok)
{
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    const auto r = std::from_chars(tok.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end)
        throw InvalidParameter("expected a number, got '" + tok + "'");
    return v;
}

class Parser {
public:
    explicit Parser(std::vector<std::string> toks) : toks_(std::move(toks)) {}

    Expression parse()
    {
        Expression e = expr();
        if (pos_ != toks_.size())
            throw InvalidParameter("unexpected '" + toks_[pos_] + "' after expression");
        return e;
    }

private:
    const std::string& next()
    {
        if (pos_ >= toks_.size())
            throw InvalidParameter("expression ends early");
        return toks_[pos_++];
    }

    Expression expr()
    {
        const std::string tok = next();
        if (tok == "(") {
            Expression e = expr();
            if (next() != ")")
                throw InvalidParameter("expected ')'");
            return e;
        }
        if (tok == ")")
            throw InvalidParameter("unexpected ')'");
        Expression e;
        if (tok.rfind("leaf:", 0) == 0) {
            e.op = "leaf";
            e.label = tok.substr(5);
            if (e.label.empty())
                throw InvalidParameter("leaf needs a name");
            return e;
        }
        const auto it = arities().find(tok);
        if (it == arities().end())
            throw InvalidParameter("unknown operator '" + tok + "'");
        e.op = tok;
        if (tok == "pgf") {
            e.label = next();
            parse_distribution(e.label);
        }
        for (std::size_t i = 0; i < it->second.params; ++i)
            e.params.push_back(number(next()));
        for (std::size_t i = 0; i < it->second.args; ++i)
            e.args.push_back(expr());
        return e;
    }

public:
    static DistributionPtr parse_distribution(const std::string& spec)
    {
        const auto colon = spec.find(':');
        if (colon == std::string::npos)
            throw InvalidParameter("distribution must be geom:Q, const:K or poisson:L, got '" + spec + "'");
        const std::string kind = spec.substr(0, colon);
        const double v = number(spec.substr(colon + 1));
        if (kind == "geom")
            return std::make_shared<GeometricDistribution>(v);
        if (kind == "poisson")
            return std::make_shared<PoissonDistribution>(v);
        if (kind == "const") {
            if (v < 0.0 || v != std::floor(v))
                throw InvalidParameter("const distribution needs a non-negative integer");
            return std::make_shared<ConstantDistribution>(static_cast<std::uint64_t>(v));
        }
        throw InvalidParameter("unknown distribution '" + kind + "'");
    }

private:
    std::vector<std::string> toks_;
    std::size_t pos_ = 0;
};

void collect(const Expression& e, std::set<std::string>& out)
{
    if (e.op == "leaf")
        out.insert(e.label);
    for (const auto& a : e.args)
        collect(a, out);
}

CoinPtr build(const Expression& e, std::map<std::string, CoinPtr>& leaves, Stream& aux)
{
    if (e.op == "leaf")
        return leaves.at(e.label);
    std::vector<CoinPtr> c;
    for (const auto& a : e.args)
        c.push_back(build(a, leaves, aux));
    if (e.op == "const")
        return constant_coin(e.params[0], aux.split());
    if (e.op == "scale")
        return scale(c[0], e.params[0], aux.split());
    if (e.op == "complement")
        return complement(c[0]);
    if (e.op == "double")
        return double_bias(c[0], e.params[0], aux.split());
    if (e.op == "exp" || e.op == "exp-lazy")
        return exponentiate(c[0], e.params[0], aux.split(), e.op == "exp-lazy");
    if (e.op == "pgf")
        return pgf(c[0], Parser::parse_distribution(e.label), aux.split());
    if (e.op == "average")
        return average(c[0], c[1], aux.split());
    if (e.op == "mix")
        return mix(c[0], c[1], e.params[0], aux.split());
    if (e.op == "add")
        return add(c[0], c[1], e.params[0], aux.split());
    throw InvalidParameter("unknown operator '" + e.op + "'");
}

} // namespace

Expression parse_expression(std::string_view text)
{
    return Parser(tokenize(text)).parse();
}

std::string to_string(const Expression& e)
{
    if (e.op == "leaf")
        return "leaf:" + e.label;
    std::ostringstream os;
    os << '(' << e.op;
    if (!e.label.empty())
        os << ' ' << e.label;
    for (double p : e.params) {
        char buf[32];
        const auto r = std::to_chars(buf, buf + sizeof buf, p);
        os << ' ' << std::string_view(buf, static_cast<std::size_t>(r.ptr - buf));
    }
    for (const auto& a : e.args)
        os << ' ' << to_string(a);
    os << ')';
    return os.str();
}

std::set<std::string> leaf_names(const Expression& e)
{
    std::set<std::string> out;
    collect(e, out);
    return out;
}

CoinPtr build_coin(const Expression& e, const std::map<std::string, double>& biases,
                   const std::shared_ptr<SampleLedger>& ledger, Stream aux)
{
    std::map<std::string, CoinPtr> leaves;
    for (const auto& name : leaf_names(e)) {
        const auto it = biases.find(name);
        if (it == biases.end())
            throw InvalidParameter("no bias given for leaf '" + name + "'");
        leaves[name] = make_bernoulli_source("leaf:" + name, it->second, ledger, aux.derive("leaf:" + name));
    }
    return build(e, leaves, aux);
}

} // namespace efs
