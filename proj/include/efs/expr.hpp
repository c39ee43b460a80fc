#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "efs/factory.hpp"

namespace efs {

/// A factory expression in prefix form, e.g. `exp 2.0 (scale 0.5 leaf:A)`.
///
///   leaf:NAME             Bernoulli leaf; leaves with one name share a source
///   const P               constant coin
///   scale L E             complement E             double D E
///   exp L E               exp-lazy L E             pgf DIST E
///   average E E           mix W E E                add D E E
///
/// DIST is geom:Q, const:K or poisson:L. Parentheses are optional.
struct Expression {
    std::string op;
    std::vector<double> params;
    std::string label;  // leaf name or distribution spec
    std::vector<Expression> args;
};

/// Throws InvalidParameter with the offending token on malformed input.
Expression parse_expression(std::string_view text);

/// Canonical fully parenthesised form.
std::string to_string(const Expression& e);

std::set<std::string> leaf_names(const Expression& e);

/// Builds the coin tree. Leaf sources are named "leaf:NAME" on `ledger`.
/// Throws InvalidParameter when a leaf has no bias.
CoinPtr build_coin(const Expression& e, const std::map<std::string, double>& biases,
                   const std::shared_ptr<SampleLedger>& ledger, Stream aux);

} // namespace efs
