#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pbrak/mat.hpp"
#include "pbrak/rational.hpp"
#include "pbrak/state.hpp"

// Immutable expression trees over the canonical variables x_i, p_i, with
// exact symbolic differentiation and double-precision evaluation.
//
// Grammar (whitespace insignificant):
//   expr     := '-'? term (('+'|'-') term)*
//   term     := factor (('*'|'/') factor)*
//   factor   := base ('^' exponent)?
//   base     := number | ident | func '(' expr ')' | '(' expr ')'
//   ident    := ('x'|'p') digits?          -- bare x/p alias x1/p1
//   func     := sin | cos | exp | log | sqrt
//   exponent := '-'? number | '(' expr ')' -- must fold to a rational
//
// Exponents are restricted to constant rationals so that differentiation
// stays exact; write exp(y*log(x)) for a general power.

namespace pbrak {

enum class VarKind { position, momentum };

struct VarId {
    VarKind kind;
    int index;  // 1-based
    friend bool operator==(const VarId&, const VarId&) = default;
};

enum class UnaryOp { neg, sin, cos, exp, log, sqrt };
enum class BinaryOp { add, sub, mul, div, pow };

class Expr {
public:
    enum class Kind { constant, variable, unary, binary };

    struct Node;
    using NodePtr = std::shared_ptr<const Node>;

    struct Node {
        Kind kind;
        // constant
        bool exact = false;
        Rational rat{};
        double value = 0.0;
        // variable
        VarId var{VarKind::position, 1};
        // unary / binary
        UnaryOp uop = UnaryOp::neg;
        BinaryOp bop = BinaryOp::add;
        NodePtr lhs, rhs;  // unary uses lhs only
    };

    Expr() = default;
    explicit Expr(NodePtr n) : node_(std::move(n)) {}

    const Node& node() const { return *node_; }
    const NodePtr& ptr() const { return node_; }
    bool valid() const { return node_ != nullptr; }
    Kind kind() const { return node_->kind; }

private:
    NodePtr node_;
};

// ---- construction -------------------------------------------------------
// The e_* constructors fold constants and apply local identities
// (0+u, 1*u, u^1, u-u, neg(neg u), ...); parse() builds raw nodes so the
// printed form of a parsed expression reproduces the input.

Expr e_const(Rational r);
Expr e_const(double v);
Expr e_int(std::int64_t n);
Expr e_var(VarId v);
Expr e_var(VarKind kind, int index);
Expr e_unary(UnaryOp op, const Expr& u);
Expr e_neg(const Expr& u);
Expr e_add(const Expr& a, const Expr& b);
Expr e_sub(const Expr& a, const Expr& b);
Expr e_mul(const Expr& a, const Expr& b);
Expr e_div(const Expr& a, const Expr& b);
Expr e_pow(const Expr& base, Rational exponent);

// ---- operations ---------------------------------------------------------

// Parse per the grammar above; variable indices are checked against n_dof.
Expr parse_expression(std::string_view text, int n_dof);

Expr differentiate(const Expr& e, VarId v);

double evaluate(const Expr& e, const PhaseState& z);

// Gradient ordered (x_1..x_N, p_1..p_N) and symmetric Hessian at z.
void gradient_hessian(const Expr& e, const PhaseState& z, std::vector<double>& grad, Mat& hess);

std::string to_string(const Expr& e);

bool structurally_equal(const Expr& a, const Expr& b);

// Value if e is a constant (allowing a leading chain of negations).
std::optional<double> constant_value(const Expr& e);
std::optional<Rational> rational_constant(const Expr& e);

// Largest variable index referenced, 0 for closed expressions.
int max_var_index(const Expr& e);

// True when any variable node occurs in e.
bool depends_on_state(const Expr& e);

}  // namespace pbrak
