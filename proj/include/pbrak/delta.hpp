#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pbrak/expr.hpp"
#include "pbrak/rational.hpp"

// Symbolic non-equal-time brackets over time-tagged atoms x(t), p(t').
// Derivatives of tagged atoms produce Kronecker deltas over the tags;
// results are formal sums of (coefficient expression) * (product of
// deltas), kept in a canonical form where delta(a,a) is eliminated,
// provably distinct rational tags annihilate the term, and each
// equality class is written as delta(min, other) factors in tag order.

namespace pbrak {

// Exact time tag: a named symbol or an exact rational. Equality of two
// rationals or two identical symbols is decidable; a symbol against
// anything else is unknown and the delta stays formal.
struct TimeTag {
    enum class Kind { rational, symbol };
    Kind kind = Kind::symbol;
    Rational value{};
    std::string name;

    static TimeTag sym(std::string n) { return TimeTag{Kind::symbol, {}, std::move(n)}; }
    static TimeTag rat(Rational r) { return TimeTag{Kind::rational, r, {}}; }
};

bool operator==(const TimeTag& a, const TimeTag& b);
// Total order used for canonical forms: rationals (by value) before
// symbols (lexicographic).
bool tag_less(const TimeTag& a, const TimeTag& b);

enum class TagEquality { equal, distinct, unknown };
TagEquality compare_tags(const TimeTag& a, const TimeTag& b);

std::string to_string(const TimeTag& t);

// Parse "t", "t'", "tau", "0", "3/2", "-1"...
TimeTag parse_time_tag(std::string_view text);

// ---- tagged expressions ---------------------------------------------------

struct TaggedVar {
    VarKind kind;
    int index;  // 1-based
    TimeTag tag;
};
bool operator==(const TaggedVar& a, const TaggedVar& b);

class TaggedExpr {
public:
    enum class Kind { constant, variable, unary, binary };

    struct Node;
    using NodePtr = std::shared_ptr<const Node>;

    struct Node {
        Kind kind;
        bool exact = false;
        Rational rat{};
        double value = 0.0;
        TaggedVar var{VarKind::position, 1, {}};
        UnaryOp uop = UnaryOp::neg;
        BinaryOp bop = BinaryOp::add;
        NodePtr lhs, rhs;
    };

    TaggedExpr() = default;
    explicit TaggedExpr(NodePtr n) : node_(std::move(n)) {}

    const Node& node() const { return *node_; }
    const NodePtr& ptr() const { return node_; }
    bool valid() const { return node_ != nullptr; }
    Kind kind() const { return node_->kind; }

private:
    NodePtr node_;
};

TaggedExpr te_const(Rational r);
TaggedExpr te_const(double v);
TaggedExpr te_int(std::int64_t n);
TaggedExpr te_var(TaggedVar v);
TaggedExpr te_unary(UnaryOp op, const TaggedExpr& u);
TaggedExpr te_neg(const TaggedExpr& u);
TaggedExpr te_add(const TaggedExpr& a, const TaggedExpr& b);
TaggedExpr te_sub(const TaggedExpr& a, const TaggedExpr& b);
TaggedExpr te_mul(const TaggedExpr& a, const TaggedExpr& b);
TaggedExpr te_div(const TaggedExpr& a, const TaggedExpr& b);
TaggedExpr te_pow(const TaggedExpr& base, Rational exponent);

// Grammar is the expr grammar with every atom tagged:
// ident := ('x'|'p') digits? '(' tag ')'.
TaggedExpr parse_tagged(std::string_view text, int n_dof);

std::string to_string(const TaggedExpr& e);
bool structurally_equal(const TaggedExpr& a, const TaggedExpr& b);
bool te_is_zero(const TaggedExpr& e);
bool te_is_one(const TaggedExpr& e);
int max_tagged_index(const TaggedExpr& e);

// ---- delta sums -------------------------------------------------------------

struct DeltaFactor {
    TimeTag a, b;  // canonical: tag_less(a, b)
};
bool operator==(const DeltaFactor& x, const DeltaFactor& y);

struct DeltaTerm {
    TaggedExpr coeff;
    std::vector<DeltaFactor> deltas;
};

struct DeltaExpr {
    std::vector<DeltaTerm> terms;  // empty means 0

    bool is_zero() const { return terms.empty(); }
};

DeltaExpr canonicalize(DeltaExpr d);
DeltaExpr delta_add(const DeltaExpr& a, const DeltaExpr& b);
DeltaExpr delta_negate(const DeltaExpr& a);
DeltaExpr delta_scale(const DeltaExpr& a, const TaggedExpr& factor);
DeltaExpr delta_mul(const DeltaExpr& a, const DeltaExpr& b);

bool structurally_equal(const DeltaExpr& a, const DeltaExpr& b);
std::string to_string(const DeltaExpr& d);

// d F / d s'(tag) per the regularized derivative rule: each matching atom
// s(t_i) contributes delta(t_i, tag) * F'(s(t_i)).
DeltaExpr symbolic_partial(const TaggedExpr& f, VarKind kind, int index, const TimeTag& tag);

// sum_k [dA/dx_k(tau) dB/dp_k(tau) - dA/dp_k(tau) dB/dx_k(tau)]
DeltaExpr symbolic_bracket(const TaggedExpr& a, const TaggedExpr& b, const TimeTag& tau,
                           int n_dof);

}  // namespace pbrak
