#include "pbrak/expr.hpp"

#include <cassert>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <utility>

#include "pbrak/errors.hpp"

namespace pbrak {

namespace {

using NodePtr = Expr::NodePtr;
using Kind = Expr::Kind;

NodePtr make_const_node(Rational r) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = Kind::constant;
    n->exact = true;
    n->rat = r;
    n->value = rat_to_double(r);
    return n;
}

NodePtr make_const_node(double v) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = Kind::constant;
    n->exact = false;
    n->value = v;
    return n;
}

NodePtr make_var_node(VarId v) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = Kind::variable;
    n->var = v;
    return n;
}

NodePtr make_unary_node(UnaryOp op, NodePtr child) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = Kind::unary;
    n->uop = op;
    n->lhs = std::move(child);
    return n;
}

NodePtr make_binary_node(BinaryOp op, NodePtr l, NodePtr r) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = Kind::binary;
    n->bop = op;
    n->lhs = std::move(l);
    n->rhs = std::move(r);
    return n;
}

bool is_const(const Expr& e) { return e.kind() == Kind::constant; }

bool is_zero(const Expr& e) {
    return is_const(e) && e.node().value == 0.0 && (!e.node().exact || rat_is_zero(e.node().rat));
}

bool is_one(const Expr& e) {
    const auto& n = e.node();
    return is_const(e) && (n.exact ? (n.rat == Rational{1, 1}) : n.value == 1.0);
}

bool is_neg(const Expr& e) { return e.kind() == Kind::unary && e.node().uop == UnaryOp::neg; }

Expr neg_child(const Expr& e) { return Expr(e.node().lhs); }

// Exact fold when both sides are exact rationals; double fold otherwise.
// Returns an invalid Expr when folding is not possible (overflow,
// non-finite result, division by zero).
Expr fold_binary(BinaryOp op, const Expr& a, const Expr& b) {
    const auto& na = a.node();
    const auto& nb = b.node();
    if (na.exact && nb.exact) {
        std::optional<Rational> r;
        switch (op) {
            case BinaryOp::add: r = rat_add(na.rat, nb.rat); break;
            case BinaryOp::sub: r = rat_sub(na.rat, nb.rat); break;
            case BinaryOp::mul: r = rat_mul(na.rat, nb.rat); break;
            case BinaryOp::div: r = rat_div(na.rat, nb.rat); break;
            default: break;
        }
        if (r) return e_const(*r);
    }
    double v = 0.0;
    switch (op) {
        case BinaryOp::add: v = na.value + nb.value; break;
        case BinaryOp::sub: v = na.value - nb.value; break;
        case BinaryOp::mul: v = na.value * nb.value; break;
        case BinaryOp::div:
            if (nb.value == 0.0) return Expr();
            v = na.value / nb.value;
            break;
        default: return Expr();
    }
    if (!std::isfinite(v)) return Expr();
    return e_const(v);
}

}  // namespace

// ---- smart constructors --------------------------------------------------
// Invariant: constant nodes are non-negative; signs live in neg() wrappers,
// which keeps every folded tree printable in the grammar.

Expr e_const(Rational r) {
    if (r.num < 0) return Expr(make_unary_node(UnaryOp::neg, make_const_node(rat_neg(r))));
    return Expr(make_const_node(r));
}

Expr e_const(double v) {
    if (v < 0.0) return Expr(make_unary_node(UnaryOp::neg, make_const_node(-v)));
    return Expr(make_const_node(v));
}

Expr e_int(std::int64_t n) { return e_const(rat_int(n)); }

Expr e_var(VarId v) { return Expr(make_var_node(v)); }
Expr e_var(VarKind kind, int index) { return Expr(make_var_node(VarId{kind, index})); }

Expr e_neg(const Expr& u) {
    if (is_zero(u)) return u;
    if (is_neg(u)) return neg_child(u);
    return Expr(make_unary_node(UnaryOp::neg, u.ptr()));
}

Expr e_unary(UnaryOp op, const Expr& u) {
    if (op == UnaryOp::neg) return e_neg(u);
    return Expr(make_unary_node(op, u.ptr()));
}

Expr e_add(const Expr& a, const Expr& b) {
    if (is_zero(a)) return b;
    if (is_zero(b)) return a;
    if (is_const(a) && is_const(b)) {
        if (Expr f = fold_binary(BinaryOp::add, a, b); f.valid()) return f;
    }
    if (is_neg(b)) return e_sub(a, neg_child(b));
    return Expr(make_binary_node(BinaryOp::add, a.ptr(), b.ptr()));
}

Expr e_sub(const Expr& a, const Expr& b) {
    if (is_zero(b)) return a;
    if (is_zero(a)) return e_neg(b);
    if (is_const(a) && is_const(b)) {
        if (Expr f = fold_binary(BinaryOp::sub, a, b); f.valid()) return f;
    }
    if (is_neg(b)) return e_add(a, neg_child(b));
    if (structurally_equal(a, b)) return e_int(0);
    return Expr(make_binary_node(BinaryOp::sub, a.ptr(), b.ptr()));
}

Expr e_mul(const Expr& a, const Expr& b) {
    if (is_zero(a) || is_zero(b)) return e_int(0);
    if (is_one(a)) return b;
    if (is_one(b)) return a;
    if (is_neg(a) && is_neg(b)) return e_mul(neg_child(a), neg_child(b));
    if (is_neg(a)) return e_neg(e_mul(neg_child(a), b));
    if (is_neg(b)) return e_neg(e_mul(a, neg_child(b)));
    if (is_const(a) && is_const(b)) {
        if (Expr f = fold_binary(BinaryOp::mul, a, b); f.valid()) return f;
    }
    // canonical: constant coefficient on the left, merged across nested muls
    if (is_const(b) && !is_const(a)) return e_mul(b, a);
    if (is_const(a) && b.kind() == Kind::binary && b.node().bop == BinaryOp::mul) {
        Expr bl(b.node().lhs), br(b.node().rhs);
        if (is_const(bl)) {
            if (Expr f = fold_binary(BinaryOp::mul, a, bl); f.valid()) return e_mul(f, br);
        }
    }
    return Expr(make_binary_node(BinaryOp::mul, a.ptr(), b.ptr()));
}

Expr e_div(const Expr& a, const Expr& b) {
    if (is_zero(a)) return a;
    if (is_one(b)) return a;
    if (is_neg(a) && is_neg(b)) return e_div(neg_child(a), neg_child(b));
    if (is_neg(a)) return e_neg(e_div(neg_child(a), b));
    if (is_neg(b)) return e_neg(e_div(a, neg_child(b)));
    if (is_const(a) && is_const(b) && !is_zero(b)) {
        if (Expr f = fold_binary(BinaryOp::div, a, b); f.valid()) return f;
    }
    // u/c -> (1/c)*u so constant coefficients combine
    if (is_const(b) && !is_zero(b) && !is_const(a)) {
        Expr inv = fold_binary(BinaryOp::div, e_int(1), b);
        if (inv.valid()) return e_mul(inv, a);
    }
    return Expr(make_binary_node(BinaryOp::div, a.ptr(), b.ptr()));
}

Expr e_pow(const Expr& base, Rational exponent) {
    if (rat_is_zero(exponent)) return e_int(1);
    if (exponent == Rational{1, 1}) return base;
    if (is_one(base)) return base;
    if (is_zero(base) && exponent.num > 0) return base;
    if (is_const(base) && base.node().exact && rat_is_integer(exponent) &&
        std::abs(exponent.num) <= 16 && !is_zero(base)) {
        std::optional<Rational> acc = rat_int(1);
        Rational b = base.node().rat;
        for (std::int64_t i = 0; i < std::abs(exponent.num) && acc; ++i) acc = rat_mul(*acc, b);
        if (acc && exponent.num < 0) acc = rat_div(rat_int(1), *acc);
        if (acc) return e_const(*acc);
    }
    return Expr(make_binary_node(BinaryOp::pow, base.ptr(), make_const_node(exponent)));
}

// ---- predicates ------------------------------------------------------------

std::optional<double> constant_value(const Expr& e) {
    if (e.kind() == Kind::constant) return e.node().value;
    if (is_neg(e)) {
        if (auto v = constant_value(neg_child(e))) return -*v;
    }
    return std::nullopt;
}

std::optional<Rational> rational_constant(const Expr& e) {
    if (e.kind() == Kind::constant && e.node().exact) return e.node().rat;
    if (is_neg(e)) {
        if (auto r = rational_constant(neg_child(e))) return rat_neg(*r);
    }
    return std::nullopt;
}

bool structurally_equal(const Expr& a, const Expr& b) {
    if (a.ptr() == b.ptr()) return true;
    if (!a.valid() || !b.valid()) return false;
    const auto& na = a.node();
    const auto& nb = b.node();
    if (na.kind != nb.kind) return false;
    switch (na.kind) {
        case Kind::constant:
            if (na.exact != nb.exact) return false;
            return na.exact ? na.rat == nb.rat : na.value == nb.value;
        case Kind::variable:
            return na.var == nb.var;
        case Kind::unary:
            return na.uop == nb.uop && structurally_equal(Expr(na.lhs), Expr(nb.lhs));
        case Kind::binary:
            return na.bop == nb.bop && structurally_equal(Expr(na.lhs), Expr(nb.lhs)) &&
                   structurally_equal(Expr(na.rhs), Expr(nb.rhs));
    }
    return false;
}

int max_var_index(const Expr& e) {
    switch (e.kind()) {
        case Kind::constant: return 0;
        case Kind::variable: return e.node().var.index;
        case Kind::unary: return max_var_index(Expr(e.node().lhs));
        case Kind::binary:
            return std::max(max_var_index(Expr(e.node().lhs)), max_var_index(Expr(e.node().rhs)));
    }
    return 0;
}

bool depends_on_state(const Expr& e) {
    switch (e.kind()) {
        case Kind::constant: return false;
        case Kind::variable: return true;
        case Kind::unary: return depends_on_state(Expr(e.node().lhs));
        case Kind::binary:
            return depends_on_state(Expr(e.node().lhs)) || depends_on_state(Expr(e.node().rhs));
    }
    return false;
}

// ---- differentiation -------------------------------------------------------

Expr differentiate(const Expr& e, VarId v) {
    const auto& n = e.node();
    switch (n.kind) {
        case Kind::constant:
            return e_int(0);
        case Kind::variable:
            return e_int(n.var == v ? 1 : 0);
        case Kind::unary: {
            Expr u(n.lhs);
            Expr du = differentiate(u, v);
            switch (n.uop) {
                case UnaryOp::neg: return e_neg(du);
                case UnaryOp::sin: return e_mul(e_unary(UnaryOp::cos, u), du);
                case UnaryOp::cos: return e_neg(e_mul(e_unary(UnaryOp::sin, u), du));
                case UnaryOp::exp: return e_mul(e_unary(UnaryOp::exp, u), du);
                case UnaryOp::log: return e_div(du, u);
                case UnaryOp::sqrt: return e_div(du, e_mul(e_int(2), e_unary(UnaryOp::sqrt, u)));
            }
            break;
        }
        case Kind::binary: {
            Expr a(n.lhs), b(n.rhs);
            switch (n.bop) {
                case BinaryOp::add: return e_add(differentiate(a, v), differentiate(b, v));
                case BinaryOp::sub: return e_sub(differentiate(a, v), differentiate(b, v));
                case BinaryOp::mul:
                    return e_add(e_mul(differentiate(a, v), b), e_mul(a, differentiate(b, v)));
                case BinaryOp::div: {
                    Expr da = differentiate(a, v);
                    if (!depends_on_state(b)) return e_div(da, b);
                    Expr db = differentiate(b, v);
                    return e_div(e_sub(e_mul(da, b), e_mul(a, db)), e_mul(b, b));
                }
                case BinaryOp::pow: {
                    assert(b.kind() == Kind::constant && b.node().exact);
                    Rational r = b.node().rat;
                    Rational rm1 = *rat_sub(r, rat_int(1));
                    return e_mul(e_mul(e_const(r), e_pow(a, rm1)), differentiate(a, v));
                }
            }
            break;
        }
    }
    return e_int(0);
}

// ---- evaluation ------------------------------------------------------------

namespace {

double ipow(double base, std::int64_t n) {
    if (n < 0) {
        if (base == 0.0) throw DomainEvalError("zero raised to a negative power");
        return 1.0 / ipow(base, -n);
    }
    double acc = 1.0, b = base;
    while (n > 0) {
        if (n & 1) acc *= b;
        b *= b;
        n >>= 1;
    }
    return acc;
}

}  // namespace

double evaluate(const Expr& e, const PhaseState& z) {
    const auto& n = e.node();
    switch (n.kind) {
        case Kind::constant:
            return n.value;
        case Kind::variable: {
            const auto& vec = n.var.kind == VarKind::position ? z.x : z.p;
            if (n.var.index < 1 || static_cast<std::size_t>(n.var.index) > vec.size())
                throw InvalidArgument("binding does not supply variable index " +
                                      std::to_string(n.var.index));
            return vec[n.var.index - 1];
        }
        case Kind::unary: {
            double u = evaluate(Expr(n.lhs), z);
            switch (n.uop) {
                case UnaryOp::neg: return -u;
                case UnaryOp::sin: return std::sin(u);
                case UnaryOp::cos: return std::cos(u);
                case UnaryOp::exp: return std::exp(u);
                case UnaryOp::log:
                    if (u <= 0.0)
                        throw DomainEvalError("log of non-positive value " + std::to_string(u));
                    return std::log(u);
                case UnaryOp::sqrt:
                    if (u < 0.0)
                        throw DomainEvalError("sqrt of negative value " + std::to_string(u));
                    return std::sqrt(u);
            }
            break;
        }
        case Kind::binary: {
            double a = evaluate(Expr(n.lhs), z);
            switch (n.bop) {
                case BinaryOp::add: return a + evaluate(Expr(n.rhs), z);
                case BinaryOp::sub: return a - evaluate(Expr(n.rhs), z);
                case BinaryOp::mul: return a * evaluate(Expr(n.rhs), z);
                case BinaryOp::div: {
                    double b = evaluate(Expr(n.rhs), z);
                    if (b == 0.0) throw DomainEvalError("division by zero");
                    return a / b;
                }
                case BinaryOp::pow: {
                    assert(n.rhs->kind == Kind::constant && n.rhs->exact);
                    Rational r = n.rhs->rat;
                    if (rat_is_integer(r)) return ipow(a, r.num);
                    if (a > 0.0) return std::pow(a, rat_to_double(r));
                    if (a == 0.0) {
                        if (r.num > 0) return 0.0;
                        throw DomainEvalError("zero raised to a negative power");
                    }
                    throw DomainEvalError("negative base with non-integer exponent");
                }
            }
            break;
        }
    }
    return 0.0;
}

void gradient_hessian(const Expr& e, const PhaseState& z, std::vector<double>& grad, Mat& hess) {
    const int n = z.dof();
    const int dim = 2 * n;
    auto var_at = [n](int k) {
        return k < n ? VarId{VarKind::position, k + 1} : VarId{VarKind::momentum, k - n + 1};
    };
    grad.assign(dim, 0.0);
    hess = Mat(dim, dim);
    std::vector<Expr> first(dim);
    for (int i = 0; i < dim; ++i) {
        first[i] = differentiate(e, var_at(i));
        grad[i] = evaluate(first[i], z);
    }
    // Both mixed partials are evaluated independently; symmetry to
    // round-off is a checked property, not an assumption.
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            hess(i, j) = evaluate(differentiate(first[i], var_at(j)), z);
}

// ---- parsing ---------------------------------------------------------------

namespace {

struct Token {
    enum class Type { number, word, plus, minus, star, slash, caret, lparen, rparen, end };
    Type type;
    std::size_t pos;
    std::string_view text;
};

class Lexer {
public:
    explicit Lexer(std::string_view s) : s_(s) { advance(); }

    const Token& peek() const { return tok_; }

    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
        std::size_t start = i_;
        if (i_ >= s_.size()) {
            tok_ = {Token::Type::end, start, {}};
            return;
        }
        char c = s_[i_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t j = i_;
            bool saw_digit = false, saw_dot = false;
            while (j < s_.size()) {
                char d = s_[j];
                if (std::isdigit(static_cast<unsigned char>(d))) {
                    saw_digit = true;
                    ++j;
                } else if (d == '.' && !saw_dot) {
                    saw_dot = true;
                    ++j;
                } else {
                    break;
                }
            }
            if (!saw_digit) throw ParseError("malformed number", start);
            if (j < s_.size() && (s_[j] == 'e' || s_[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < s_.size() && (s_[k] == '+' || s_[k] == '-')) ++k;
                if (k < s_.size() && std::isdigit(static_cast<unsigned char>(s_[k]))) {
                    ++k;
                    while (k < s_.size() && std::isdigit(static_cast<unsigned char>(s_[k]))) ++k;
                    j = k;
                }
            }
            tok_ = {Token::Type::number, start, s_.substr(start, j - start)};
            i_ = j;
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t j = i_;
            while (j < s_.size() && std::isalpha(static_cast<unsigned char>(s_[j]))) ++j;
            while (j < s_.size() && std::isdigit(static_cast<unsigned char>(s_[j]))) ++j;
            tok_ = {Token::Type::word, start, s_.substr(start, j - start)};
            i_ = j;
            return;
        }
        Token::Type t;
        switch (c) {
            case '+': t = Token::Type::plus; break;
            case '-': t = Token::Type::minus; break;
            case '*': t = Token::Type::star; break;
            case '/': t = Token::Type::slash; break;
            case '^': t = Token::Type::caret; break;
            case '(': t = Token::Type::lparen; break;
            case ')': t = Token::Type::rparen; break;
            default: throw ParseError(std::string("unexpected character '") + c + "'", start);
        }
        tok_ = {t, start, s_.substr(start, 1)};
        ++i_;
    }

    std::string_view s_;
    std::size_t i_ = 0;
    Token tok_{Token::Type::end, 0, {}};
};

// Literal -> exact rational when it fits in int64 after scaling, else double.
Expr number_to_expr(const Token& tok) {
    std::string_view t = tok.text;
    std::size_t epos = t.find_first_of("eE");
    std::string_view mant = epos == std::string_view::npos ? t : t.substr(0, epos);
    long exp10 = 0;
    if (epos != std::string_view::npos) {
        exp10 = std::strtol(std::string(t.substr(epos + 1)).c_str(), nullptr, 10);
    }
    __int128 num = 0;
    long frac_digits = 0;
    bool past_dot = false;
    bool overflow = false;
    for (char c : mant) {
        if (c == '.') {
            past_dot = true;
            continue;
        }
        num = num * 10 + (c - '0');
        if (past_dot) ++frac_digits;
        if (num > static_cast<__int128>(INT64_MAX) * 1000) {
            overflow = true;
            break;
        }
    }
    long net = exp10 - frac_digits;
    if (!overflow && net >= -30 && net <= 30) {
        __int128 den = 1;
        for (long i = 0; i < std::abs(net); ++i) {
            den *= 10;
            if (den > static_cast<__int128>(INT64_MAX) * 1000) {
                overflow = true;
                break;
            }
        }
        if (!overflow) {
            auto r = net >= 0 ? rat_make(num * den, 1) : rat_make(num, den);
            if (r) return e_const(*r);
        }
    }
    double v = std::strtod(std::string(t).c_str(), nullptr);
    return e_const(v);
}

class Parser {
public:
    Parser(std::string_view text, int n_dof) : lex_(text), n_dof_(n_dof) {}

    Expr parse() {
        Expr e = parse_expr();
        if (lex_.peek().type != Token::Type::end)
            throw ParseError("unexpected trailing input", lex_.peek().pos);
        return e;
    }

private:
    Expr parse_expr() {
        bool negate = false;
        if (lex_.peek().type == Token::Type::minus) {
            lex_.take();
            negate = true;
        }
        Expr acc = parse_term();
        if (negate) acc = Expr(make_unary_node(UnaryOp::neg, acc.ptr()));
        while (true) {
            auto t = lex_.peek().type;
            if (t == Token::Type::plus) {
                lex_.take();
                acc = Expr(make_binary_node(BinaryOp::add, acc.ptr(), parse_term().ptr()));
            } else if (t == Token::Type::minus) {
                lex_.take();
                acc = Expr(make_binary_node(BinaryOp::sub, acc.ptr(), parse_term().ptr()));
            } else {
                break;
            }
        }
        return acc;
    }

    Expr parse_term() {
        Expr acc = parse_factor();
        while (true) {
            auto t = lex_.peek().type;
            if (t == Token::Type::star) {
                lex_.take();
                acc = Expr(make_binary_node(BinaryOp::mul, acc.ptr(), parse_factor().ptr()));
            } else if (t == Token::Type::slash) {
                lex_.take();
                acc = Expr(make_binary_node(BinaryOp::div, acc.ptr(), parse_factor().ptr()));
            } else {
                break;
            }
        }
        return acc;
    }

    Expr parse_factor() {
        Expr base = parse_base();
        if (lex_.peek().type != Token::Type::caret) return base;
        std::size_t caret_pos = lex_.take().pos;
        Rational r = parse_exponent(caret_pos);
        return Expr(make_binary_node(BinaryOp::pow, base.ptr(), make_const_node(r)));
    }

    Rational parse_exponent(std::size_t caret_pos) {
        bool negate = false;
        if (lex_.peek().type == Token::Type::minus) {
            lex_.take();
            negate = true;
        }
        if (lex_.peek().type == Token::Type::number) {
            Token t = lex_.take();
            Expr c = number_to_expr(t);
            auto r = rational_constant(c);
            if (!r) throw ParseError("exponent must be a constant rational", t.pos);
            return negate ? rat_neg(*r) : *r;
        }
        if (!negate && lex_.peek().type == Token::Type::lparen) {
            lex_.take();
            Expr inner = parse_expr();
            expect(Token::Type::rparen, "expected ')'");
            auto r = fold_rational(inner);
            if (!r) throw ParseError("exponent must be a constant rational", caret_pos);
            return *r;
        }
        throw ParseError("exponent must be a constant rational", lex_.peek().pos);
    }

    Expr parse_base() {
        Token t = lex_.peek();
        switch (t.type) {
            case Token::Type::number:
                lex_.take();
                return number_to_expr(t);
            case Token::Type::word:
                lex_.take();
                return word_to_expr(t);
            case Token::Type::lparen: {
                lex_.take();
                Expr e = parse_expr();
                expect(Token::Type::rparen, "expected ')'");
                return e;
            }
            default:
                throw ParseError("expected number, variable, function, or '('", t.pos);
        }
    }

    Expr word_to_expr(const Token& t) {
        std::string_view w = t.text;
        std::size_t alpha = 0;
        while (alpha < w.size() && std::isalpha(static_cast<unsigned char>(w[alpha]))) ++alpha;
        std::string_view name = w.substr(0, alpha);
        std::string_view digits = w.substr(alpha);

        static const std::pair<std::string_view, UnaryOp> funcs[] = {
            {"sin", UnaryOp::sin}, {"cos", UnaryOp::cos},  {"exp", UnaryOp::exp},
            {"log", UnaryOp::log}, {"sqrt", UnaryOp::sqrt}};
        for (const auto& [fname, op] : funcs) {
            if (name == fname && digits.empty()) {
                expect(Token::Type::lparen, "expected '(' after function name");
                Expr arg = parse_expr();
                expect(Token::Type::rparen, "expected ')'");
                return Expr(make_unary_node(op, arg.ptr()));
            }
        }
        if (name == "x" || name == "p") {
            int index = 1;
            if (!digits.empty()) {
                index = std::atoi(std::string(digits).c_str());
                if (index < 1) throw ParseError("variable index must be at least 1", t.pos);
            }
            if (index > n_dof_)
                throw ParseError("variable index " + std::to_string(index) +
                                     " exceeds the system's " + std::to_string(n_dof_) +
                                     " degrees of freedom",
                                 t.pos);
            return e_var(name == "x" ? VarKind::position : VarKind::momentum, index);
        }
        throw ParseError("unknown identifier '" + std::string(w) + "'", t.pos);
    }

    void expect(Token::Type type, const char* msg) {
        if (lex_.peek().type != type) throw ParseError(msg, lex_.peek().pos);
        lex_.take();
    }

    // Exact constant folding used for parenthesized exponents.
    static std::optional<Rational> fold_rational(const Expr& e) {
        const auto& n = e.node();
        switch (n.kind) {
            case Kind::constant:
                return n.exact ? std::optional<Rational>(n.rat) : std::nullopt;
            case Kind::variable:
                return std::nullopt;
            case Kind::unary: {
                if (n.uop != UnaryOp::neg) return std::nullopt;
                auto u = fold_rational(Expr(n.lhs));
                return u ? std::optional<Rational>(rat_neg(*u)) : std::nullopt;
            }
            case Kind::binary: {
                auto a = fold_rational(Expr(n.lhs));
                if (!a) return std::nullopt;
                if (n.bop == BinaryOp::pow) {
                    if (!n.rhs->exact || !rat_is_integer(n.rhs->rat) ||
                        std::abs(n.rhs->rat.num) > 16)
                        return std::nullopt;
                    std::optional<Rational> acc = rat_int(1);
                    for (std::int64_t i = 0; i < std::abs(n.rhs->rat.num) && acc; ++i)
                        acc = rat_mul(*acc, *a);
                    if (acc && n.rhs->rat.num < 0) acc = rat_div(rat_int(1), *acc);
                    return acc;
                }
                auto b = fold_rational(Expr(n.rhs));
                if (!b) return std::nullopt;
                switch (n.bop) {
                    case BinaryOp::add: return rat_add(*a, *b);
                    case BinaryOp::sub: return rat_sub(*a, *b);
                    case BinaryOp::mul: return rat_mul(*a, *b);
                    case BinaryOp::div: return rat_div(*a, *b);
                    default: return std::nullopt;
                }
            }
        }
        return std::nullopt;
    }

    Lexer lex_;
    int n_dof_;
};

}  // namespace

Expr parse_expression(std::string_view text, int n_dof) {
    if (n_dof < 1) throw InvalidArgument("n_dof must be at least 1");
    return Parser(text, n_dof).parse();
}

// ---- printing --------------------------------------------------------------

namespace {

// Terminating decimal for den = 2^a 5^b, else empty.
std::string decimal_form(const Rational& r) {
    if (r.num < 0) return {};
    std::int64_t den = r.den;
    int twos = 0, fives = 0;
    while (den % 2 == 0) {
        den /= 2;
        ++twos;
    }
    while (den % 5 == 0) {
        den /= 5;
        ++fives;
    }
    if (den != 1) return {};
    int k = std::max(twos, fives);
    if (k == 0) return std::to_string(r.num);
    if (k > 17) return {};
    __int128 scaled = static_cast<__int128>(r.num);
    for (int i = 0; i < k; ++i) scaled *= 10;
    scaled /= r.den;
    if (scaled > INT64_MAX) return {};
    std::string digits = std::to_string(static_cast<std::int64_t>(scaled));
    while (static_cast<int>(digits.size()) < k + 1) digits.insert(digits.begin(), '0');
    digits.insert(digits.size() - k, ".");
    while (digits.back() == '0') digits.pop_back();
    if (digits.back() == '.') digits.pop_back();
    return digits;
}

std::string double_form(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

constexpr int kPrecAdd = 1;
constexpr int kPrecMul = 2;
constexpr int kPrecPow = 3;
constexpr int kPrecAtom = 4;

void print_node(std::string& out, const Expr& e, int parent_prec);

void print_wrapped(std::string& out, const Expr& e, int prec, int parent_prec,
                   const std::function<void(std::string&)>& body) {
    (void)e;
    if (prec < parent_prec) {
        out += '(';
        body(out);
        out += ')';
    } else {
        body(out);
    }
}

void print_node(std::string& out, const Expr& e, int parent_prec) {
    const auto& n = e.node();
    switch (n.kind) {
        case Kind::constant: {
            if (n.exact) {
                std::string dec = decimal_form(n.rat);
                if (!dec.empty()) {
                    out += dec;
                } else {
                    // num/den reads back as a division; give it mul precedence
                    print_wrapped(out, e, kPrecMul, parent_prec, [&](std::string& o) {
                        o += std::to_string(n.rat.num);
                        o += '/';
                        o += std::to_string(n.rat.den);
                    });
                }
            } else {
                out += double_form(n.value);
            }
            return;
        }
        case Kind::variable: {
            out += n.var.kind == VarKind::position ? 'x' : 'p';
            if (n.var.index != 1) out += std::to_string(n.var.index);
            return;
        }
        case Kind::unary: {
            if (n.uop == UnaryOp::neg) {
                print_wrapped(out, e, kPrecAdd, parent_prec, [&](std::string& o) {
                    o += '-';
                    print_node(o, Expr(n.lhs), kPrecMul);
                });
                return;
            }
            const char* name = nullptr;
            switch (n.uop) {
                case UnaryOp::sin: name = "sin"; break;
                case UnaryOp::cos: name = "cos"; break;
                case UnaryOp::exp: name = "exp"; break;
                case UnaryOp::log: name = "log"; break;
                case UnaryOp::sqrt: name = "sqrt"; break;
                case UnaryOp::neg: break;
            }
            out += name;
            out += '(';
            print_node(out, Expr(n.lhs), 0);
            out += ')';
            return;
        }
        case Kind::binary: {
            const char op = n.bop == BinaryOp::add   ? '+'
                            : n.bop == BinaryOp::sub ? '-'
                            : n.bop == BinaryOp::mul ? '*'
                            : n.bop == BinaryOp::div ? '/'
                                                     : '^';
            if (n.bop == BinaryOp::pow) {
                print_wrapped(out, e, kPrecPow, parent_prec, [&](std::string& o) {
                    print_node(o, Expr(n.lhs), kPrecAtom);
                    o += '^';
                    const Rational r = n.rhs->rat;
                    if (rat_is_integer(r) && r.num >= 0) {
                        o += std::to_string(r.num);
                    } else if (rat_is_integer(r)) {
                        o += '-' + std::to_string(-r.num);
                    } else {
                        std::string dec = decimal_form(r);
                        if (!dec.empty())
                            o += dec;
                        else
                            o += '(' + rat_to_string(r) + ')';
                    }
                });
                return;
            }
            const int prec = (n.bop == BinaryOp::add || n.bop == BinaryOp::sub) ? kPrecAdd
                                                                                : kPrecMul;
            print_wrapped(out, e, prec, parent_prec, [&](std::string& o) {
                print_node(o, Expr(n.lhs), prec);
                o += op;
                print_node(o, Expr(n.rhs), prec + 1);
            });
            return;
        }
    }
}

}  // namespace

std::string to_string(const Expr& e) {
    std::string out;
    print_node(out, e, 0);
    return out;
}

}  // namespace pbrak
