#include "pbrak/delta.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>

#include "pbrak/errors.hpp"

namespace pbrak {

// ---- time tags ---------------------------------------------------------------

bool operator==(const TimeTag& a, const TimeTag& b) {
    if (a.kind != b.kind) return false;
    return a.kind == TimeTag::Kind::rational ? a.value == b.value : a.name == b.name;
}

bool tag_less(const TimeTag& a, const TimeTag& b) {
    if (a.kind != b.kind) return a.kind == TimeTag::Kind::rational;
    if (a.kind == TimeTag::Kind::rational) return rat_cmp(a.value, b.value) < 0;
    return a.name < b.name;
}

TagEquality compare_tags(const TimeTag& a, const TimeTag& b) {
    if (a.kind == TimeTag::Kind::rational && b.kind == TimeTag::Kind::rational)
        return a.value == b.value ? TagEquality::equal : TagEquality::distinct;
    if (a.kind == TimeTag::Kind::symbol && b.kind == TimeTag::Kind::symbol && a.name == b.name)
        return TagEquality::equal;
    return TagEquality::unknown;
}

std::string to_string(const TimeTag& t) {
    return t.kind == TimeTag::Kind::rational ? rat_to_string(t.value) : t.name;
}

TimeTag parse_time_tag(std::string_view text) {
    std::size_t b = 0, e = text.size();
    while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
    std::string_view s = text.substr(b, e - b);
    if (s.empty()) throw ParseError("empty time tag", b);

    auto parse_int = [](std::string_view v) -> std::optional<std::int64_t> {
        std::int64_t out = 0;
        auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size()) return std::nullopt;
        return out;
    };

    bool numeric_start = s[0] == '-' || std::isdigit(static_cast<unsigned char>(s[0]));
    if (numeric_start) {
        std::size_t slash = s.find('/');
        if (slash == std::string_view::npos) {
            auto n = parse_int(s);
            if (!n) throw ParseError("malformed rational time tag", b);
            return TimeTag::rat(rat_int(*n));
        }
        auto n = parse_int(s.substr(0, slash));
        auto d = parse_int(s.substr(slash + 1));
        if (!n || !d || *d == 0) throw ParseError("malformed rational time tag", b);
        auto r = rat_make(*n, *d);
        if (!r) throw ParseError("time tag out of range", b);
        return TimeTag::rat(*r);
    }
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\''))
            throw ParseError(std::string("invalid character in time tag: '") + c + "'", b);
    return TimeTag::sym(std::string(s));
}

// ---- tagged expression construction ------------------------------------------

bool operator==(const TaggedVar& a, const TaggedVar& b) {
    return a.kind == b.kind && a.index == b.index && a.tag == b.tag;
}

namespace {

using TNodePtr = TaggedExpr::NodePtr;
using TKind = TaggedExpr::Kind;

TNodePtr t_const_node(Rational r) {
    auto n = std::make_shared<TaggedExpr::Node>();
    n->kind = TKind::constant;
    n->exact = true;
    n->rat = r;
    n->value = rat_to_double(r);
    return n;
}

TNodePtr t_const_node(double v) {
    auto n = std::make_shared<TaggedExpr::Node>();
    n->kind = TKind::constant;
    n->exact = false;
    n->value = v;
    return n;
}

TNodePtr t_unary_node(UnaryOp op, TNodePtr c) {
    auto n = std::make_shared<TaggedExpr::Node>();
    n->kind = TKind::unary;
    n->uop = op;
    n->lhs = std::move(c);
    return n;
}

TNodePtr t_binary_node(BinaryOp op, TNodePtr l, TNodePtr r) {
    auto n = std::make_shared<TaggedExpr::Node>();
    n->kind = TKind::binary;
    n->bop = op;
    n->lhs = std::move(l);
    n->rhs = std::move(r);
    return n;
}

bool t_is_const(const TaggedExpr& e) { return e.kind() == TKind::constant; }
bool t_is_neg(const TaggedExpr& e) {
    return e.kind() == TKind::unary && e.node().uop == UnaryOp::neg;
}
TaggedExpr t_neg_child(const TaggedExpr& e) { return TaggedExpr(e.node().lhs); }

TaggedExpr t_fold(BinaryOp op, const TaggedExpr& a, const TaggedExpr& b) {
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
        if (r) return te_const(*r);
    }
    double v = 0.0;
    switch (op) {
        case BinaryOp::add: v = na.value + nb.value; break;
        case BinaryOp::sub: v = na.value - nb.value; break;
        case BinaryOp::mul: v = na.value * nb.value; break;
        case BinaryOp::div:
            if (nb.value == 0.0) return TaggedExpr();
            v = na.value / nb.value;
            break;
        default: return TaggedExpr();
    }
    if (!std::isfinite(v)) return TaggedExpr();
    return te_const(v);
}

}  // namespace

bool te_is_zero(const TaggedExpr& e) {
    return t_is_const(e) && e.node().value == 0.0 &&
           (!e.node().exact || rat_is_zero(e.node().rat));
}

bool te_is_one(const TaggedExpr& e) {
    const auto& n = e.node();
    return t_is_const(e) && (n.exact ? n.rat == Rational{1, 1} : n.value == 1.0);
}

TaggedExpr te_const(Rational r) {
    if (r.num < 0) return TaggedExpr(t_unary_node(UnaryOp::neg, t_const_node(rat_neg(r))));
    return TaggedExpr(t_const_node(r));
}

TaggedExpr te_const(double v) {
    if (v < 0.0) return TaggedExpr(t_unary_node(UnaryOp::neg, t_const_node(-v)));
    return TaggedExpr(t_const_node(v));
}

TaggedExpr te_int(std::int64_t n) { return te_const(rat_int(n)); }

TaggedExpr te_var(TaggedVar v) {
    auto n = std::make_shared<TaggedExpr::Node>();
    n->kind = TKind::variable;
    n->var = std::move(v);
    return TaggedExpr(std::move(n));
}

TaggedExpr te_neg(const TaggedExpr& u) {
    if (te_is_zero(u)) return u;
    if (t_is_neg(u)) return t_neg_child(u);
    return TaggedExpr(t_unary_node(UnaryOp::neg, u.ptr()));
}

TaggedExpr te_unary(UnaryOp op, const TaggedExpr& u) {
    if (op == UnaryOp::neg) return te_neg(u);
    return TaggedExpr(t_unary_node(op, u.ptr()));
}

TaggedExpr te_add(const TaggedExpr& a, const TaggedExpr& b) {
    if (te_is_zero(a)) return b;
    if (te_is_zero(b)) return a;
    if (t_is_const(a) && t_is_const(b)) {
        if (TaggedExpr f = t_fold(BinaryOp::add, a, b); f.valid()) return f;
    }
    if (t_is_neg(b)) return te_sub(a, t_neg_child(b));
    return TaggedExpr(t_binary_node(BinaryOp::add, a.ptr(), b.ptr()));
}

TaggedExpr te_sub(const TaggedExpr& a, const TaggedExpr& b) {
    if (te_is_zero(b)) return a;
    if (te_is_zero(a)) return te_neg(b);
    if (t_is_const(a) && t_is_const(b)) {
        if (TaggedExpr f = t_fold(BinaryOp::sub, a, b); f.valid()) return f;
    }
    if (t_is_neg(b)) return te_add(a, t_neg_child(b));
    if (structurally_equal(a, b)) return te_int(0);
    return TaggedExpr(t_binary_node(BinaryOp::sub, a.ptr(), b.ptr()));
}

TaggedExpr te_mul(const TaggedExpr& a, const TaggedExpr& b) {
    if (te_is_zero(a) || te_is_zero(b)) return te_int(0);
    if (te_is_one(a)) return b;
    if (te_is_one(b)) return a;
    if (t_is_neg(a) && t_is_neg(b)) return te_mul(t_neg_child(a), t_neg_child(b));
    if (t_is_neg(a)) return te_neg(te_mul(t_neg_child(a), b));
    if (t_is_neg(b)) return te_neg(te_mul(a, t_neg_child(b)));
    if (t_is_const(a) && t_is_const(b)) {
        if (TaggedExpr f = t_fold(BinaryOp::mul, a, b); f.valid()) return f;
    }
    if (t_is_const(b) && !t_is_const(a)) return te_mul(b, a);
    if (t_is_const(a) && b.kind() == TKind::binary && b.node().bop == BinaryOp::mul) {
        TaggedExpr bl(b.node().lhs), br(b.node().rhs);
        if (t_is_const(bl)) {
            if (TaggedExpr f = t_fold(BinaryOp::mul, a, bl); f.valid()) return te_mul(f, br);
        }
    }
    return TaggedExpr(t_binary_node(BinaryOp::mul, a.ptr(), b.ptr()));
}

TaggedExpr te_div(const TaggedExpr& a, const TaggedExpr& b) {
    if (te_is_zero(a)) return a;
    if (te_is_one(b)) return a;
    if (t_is_neg(a) && t_is_neg(b)) return te_div(t_neg_child(a), t_neg_child(b));
    if (t_is_neg(a)) return te_neg(te_div(t_neg_child(a), b));
    if (t_is_neg(b)) return te_neg(te_div(a, t_neg_child(b)));
    if (t_is_const(a) && t_is_const(b) && !te_is_zero(b)) {
        if (TaggedExpr f = t_fold(BinaryOp::div, a, b); f.valid()) return f;
    }
    return TaggedExpr(t_binary_node(BinaryOp::div, a.ptr(), b.ptr()));
}

TaggedExpr te_pow(const TaggedExpr& base, Rational exponent) {
    if (rat_is_zero(exponent)) return te_int(1);
    if (exponent == Rational{1, 1}) return base;
    if (te_is_one(base)) return base;
    if (te_is_zero(base) && exponent.num > 0) return base;
    return TaggedExpr(t_binary_node(BinaryOp::pow, base.ptr(), t_const_node(exponent)));
}

bool structurally_equal(const TaggedExpr& a, const TaggedExpr& b) {
    if (a.ptr() == b.ptr()) return true;
    if (!a.valid() || !b.valid()) return false;
    const auto& na = a.node();
    const auto& nb = b.node();
    if (na.kind != nb.kind) return false;
    switch (na.kind) {
        case TKind::constant:
            if (na.exact != nb.exact) return false;
            return na.exact ? na.rat == nb.rat : na.value == nb.value;
        case TKind::variable:
            return na.var == nb.var;
        case TKind::unary:
            return na.uop == nb.uop && structurally_equal(TaggedExpr(na.lhs), TaggedExpr(nb.lhs));
        case TKind::binary:
            return na.bop == nb.bop && structurally_equal(TaggedExpr(na.lhs), TaggedExpr(nb.lhs)) &&
                   structurally_equal(TaggedExpr(na.rhs), TaggedExpr(nb.rhs));
    }
    return false;
}

int max_tagged_index(const TaggedExpr& e) {
    switch (e.kind()) {
        case TKind::constant: return 0;
        case TKind::variable: return e.node().var.index;
        case TKind::unary: return max_tagged_index(TaggedExpr(e.node().lhs));
        case TKind::binary:
            return std::max(max_tagged_index(TaggedExpr(e.node().lhs)),
                            max_tagged_index(TaggedExpr(e.node().rhs)));
    }
    return 0;
}

// ---- tagged parser -------------------------------------------------------------

namespace {

class TaggedParser {
public:
    TaggedParser(std::string_view text, int n_dof) : s_(text), n_dof_(n_dof) {}

    TaggedExpr parse() {
        TaggedExpr e = parse_expr();
        skip_ws();
        if (i_ < s_.size()) throw ParseError("unexpected trailing input", i_);
        return e;
    }

private:
    void skip_ws() {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    }

    bool accept(char c) {
        skip_ws();
        if (i_ < s_.size() && s_[i_] == c) {
            ++i_;
            return true;
        }
        return false;
    }

    void expect(char c, const char* msg) {
        if (!accept(c)) throw ParseError(msg, i_);
    }

    char peek() {
        skip_ws();
        return i_ < s_.size() ? s_[i_] : '\0';
    }

    TaggedExpr parse_expr() {
        bool negate = accept('-');
        TaggedExpr acc = parse_term();
        if (negate) acc = TaggedExpr(t_unary_node(UnaryOp::neg, acc.ptr()));
        while (true) {
            if (accept('+'))
                acc = TaggedExpr(t_binary_node(BinaryOp::add, acc.ptr(), parse_term().ptr()));
            else if (accept('-'))
                acc = TaggedExpr(t_binary_node(BinaryOp::sub, acc.ptr(), parse_term().ptr()));
            else
                break;
        }
        return acc;
    }

    TaggedExpr parse_term() {
        TaggedExpr acc = parse_factor();
        while (true) {
            if (accept('*'))
                acc = TaggedExpr(t_binary_node(BinaryOp::mul, acc.ptr(), parse_factor().ptr()));
            else if (accept('/'))
                acc = TaggedExpr(t_binary_node(BinaryOp::div, acc.ptr(), parse_factor().ptr()));
            else
                break;
        }
        return acc;
    }

    TaggedExpr parse_factor() {
        TaggedExpr base = parse_base();
        if (!accept('^')) return base;
        bool negate = accept('-');
        std::size_t pos = i_;
        TaggedExpr c;
        if (peek() == '(' && !negate) {
            expect('(', "expected '('");
            c = parse_expr();
            expect(')', "expected ')'");
        } else {
            c = parse_number();
        }
        auto r = fold_rational(c);
        if (!r) throw ParseError("exponent must be a constant rational", pos);
        return TaggedExpr(
            t_binary_node(BinaryOp::pow, base.ptr(), t_const_node(negate ? rat_neg(*r) : *r)));
    }

    TaggedExpr parse_base() {
        skip_ws();
        if (i_ >= s_.size()) throw ParseError("unexpected end of input", i_);
        char c = s_[i_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c))) return parse_word();
        if (c == '(') {
            ++i_;
            TaggedExpr e = parse_expr();
            expect(')', "expected ')'");
            return e;
        }
        throw ParseError("expected number, tagged variable, function, or '('", i_);
    }

    TaggedExpr parse_number() {
        skip_ws();
        std::size_t start = i_;
        bool saw_digit = false, saw_dot = false;
        while (i_ < s_.size()) {
            char c = s_[i_];
            if (std::isdigit(static_cast<unsigned char>(c))) {
                saw_digit = true;
                ++i_;
            } else if (c == '.' && !saw_dot) {
                saw_dot = true;
                ++i_;
            } else {
                break;
            }
        }
        if (!saw_digit) throw ParseError("malformed number", start);
        if (i_ < s_.size() && (s_[i_] == 'e' || s_[i_] == 'E')) {
            std::size_t k = i_ + 1;
            if (k < s_.size() && (s_[k] == '+' || s_[k] == '-')) ++k;
            if (k < s_.size() && std::isdigit(static_cast<unsigned char>(s_[k]))) {
                while (k < s_.size() && std::isdigit(static_cast<unsigned char>(s_[k]))) ++k;
                i_ = k;
            }
        }
        std::string text(s_.substr(start, i_ - start));
        // reuse the untagged literal rules via the expr parser
        Expr lit = parse_expression(text, 1);
        if (lit.kind() == Expr::Kind::constant) {
            const auto& n = lit.node();
            return n.exact ? TaggedExpr(t_const_node(n.rat)) : TaggedExpr(t_const_node(n.value));
        }
        throw ParseError("malformed number", start);
    }

    TaggedExpr parse_word() {
        std::size_t start = i_;
        while (i_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[i_]))) ++i_;
        std::string name(s_.substr(start, i_ - start));
        std::size_t dig_start = i_;
        while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) ++i_;
        std::string digits(s_.substr(dig_start, i_ - dig_start));

        static const std::pair<std::string_view, UnaryOp> funcs[] = {
            {"sin", UnaryOp::sin}, {"cos", UnaryOp::cos},  {"exp", UnaryOp::exp},
            {"log", UnaryOp::log}, {"sqrt", UnaryOp::sqrt}};
        for (const auto& [fname, op] : funcs) {
            if (name == fname && digits.empty()) {
                expect('(', "expected '(' after function name");
                TaggedExpr arg = parse_expr();
                expect(')', "expected ')'");
                return TaggedExpr(t_unary_node(op, arg.ptr()));
            }
        }
        if (name != "x" && name != "p")
            throw ParseError("unknown identifier '" + name + "'", start);
        int index = 1;
        if (!digits.empty()) {
            index = std::atoi(digits.c_str());
            if (index < 1) throw ParseError("variable index must be at least 1", start);
        }
        if (index > n_dof_)
            throw ParseError("variable index exceeds n_dof", start);
        expect('(', "tagged atoms require a time tag, e.g. x(t)");
        skip_ws();
        std::size_t tag_start = i_;
        while (i_ < s_.size() && s_[i_] != ')') ++i_;
        if (i_ >= s_.size()) throw ParseError("expected ')' after time tag", tag_start);
        TimeTag tag = parse_time_tag(s_.substr(tag_start, i_ - tag_start));
        ++i_;  // consume ')'
        return te_var(TaggedVar{name == "x" ? VarKind::position : VarKind::momentum, index, tag});
    }

    static std::optional<Rational> fold_rational(const TaggedExpr& e) {
        const auto& n = e.node();
        switch (n.kind) {
            case TKind::constant:
                return n.exact ? std::optional<Rational>(n.rat) : std::nullopt;
            case TKind::variable:
                return std::nullopt;
            case TKind::unary: {
                if (n.uop != UnaryOp::neg) return std::nullopt;
                auto u = fold_rational(TaggedExpr(n.lhs));
                return u ? std::optional<Rational>(rat_neg(*u)) : std::nullopt;
            }
            case TKind::binary: {
                auto a = fold_rational(TaggedExpr(n.lhs));
                auto b = fold_rational(TaggedExpr(n.rhs));
                if (!a || !b) return std::nullopt;
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

    std::string_view s_;
    std::size_t i_ = 0;
    int n_dof_;
};

}  // namespace

TaggedExpr parse_tagged(std::string_view text, int n_dof) {
    if (n_dof < 1) throw InvalidArgument("n_dof must be at least 1");
    return TaggedParser(text, n_dof).parse();
}

// ---- tagged printing ------------------------------------------------------------

namespace {

constexpr int kPrecAdd = 1;
constexpr int kPrecMul = 2;
constexpr int kPrecPow = 3;
constexpr int kPrecAtom = 4;

void t_print(std::string& out, const TaggedExpr& e, int parent_prec) {
    const auto& n = e.node();
    auto wrapped = [&](int prec, auto&& body) {
        if (prec < parent_prec) {
            out += '(';
            body();
            out += ')';
        } else {
            body();
        }
    };
    switch (n.kind) {
        case TKind::constant:
            if (n.exact && n.rat.den != 1) {
                wrapped(kPrecMul, [&] { out += rat_to_string(n.rat); });
            } else if (n.exact) {
                out += std::to_string(n.rat.num);
            } else {
                char buf[32];
                auto res = std::to_chars(buf, buf + sizeof buf, n.value);
                out.append(buf, res.ptr);
            }
            return;
        case TKind::variable:
            out += n.var.kind == VarKind::position ? 'x' : 'p';
            if (n.var.index != 1) out += std::to_string(n.var.index);
            out += '(' + to_string(n.var.tag) + ')';
            return;
        case TKind::unary: {
            if (n.uop == UnaryOp::neg) {
                wrapped(kPrecAdd, [&] {
                    out += '-';
                    t_print(out, TaggedExpr(n.lhs), kPrecMul);
                });
                return;
            }
            const char* name = n.uop == UnaryOp::sin   ? "sin"
                               : n.uop == UnaryOp::cos ? "cos"
                               : n.uop == UnaryOp::exp ? "exp"
                               : n.uop == UnaryOp::log ? "log"
                                                       : "sqrt";
            out += name;
            out += '(';
            t_print(out, TaggedExpr(n.lhs), 0);
            out += ')';
            return;
        }
        case TKind::binary: {
            if (n.bop == BinaryOp::pow) {
                wrapped(kPrecPow, [&] {
                    t_print(out, TaggedExpr(n.lhs), kPrecAtom);
                    out += '^';
                    const Rational r = n.rhs->rat;
                    if (rat_is_integer(r) && r.num >= 0)
                        out += std::to_string(r.num);
                    else if (rat_is_integer(r))
                        out += '-' + std::to_string(-r.num);
                    else
                        out += '(' + rat_to_string(r) + ')';
                });
                return;
            }
            const int prec =
                (n.bop == BinaryOp::add || n.bop == BinaryOp::sub) ? kPrecAdd : kPrecMul;
            const char op = n.bop == BinaryOp::add   ? '+'
                            : n.bop == BinaryOp::sub ? '-'
                            : n.bop == BinaryOp::mul ? '*'
                                                     : '/';
            wrapped(prec, [&] {
                t_print(out, TaggedExpr(n.lhs), prec);
                out += op;
                t_print(out, TaggedExpr(n.rhs), prec + 1);
            });
            return;
        }
    }
}

}  // namespace

std::string to_string(const TaggedExpr& e) {
    std::string out;
    t_print(out, e, 0);
    return out;
}

// ---- delta algebra ------------------------------------------------------------

bool operator==(const DeltaFactor& x, const DeltaFactor& y) {
    return x.a == y.a && x.b == y.b;
}

namespace {

bool factor_less(const DeltaFactor& x, const DeltaFactor& y) {
    if (tag_less(x.a, y.a)) return true;
    if (tag_less(y.a, x.a)) return false;
    return tag_less(x.b, y.b);
}

// nullopt when the term vanishes (provably distinct tags in one class).
std::optional<std::vector<DeltaFactor>> canonical_factors(const std::vector<DeltaFactor>& in) {
    using TagSet = std::set<TimeTag, bool (*)(const TimeTag&, const TimeTag&)>;
    std::vector<TagSet> classes;

    auto find_class = [&](const TimeTag& t) -> int {
        for (std::size_t c = 0; c < classes.size(); ++c)
            if (classes[c].count(t)) return static_cast<int>(c);
        return -1;
    };

    for (const auto& f : in) {
        switch (compare_tags(f.a, f.b)) {
            case TagEquality::equal: continue;  // delta(a, a) = 1
            case TagEquality::distinct: return std::nullopt;
            case TagEquality::unknown: break;
        }
        int ca = find_class(f.a);
        int cb = find_class(f.b);
        if (ca < 0 && cb < 0) {
            TagSet s(tag_less);
            s.insert(f.a);
            s.insert(f.b);
            classes.push_back(std::move(s));
        } else if (ca >= 0 && cb < 0) {
            classes[ca].insert(f.b);
        } else if (ca < 0 && cb >= 0) {
            classes[cb].insert(f.a);
        } else if (ca != cb) {
            classes[ca].insert(classes[cb].begin(), classes[cb].end());
            classes.erase(classes.begin() + cb);
        }
    }

    std::vector<DeltaFactor> out;
    for (const auto& cls : classes) {
        // Two distinct rationals forced equal annihilate the term.
        int rationals = 0;
        for (const auto& t : cls)
            if (t.kind == TimeTag::Kind::rational) ++rationals;
        if (rationals >= 2) return std::nullopt;
        auto it = cls.begin();
        const TimeTag& rep = *it;
        for (++it; it != cls.end(); ++it) out.push_back(DeltaFactor{rep, *it});
    }
    std::sort(out.begin(), out.end(), factor_less);
    return out;
}

std::string factors_key(const std::vector<DeltaFactor>& fs) {
    std::string k;
    for (const auto& f : fs) k += "d(" + to_string(f.a) + "," + to_string(f.b) + ")";
    return k;
}

}  // namespace

DeltaExpr canonicalize(DeltaExpr d) {
    std::map<std::string, DeltaTerm> grouped;
    for (auto& term : d.terms) {
        if (!term.coeff.valid() || te_is_zero(term.coeff)) continue;
        auto canon = canonical_factors(term.deltas);
        if (!canon) continue;
        std::string key = factors_key(*canon);
        auto it = grouped.find(key);
        if (it == grouped.end()) {
            grouped.emplace(key, DeltaTerm{term.coeff, std::move(*canon)});
        } else {
            it->second.coeff = te_add(it->second.coeff, term.coeff);
        }
    }
    DeltaExpr out;
    for (auto& [key, term] : grouped) {
        if (te_is_zero(term.coeff)) continue;
        out.terms.push_back(std::move(term));
    }
    return out;
}

DeltaExpr delta_add(const DeltaExpr& a, const DeltaExpr& b) {
    DeltaExpr out = a;
    out.terms.insert(out.terms.end(), b.terms.begin(), b.terms.end());
    return canonicalize(std::move(out));
}

DeltaExpr delta_negate(const DeltaExpr& a) {
    DeltaExpr out = a;
    for (auto& t : out.terms) t.coeff = te_neg(t.coeff);
    return out;
}

DeltaExpr delta_scale(const DeltaExpr& a, const TaggedExpr& factor) {
    if (te_is_zero(factor)) return DeltaExpr{};
    DeltaExpr out = a;
    for (auto& t : out.terms) t.coeff = te_mul(factor, t.coeff);
    return canonicalize(std::move(out));
}

DeltaExpr delta_mul(const DeltaExpr& a, const DeltaExpr& b) {
    DeltaExpr out;
    for (const auto& ta : a.terms)
        for (const auto& tb : b.terms) {
            DeltaTerm t;
            t.coeff = te_mul(ta.coeff, tb.coeff);
            t.deltas = ta.deltas;
            t.deltas.insert(t.deltas.end(), tb.deltas.begin(), tb.deltas.end());
            out.terms.push_back(std::move(t));
        }
    return canonicalize(std::move(out));
}

bool structurally_equal(const DeltaExpr& a, const DeltaExpr& b) {
    DeltaExpr ca = canonicalize(a);
    DeltaExpr cb = canonicalize(b);
    if (ca.terms.size() != cb.terms.size()) return false;
    for (std::size_t i = 0; i < ca.terms.size(); ++i) {
        if (ca.terms[i].deltas.size() != cb.terms[i].deltas.size()) return false;
        for (std::size_t j = 0; j < ca.terms[i].deltas.size(); ++j)
            if (!(ca.terms[i].deltas[j] == cb.terms[i].deltas[j])) return false;
        if (!structurally_equal(ca.terms[i].coeff, cb.terms[i].coeff)) return false;
    }
    return true;
}

std::string to_string(const DeltaExpr& d) {
    if (d.terms.empty()) return "0";
    std::string out;
    for (std::size_t i = 0; i < d.terms.size(); ++i) {
        const auto& term = d.terms[i];
        if (i > 0) out += " + ";
        std::string coeff = to_string(term.coeff);
        bool unit = te_is_one(term.coeff);
        if (!unit || term.deltas.empty()) {
            bool needs_parens =
                term.coeff.kind() == TKind::binary &&
                (term.coeff.node().bop == BinaryOp::add || term.coeff.node().bop == BinaryOp::sub);
            needs_parens = needs_parens ||
                           (term.coeff.kind() == TKind::unary &&
                            term.coeff.node().uop == UnaryOp::neg && !term.deltas.empty());
            out += needs_parens ? "(" + coeff + ")" : coeff;
            if (!term.deltas.empty()) out += "*";
        }
        for (std::size_t j = 0; j < term.deltas.size(); ++j) {
            if (j > 0) out += "*";
            out += "delta(" + to_string(term.deltas[j].a) + "," + to_string(term.deltas[j].b) + ")";
        }
    }
    return out;
}

// ---- symbolic partials and brackets ----------------------------------------------

DeltaExpr symbolic_partial(const TaggedExpr& f, VarKind kind, int index, const TimeTag& tag) {
    const auto& n = f.node();
    switch (n.kind) {
        case TKind::constant:
            return DeltaExpr{};
        case TKind::variable: {
            if (n.var.kind != kind || n.var.index != index) return DeltaExpr{};
            DeltaExpr d;
            d.terms.push_back(DeltaTerm{te_int(1), {DeltaFactor{n.var.tag, tag}}});
            return canonicalize(std::move(d));
        }
        case TKind::unary: {
            TaggedExpr u(n.lhs);
            DeltaExpr du = symbolic_partial(u, kind, index, tag);
            if (du.is_zero()) return du;
            switch (n.uop) {
                case UnaryOp::neg: return delta_negate(du);
                case UnaryOp::sin: return delta_scale(du, te_unary(UnaryOp::cos, u));
                case UnaryOp::cos: return delta_negate(delta_scale(du, te_unary(UnaryOp::sin, u)));
                case UnaryOp::exp: return delta_scale(du, te_unary(UnaryOp::exp, u));
                case UnaryOp::log: return delta_scale(du, te_pow(u, Rational{-1, 1}));
                case UnaryOp::sqrt:
                    return delta_scale(
                        du, te_div(te_int(1), te_mul(te_int(2), te_unary(UnaryOp::sqrt, u))));
            }
            return DeltaExpr{};
        }
        case TKind::binary: {
            TaggedExpr a(n.lhs), b(n.rhs);
            switch (n.bop) {
                case BinaryOp::add:
                    return delta_add(symbolic_partial(a, kind, index, tag),
                                     symbolic_partial(b, kind, index, tag));
                case BinaryOp::sub:
                    return delta_add(symbolic_partial(a, kind, index, tag),
                                     delta_negate(symbolic_partial(b, kind, index, tag)));
                case BinaryOp::mul:
                    return delta_add(delta_scale(symbolic_partial(a, kind, index, tag), b),
                                     delta_scale(symbolic_partial(b, kind, index, tag), a));
                case BinaryOp::div: {
                    DeltaExpr da = symbolic_partial(a, kind, index, tag);
                    DeltaExpr db = symbolic_partial(b, kind, index, tag);
                    DeltaExpr left = delta_scale(da, te_pow(b, Rational{-1, 1}));
                    DeltaExpr right =
                        delta_scale(db, te_mul(a, te_pow(b, Rational{-2, 1})));
                    return delta_add(left, delta_negate(right));
                }
                case BinaryOp::pow: {
                    Rational r = n.rhs->rat;
                    DeltaExpr da = symbolic_partial(a, kind, index, tag);
                    Rational rm1 = *rat_sub(r, rat_int(1));
                    return delta_scale(da, te_mul(te_const(r), te_pow(a, rm1)));
                }
            }
            return DeltaExpr{};
        }
    }
    return DeltaExpr{};
}

DeltaExpr symbolic_bracket(const TaggedExpr& a, const TaggedExpr& b, const TimeTag& tau,
                           int n_dof) {
    DeltaExpr acc;
    for (int k = 1; k <= n_dof; ++k) {
        DeltaExpr da_dx = symbolic_partial(a, VarKind::position, k, tau);
        DeltaExpr db_dp = symbolic_partial(b, VarKind::momentum, k, tau);
        DeltaExpr da_dp = symbolic_partial(a, VarKind::momentum, k, tau);
        DeltaExpr db_dx = symbolic_partial(b, VarKind::position, k, tau);
        acc = delta_add(acc, delta_mul(da_dx, db_dp));
        acc = delta_add(acc, delta_negate(delta_mul(da_dp, db_dx)));
    }
    return acc;
}

}  // namespace pbrak
