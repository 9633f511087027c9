#include "stmap/hamlang.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace stmap {
namespace hamlang {

namespace {

struct Parser {
    const std::string& text;
    size_t pos = 0;

    explicit Parser(const std::string& t) : text(t) {}

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    char peek() {
        skip_ws();
        return pos < text.size() ? text[pos] : '\0';
    }

    bool accept(char c) {
        if (peek() == c) {
            ++pos;
            return true;
        }
        return false;
    }

    void expect(char c, const char* where) {
        if (!accept(c)) {
            std::ostringstream os;
            os << "expected '" << c << "' " << where << " at offset " << pos;
            throw SyntaxError(os.str(), static_cast<int>(pos));
        }
    }

    [[noreturn]] void fail(const std::string& msg, size_t at) {
        std::ostringstream os;
        os << msg << " at offset " << at;
        throw SyntaxError(os.str(), static_cast<int>(at));
    }

    double parse_number() {
        skip_ws();
        const size_t start = pos;
        double value = 0.0;
        auto res = std::from_chars(text.data() + pos, text.data() + text.size(), value);
        if (res.ec != std::errc() || res.ptr == text.data() + pos)
            fail("expected a number", start);
        pos = res.ptr - text.data();
        return value;
    }

    std::string parse_ident() {
        skip_ws();
        const size_t start = pos;
        if (pos >= text.size() ||
            !(std::isalpha(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
            fail("expected an identifier", start);
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
            ++pos;
        return text.substr(start, pos - start);
    }

    ExprPtr make(Expr e) { return std::make_shared<Expr>(std::move(e)); }

    ExprPtr constant(double c) {
        Expr e;
        e.kind = Expr::Kind::Constant;
        e.constant = c;
        return make(std::move(e));
    }

    ExprPtr unary(Expr::Kind k, ExprPtr a) {
        Expr e;
        e.kind = k;
        e.a = std::move(a);
        return make(std::move(e));
    }

    ExprPtr binary(Expr::Kind k, ExprPtr a, ExprPtr b) {
        Expr e;
        e.kind = k;
        e.a = std::move(a);
        e.b = std::move(b);
        return make(std::move(e));
    }

    ExprPtr parse_expr() {
        ExprPtr lhs = parse_term();
        for (;;) {
            if (accept('+'))
                lhs = binary(Expr::Kind::Add, lhs, parse_term());
            else if (accept('-'))
                lhs = binary(Expr::Kind::Sub, lhs, parse_term());
            else
                return lhs;
        }
    }

    ExprPtr parse_term() {
        ExprPtr lhs = parse_factor();
        for (;;) {
            if (accept('*'))
                lhs = binary(Expr::Kind::Mul, lhs, parse_factor());
            else if (accept('/'))
                lhs = binary(Expr::Kind::Div, lhs, parse_factor());
            else
                return lhs;
        }
    }

    ExprPtr parse_factor() {
        if (accept('-')) return unary(Expr::Kind::Neg, parse_factor());
        return parse_power();
    }

    int parse_exponent() {
        skip_ws();
        const size_t start = pos;
        const bool parens = accept('(');
        double sign = 1.0;
        if (accept('-')) sign = -1.0;
        const double v = sign * parse_number();
        if (parens) expect(')', "after exponent");
        if (std::fabs(v - std::round(v)) > 1e-12 || std::fabs(v) > 1e9)
            fail("exponent must be an integer constant", start);
        return static_cast<int>(std::llround(v));
    }

    ExprPtr parse_power() {
        ExprPtr base = parse_atom();
        if (accept('^')) {
            Expr e;
            e.kind = Expr::Kind::Pow;
            e.a = std::move(base);
            e.exponent = parse_exponent();
            return make(std::move(e));
        }
        return base;
    }

    ExprPtr parse_atom() {
        skip_ws();
        const size_t start = pos;
        if (pos >= text.size()) fail("unexpected end of input", pos);
        const char c = text[pos];
        if (c == '(') {
            ++pos;
            ExprPtr inner = parse_expr();
            expect(')', "to close a group");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return constant(parse_number());
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::string name = parse_ident();
            if (name == "sin" || name == "cos" || name == "exp" || name == "sqrt") {
                expect('(', "after function name");
                ExprPtr arg = parse_expr();
                expect(')', "to close a function call");
                Expr::Kind k = name == "sin"   ? Expr::Kind::Sin
                               : name == "cos" ? Expr::Kind::Cos
                               : name == "exp" ? Expr::Kind::Exp
                                               : Expr::Kind::Sqrt;
                return unary(k, std::move(arg));
            }
            if (name == "pi") return constant(std::numbers::pi);
            if (name == "t") {
                Expr e;
                e.kind = Expr::Kind::Variable;
                e.var_kind = 't';
                return make(std::move(e));
            }
            if ((name[0] == 'q' || name[0] == 'p') && name.size() > 1) {
                int idx = 0;
                auto res = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
                if (res.ec == std::errc() && res.ptr == name.data() + name.size() && idx >= 1) {
                    Expr e;
                    e.kind = Expr::Kind::Variable;
                    e.var_kind = name[0];
                    e.var_index = idx;
                    return make(std::move(e));
                }
            }
            throw UnknownIdentifier("unknown identifier '" + name + "' at offset " +
                                        std::to_string(start),
                                    static_cast<int>(start), name);
        }
        fail(std::string("unexpected character '") + c + "'", pos);
    }
};

int max_coord_index(const ExprPtr& e) {
    if (!e) return 0;
    int m = 0;
    if (e->kind == Expr::Kind::Variable && (e->var_kind == 'q' || e->var_kind == 'p'))
        m = e->var_index;
    return std::max({m, max_coord_index(e->a), max_coord_index(e->b)});
}

}  // namespace

Ast parse(const std::string& text) {
    Parser p(text);
    Ast ast;
    ast.root = p.parse_expr();
    p.skip_ws();
    if (p.pos != text.size())
        throw SyntaxError("unexpected trailing input at offset " + std::to_string(p.pos),
                          static_cast<int>(p.pos));
    ast.n = std::max(1, max_coord_index(ast.root));
    ast.source = text;
    return ast;
}

namespace {

int precedence(const Expr& e) {
    switch (e.kind) {
        case Expr::Kind::Add:
        case Expr::Kind::Sub:
            return 1;
        case Expr::Kind::Mul:
        case Expr::Kind::Div:
            return 2;
        case Expr::Kind::Neg:
            return 3;
        case Expr::Kind::Pow:
            return 4;
        default:
            return 5;
    }
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void render(const Expr& e, int context, std::string& out) {
    const int prec = precedence(e);
    const bool wrap = prec < context;
    if (wrap) out += '(';
    switch (e.kind) {
        case Expr::Kind::Constant:
            out += format_number(e.constant);
            break;
        case Expr::Kind::Variable:
            if (e.var_kind == 't')
                out += 't';
            else
                out += e.var_kind + std::to_string(e.var_index);
            break;
        case Expr::Kind::Neg:
            out += '-';
            render(*e.a, prec, out);
            break;
        case Expr::Kind::Add:
            render(*e.a, prec, out);
            out += " + ";
            render(*e.b, prec, out);
            break;
        case Expr::Kind::Sub:
            render(*e.a, prec, out);
            out += " - ";
            render(*e.b, prec + 1, out);
            break;
        case Expr::Kind::Mul:
            render(*e.a, prec, out);
            out += '*';
            render(*e.b, prec, out);
            break;
        case Expr::Kind::Div:
            render(*e.a, prec, out);
            out += '/';
            render(*e.b, prec + 1, out);
            break;
        case Expr::Kind::Pow:
            render(*e.a, prec + 1, out);
            out += '^';
            if (e.exponent < 0)
                out += "(" + std::to_string(e.exponent) + ")";
            else
                out += std::to_string(e.exponent);
            break;
        case Expr::Kind::Sin:
        case Expr::Kind::Cos:
        case Expr::Kind::Exp:
        case Expr::Kind::Sqrt: {
            const char* name = e.kind == Expr::Kind::Sin   ? "sin"
                               : e.kind == Expr::Kind::Cos ? "cos"
                               : e.kind == Expr::Kind::Exp ? "exp"
                                                           : "sqrt";
            out += name;
            out += '(';
            render(*e.a, 0, out);
            out += ')';
            break;
        }
    }
    if (wrap) out += ')';
}

}  // namespace

std::string pretty_print(const Ast& ast) {
    std::string out;
    render(*ast.root, 0, out);
    return out;
}

namespace {

// Jet arithmetic. The same tree walk is instantiated for plain doubles,
// first-order jets and second-order jets.

double jet_const(double c, const double&) { return c; }
Dual1 jet_const(double c, const Dual1& like) {
    return {c, Vec::Zero(like.g.size())};
}
Dual2 jet_const(double c, const Dual2& like) {
    return {c, Vec::Zero(like.g.size()), Mat::Zero(like.h.rows(), like.h.cols())};
}

void check_div(double v) {
    if (v == 0.0 || !std::isfinite(1.0 / v)) throw DomainError("division by zero");
}

double neg_(const double& a) { return -a; }
double add_(const double& a, const double& b) { return a + b; }
double sub_(const double& a, const double& b) { return a - b; }
double mul_(const double& a, const double& b) { return a * b; }
double div_(const double& a, const double& b) {
    check_div(b);
    return a / b;
}
double sin_(const double& a) { return std::sin(a); }
double cos_(const double& a) { return std::cos(a); }
double exp_(const double& a) { return std::exp(a); }
double sqrt_(const double& a) {
    if (a < 0.0) throw DomainError("sqrt of a negative value");
    return std::sqrt(a);
}
double pow_int_(const double& a, int k) {
    if (a == 0.0 && k < 0) throw DomainError("zero to a negative power");
    return std::pow(a, k);
}

Dual1 neg_(const Dual1& a) { return {-a.val, -a.g}; }
Dual1 add_(const Dual1& a, const Dual1& b) { return {a.val + b.val, a.g + b.g}; }
Dual1 sub_(const Dual1& a, const Dual1& b) { return {a.val - b.val, a.g - b.g}; }
Dual1 mul_(const Dual1& a, const Dual1& b) {
    return {a.val * b.val, a.g * b.val + b.g * a.val};
}
Dual1 div_(const Dual1& a, const Dual1& b) {
    check_div(b.val);
    const double f = a.val / b.val;
    return {f, (a.g - f * b.g) / b.val};
}
Dual1 sin_(const Dual1& a) { return {std::sin(a.val), std::cos(a.val) * a.g}; }
Dual1 cos_(const Dual1& a) { return {std::cos(a.val), -std::sin(a.val) * a.g}; }
Dual1 exp_(const Dual1& a) {
    const double v = std::exp(a.val);
    return {v, v * a.g};
}
Dual1 sqrt_(const Dual1& a) {
    if (a.val < 0.0) throw DomainError("sqrt of a negative value");
    const double s = std::sqrt(a.val);
    check_div(s);
    return {s, a.g / (2.0 * s)};
}
Dual1 pow_int_(const Dual1& a, int k) {
    if (k == 0) return jet_const(1.0, a);
    if (a.val == 0.0 && k < 0) throw DomainError("zero to a negative power");
    return {std::pow(a.val, k), k * std::pow(a.val, k - 1) * a.g};
}

Dual2 neg_(const Dual2& a) { return {-a.val, -a.g, -a.h}; }
Dual2 add_(const Dual2& a, const Dual2& b) { return {a.val + b.val, a.g + b.g, a.h + b.h}; }
Dual2 sub_(const Dual2& a, const Dual2& b) { return {a.val - b.val, a.g - b.g, a.h - b.h}; }
Dual2 mul_(const Dual2& a, const Dual2& b) {
    return {a.val * b.val, a.g * b.val + b.g * a.val,
            a.h * b.val + b.h * a.val + a.g * b.g.transpose() + b.g * a.g.transpose()};
}
Dual2 div_(const Dual2& a, const Dual2& b) {
    check_div(b.val);
    const double f = a.val / b.val;
    const Vec g = (a.g - f * b.g) / b.val;
    const Mat h =
        (a.h - g * b.g.transpose() - b.g * g.transpose() - f * b.h) / b.val;
    return {f, g, h};
}
Dual2 sin_(const Dual2& a) {
    const double s = std::sin(a.val), c = std::cos(a.val);
    return {s, c * a.g, c * a.h - s * a.g * a.g.transpose()};
}
Dual2 cos_(const Dual2& a) {
    const double s = std::sin(a.val), c = std::cos(a.val);
    return {c, -s * a.g, -s * a.h - c * a.g * a.g.transpose()};
}
Dual2 exp_(const Dual2& a) {
    const double v = std::exp(a.val);
    return {v, v * a.g, v * (a.h + a.g * a.g.transpose())};
}
Dual2 sqrt_(const Dual2& a) {
    if (a.val < 0.0) throw DomainError("sqrt of a negative value");
    const double s = std::sqrt(a.val);
    check_div(s);
    const Vec g = a.g / (2.0 * s);
    return {s, g, a.h / (2.0 * s) - a.g * a.g.transpose() / (4.0 * s * a.val)};
}
Dual2 pow_int_(const Dual2& a, int k) {
    if (k == 0) return jet_const(1.0, a);
    if (a.val == 0.0 && k < 0) throw DomainError("zero to a negative power");
    const double fk = static_cast<double>(k);
    const double v1 = std::pow(a.val, k - 1);
    Mat h = fk * v1 * a.h;
    if (k != 1) h += fk * (fk - 1.0) * std::pow(a.val, k - 2) * a.g * a.g.transpose();
    return {v1 * a.val, fk * v1 * a.g, h};
}

template <typename J>
J walk(const Expr& e, const Vec& q, const Vec& p, double t, const J& proto) {
    switch (e.kind) {
        case Expr::Kind::Constant:
            return jet_const(e.constant, proto);
        case Expr::Kind::Variable:
            break;  // handled below
        case Expr::Kind::Neg:
            return neg_(walk(*e.a, q, p, t, proto));
        case Expr::Kind::Sin:
            return sin_(walk(*e.a, q, p, t, proto));
        case Expr::Kind::Cos:
            return cos_(walk(*e.a, q, p, t, proto));
        case Expr::Kind::Exp:
            return exp_(walk(*e.a, q, p, t, proto));
        case Expr::Kind::Sqrt:
            return sqrt_(walk(*e.a, q, p, t, proto));
        case Expr::Kind::Add:
            return add_(walk(*e.a, q, p, t, proto), walk(*e.b, q, p, t, proto));
        case Expr::Kind::Sub:
            return sub_(walk(*e.a, q, p, t, proto), walk(*e.b, q, p, t, proto));
        case Expr::Kind::Mul:
            return mul_(walk(*e.a, q, p, t, proto), walk(*e.b, q, p, t, proto));
        case Expr::Kind::Div:
            return div_(walk(*e.a, q, p, t, proto), walk(*e.b, q, p, t, proto));
        case Expr::Kind::Pow:
            return pow_int_(walk(*e.a, q, p, t, proto), e.exponent);
    }
    // Variable: resolve the jet slot against the runtime dimension.
    const int n = static_cast<int>(q.size());
    double value;
    int slot;
    if (e.var_kind == 't') {
        value = t;
        slot = 2 * n;
    } else if (e.var_kind == 'q') {
        value = q[e.var_index - 1];
        slot = e.var_index - 1;
    } else {
        value = p[e.var_index - 1];
        slot = n + e.var_index - 1;
    }
    J out = jet_const(value, proto);
    if constexpr (!std::is_same_v<J, double>) out.g[slot] = 1.0;
    return out;
}

void check_point(const Ast& ast, const Vec& q, const Vec& p) {
    require_same_dim(q, p, "hamlang::evaluate");
    if (static_cast<int>(q.size()) < ast.n)
        throw DimensionMismatch("hamlang::evaluate: expression uses coordinates up to index " +
                                std::to_string(ast.n) + " but point has dimension " +
                                std::to_string(q.size()));
}

template <typename F>
auto with_point_context(const Ast& ast, const Vec& q, const Vec& p, double t, F&& f) {
    try {
        return f();
    } catch (const DomainError& err) {
        std::ostringstream os;
        os << err.what() << " while evaluating '" << ast.source << "' at q=[" << q.transpose()
           << "], p=[" << p.transpose() << "], t=" << t;
        throw DomainError(os.str());
    }
}

}  // namespace

double evaluate(const Ast& ast, const Vec& q, const Vec& p, double t) {
    check_point(ast, q, p);
    return with_point_context(ast, q, p, t,
                              [&] { return walk<double>(*ast.root, q, p, t, 0.0); });
}

Dual1 evaluate_with_gradient(const Ast& ast, const Vec& q, const Vec& p, double t) {
    check_point(ast, q, p);
    const int D = 2 * static_cast<int>(q.size()) + 1;
    Dual1 proto{0.0, Vec::Zero(D)};
    return with_point_context(ast, q, p, t,
                              [&] { return walk<Dual1>(*ast.root, q, p, t, proto); });
}

Dual2 evaluate_with_derivatives(const Ast& ast, const Vec& q, const Vec& p, double t) {
    check_point(ast, q, p);
    const int D = 2 * static_cast<int>(q.size()) + 1;
    Dual2 proto{0.0, Vec::Zero(D), Mat::Zero(D, D)};
    return with_point_context(ast, q, p, t,
                              [&] { return walk<Dual2>(*ast.root, q, p, t, proto); });
}

}  // namespace hamlang
}  // namespace stmap
