#ifndef STMAP_HAMLANG_HPP
#define STMAP_HAMLANG_HPP

#include "stmap/core.hpp"

#include <memory>
#include <string>

namespace stmap {
namespace hamlang {

/// Parse failure, carrying the byte offset into the source text.
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& msg, int offset_) : Error(msg), offset(offset_) {}
    int offset;
};

/// Identifier that is not q<i>, p<i>, t, pi or a known function name.
class UnknownIdentifier : public Error {
public:
    UnknownIdentifier(const std::string& msg, int offset_, std::string name_)
        : Error(msg), offset(offset_), name(std::move(name_)) {}
    int offset;
    std::string name;
};

/// Evaluation outside a function's domain (sqrt of a negative, division by
/// zero, zero to a negative power).
class DomainError : public Error {
public:
    using Error::Error;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Expression tree over variables q1..qn, p1..pn and time t.
struct Expr {
    enum class Kind { Constant, Variable, Neg, Sin, Cos, Exp, Sqrt, Add, Sub, Mul, Div, Pow };

    Kind kind;
    double constant = 0.0;  // Constant
    char var_kind = 0;      // 'q', 'p' or 't'
    int var_index = 0;      // 1-based coordinate index for q/p
    int exponent = 0;       // Pow
    ExprPtr a, b;
};

/// Parsed expression with the torus dimension inferred from the highest
/// coordinate index that occurs (at least 1).
struct Ast {
    ExprPtr root;
    int n = 1;
    std::string source;
};

/// Recursive-descent parse. Precedence, loosest first: + -, * /, unary minus,
/// ^ (constant integer exponents only). Functions: sin, cos, exp, sqrt;
/// pi is a constant.
Ast parse(const std::string& text);

/// Render with minimal parentheses; parse(pretty_print(a)) evaluates
/// identically to a.
std::string pretty_print(const Ast& ast);

/// Value and first-order sensitivities in the 2n+1 directions (q, p, t).
struct Dual1 {
    double val = 0.0;
    Vec g;
};

/// Value, gradient and Hessian in the 2n+1 directions (q, p, t).
struct Dual2 {
    double val = 0.0;
    Vec g;
    Mat h;
};

double evaluate(const Ast& ast, const Vec& q, const Vec& p, double t);
Dual1 evaluate_with_gradient(const Ast& ast, const Vec& q, const Vec& p, double t);
Dual2 evaluate_with_derivatives(const Ast& ast, const Vec& q, const Vec& p, double t);

}  // namespace hamlang
}  // namespace stmap

#endif
