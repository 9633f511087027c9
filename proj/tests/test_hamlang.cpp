#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stmap/hamlang.hpp"

#include <cmath>

using namespace stmap;
using namespace stmap::hamlang;

namespace {

const double kTwoPi = 2.0 * std::numbers::pi;

Vec vec1(double x) {
    Vec v(1);
    v << x;
    return v;
}

}  // namespace

TEST_CASE("pendulum expression evaluates with exact derivatives") {
    const Ast ast = parse("p1^2/2 + cos(2*pi*q1)");
    CHECK(ast.n == 1);

    const Vec q = vec1(0.25), p = vec1(0.5);
    CHECK(evaluate(ast, q, p, 0.0) == doctest::Approx(0.125).epsilon(1e-15));

    const Dual1 d1 = evaluate_with_gradient(ast, q, p, 0.0);
    REQUIRE(d1.g.size() == 3);
    CHECK(d1.val == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(d1.g[0] == doctest::Approx(-kTwoPi).epsilon(1e-14));  // d/dq1
    CHECK(d1.g[1] == doctest::Approx(0.5).epsilon(1e-15));      // d/dp1
    CHECK(std::fabs(d1.g[2]) < 1e-15);                          // d/dt

    const Dual2 d2 = evaluate_with_derivatives(ast, q, p, 0.0);
    REQUIRE(d2.h.rows() == 3);
    CHECK((d2.h - d2.h.transpose()).lpNorm<Eigen::Infinity>() < 1e-14);
    CHECK(std::fabs(d2.h(0, 0)) < 1e-12);  // -4 pi^2 cos(pi/2)
    CHECK(d2.h(1, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::fabs(d2.h(0, 1)) < 1e-15);
}

TEST_CASE("time dependence lands in the last jet slot") {
    const Ast ast = parse("t^2*q1 + t*p2");
    CHECK(ast.n == 2);
    Vec q(2), p(2);
    q << 3.0, 0.0;
    p << 0.0, 5.0;
    const double t = 0.7;
    const Dual2 d2 = evaluate_with_derivatives(ast, q, p, t);
    REQUIRE(d2.g.size() == 5);
    CHECK(d2.val == doctest::Approx(t * t * 3.0 + t * 5.0).epsilon(1e-15));
    CHECK(d2.g[4] == doctest::Approx(2.0 * t * 3.0 + 5.0).epsilon(1e-14));
    CHECK(d2.g[0] == doctest::Approx(t * t).epsilon(1e-15));
    CHECK(d2.g[3] == doctest::Approx(t).epsilon(1e-15));
    CHECK(d2.h(4, 4) == doctest::Approx(2.0 * 3.0).epsilon(1e-14));
    CHECK(d2.h(0, 4) == doctest::Approx(2.0 * t).epsilon(1e-14));
    CHECK(d2.h(3, 4) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("dimension is inferred from the highest coordinate index") {
    CHECK(parse("q2*p1").n == 2);
    CHECK(parse("t + 1").n == 1);
    CHECK(parse("p4^2").n == 4);
}

TEST_CASE("arithmetic follows the usual precedence and associativity") {
    const Vec q = vec1(0.0), p = vec1(0.0);
    CHECK(evaluate(parse("1 - 2 - 3"), q, p, 0.0) == doctest::Approx(-4.0));
    CHECK(evaluate(parse("2*3 + 4"), q, p, 0.0) == doctest::Approx(10.0));
    CHECK(evaluate(parse("6/2/3"), q, p, 0.0) == doctest::Approx(1.0));
    CHECK(evaluate(parse("2^3"), q, p, 0.0) == doctest::Approx(8.0));
    CHECK(evaluate(parse("-q1^2"), vec1(2.0), p, 0.0) == doctest::Approx(-4.0));
    CHECK(evaluate(parse("q1^(-2)"), vec1(2.0), p, 0.0) == doctest::Approx(0.25));
    CHECK(evaluate(parse("exp(0) + sqrt(4)"), q, p, 0.0) == doctest::Approx(3.0));
    CHECK(evaluate(parse("sin(pi/6)"), q, p, 0.0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("pretty print round trips through the parser") {
    const char* sources[] = {
        "p1^2/2 + cos(2*pi*q1)",
        "-(q1 + p1)*t",
        "q1/(p1 - 2)^2 - sqrt(q2^2 + 1)",
        "exp(-t)*sin(q1 - p2)",
    };
    Vec q(2), p(2);
    q << 0.37, -0.81;
    p << 1.42, 0.06;
    for (const char* src : sources) {
        const Ast a = parse(src);
        const Ast b = parse(pretty_print(a));
        CHECK(evaluate(a, q, p, 0.55) == doctest::Approx(evaluate(b, q, p, 0.55)).epsilon(1e-15));
        const Dual1 ga = evaluate_with_gradient(a, q, p, 0.55);
        const Dual1 gb = evaluate_with_gradient(b, q, p, 0.55);
        CHECK((ga.g - gb.g).lpNorm<Eigen::Infinity>() < 1e-14);
    }
}

TEST_CASE("malformed input raises syntax errors with an offset") {
    CHECK_THROWS_AS(parse("1 +"), SyntaxError);
    CHECK_THROWS_AS(parse("(q1"), SyntaxError);
    CHECK_THROWS_AS(parse("q1 q2"), SyntaxError);
    CHECK_THROWS_AS(parse("q1^p1"), SyntaxError);
    CHECK_THROWS_AS(parse("q1^1.5"), SyntaxError);
    CHECK_THROWS_AS(parse("sin q1"), SyntaxError);
    CHECK_THROWS_AS(parse(""), SyntaxError);
    bool threw = false;
    try {
        parse("q1 + $");
    } catch (const SyntaxError& e) {
        threw = true;
        CHECK(e.offset == 5);
    }
    CHECK(threw);
}

TEST_CASE("unknown names are reported with the offending identifier") {
    CHECK_THROWS_AS(parse("foo(2)"), UnknownIdentifier);
    CHECK_THROWS_AS(parse("q1 + xy"), UnknownIdentifier);
    CHECK_THROWS_AS(parse("q0"), UnknownIdentifier);
    bool threw = false;
    try {
        parse("foo(2)");
    } catch (const UnknownIdentifier& e) {
        threw = true;
        CHECK(e.name == "foo");
        CHECK(e.offset == 0);
    }
    CHECK(threw);
}

TEST_CASE("evaluation outside a function domain throws") {
    const Vec q = vec1(0.0), p = vec1(0.0);
    CHECK_THROWS_AS(evaluate(parse("1/q1"), q, p, 0.0), DomainError);
    CHECK_THROWS_AS(evaluate(parse("sqrt(q1 - 2)"), q, p, 0.0), DomainError);
    CHECK_THROWS_AS(evaluate(parse("q1^(-1)"), q, p, 0.0), DomainError);
    CHECK_THROWS_AS(evaluate_with_derivatives(parse("sqrt(q1)"), q, p, 0.0), DomainError);
    CHECK_NOTHROW(evaluate(parse("1/(q1 + 1)"), q, p, 0.0));
}

TEST_CASE("points smaller than the inferred dimension are rejected") {
    const Ast ast = parse("q2 + p2");
    CHECK_THROWS_AS(evaluate(ast, vec1(0.0), vec1(0.0), 0.0), DimensionMismatch);
    Vec q(2), p(2);
    q.setZero();
    p.setZero();
    CHECK_NOTHROW(evaluate(ast, q, p, 0.0));
}
