#pragma once

#include <memory>
#include <string>

#include "toda/geometry.hpp"

namespace toda {

// Arithmetic over the variables x1, x2, r, theta (alias th) and the
// constants pi, e. Operators + - * / ^ with the usual precedence, unary
// minus, and the functions exp, log, sqrt, abs, sin, cos, tan, atan, sinh,
// cosh, tanh.
class Expression {
public:
    struct Node;

    static Expression parse(const std::string& text);

    double operator()(const Point& x) const;
    // Value of an expression without variables; throws otherwise.
    double constant() const;
    bool uses_variables() const;
    const std::string& text() const { return text_; }
    PointFunction function() const;

private:
    std::string text_;
    std::shared_ptr<const Node> root_;
};

}  // namespace toda
