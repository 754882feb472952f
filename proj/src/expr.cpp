#include "toda/expr.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace toda {

struct Expression::Node {
    enum class Kind { Number, Variable, Unary, Binary, Call } kind = Kind::Number;
    double value = 0.0;
    int variable = 0;  // 0: x1, 1: x2, 2: r, 3: theta
    char op = 0;
    double (*fn)(double) = nullptr;
    std::shared_ptr<const Node> a, b;

    double eval(const Point& x) const {
        switch (kind) {
            case Kind::Number: return value;
            case Kind::Variable:
                switch (variable) {
                    case 0: return x.x;
                    case 1: return x.y;
                    case 2: return x.norm();
                    default: return std::atan2(x.y, x.x);
                }
            case Kind::Unary: return -a->eval(x);
            case Kind::Call: return fn(a->eval(x));
            case Kind::Binary: {
                double u = a->eval(x), v = b->eval(x);
                switch (op) {
                    case '+': return u + v;
                    case '-': return u - v;
                    case '*': return u * v;
                    case '/': return u / v;
                    default: return std::pow(u, v);
                }
            }
        }
        return 0.0;
    }

    bool has_variables() const {
        if (kind == Kind::Variable) return true;
        return (a && a->has_variables()) || (b && b->has_variables());
    }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

double fabs_(double v) { return std::fabs(v); }
double exp_(double v) { return std::exp(v); }
double log_(double v) { return std::log(v); }
double sqrt_(double v) { return std::sqrt(v); }
double sin_(double v) { return std::sin(v); }
double cos_(double v) { return std::cos(v); }
double tan_(double v) { return std::tan(v); }
double atan_(double v) { return std::atan(v); }
double sinh_(double v) { return std::sinh(v); }
double cosh_(double v) { return std::cosh(v); }
double tanh_(double v) { return std::tanh(v); }

const std::map<std::string, double (*)(double)>& functions() {
    static const std::map<std::string, double (*)(double)> f = {
        {"exp", exp_},   {"log", log_},   {"sqrt", sqrt_}, {"abs", fabs_}, {"sin", sin_},   {"cos", cos_},
        {"tan", tan_},   {"atan", atan_}, {"sinh", sinh_}, {"cosh", cosh_}, {"tanh", tanh_},
    };
    return f;
}

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse() {
        auto n = sum();
        skip();
        if (i_ != s_.size()) fail("unexpected '" + std::string(1, s_[i_]) + "'");
        return n;
    }

private:
    const std::string& s_;
    size_t i_ = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw std::invalid_argument("expression '" + s_ + "': " + what + " at position " + std::to_string(i_));
    }
    void skip() {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    }
    bool accept(char c) {
        skip();
        if (i_ < s_.size() && s_[i_] == c) {
            ++i_;
            return true;
        }
        return false;
    }
    static NodePtr binary(char op, NodePtr a, NodePtr b) {
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::Binary;
        n->op = op;
        n->a = std::move(a);
        n->b = std::move(b);
        return n;
    }

    NodePtr sum() {
        auto n = product();
        for (;;) {
            if (accept('+')) n = binary('+', n, product());
            else if (accept('-')) n = binary('-', n, product());
            else return n;
        }
    }
    NodePtr product() {
        auto n = unary();
        for (;;) {
            if (accept('*')) n = binary('*', n, unary());
            else if (accept('/')) n = binary('/', n, unary());
            else return n;
        }
    }
    NodePtr unary() {
        if (accept('-')) {
            auto n = std::make_shared<Node>();
            n->kind = Node::Kind::Unary;
            n->a = unary();
            return n;
        }
        if (accept('+')) return unary();
        return power();
    }
    // Right associative; binds tighter than unary minus on its left.
    NodePtr power() {
        auto n = primary();
        if (accept('^')) return binary('^', n, unary());
        return n;
    }
    NodePtr primary() {
        skip();
        if (i_ >= s_.size()) fail("unexpected end");
        if (accept('(')) {
            auto n = sum();
            if (!accept(')')) fail("missing ')'");
            return n;
        }
        char c = s_[i_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(s_.substr(i_), &used);
            } catch (const std::exception&) {
                fail("bad number");
            }
            i_ += used;
            auto n = std::make_shared<Node>();
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            size_t j = i_;
            while (j < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[j])) || s_[j] == '_')) ++j;
            std::string name = s_.substr(i_, j - i_);
            i_ = j;
            auto n = std::make_shared<Node>();
            static const std::map<std::string, int> vars = {{"x1", 0}, {"x2", 1}, {"r", 2}, {"theta", 3}, {"th", 3}};
            if (auto v = vars.find(name); v != vars.end()) {
                n->kind = Node::Kind::Variable;
                n->variable = v->second;
                return n;
            }
            if (name == "pi") {
                n->value = 3.141592653589793238462643383279502884;
                return n;
            }
            if (name == "e") {
                n->value = std::exp(1.0);
                return n;
            }
            auto f = functions().find(name);
            if (f == functions().end()) fail("unknown name '" + name + "'");
            if (!accept('(')) fail("'(' expected after " + name);
            n->kind = Node::Kind::Call;
            n->fn = f->second;
            n->a = sum();
            if (!accept(')')) fail("missing ')'");
            return n;
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }
};

}  // namespace

Expression Expression::parse(const std::string& text) {
    Expression e;
    e.text_ = text;
    e.root_ = Parser(text).parse();
    return e;
}

double Expression::operator()(const Point& x) const { return root_->eval(x); }

bool Expression::uses_variables() const { return root_->has_variables(); }

double Expression::constant() const {
    if (uses_variables()) throw std::invalid_argument("expression '" + text_ + "' is not a constant");
    return root_->eval(Point(0.0, 0.0));
}

PointFunction Expression::function() const {
    auto root = root_;
    return [root](const Point& x) { return root->eval(x); };
}

}  // namespace toda
