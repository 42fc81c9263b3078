#pragma once

#include <cctype>
#include <cmath>
#include <memory>
#include <string>

#include "elastostab/grid.hpp"

namespace elastostab::expr {

struct ParseError : Error {
    using Error::Error;
};

/// Arithmetic expressions over x1, x2, x3, t with + - * / ^, parentheses
/// and the functions sin, cos, exp.
class Expression {
  public:
    virtual ~Expression() = default;
    virtual double eval(double x1, double x2, double x3, double t) const = 0;
};

using ExprPtr = std::shared_ptr<const Expression>;

namespace detail {

struct Constant final : Expression {
    double v;
    explicit Constant(double c) : v(c) {}
    double eval(double, double, double, double) const override { return v; }
};

struct Variable final : Expression {
    int which;  // 0..2 -> x1..x3, 3 -> t
    explicit Variable(int w) : which(w) {}
    double eval(double x1, double x2, double x3, double t) const override {
        switch (which) {
            case 0: return x1;
            case 1: return x2;
            case 2: return x3;
            default: return t;
        }
    }
};

struct Unary final : Expression {
    char op;  // '-' or function id: 's'=sin, 'c'=cos, 'e'=exp
    ExprPtr arg;
    Unary(char o, ExprPtr a) : op(o), arg(std::move(a)) {}
    double eval(double x1, double x2, double x3, double t) const override {
        const double v = arg->eval(x1, x2, x3, t);
        switch (op) {
            case '-': return -v;
            case 's': return std::sin(v);
            case 'c': return std::cos(v);
            default: return std::exp(v);
        }
    }
};

struct Binary final : Expression {
    char op;
    ExprPtr lhs, rhs;
    Binary(char o, ExprPtr l, ExprPtr r) : op(o), lhs(std::move(l)), rhs(std::move(r)) {}
    double eval(double x1, double x2, double x3, double t) const override {
        const double a = lhs->eval(x1, x2, x3, t), b = rhs->eval(x1, x2, x3, t);
        switch (op) {
            case '+': return a + b;
            case '-': return a - b;
            case '*': return a * b;
            case '/': return a / b;
            default: return std::pow(a, b);
        }
    }
};

class Parser {
  public:
    explicit Parser(const std::string& s) : src_(s) {}

    ExprPtr parse() {
        ExprPtr e = sum();
        skip_ws();
        if (pos_ != src_.size())
            throw ParseError("unexpected input at position " + std::to_string(pos_) + " in '" +
                             src_ + "'");
        return e;
    }

  private:
    void skip_ws() {
        while (pos_ < src_.size() && std::isspace((unsigned char)src_[pos_])) ++pos_;
    }
    bool eat(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    ExprPtr sum() {
        ExprPtr e = product();
        while (true) {
            if (eat('+')) e = std::make_shared<Binary>('+', e, product());
            else if (eat('-')) e = std::make_shared<Binary>('-', e, product());
            else return e;
        }
    }
    ExprPtr product() {
        ExprPtr e = unary();
        while (true) {
            if (eat('*')) e = std::make_shared<Binary>('*', e, unary());
            else if (eat('/')) e = std::make_shared<Binary>('/', e, unary());
            else return e;
        }
    }
    // unary minus binds looser than '^': -x1^2 is -(x1^2)
    ExprPtr unary() {
        if (eat('-')) return std::make_shared<Unary>('-', unary());
        if (eat('+')) return unary();
        return power();
    }
    ExprPtr power() {
        ExprPtr base = atom();
        if (eat('^')) return std::make_shared<Binary>('^', base, unary());  // right assoc
        return base;
    }
    ExprPtr atom() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("unexpected end of expression in '" + src_ + "'");
        const char c = src_[pos_];
        if (std::isdigit((unsigned char)c) || c == '.') return number();
        if (std::isalpha((unsigned char)c)) return identifier();
        if (eat('(')) {
            ExprPtr e = sum();
            if (!eat(')')) throw ParseError("missing ')' in '" + src_ + "'");
            return e;
        }
        throw ParseError(std::string("unexpected character '") + c + "' in '" + src_ + "'");
    }
    ExprPtr number() {
        std::size_t end = pos_;
        std::size_t after = 0;
        double v;
        try {
            v = std::stod(src_.substr(pos_), &after);
        } catch (const std::exception&) {
            throw ParseError("malformed number in '" + src_ + "'");
        }
        end = pos_ + after;
        pos_ = end;
        return std::make_shared<Constant>(v);
    }
    ExprPtr identifier() {
        std::size_t end = pos_;
        while (end < src_.size() &&
               (std::isalnum((unsigned char)src_[end]) || src_[end] == '_'))
            ++end;
        const std::string name = src_.substr(pos_, end - pos_);
        pos_ = end;
        if (name == "x1") return std::make_shared<Variable>(0);
        if (name == "x2") return std::make_shared<Variable>(1);
        if (name == "x3") return std::make_shared<Variable>(2);
        if (name == "t") return std::make_shared<Variable>(3);
        char fn = 0;
        if (name == "sin") fn = 's';
        else if (name == "cos") fn = 'c';
        else if (name == "exp") fn = 'e';
        else throw ParseError("unknown identifier '" + name + "' in '" + src_ + "'");
        if (!eat('(')) throw ParseError("expected '(' after " + name);
        ExprPtr arg = sum();
        if (!eat(')')) throw ParseError("missing ')' after " + name + " argument");
        return std::make_shared<Unary>(fn, arg);
    }

    const std::string& src_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline ExprPtr parse(const std::string& s) { return detail::Parser(s).parse(); }

}  // namespace elastostab::expr
