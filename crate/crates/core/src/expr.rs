//! Scalar field expressions over the torus coordinates `x1`, `x2` and the
//! unknown slot `lam`.
//!
//! The grammar is deliberately small:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' '-'? integer)?
//! primary := number | 'pi' | variable | func '(' expr ')' | '(' expr ')'
//! func    := 'sin' | 'cos' | 'exp' | 'sqrt'
//! ```
//!
//! Variables are `x1 .. xm` for the problem dimension `m` and `lam`. Powers
//! take integer exponents only. Derivatives are exact and symbolic; the
//! only simplification performed is constant folding plus the usual
//! `0`/`1` identities.

use std::fmt;

use thiserror::Error;

/// A variable slot of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// Coordinate axis, zero based (`x1` is `Axis(0)`).
    Axis(usize),
    /// The value of the unknown function, written `lam`.
    Lam,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Axis(k) => write!(f, "x{}", k + 1),
            Var::Lam => f.write_str("lam"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }
}

/// Expression tree.
///
/// The associated constructors (`Node::add`, `Node::mul`, ...) fold
/// constants and drop neutral elements; building the enum variants directly
/// keeps the tree verbatim.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared variable `{name}` at offset {offset} (dimension {dim})")]
    UndeclaredVariable {
        name: String,
        offset: usize,
        dim: usize,
    },
    #[error("dimension must be 1 or 2, got {0}")]
    Dimension(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of a negative number")]
    NegativeSqrt,
    #[error("evaluation produced a non-finite value")]
    NonFinite,
    #[error("point has {got} coordinates, expression needs {need}")]
    PointDimension { got: usize, need: usize },
}

/// A parsed expression together with the dimension it was declared for.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldExpr {
    root: Node,
    dim: usize,
    depends_on_lambda: bool,
}

impl FieldExpr {
    pub fn parse(source: &str, dim: usize) -> Result<Self, ParseError> {
        if !(1..=2).contains(&dim) {
            return Err(ParseError::Dimension(dim));
        }
        let mut parser = Parser {
            src: source.as_bytes(),
            pos: 0,
            dim,
        };
        let root = parser.expr()?;
        parser.skip_ws();
        if parser.pos < parser.src.len() {
            return Err(parser.syntax("unexpected trailing input"));
        }
        Ok(Self::from_node(root, dim))
    }

    /// Wraps a tree built in code.
    ///
    /// # Panics
    ///
    /// Panics if the tree references an axis beyond `dim`.
    pub fn from_node(root: Node, dim: usize) -> Self {
        assert!((1..=2).contains(&dim), "dimension must be 1 or 2");
        let mut lam = false;
        visit_vars(&root, &mut |v| match v {
            Var::Lam => lam = true,
            Var::Axis(k) => assert!(k < dim, "axis x{} out of range for dimension {dim}", k + 1),
        });
        Self {
            root,
            dim,
            depends_on_lambda: lam,
        }
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        Self::from_node(Node::Const(value), dim)
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    pub fn into_node(self) -> Node {
        self.root
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depends_on_lambda(&self) -> bool {
        self.depends_on_lambda
    }

    pub fn depends_on(&self, var: Var) -> bool {
        let mut hit = false;
        visit_vars(&self.root, &mut |v| hit |= v == var);
        hit
    }

    /// `Some(c)` when the tree is a literal constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64], lambda: f64) -> Result<f64, EvalError> {
        if x.len() < self.dim {
            return Err(EvalError::PointDimension {
                got: x.len(),
                need: self.dim,
            });
        }
        let v = eval_node(&self.root, x, lambda)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    pub fn differentiate(&self, var: Var) -> FieldExpr {
        Self::from_node(derive(&self.root, var), self.dim)
    }

    /// Differentiates with respect to a variable given by name (`x1`, `x2`, `lam`).
    pub fn differentiate_by_name(&self, name: &str) -> Result<FieldExpr, ParseError> {
        let var = parse_var(name, self.dim).ok_or_else(|| ParseError::UndeclaredVariable {
            name: name.to_string(),
            offset: 0,
            dim: self.dim,
        })?;
        Ok(self.differentiate(var))
    }

    /// Gradient with respect to the coordinates, one entry per axis.
    pub fn gradient(&self) -> Vec<FieldExpr> {
        (0..self.dim)
            .map(|k| self.differentiate(Var::Axis(k)))
            .collect()
    }
}

impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(self, f)
    }
}

fn parse_var(name: &str, dim: usize) -> Option<Var> {
    if name == "lam" {
        return Some(Var::Lam);
    }
    let k: usize = name.strip_prefix('x')?.parse().ok()?;
    (1..=dim).contains(&k).then_some(Var::Axis(k - 1))
}

fn visit_vars(node: &Node, f: &mut impl FnMut(Var)) {
    match node {
        Node::Const(_) => {}
        Node::Var(v) => f(*v),
        Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => visit_vars(a, f),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            visit_vars(a, f);
            visit_vars(b, f);
        }
    }
}

fn eval_node(node: &Node, x: &[f64], lam: f64) -> Result<f64, EvalError> {
    Ok(match node {
        Node::Const(c) => *c,
        Node::Var(Var::Axis(k)) => x[*k],
        Node::Var(Var::Lam) => lam,
        Node::Neg(a) => -eval_node(a, x, lam)?,
        Node::Add(a, b) => eval_node(a, x, lam)? + eval_node(b, x, lam)?,
        Node::Sub(a, b) => eval_node(a, x, lam)? - eval_node(b, x, lam)?,
        Node::Mul(a, b) => eval_node(a, x, lam)? * eval_node(b, x, lam)?,
        Node::Div(a, b) => {
            let num = eval_node(a, x, lam)?;
            let den = eval_node(b, x, lam)?;
            if den == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            num / den
        }
        Node::Pow(a, n) => {
            let base = eval_node(a, x, lam)?;
            if *n < 0 && base == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            base.powi(*n)
        }
        Node::Call(func, a) => {
            let v = eval_node(a, x, lam)?;
            match func {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Sqrt => {
                    if v < 0.0 {
                        return Err(EvalError::NegativeSqrt);
                    }
                    v.sqrt()
                }
            }
        }
    })
}

impl Node {
    pub fn var(v: Var) -> Node {
        Node::Var(v)
    }

    pub fn c(v: f64) -> Node {
        Node::Const(v)
    }

    fn is_const(&self, v: f64) -> bool {
        matches!(self, Node::Const(c) if *c == v)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(a: Node) -> Node {
        match a {
            Node::Const(c) => Node::Const(-c),
            Node::Neg(inner) => *inner,
            other => Node::Neg(Box::new(other)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Node, b: Node) -> Node {
        match (a, b) {
            (Node::Const(x), Node::Const(y)) => Node::Const(x + y),
            (a, b) if a.is_const(0.0) => b,
            (a, b) if b.is_const(0.0) => a,
            (a, Node::Neg(b)) => Node::sub(a, *b),
            (a, b) => Node::Add(Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Node, b: Node) -> Node {
        match (a, b) {
            (Node::Const(x), Node::Const(y)) => Node::Const(x - y),
            (a, b) if b.is_const(0.0) => a,
            (a, b) if a.is_const(0.0) => Node::neg(b),
            (a, Node::Neg(b)) => Node::add(a, *b),
            (a, b) => Node::Sub(Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Node, b: Node) -> Node {
        match (a, b) {
            (Node::Const(x), Node::Const(y)) => Node::Const(x * y),
            (a, _) if a.is_const(0.0) => Node::Const(0.0),
            (_, b) if b.is_const(0.0) => Node::Const(0.0),
            (a, b) if a.is_const(1.0) => b,
            (a, b) if b.is_const(1.0) => a,
            (a, b) if a.is_const(-1.0) => Node::neg(b),
            (a, b) if b.is_const(-1.0) => Node::neg(a),
            (Node::Neg(a), b) => Node::neg(Node::mul(*a, b)),
            (a, Node::Neg(b)) => Node::neg(Node::mul(a, *b)),
            (a, b) => Node::Mul(Box::new(a), Box::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(a: Node, b: Node) -> Node {
        match (a, b) {
            (Node::Const(x), Node::Const(y)) if y != 0.0 => Node::Const(x / y),
            (a, b) if b.is_const(1.0) => a,
            (Node::Neg(a), b) => Node::neg(Node::div(*a, b)),
            (a, b) => Node::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Node, n: i32) -> Node {
        match (a, n) {
            (_, 0) => Node::Const(1.0),
            (a, 1) => a,
            (Node::Const(x), n) if x != 0.0 || n > 0 => Node::Const(x.powi(n)),
            (a, n) => Node::Pow(Box::new(a), n),
        }
    }

    pub fn call(func: Func, a: Node) -> Node {
        if let Node::Const(x) = a {
            let folded = eval_node(&Node::Call(func, Box::new(Node::Const(x))), &[], 0.0);
            if let Ok(v) = folded {
                if v.is_finite() {
                    return Node::Const(v);
                }
            }
        }
        Node::Call(func, Box::new(a))
    }
}

fn derive(node: &Node, var: Var) -> Node {
    match node {
        Node::Const(_) => Node::Const(0.0),
        Node::Var(v) => Node::Const(if *v == var { 1.0 } else { 0.0 }),
        Node::Neg(a) => Node::neg(derive(a, var)),
        Node::Add(a, b) => Node::add(derive(a, var), derive(b, var)),
        Node::Sub(a, b) => Node::sub(derive(a, var), derive(b, var)),
        Node::Mul(a, b) => Node::add(
            Node::mul(derive(a, var), (**b).clone()),
            Node::mul((**a).clone(), derive(b, var)),
        ),
        Node::Div(a, b) => {
            let da = derive(a, var);
            let db = derive(b, var);
            let num = Node::sub(Node::mul(da, (**b).clone()), Node::mul((**a).clone(), db));
            Node::div(num, Node::pow((**b).clone(), 2))
        }
        Node::Pow(a, n) => Node::mul(
            Node::mul(Node::Const(f64::from(*n)), Node::pow((**a).clone(), n - 1)),
            derive(a, var),
        ),
        Node::Call(func, a) => {
            let inner = (**a).clone();
            let outer = match func {
                Func::Sin => Node::call(Func::Cos, inner),
                Func::Cos => Node::neg(Node::call(Func::Sin, inner)),
                Func::Exp => Node::call(Func::Exp, inner),
                Func::Sqrt => Node::div(
                    Node::Const(1.0),
                    Node::mul(Node::Const(2.0), Node::call(Func::Sqrt, inner)),
                ),
            };
            Node::mul(outer, derive(a, var))
        }
    }
}

// Printing. Precedence: additive 1, multiplicative 2, unary minus 3,
// power 4, atoms 5.
fn precedence(node: &Node) -> u8 {
    match node {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(_) => 3,
        Node::Const(c) if c.is_sign_negative() => 3,
        Node::Pow(..) => 4,
        _ => 5,
    }
}

fn write_child(node: &Node, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if precedence(node) < min_prec {
        f.write_str("(")?;
        write_node(node, f)?;
        f.write_str(")")
    } else {
        write_node(node, f)
    }
}

fn write_node(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Const(c) => {
            if c.is_sign_negative() {
                write!(f, "-{}", -c)
            } else {
                write!(f, "{c}")
            }
        }
        Node::Var(v) => write!(f, "{v}"),
        Node::Neg(a) => {
            f.write_str("-")?;
            write_child(a, 2, f)
        }
        Node::Add(a, b) => {
            write_child(a, 1, f)?;
            f.write_str(" + ")?;
            write_child(b, 1, f)
        }
        Node::Sub(a, b) => {
            write_child(a, 1, f)?;
            f.write_str(" - ")?;
            write_child(b, 2, f)
        }
        Node::Mul(a, b) => {
            write_child(a, 2, f)?;
            f.write_str("*")?;
            write_child(b, 3, f)
        }
        Node::Div(a, b) => {
            write_child(a, 2, f)?;
            f.write_str("/")?;
            write_child(b, 3, f)
        }
        Node::Pow(a, n) => {
            write_child(a, 5, f)?;
            write!(f, "^{n}")
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(a, f)?;
            f.write_str(")")
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn syntax(&self, message: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, byte: u8) -> bool {
        if self.peek() == Some(byte) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat(b'-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let negative = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.syntax("expected an integer exponent"));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        let value: i32 = digits.parse().map_err(|_| ParseError::Syntax {
            offset: start,
            message: "exponent out of range".to_string(),
        })?;
        Ok(Node::Pow(
            Box::new(base),
            if negative { -value } else { value },
        ))
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.syntax("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.syntax("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if exp_start == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        text.parse::<f64>()
            .map(Node::Const)
            .map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })
    }

    fn identifier(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
        if let Some(func) = Func::from_name(name) {
            if !self.eat(b'(') {
                return Err(self.syntax(&format!("expected `(` after `{name}`")));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.syntax("expected `)`"));
            }
            return Ok(Node::Call(func, Box::new(arg)));
        }
        if name == "pi" {
            return Ok(Node::Const(std::f64::consts::PI));
        }
        parse_var(name, self.dim)
            .map(Node::Var)
            .ok_or_else(|| ParseError::UndeclaredVariable {
                name: name.to_string(),
                offset: start,
                dim: self.dim,
            })
    }
}
