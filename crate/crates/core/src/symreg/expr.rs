use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::types::Regressor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Sin,
    Tanh,
    Square,
    Cube,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 4] = [UnaryOp::Sin, UnaryOp::Tanh, UnaryOp::Square, UnaryOp::Cube];

    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            UnaryOp::Sin => v.sin(),
            UnaryOp::Tanh => v.tanh(),
            UnaryOp::Square => v * v,
            UnaryOp::Cube => v * v * v,
        }
    }

    fn token(self) -> &'static str {
        match self {
            UnaryOp::Sin => "sin",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Square => "square",
            UnaryOp::Cube => "cube",
        }
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 3] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul];

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
        }
    }

    fn token(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Var(u16),
    Const(f64),
    Unary(UnaryOp),
    Binary(BinaryOp),
}

impl Node {
    pub fn arity(self) -> usize {
        match self {
            Node::Var(_) | Node::Const(_) => 0,
            Node::Unary(_) => 1,
            Node::Binary(_) => 2,
        }
    }

    pub fn is_operator(self) -> bool {
        self.arity() > 0
    }
}

/// Expression tree stored in prefix order. Every subtree occupies a
/// contiguous slice of `nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicExpression {
    nodes: Vec<Node>,
    n_vars: usize,
}

/// Structural limits every stored expression satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityLimits {
    pub max_complexity: usize,
    pub max_operator_nesting: usize,
}

impl Default for ComplexityLimits {
    fn default() -> Self {
        Self {
            max_complexity: 90,
            max_operator_nesting: 4,
        }
    }
}

impl ComplexityLimits {
    /// Node count within the cap, and for every operator node the subtree
    /// rooted there nests at most `max_operator_nesting` operators along any
    /// root-to-leaf path. The second condition is equivalent to bounding the
    /// operator nesting of the whole tree, since the root's subtree contains
    /// every path of every other subtree.
    pub fn admits(&self, expr: &SymbolicExpression) -> bool {
        expr.complexity() <= self.max_complexity
            && expr.operator_nesting() <= self.max_operator_nesting
    }
}

impl SymbolicExpression {
    /// Validates arity structure and variable bounds.
    pub fn new(nodes: Vec<Node>, n_vars: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Empty("expression"));
        }
        let mut need = 1usize;
        for (i, node) in nodes.iter().enumerate() {
            if need == 0 {
                return Err(Error::Parse(format!("trailing nodes after position {i}")));
            }
            if let Node::Var(v) = node {
                if *v as usize >= n_vars {
                    return Err(Error::InvalidArgument(format!(
                        "variable x{v} unbound for {n_vars} inputs"
                    )));
                }
            }
            if let Node::Const(c) = node {
                if !c.is_finite() {
                    return Err(Error::NonFinite("expression constant"));
                }
            }
            need = need - 1 + node.arity();
        }
        if need != 0 {
            return Err(Error::Parse("incomplete expression".into()));
        }
        Ok(Self { nodes, n_vars })
    }

    pub(crate) fn from_nodes_unchecked(nodes: Vec<Node>, n_vars: usize) -> Self {
        debug_assert!(Self::new(nodes.clone(), n_vars).is_ok());
        Self { nodes, n_vars }
    }

    pub fn constant(value: f64, n_vars: usize) -> Self {
        Self::from_nodes_unchecked(vec![Node::Const(value)], n_vars)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Total node count.
    pub fn complexity(&self) -> usize {
        self.nodes.len()
    }

    /// Largest number of operator nodes on any root-to-leaf path.
    pub fn operator_nesting(&self) -> usize {
        let mut stack: Vec<usize> = Vec::with_capacity(self.nodes.len());
        for node in self.nodes.iter().rev() {
            let depth = match node.arity() {
                0 => 0,
                1 => 1 + stack.pop().expect("well-formed"),
                _ => {
                    let a = stack.pop().expect("well-formed");
                    let b = stack.pop().expect("well-formed");
                    1 + a.max(b)
                }
            };
            stack.push(depth);
        }
        stack.pop().unwrap_or(0)
    }

    /// End (exclusive) of the subtree starting at `start`.
    pub fn subtree_end(&self, start: usize) -> usize {
        subtree_end(&self.nodes, start)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n_vars, x.len())?;
        Ok(self.evaluate_unchecked(x))
    }

    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        let mut stack: Vec<f64> = Vec::with_capacity(8);
        for node in self.nodes.iter().rev() {
            let v = match *node {
                Node::Var(i) => x[i as usize],
                Node::Const(c) => c,
                Node::Unary(op) => op.apply(stack.pop().expect("well-formed")),
                Node::Binary(op) => {
                    let a = stack.pop().expect("well-formed");
                    let b = stack.pop().expect("well-formed");
                    op.apply(a, b)
                }
            };
            stack.push(v);
        }
        stack.pop().expect("well-formed")
    }

    /// Evaluates on column-major inputs (`columns[var][row]`), writing one
    /// value per row into `out`.
    pub fn evaluate_columns(&self, columns: &[Vec<f64>], n_rows: usize, out: &mut Vec<f64>) {
        let mut stack: Vec<Vec<f64>> = Vec::with_capacity(8);
        let mut pool: Vec<Vec<f64>> = Vec::new();
        for node in self.nodes.iter().rev() {
            let mut buf = pool.pop().unwrap_or_default();
            buf.clear();
            match *node {
                Node::Var(i) => buf.extend_from_slice(&columns[i as usize][..n_rows]),
                Node::Const(c) => buf.resize(n_rows, c),
                Node::Unary(op) => {
                    let mut a = stack.pop().expect("well-formed");
                    a.iter_mut().for_each(|v| *v = op.apply(*v));
                    pool.push(buf);
                    buf = a;
                }
                Node::Binary(op) => {
                    let mut a = stack.pop().expect("well-formed");
                    let b = stack.pop().expect("well-formed");
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x = op.apply(*x, *y));
                    pool.push(b);
                    pool.push(buf);
                    buf = a;
                }
            }
            stack.push(buf);
        }
        *out = stack.pop().expect("well-formed");
    }

    /// Replaces every operator whose operands are all constants by the
    /// computed constant.
    pub fn fold_constants(&self) -> Self {
        let mut stack: Vec<Vec<Node>> = Vec::with_capacity(self.nodes.len());
        for node in self.nodes.iter().rev() {
            let folded = match *node {
                Node::Var(_) | Node::Const(_) => vec![*node],
                Node::Unary(op) => {
                    let a = stack.pop().expect("well-formed");
                    match a.as_slice() {
                        [Node::Const(c)] if op.apply(*c).is_finite() => {
                            vec![Node::Const(op.apply(*c))]
                        }
                        _ => {
                            let mut v = vec![*node];
                            v.extend(a);
                            v
                        }
                    }
                }
                Node::Binary(op) => {
                    let a = stack.pop().expect("well-formed");
                    let b = stack.pop().expect("well-formed");
                    match (a.as_slice(), b.as_slice()) {
                        ([Node::Const(x)], [Node::Const(y)]) if op.apply(*x, *y).is_finite() => {
                            vec![Node::Const(op.apply(*x, *y))]
                        }
                        _ => {
                            let mut v = vec![*node];
                            v.extend(a);
                            v.extend(b);
                            v
                        }
                    }
                }
            };
            stack.push(folded);
        }
        Self::from_nodes_unchecked(stack.pop().expect("well-formed"), self.n_vars)
    }

    /// Space-separated prefix tokens, e.g. `add mul x0 x1 sin x2`.
    pub fn to_prefix(&self) -> String {
        self.nodes
            .iter()
            .map(|n| match *n {
                Node::Var(i) => format!("x{i}"),
                Node::Const(c) => format!("{c:?}"),
                Node::Unary(op) => op.token().to_string(),
                Node::Binary(op) => op.token().to_string(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse_prefix(text: &str, n_vars: usize) -> Result<Self> {
        let nodes = text
            .split_whitespace()
            .map(|tok| {
                Ok(match tok {
                    "sin" => Node::Unary(UnaryOp::Sin),
                    "tanh" => Node::Unary(UnaryOp::Tanh),
                    "square" => Node::Unary(UnaryOp::Square),
                    "cube" => Node::Unary(UnaryOp::Cube),
                    "add" => Node::Binary(BinaryOp::Add),
                    "sub" => Node::Binary(BinaryOp::Sub),
                    "mul" => Node::Binary(BinaryOp::Mul),
                    t if t.starts_with('x') => Node::Var(
                        t[1..]
                            .parse()
                            .map_err(|_| Error::Parse(format!("bad variable `{t}`")))?,
                    ),
                    t => Node::Const(
                        f64::from_str(t).map_err(|_| Error::Parse(format!("bad token `{t}`")))?,
                    ),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(nodes, n_vars)
    }

    /// Infix rendering; `names` replaces `x{i}` when given.
    pub fn to_infix(&self, names: Option<&[String]>) -> String {
        fn render(
            nodes: &[Node],
            pos: &mut usize,
            names: Option<&[String]>,
        ) -> String {
            let node = nodes[*pos];
            *pos += 1;
            match node {
                Node::Var(i) => names
                    .and_then(|n| n.get(i as usize).cloned())
                    .unwrap_or_else(|| format!("x{i}")),
                Node::Const(c) => format!("{c:.6}"),
                Node::Unary(op) => {
                    let a = render(nodes, pos, names);
                    match op {
                        UnaryOp::Square => format!("({a})^2"),
                        UnaryOp::Cube => format!("({a})^3"),
                        _ => format!("{}({a})", op.token()),
                    }
                }
                Node::Binary(op) => {
                    let a = render(nodes, pos, names);
                    let b = render(nodes, pos, names);
                    format!("({a} {} {b})", op.symbol())
                }
            }
        }
        let mut pos = 0;
        render(&self.nodes, &mut pos, names)
    }
}

pub(crate) fn subtree_end(nodes: &[Node], start: usize) -> usize {
    let mut need = 1usize;
    let mut i = start;
    while need > 0 {
        need = need - 1 + nodes[i].arity();
        i += 1;
    }
    i
}

impl fmt::Display for SymbolicExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_infix(None))
    }
}

impl Regressor for SymbolicExpression {
    fn n_features(&self) -> usize {
        self.n_vars
    }

    fn predict_row(&self, x: &[f64]) -> Result<f64> {
        self.evaluate(x)
    }
}

#[derive(Serialize, Deserialize)]
struct ExpressionRepr {
    n_vars: usize,
    prefix: String,
}

impl Serialize for SymbolicExpression {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ExpressionRepr {
            n_vars: self.n_vars,
            prefix: self.to_prefix(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymbolicExpression {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = ExpressionRepr::deserialize(d)?;
        Self::parse_prefix(&repr.prefix, repr.n_vars).map_err(serde::de::Error::custom)
    }
}
