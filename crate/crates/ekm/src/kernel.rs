//! GP kernel expressions: the primitive set, tree representation,
//! evaluation, and the prefix text format.
//!
//! A kernel is a symmetric function `K(x, x')` on pairs of feature vectors.
//! Symmetry is guaranteed by construction: every terminal is itself a
//! symmetric expression of `x` and `x'`, and the function nodes only combine
//! values.

use std::fmt;

use crate::error::EkmError;

/// Upper bound on the magnitude of every node value.
///
/// Chosen so that no arithmetic on clamped operands can overflow `f64`
/// (the worst case is a four-way product, and `1e75^4 = 1e300` is finite).
/// Together with the EXP argument clamp this makes evaluation total: no
/// finite input produces NaN or an infinity.
pub const VALUE_CLAMP: f64 = 1e75;

/// EXP arguments are clamped to this magnitude before exponentiation.
pub const EXP_ARG_CLAMP: f64 = 80.0;

/// Denominators below this magnitude make protected division return 1.
pub const DIV_EPSILON: f64 = 0.001;

#[inline]
fn clamp(v: f64) -> f64 {
    v.clamp(-VALUE_CLAMP, VALUE_CLAMP)
}

/// A single primitive of the kernel language.
///
/// Component indices (`i`, `j`) are 1-based, matching the text format;
/// `Cross(i, j)` always satisfies `j <= i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    /// `a1 + a2`
    Add2,
    /// `a1 + a2 + a3`
    Add3,
    /// `a1 + a2 + a3 + a4`
    Add4,
    /// `a1 - a2`
    Sub,
    /// `a1 * a2`
    Mul2,
    /// `a1 * a2 * a3`
    Mul3,
    /// `a1 * a2 * a3 * a4`
    Mul4,
    /// Protected division: 1 when `|a2| < 0.001`, else `a1 / a2`.
    Div,
    /// `max(a1, a2)`
    Max,
    /// `min(a1, a2)`
    Min,
    /// `exp(a)` with the argument clamped to `[-80, 80]`.
    Exp,
    /// `a^2`
    Pow2,
    /// Component sum `x_i + x'_i`.
    SumAt(usize),
    /// Component product `x_i * x'_i`.
    ProdAt(usize),
    /// Component maximum `max(x_i, x'_i)`.
    MaxAt(usize),
    /// Component minimum `min(x_i, x'_i)`.
    MinAt(usize),
    /// Crossed product `x_i x'_j + x_j x'_i`, with `j <= i`.
    Cross(usize, usize),
    /// Scalar product `<x, x'>`.
    Dot,
    /// Euclidean distance `||x - x'||`.
    Euclid,
    /// Ephemeral constant, fixed at node creation, in `[-1, 1]`.
    Const(f64),
}

impl Primitive {
    /// Number of children a node with this primitive takes.
    pub fn arity(&self) -> usize {
        use Primitive::*;
        match self {
            Add2 | Sub | Mul2 | Div | Max | Min => 2,
            Add3 | Mul3 => 3,
            Add4 | Mul4 => 4,
            Exp | Pow2 => 1,
            SumAt(_) | ProdAt(_) | MaxAt(_) | MinAt(_) | Cross(_, _) | Dot | Euclid
            | Const(_) => 0,
        }
    }

    /// Largest 1-based component index this primitive reads, if any.
    fn component_bound(&self) -> usize {
        use Primitive::*;
        match self {
            SumAt(i) | ProdAt(i) | MaxAt(i) | MinAt(i) => *i,
            Cross(i, _) => *i,
            _ => 0,
        }
    }

    fn token(&self) -> &'static str {
        use Primitive::*;
        match self {
            Add2 => "ADD2",
            Add3 => "ADD3",
            Add4 => "ADD4",
            Sub => "SUB",
            Mul2 => "MUL2",
            Mul3 => "MUL3",
            Mul4 => "MUL4",
            Div => "DIV",
            Max => "MAX",
            Min => "MIN",
            Exp => "EXP",
            Pow2 => "POW2",
            SumAt(_) => "A",
            ProdAt(_) => "M",
            MaxAt(_) => "S",
            MinAt(_) => "I",
            Cross(_, _) => "C",
            Dot => "DOT",
            Euclid => "EUC",
            Const(_) => "E",
        }
    }

    /// Validates index bounds against dimension `d` and the `Const` range.
    pub fn validate(&self, d: usize) -> Result<(), EkmError> {
        use Primitive::*;
        match self {
            SumAt(i) | ProdAt(i) | MaxAt(i) | MinAt(i) => {
                if *i < 1 || *i > d {
                    return Err(EkmError::InvalidInput(format!(
                        "component index {i} out of range [1, {d}]"
                    )));
                }
            }
            Cross(i, j) => {
                if *i < 1 || *i > d || *j < 1 || *j > *i {
                    return Err(EkmError::InvalidInput(format!(
                        "cross indices ({i}, {j}) violate 1 <= j <= i <= {d}"
                    )));
                }
            }
            Const(v) => {
                if !(-1.0..=1.0).contains(v) || v.is_nan() {
                    return Err(EkmError::InvalidInput(format!(
                        "constant {v} outside [-1, 1]"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A node of a kernel expression tree: a primitive plus exactly
/// `primitive.arity()` children.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelNode {
    pub primitive: Primitive,
    pub children: Vec<KernelNode>,
}

impl KernelNode {
    pub fn leaf(primitive: Primitive) -> Self {
        debug_assert_eq!(primitive.arity(), 0);
        KernelNode { primitive, children: Vec::new() }
    }

    pub fn new(primitive: Primitive, children: Vec<KernelNode>) -> Self {
        debug_assert_eq!(primitive.arity(), children.len());
        KernelNode { primitive, children }
    }

    fn size(&self) -> usize {
        1 + self.children.iter().map(KernelNode::size).sum::<usize>()
    }

    fn depth(&self) -> usize {
        1 + self.children.iter().map(KernelNode::depth).max().unwrap_or(0)
    }

    fn component_bound(&self) -> usize {
        self.children
            .iter()
            .map(KernelNode::component_bound)
            .max()
            .unwrap_or(0)
            .max(self.primitive.component_bound())
    }

    fn check_arities(&self) -> bool {
        self.primitive.arity() == self.children.len()
            && self.children.iter().all(KernelNode::check_arities)
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        use Primitive::*;
        match &self.primitive {
            Add2 => clamp(self.children[0].eval(x, y) + self.children[1].eval(x, y)),
            Add3 => clamp(
                self.children[0].eval(x, y)
                    + self.children[1].eval(x, y)
                    + self.children[2].eval(x, y),
            ),
            Add4 => clamp(
                self.children[0].eval(x, y)
                    + self.children[1].eval(x, y)
                    + self.children[2].eval(x, y)
                    + self.children[3].eval(x, y),
            ),
            Sub => clamp(self.children[0].eval(x, y) - self.children[1].eval(x, y)),
            Mul2 => clamp(self.children[0].eval(x, y) * self.children[1].eval(x, y)),
            Mul3 => clamp(
                self.children[0].eval(x, y)
                    * self.children[1].eval(x, y)
                    * self.children[2].eval(x, y),
            ),
            Mul4 => clamp(
                self.children[0].eval(x, y)
                    * self.children[1].eval(x, y)
                    * self.children[2].eval(x, y)
                    * self.children[3].eval(x, y),
            ),
            Div => {
                let num = self.children[0].eval(x, y);
                let den = self.children[1].eval(x, y);
                if den.abs() < DIV_EPSILON {
                    1.0
                } else {
                    clamp(num / den)
                }
            }
            Max => self.children[0].eval(x, y).max(self.children[1].eval(x, y)),
            Min => self.children[0].eval(x, y).min(self.children[1].eval(x, y)),
            Exp => {
                let a = self.children[0].eval(x, y).clamp(-EXP_ARG_CLAMP, EXP_ARG_CLAMP);
                a.exp()
            }
            Pow2 => {
                let a = self.children[0].eval(x, y);
                clamp(a * a)
            }
            SumAt(i) => clamp(x[i - 1] + y[i - 1]),
            ProdAt(i) => clamp(x[i - 1] * y[i - 1]),
            MaxAt(i) => x[i - 1].max(y[i - 1]),
            MinAt(i) => x[i - 1].min(y[i - 1]),
            Cross(i, j) => clamp(x[i - 1] * y[j - 1] + x[j - 1] * y[i - 1]),
            Dot => clamp(x.iter().zip(y).map(|(a, b)| a * b).sum()),
            Euclid => {
                let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                clamp(s.sqrt())
            }
            Const(v) => *v,
        }
    }
}

/// An immutable, well-formed kernel expression tree.
///
/// Evaluation is a pure function of `(expr, x, x')`; a `KernelExpr` can be
/// shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelExpr {
    root: KernelNode,
    min_dim: usize,
}

impl KernelExpr {
    /// Wraps a root node, checking that every node's child count matches
    /// its primitive's arity.
    pub fn new(root: KernelNode) -> Result<Self, EkmError> {
        if !root.check_arities() {
            return Err(EkmError::InvalidInput(
                "malformed tree: child count does not match arity".into(),
            ));
        }
        Ok(Self::from_checked(root))
    }

    /// Wraps a node already known to be well-formed (all construction in
    /// this crate goes through arity-respecting builders).
    pub(crate) fn from_checked(root: KernelNode) -> Self {
        let min_dim = root.component_bound().max(1);
        KernelExpr { root, min_dim }
    }

    pub fn root(&self) -> &KernelNode {
        &self.root
    }

    /// Node count.
    pub fn size(&self) -> usize {
        self.root.size()
    }

    /// Maximum root-to-leaf edge count plus one (a lone terminal has depth 1).
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Smallest vector dimension this expression can be evaluated on.
    pub fn min_dim(&self) -> usize {
        self.min_dim
    }

    /// Evaluates `K(x, y)`.
    ///
    /// The result is always a finite real: protected division, EXP argument
    /// clamping, and a per-node magnitude clamp keep the recursion total.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, EkmError> {
        if x.len() != y.len() || x.len() < self.min_dim {
            return Err(EkmError::InvalidInput(format!(
                "dimension mismatch: |x| = {}, |y| = {}, kernel needs >= {}",
                x.len(),
                y.len(),
                self.min_dim
            )));
        }
        Ok(self.root.eval(x, y))
    }

    /// Evaluation without the dimension check, for hot loops that have
    /// already validated their inputs against `min_dim`.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.root.eval(x, y)
    }

    /// Canonical prefix text form; round-trips through [`parse`].
    pub fn format(&self) -> String {
        let mut out = String::new();
        format_node(&self.root, &mut out);
        out
    }
}

impl fmt::Display for KernelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format())
    }
}

fn format_node(node: &KernelNode, out: &mut String) {
    out.push('(');
    out.push_str(node.primitive.token());
    match node.primitive {
        Primitive::SumAt(i)
        | Primitive::ProdAt(i)
        | Primitive::MaxAt(i)
        | Primitive::MinAt(i) => {
            out.push(' ');
            out.push_str(&i.to_string());
        }
        Primitive::Cross(i, j) => {
            out.push(' ');
            out.push_str(&i.to_string());
            out.push(' ');
            out.push_str(&j.to_string());
        }
        Primitive::Const(v) => {
            out.push(' ');
            // `{}` on f64 prints the shortest representation that parses
            // back to the same bits.
            out.push_str(&v.to_string());
        }
        _ => {}
    }
    for child in &node.children {
        out.push(' ');
        format_node(child, out);
    }
    out.push(')');
}

/// Parses the prefix text form produced by [`KernelExpr::format`].
///
/// `d` is the feature-space dimension; component indices are checked
/// against it. Errors carry the byte offset of the offending token.
pub fn parse(text: &str, d: usize) -> Result<KernelExpr, EkmError> {
    let mut parser = Parser { text, pos: 0, d };
    let root = parser.parse_node()?;
    parser.skip_ws();
    if parser.pos != text.len() {
        return Err(parser.error("trailing input after expression"));
    }
    KernelExpr::new(root)
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
    d: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: impl Into<String>) -> EkmError {
        EkmError::KernelParse { offset: self.pos, message: msg.into() }
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
    }

    fn expect(&mut self, c: char) -> Result<(), EkmError> {
        self.skip_ws();
        if self.text[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}'")))
        }
    }

    fn next_atom(&mut self) -> Result<&'a str, EkmError> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let end = rest
            .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
            .unwrap_or(rest.len());
        if end == 0 {
            return Err(self.error("expected a token"));
        }
        let atom = &rest[..end];
        self.pos += end;
        Ok(atom)
    }

    fn parse_index(&mut self) -> Result<usize, EkmError> {
        let atom = self.next_atom()?;
        atom.parse::<usize>()
            .map_err(|_| self.error(format!("expected a component index, got '{atom}'")))
    }

    fn parse_node(&mut self) -> Result<KernelNode, EkmError> {
        self.expect('(')?;
        let name = self.next_atom()?;
        let primitive = match name {
            "ADD2" => Primitive::Add2,
            "ADD3" => Primitive::Add3,
            "ADD4" => Primitive::Add4,
            "SUB" => Primitive::Sub,
            "MUL2" => Primitive::Mul2,
            "MUL3" => Primitive::Mul3,
            "MUL4" => Primitive::Mul4,
            "DIV" => Primitive::Div,
            "MAX" => Primitive::Max,
            "MIN" => Primitive::Min,
            "EXP" => Primitive::Exp,
            "POW2" => Primitive::Pow2,
            "A" => Primitive::SumAt(self.parse_index()?),
            "M" => Primitive::ProdAt(self.parse_index()?),
            "S" => Primitive::MaxAt(self.parse_index()?),
            "I" => Primitive::MinAt(self.parse_index()?),
            "C" => {
                let i = self.parse_index()?;
                let j = self.parse_index()?;
                Primitive::Cross(i, j)
            }
            "DOT" => Primitive::Dot,
            "EUC" => Primitive::Euclid,
            "E" => {
                let atom = self.next_atom()?;
                let v = atom.parse::<f64>().map_err(|_| {
                    self.error(format!("expected a constant, got '{atom}'"))
                })?;
                Primitive::Const(v)
            }
            other => return Err(self.error(format!("unknown primitive '{other}'"))),
        };
        primitive
            .validate(self.d)
            .map_err(|e| self.error(e.to_string()))?;

        let mut children = Vec::with_capacity(primitive.arity());
        for _ in 0..primitive.arity() {
            children.push(self.parse_node()?);
        }
        self.skip_ws();
        if self.text[self.pos..].starts_with(')') {
            self.pos += 1;
            Ok(KernelNode { primitive, children })
        } else if self.text[self.pos..].starts_with('(') {
            Err(self.error(format!(
                "too many arguments for {name} (arity {})",
                primitive.arity()
            )))
        } else {
            Err(self.error("expected ')'"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(p: Primitive) -> KernelNode {
        KernelNode::leaf(p)
    }

    #[test]
    fn eval_dot() {
        let k = KernelExpr::new(leaf(Primitive::Dot)).unwrap();
        assert_eq!(k.eval(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
    }

    #[test]
    fn protected_division_near_zero() {
        let k = KernelExpr::new(KernelNode::new(
            Primitive::Div,
            vec![leaf(Primitive::Const(1.0)), leaf(Primitive::Const(0.0005))],
        ))
        .unwrap();
        assert_eq!(k.eval(&[0.0], &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn eval_cross_term() {
        let k = KernelExpr::new(leaf(Primitive::Cross(1, 2))).unwrap();
        // x_1 x'_2 + x_2 x'_1 = 1*4 + 2*3 = 10
        assert_eq!(k.eval(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 10.0);
    }

    #[test]
    fn eval_euclidean() {
        let k = KernelExpr::new(leaf(Primitive::Euclid)).unwrap();
        assert_eq!(k.eval(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn eval_dimension_mismatch() {
        let k = KernelExpr::new(leaf(Primitive::SumAt(3))).unwrap();
        assert!(k.eval(&[1.0, 2.0], &[3.0, 4.0]).is_err());
        assert!(k.eval(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn exp_argument_clamped() {
        let big = KernelNode::new(
            Primitive::Exp,
            vec![KernelNode::new(Primitive::Exp, vec![leaf(Primitive::Dot)])],
        );
        let k = KernelExpr::new(big).unwrap();
        let v = k.eval(&[100.0], &[100.0]).unwrap();
        assert!(v.is_finite());
        assert_eq!(v, EXP_ARG_CLAMP.exp());
    }

    #[test]
    fn squaring_chain_stays_finite() {
        let mut node = leaf(Primitive::Dot);
        for _ in 0..40 {
            node = KernelNode::new(Primitive::Pow2, vec![node]);
        }
        let k = KernelExpr::new(node).unwrap();
        let v = k.eval(&[10.0, 10.0], &[10.0, 10.0]).unwrap();
        assert!(v.is_finite());
        assert_eq!(v, VALUE_CLAMP);
    }

    #[test]
    fn format_examples() {
        let dot = KernelExpr::new(leaf(Primitive::Dot)).unwrap();
        assert_eq!(dot.format(), "(DOT)");

        let add = KernelExpr::new(KernelNode::new(
            Primitive::Add2,
            vec![leaf(Primitive::Dot), leaf(Primitive::Euclid)],
        ))
        .unwrap();
        assert_eq!(add.format(), "(ADD2 (DOT) (EUC))");

        let e = KernelExpr::new(leaf(Primitive::Const(0.25))).unwrap();
        assert_eq!(e.format(), "(E 0.25)");
    }

    #[test]
    fn parse_examples() {
        let k = parse("(MUL2 (A 1) (A 1))", 1).unwrap();
        assert_eq!(k.size(), 3);
        assert_eq!(k.format(), "(MUL2 (A 1) (A 1))");

        let c = parse("(C 2 1)", 3).unwrap();
        assert_eq!(c.root().primitive, Primitive::Cross(2, 1));

        assert!(matches!(
            parse("(ADD2 (DOT))", 2),
            Err(EkmError::KernelParse { .. })
        ));
        // arity overflow is also rejected
        assert!(parse("(EXP (DOT) (DOT))", 2).is_err());
        // indices outside [1, d]
        assert!(parse("(A 3)", 2).is_err());
        assert!(parse("(A 0)", 2).is_err());
        assert!(parse("(C 1 2)", 3).is_err());
        // constants outside [-1, 1]
        assert!(parse("(E 1.5)", 1).is_err());
        // junk
        assert!(parse("(DOT) (DOT)", 1).is_err());
        assert!(parse("(BOGUS)", 1).is_err());
    }

    #[test]
    fn parse_whitespace_normalization() {
        let k = parse("  ( ADD2\n(DOT)\t( EUC ) )", 2).unwrap();
        assert_eq!(k.format(), "(ADD2 (DOT) (EUC))");
    }

    #[test]
    fn size_and_depth() {
        let dot = parse("(DOT)", 1).unwrap();
        assert_eq!((dot.size(), dot.depth()), (1, 1));

        let add = parse("(ADD2 (DOT) (EUC))", 1).unwrap();
        assert_eq!((add.size(), add.depth()), (3, 2));

        let chain = parse("(EXP (POW2 (EUC)))", 1).unwrap();
        assert_eq!((chain.size(), chain.depth()), (3, 3));
    }

    #[test]
    fn constant_round_trip_precision() {
        let v = 0.123456789012345678_f64;
        let k = KernelExpr::new(leaf(Primitive::Const(v))).unwrap();
        let back = parse(&k.format(), 1).unwrap();
        match back.root().primitive {
            Primitive::Const(u) => assert_eq!(u.to_bits(), v.to_bits()),
            _ => panic!("expected constant"),
        }
    }
}
