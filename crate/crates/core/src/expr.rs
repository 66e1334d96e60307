//! Symbolic solution-update rules as typed binary expression trees.
//!
//! A rule is a preorder-stored tree whose internal nodes are `{+, -, *}` and
//! whose leaves are population operands (incumbent solution, best/worst so
//! far, per-individual best, velocity, random peer) or a constant
//! `omega * 10^eps`. Trees print to and parse from a prefix text form such as
//! `(+ xbest (* (c 0.5 0) (- xr xr)))`, which is the DE/best/1 rule with
//! F = 0.5.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of legal `omega` values: -1.0, -0.9, ..., 0.9, 1.0.
pub const N_OMEGA: usize = 21;
/// Number of legal `eps` values: 0 and -1.
pub const N_EPS: usize = 2;
/// Structural token vocabulary size (constant parameters factored out).
pub const VOCAB_SIZE: usize = 10;
/// Minimal number of node levels (a bare terminal is not a rule).
pub const MIN_HEIGHT: usize = 2;
/// Maximal number of node levels.
pub const MAX_HEIGHT: usize = 5;
/// Maximal node count: a complete binary tree of height 5.
pub const MAX_NODES: usize = (1 << MAX_HEIGHT) - 1;
/// Length of the fixed-size tree embedding: one vocabulary one-hot per
/// preorder slot.
pub const EMB_DIM: usize = MAX_NODES * VOCAB_SIZE;

/// Structural token: the policy's action vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Token {
    Add,
    Sub,
    Mul,
    X,
    BestSoFar,
    WorstSoFar,
    PersonalBest,
    Velocity,
    RandomPeer,
    Const,
}

impl Token {
    pub const ALL: [Token; VOCAB_SIZE] = [
        Token::Add,
        Token::Sub,
        Token::Mul,
        Token::X,
        Token::BestSoFar,
        Token::WorstSoFar,
        Token::PersonalBest,
        Token::Velocity,
        Token::RandomPeer,
        Token::Const,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<Token> {
        Self::ALL.get(i).copied()
    }

    pub fn arity(self) -> usize {
        match self {
            Token::Add | Token::Sub | Token::Mul => 2,
            _ => 0,
        }
    }

    pub fn is_operator(self) -> bool {
        self.arity() == 2
    }
}

/// One tree node. Operators carry two children (implicit in preorder),
/// terminals none; `Const` carries its two categorical parameter indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Add,
    Sub,
    Mul,
    X,
    BestSoFar,
    WorstSoFar,
    PersonalBest,
    Velocity,
    RandomPeer,
    Const { omega_idx: u8, eps_idx: u8 },
}

impl NodeKind {
    pub fn token(self) -> Token {
        match self {
            NodeKind::Add => Token::Add,
            NodeKind::Sub => Token::Sub,
            NodeKind::Mul => Token::Mul,
            NodeKind::X => Token::X,
            NodeKind::BestSoFar => Token::BestSoFar,
            NodeKind::WorstSoFar => Token::WorstSoFar,
            NodeKind::PersonalBest => Token::PersonalBest,
            NodeKind::Velocity => Token::Velocity,
            NodeKind::RandomPeer => Token::RandomPeer,
            NodeKind::Const { .. } => Token::Const,
        }
    }

    pub fn arity(self) -> usize {
        self.token().arity()
    }
}

/// The `omega` value encoded by an index in `0..N_OMEGA`.
pub fn omega_value(idx: usize) -> f64 {
    (idx as i32 - 10) as f64 / 10.0
}

/// The `eps` exponent encoded by an index in `0..N_EPS`.
pub fn eps_value(idx: usize) -> i32 {
    match idx {
        0 => 0,
        _ => -1,
    }
}

/// Decode a constant: `omega * 10^eps`.
pub fn decode_constant(omega_idx: usize, eps_idx: usize) -> Result<f64> {
    if omega_idx >= N_OMEGA || eps_idx >= N_EPS {
        return Err(Error::contract(format!(
            "constant index out of range: omega={omega_idx}, eps={eps_idx}"
        )));
    }
    Ok(omega_value(omega_idx) * 10f64.powi(eps_value(eps_idx)))
}

/// A solution-update rule stored as a preorder node list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExprTree {
    nodes: Vec<NodeKind>,
}

impl ExprTree {
    /// Wrap a preorder node list without validation.
    pub fn from_preorder(nodes: Vec<NodeKind>) -> Self {
        ExprTree { nodes }
    }

    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn tokens(&self) -> Vec<Token> {
        self.nodes.iter().map(|n| n.token()).collect()
    }

    /// Number of node levels (root is level 1), or `None` when the preorder
    /// list is not a single complete tree.
    pub fn height(&self) -> Option<usize> {
        fn walk(nodes: &[NodeKind], cursor: usize) -> Option<(usize, usize)> {
            let node = nodes.get(cursor)?;
            match node.arity() {
                0 => Some((cursor + 1, 1)),
                _ => {
                    let (after_left, hl) = walk(nodes, cursor + 1)?;
                    let (after_right, hr) = walk(nodes, after_left)?;
                    Some((after_right, 1 + hl.max(hr)))
                }
            }
        }
        let (end, h) = walk(&self.nodes, 0)?;
        (end == self.nodes.len()).then_some(h)
    }

    /// True iff arity, height-bound, completeness, and constant-index
    /// invariants all hold.
    pub fn validate(&self) -> bool {
        if self.nodes.len() > MAX_NODES {
            return false;
        }
        for n in &self.nodes {
            if let NodeKind::Const { omega_idx, eps_idx } = n {
                if *omega_idx as usize >= N_OMEGA || *eps_idx as usize >= N_EPS {
                    return false;
                }
            }
        }
        matches!(self.height(), Some(h) if (MIN_HEIGHT..=MAX_HEIGHT).contains(&h))
    }

    /// Prefix-notation text form, e.g. `(+ xbest (* (c 0.5 -1) (- xr xr)))`.
    pub fn to_prefix(&self) -> String {
        fn emit(nodes: &[NodeKind], cursor: usize, out: &mut String) -> usize {
            match nodes[cursor] {
                NodeKind::Add | NodeKind::Sub | NodeKind::Mul => {
                    let op = match nodes[cursor] {
                        NodeKind::Add => '+',
                        NodeKind::Sub => '-',
                        _ => '*',
                    };
                    out.push('(');
                    out.push(op);
                    out.push(' ');
                    let after_left = emit(nodes, cursor + 1, out);
                    out.push(' ');
                    let after_right = emit(nodes, after_left, out);
                    out.push(')');
                    after_right
                }
                NodeKind::X => {
                    out.push('x');
                    cursor + 1
                }
                NodeKind::BestSoFar => {
                    out.push_str("xbest");
                    cursor + 1
                }
                NodeKind::WorstSoFar => {
                    out.push_str("xworst");
                    cursor + 1
                }
                NodeKind::PersonalBest => {
                    out.push_str("xpb");
                    cursor + 1
                }
                NodeKind::Velocity => {
                    out.push_str("dx");
                    cursor + 1
                }
                NodeKind::RandomPeer => {
                    out.push_str("xr");
                    cursor + 1
                }
                NodeKind::Const { omega_idx, eps_idx } => {
                    out.push_str(&format!(
                        "(c {:.1} {})",
                        omega_value(omega_idx as usize),
                        eps_value(eps_idx as usize)
                    ));
                    cursor + 1
                }
            }
        }
        let mut out = String::new();
        if self.nodes.is_empty() {
            return out;
        }
        emit(&self.nodes, 0, &mut out);
        out
    }

    /// Parse the prefix text form. Inverse of [`ExprTree::to_prefix`].
    pub fn parse(text: &str) -> Result<ExprTree> {
        let mut toks = Vec::new();
        let mut cur = String::new();
        for ch in text.chars() {
            match ch {
                '(' | ')' => {
                    if !cur.is_empty() {
                        toks.push(std::mem::take(&mut cur));
                    }
                    toks.push(ch.to_string());
                }
                c if c.is_whitespace() => {
                    if !cur.is_empty() {
                        toks.push(std::mem::take(&mut cur));
                    }
                }
                c => cur.push(c),
            }
        }
        if !cur.is_empty() {
            toks.push(cur);
        }

        fn parse_omega(s: &str) -> Result<u8> {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Parse(format!("bad omega `{s}`")))?;
            let idx = ((v + 1.0) * 10.0).round() as i64;
            if !(0..N_OMEGA as i64).contains(&idx) || (omega_value(idx as usize) - v).abs() > 1e-9 {
                return Err(Error::Parse(format!("omega `{s}` not on the legal grid")));
            }
            Ok(idx as u8)
        }

        fn parse_eps(s: &str) -> Result<u8> {
            match s {
                "0" => Ok(0),
                "-1" => Ok(1),
                _ => Err(Error::Parse(format!("bad eps `{s}`"))),
            }
        }

        fn node(toks: &[String], pos: usize, out: &mut Vec<NodeKind>) -> Result<usize> {
            let tok = toks
                .get(pos)
                .ok_or_else(|| Error::Parse("unexpected end of input".into()))?;
            match tok.as_str() {
                "(" => {
                    let head = toks
                        .get(pos + 1)
                        .ok_or_else(|| Error::Parse("unexpected end of input".into()))?;
                    match head.as_str() {
                        "+" | "-" | "*" => {
                            out.push(match head.as_str() {
                                "+" => NodeKind::Add,
                                "-" => NodeKind::Sub,
                                _ => NodeKind::Mul,
                            });
                            let p = node(toks, pos + 2, out)?;
                            let p = node(toks, p, out)?;
                            if toks.get(p).map(String::as_str) != Some(")") {
                                return Err(Error::Parse("expected `)`".into()));
                            }
                            Ok(p + 1)
                        }
                        "c" => {
                            let omega = toks
                                .get(pos + 2)
                                .ok_or_else(|| Error::Parse("missing omega".into()))?;
                            let eps = toks
                                .get(pos + 3)
                                .ok_or_else(|| Error::Parse("missing eps".into()))?;
                            out.push(NodeKind::Const {
                                omega_idx: parse_omega(omega)?,
                                eps_idx: parse_eps(eps)?,
                            });
                            if toks.get(pos + 4).map(String::as_str) != Some(")") {
                                return Err(Error::Parse("expected `)` after constant".into()));
                            }
                            Ok(pos + 5)
                        }
                        other => Err(Error::Parse(format!("unknown head `{other}`"))),
                    }
                }
                "x" => {
                    out.push(NodeKind::X);
                    Ok(pos + 1)
                }
                "xbest" => {
                    out.push(NodeKind::BestSoFar);
                    Ok(pos + 1)
                }
                "xworst" => {
                    out.push(NodeKind::WorstSoFar);
                    Ok(pos + 1)
                }
                "xpb" => {
                    out.push(NodeKind::PersonalBest);
                    Ok(pos + 1)
                }
                "dx" => {
                    out.push(NodeKind::Velocity);
                    Ok(pos + 1)
                }
                "xr" => {
                    out.push(NodeKind::RandomPeer);
                    Ok(pos + 1)
                }
                other => Err(Error::Parse(format!("unknown token `{other}`"))),
            }
        }

        let mut nodes = Vec::new();
        let end = node(&toks, 0, &mut nodes)?;
        if end != toks.len() {
            return Err(Error::Parse("trailing input after tree".into()));
        }
        Ok(ExprTree::from_preorder(nodes))
    }
}

/// Read-only view of the population data a rule can reference.
#[derive(Clone, Copy)]
pub struct PopulationView<'a> {
    pub positions: ArrayView2<'a, f64>,
    pub personal_bests: ArrayView2<'a, f64>,
    pub velocities: ArrayView2<'a, f64>,
    pub best_so_far: ArrayView1<'a, f64>,
    pub worst_so_far: ArrayView1<'a, f64>,
}

impl<'a> PopulationView<'a> {
    pub fn pop_size(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }
}

/// Evaluate `tree` for individual `individual` with peer indices supplied by
/// `peers`. Each `xr` node calls `peers` once, in preorder; with the draws
/// fixed this is a pure function.
pub fn evaluate_with_peers(
    tree: &ExprTree,
    pop: &PopulationView<'_>,
    individual: usize,
    peers: &mut dyn FnMut() -> usize,
) -> Result<Array1<f64>> {
    if !tree.validate() {
        return Err(Error::contract("evaluate called with an invalid tree"));
    }
    if pop.pop_size() < 2 {
        return Err(Error::contract("population must hold at least 2 individuals"));
    }
    let dim = pop.dim();

    fn eval(
        nodes: &[NodeKind],
        cursor: usize,
        pop: &PopulationView<'_>,
        i: usize,
        dim: usize,
        peers: &mut dyn FnMut() -> usize,
    ) -> (usize, Array1<f64>) {
        match nodes[cursor] {
            NodeKind::Add | NodeKind::Sub | NodeKind::Mul => {
                let (after_left, l) = eval(nodes, cursor + 1, pop, i, dim, peers);
                let (after_right, r) = eval(nodes, after_left, pop, i, dim, peers);
                let v = match nodes[cursor] {
                    NodeKind::Add => l + r,
                    NodeKind::Sub => l - r,
                    _ => l * r,
                };
                (after_right, v)
            }
            NodeKind::X => (cursor + 1, pop.positions.row(i).to_owned()),
            NodeKind::BestSoFar => (cursor + 1, pop.best_so_far.to_owned()),
            NodeKind::WorstSoFar => (cursor + 1, pop.worst_so_far.to_owned()),
            NodeKind::PersonalBest => (cursor + 1, pop.personal_bests.row(i).to_owned()),
            NodeKind::Velocity => (cursor + 1, pop.velocities.row(i).to_owned()),
            NodeKind::RandomPeer => {
                let p = peers();
                (cursor + 1, pop.positions.row(p).to_owned())
            }
            NodeKind::Const { omega_idx, eps_idx } => {
                let c = decode_constant(omega_idx as usize, eps_idx as usize)
                    .expect("validated tree holds legal constant indices");
                (cursor + 1, Array1::from_elem(dim, c))
            }
        }
    }

    let (_, v) = eval(tree.nodes(), 0, pop, individual, dim, peers);
    Ok(v)
}

/// Evaluate `tree` for individual `individual`, drawing each peer uniformly
/// from the population excluding `individual` (independently per `xr` node).
pub fn evaluate(
    tree: &ExprTree,
    pop: &PopulationView<'_>,
    individual: usize,
    rng: &mut impl Rng,
) -> Result<Array1<f64>> {
    let n = pop.pop_size();
    let mut draw = || {
        let mut j = rng.gen_range(0..n - 1);
        if j >= individual {
            j += 1;
        }
        j
    };
    evaluate_with_peers(tree, pop, individual, &mut draw)
}

/// Fixed-length embedding of a (possibly partial) preorder token sequence:
/// slot `i` holds the one-hot of token `i`, empty slots stay zero.
pub fn embed_tokens(tokens: &[Token]) -> Array1<f64> {
    let mut v = Array1::zeros(EMB_DIM);
    for (slot, tok) in tokens.iter().take(MAX_NODES).enumerate() {
        v[slot * VOCAB_SIZE + tok.index()] = 1.0;
    }
    v
}

/// Embedding of a complete tree (see [`embed_tokens`]); the empty tree maps
/// to the all-zeros vector.
pub fn embed(tree: &ExprTree) -> Array1<f64> {
    embed_tokens(&tree.tokens())
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    /// Arrays backing a small synthetic population view.
    pub struct PopFixture {
        pub positions: Array2<f64>,
        pub personal_bests: Array2<f64>,
        pub velocities: Array2<f64>,
        pub best: Array1<f64>,
        pub worst: Array1<f64>,
    }

    impl PopFixture {
        pub fn view(&self) -> PopulationView<'_> {
            PopulationView {
                positions: self.positions.view(),
                personal_bests: self.personal_bests.view(),
                velocities: self.velocities.view(),
                best_so_far: self.best.view(),
                worst_so_far: self.worst.view(),
            }
        }

        pub fn random(rng: &mut impl Rng, n: usize, dim: usize) -> Self {
            let mut mk = |lo: f64, hi: f64| {
                Array2::from_shape_fn((n, dim), |_| rng.gen_range(lo..hi))
            };
            let positions = mk(-100.0, 100.0);
            let personal_bests = mk(-100.0, 100.0);
            let velocities = mk(-10.0, 10.0);
            PopFixture {
                positions,
                personal_bests,
                velocities,
                best: Array1::from_shape_fn(dim, |_| rng.gen_range(-100.0..100.0)),
                worst: Array1::from_shape_fn(dim, |_| rng.gen_range(-100.0..100.0)),
            }
        }
    }

    /// Random valid tree with height in `[MIN_HEIGHT, max_h]`.
    pub fn random_tree(rng: &mut impl Rng, max_h: usize) -> ExprTree {
        fn terminal(rng: &mut impl Rng) -> NodeKind {
            match rng.gen_range(0..7) {
                0 => NodeKind::X,
                1 => NodeKind::BestSoFar,
                2 => NodeKind::WorstSoFar,
                3 => NodeKind::PersonalBest,
                4 => NodeKind::Velocity,
                5 => NodeKind::RandomPeer,
                _ => NodeKind::Const {
                    omega_idx: rng.gen_range(0..N_OMEGA) as u8,
                    eps_idx: rng.gen_range(0..N_EPS) as u8,
                },
            }
        }
        fn operator(rng: &mut impl Rng) -> NodeKind {
            match rng.gen_range(0..3) {
                0 => NodeKind::Add,
                1 => NodeKind::Sub,
                _ => NodeKind::Mul,
            }
        }
        fn grow(rng: &mut impl Rng, out: &mut Vec<NodeKind>, budget: usize, force_op: bool) {
            let make_op = budget >= 2 && (force_op || rng.gen_bool(0.4));
            if make_op {
                out.push(operator(rng));
                grow(rng, out, budget - 1, false);
                grow(rng, out, budget - 1, false);
            } else {
                out.push(terminal(rng));
            }
        }
        let mut nodes = Vec::new();
        grow(rng, &mut nodes, max_h.clamp(MIN_HEIGHT, MAX_HEIGHT), true);
        ExprTree::from_preorder(nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn de_best_1_tree() -> ExprTree {
        ExprTree::from_preorder(vec![
            NodeKind::Add,
            NodeKind::BestSoFar,
            NodeKind::Mul,
            NodeKind::Const {
                omega_idx: 15, // 0.5
                eps_idx: 0,
            },
            NodeKind::Sub,
            NodeKind::RandomPeer,
            NodeKind::RandomPeer,
        ])
    }

    #[test]
    fn validate_rejects_bare_terminal() {
        let t = ExprTree::from_preorder(vec![NodeKind::X]);
        assert!(!t.validate());
        assert_eq!(t.height(), Some(1));
    }

    #[test]
    fn validate_accepts_minimal_legal_tree() {
        let t = ExprTree::from_preorder(vec![
            NodeKind::Add,
            NodeKind::X,
            NodeKind::Const {
                omega_idx: 20,
                eps_idx: 0,
            },
        ]);
        assert!(t.validate());
        assert_eq!(t.height(), Some(2));
    }

    #[test]
    fn validate_rejects_six_level_chain() {
        // Left-leaning chain of Add nodes, 6 levels deep.
        let mut nodes = Vec::new();
        for _ in 0..5 {
            nodes.push(NodeKind::Add);
        }
        nodes.push(NodeKind::X); // depth-6 leaf
        for _ in 0..5 {
            nodes.push(NodeKind::X); // right children closing each Add
        }
        let t = ExprTree::from_preorder(nodes);
        assert_eq!(t.height(), Some(6));
        assert!(!t.validate());
    }

    #[test]
    fn validate_rejects_incomplete_operator() {
        let t = ExprTree::from_preorder(vec![NodeKind::Add, NodeKind::X]);
        assert!(!t.validate());
        let t = ExprTree::from_preorder(vec![NodeKind::Add, NodeKind::X, NodeKind::X, NodeKind::X]);
        assert!(!t.validate());
    }

    #[test]
    fn decode_constant_examples() {
        assert_eq!(decode_constant(20, 0).unwrap(), 1.0);
        assert!((decode_constant(15, 1).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(decode_constant(7, 0).unwrap(), -0.3);
        assert!(decode_constant(21, 0).is_err());
        assert!(decode_constant(0, 2).is_err());
    }

    #[test]
    fn omega_grid_covers_spec_range() {
        assert_eq!(omega_value(0), -1.0);
        assert_eq!(omega_value(10), 0.0);
        assert_eq!(omega_value(20), 1.0);
        assert!((omega_value(15) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn evaluate_identity_returns_own_position() {
        let fixture = PopFixture {
            positions: array![[1.0, 2.0], [3.0, 4.0]],
            personal_bests: Array2::zeros((2, 2)),
            velocities: Array2::zeros((2, 2)),
            best: array![0.0, 0.0],
            worst: array![9.0, 9.0],
        };
        // `x` alone is below the height bound, so wrap it in an identity sum.
        let t = ExprTree::parse("(+ x (c 0.0 0))").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = evaluate(&t, &fixture.view(), 1, &mut rng).unwrap();
        assert_eq!(out, array![3.0, 4.0]);
    }

    #[test]
    fn evaluate_de_best_1_hand_example() {
        let fixture = PopFixture {
            positions: array![[1.0, 1.0], [3.0, 3.0], [5.0, 5.0]],
            personal_bests: Array2::zeros((3, 2)),
            velocities: Array2::zeros((3, 2)),
            best: array![0.0, 0.0],
            worst: array![9.0, 9.0],
        };
        let mut forced = [1usize, 2].into_iter();
        let mut peers = || forced.next().unwrap();
        let out = evaluate_with_peers(&de_best_1_tree(), &fixture.view(), 0, &mut peers).unwrap();
        assert_eq!(out, array![-1.0, -1.0]);
    }

    #[test]
    fn evaluate_x_minus_x_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fixture = PopFixture::random(&mut rng, 4, 3);
        let t = ExprTree::parse("(- x x)").unwrap();
        let out = evaluate(&t, &fixture.view(), 2, &mut rng).unwrap();
        assert_eq!(out, array![0.0, 0.0, 0.0]);
    }

    #[test]
    fn evaluate_rejects_invalid_tree_and_tiny_population() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fixture = PopFixture::random(&mut rng, 3, 2);
        let bad = ExprTree::from_preorder(vec![NodeKind::X]);
        assert!(evaluate(&bad, &fixture.view(), 0, &mut rng).is_err());

        let single = PopFixture {
            positions: array![[1.0, 1.0]],
            personal_bests: Array2::zeros((1, 2)),
            velocities: Array2::zeros((1, 2)),
            best: array![0.0, 0.0],
            worst: array![0.0, 0.0],
        };
        let ok = ExprTree::parse("(- x x)").unwrap();
        assert!(evaluate(&ok, &single.view(), 0, &mut rng).is_err());
    }

    #[test]
    fn evaluate_with_fixed_peers_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fixture = PopFixture::random(&mut rng, 5, 4);
        for _ in 0..20 {
            let t = random_tree(&mut rng, 5);
            let peer_seq: Vec<usize> = (0..64).map(|_| rng.gen_range(0..4)).collect();
            let run = |seq: &[usize]| {
                let mut it = seq.iter().copied();
                let mut peers = || it.next().unwrap();
                evaluate_with_peers(&t, &fixture.view(), 4, &mut peers).unwrap()
            };
            assert_eq!(run(&peer_seq), run(&peer_seq));
        }
    }

    #[test]
    fn evaluate_is_finite_on_random_trees_and_populations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let t = random_tree(&mut rng, 5);
            let n = rng.gen_range(2..6);
            let dim = rng.gen_range(1..5);
            let fixture = PopFixture::random(&mut rng, n, dim);
            let i = rng.gen_range(0..n);
            let out = evaluate(&t, &fixture.view(), i, &mut rng).unwrap();
            assert!(out.iter().all(|v| v.is_finite()), "tree {}", t.to_prefix());
        }
    }

    #[test]
    fn random_peer_draws_exclude_self_and_cover_population() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fixture = PopFixture {
            positions: array![[0.0], [1.0], [2.0], [3.0]],
            personal_bests: Array2::zeros((4, 1)),
            velocities: Array2::zeros((4, 1)),
            best: array![0.0],
            worst: array![3.0],
        };
        let t = ExprTree::parse("(+ xr (c 0.0 0))").unwrap();
        let mut seen = [false; 4];
        for _ in 0..500 {
            let out = evaluate(&t, &fixture.view(), 1, &mut rng).unwrap();
            let idx = out[0] as usize;
            assert_ne!(idx, 1, "peer draw must exclude the manipulated individual");
            seen[idx] = true;
        }
        assert!(seen[0] && seen[2] && seen[3]);
    }

    #[test]
    fn grammar_closure_at_height_two() {
        // 3 operators, 6 plain terminals + 21*2 constants = 48 leaf choices.
        let mut count = 0usize;
        let mut leaves = Vec::new();
        for t in [
            NodeKind::X,
            NodeKind::BestSoFar,
            NodeKind::WorstSoFar,
            NodeKind::PersonalBest,
            NodeKind::Velocity,
            NodeKind::RandomPeer,
        ] {
            leaves.push(t);
        }
        for o in 0..N_OMEGA {
            for e in 0..N_EPS {
                leaves.push(NodeKind::Const {
                    omega_idx: o as u8,
                    eps_idx: e as u8,
                });
            }
        }
        for op in [NodeKind::Add, NodeKind::Sub, NodeKind::Mul] {
            for &l in &leaves {
                for &r in &leaves {
                    let t = ExprTree::from_preorder(vec![op, l, r]);
                    assert!(t.validate());
                    assert_eq!(t.height(), Some(2));
                    count += 1;
                }
            }
        }
        assert_eq!(count, 3 * 48 * 48);
    }

    #[test]
    fn embed_base_cases() {
        assert_eq!(embed_tokens(&[]), Array1::<f64>::zeros(EMB_DIM));

        // All single-token embeddings are pairwise distinct.
        let singles: Vec<Array1<f64>> = Token::ALL.iter().map(|&t| embed_tokens(&[t])).collect();
        for i in 0..singles.len() {
            for j in (i + 1)..singles.len() {
                assert_ne!(singles[i], singles[j]);
            }
        }

        // Determinism.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = random_tree(&mut rng, 4);
        assert_eq!(embed(&t), embed(&t));
    }

    #[test]
    fn embed_distinguishes_prefixes() {
        let a = embed_tokens(&[Token::Add, Token::X]);
        let b = embed_tokens(&[Token::Add, Token::BestSoFar]);
        let c = embed_tokens(&[Token::Add]);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn prefix_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..300 {
            let t = random_tree(&mut rng, 5);
            let text = t.to_prefix();
            let back = ExprTree::parse(&text).unwrap();
            assert_eq!(back, t, "round trip failed for `{text}`");
        }
        // Spot checks including negative and fractional constants.
        let text = "(+ xbest (* (c 0.5 -1) (- xr xr)))";
        let t = ExprTree::parse(text).unwrap();
        assert_eq!(t.to_prefix(), text);
        let text = "(- (c -1.0 0) (+ dx xpb))";
        let t = ExprTree::parse(text).unwrap();
        assert_eq!(t.to_prefix(), text);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(ExprTree::parse("").is_err());
        assert!(ExprTree::parse("(+ x)").is_err());
        assert!(ExprTree::parse("(+ x y)").is_err());
        assert!(ExprTree::parse("(c 0.55 0)").is_err());
        assert!(ExprTree::parse("(c 0.5 2)").is_err());
        assert!(ExprTree::parse("(+ x x) trailing").is_err());
    }

    #[test]
    fn dsl_expresses_de_best_1_against_hand_coded_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..25 {
            let n = rng.gen_range(3..8);
            let dim = rng.gen_range(1..6);
            let fixture = PopFixture::random(&mut rng, n, dim);
            let i = rng.gen_range(0..n);
            let (r1, r2) = (rng.gen_range(0..n), rng.gen_range(0..n));

            let mut forced = [r1, r2].into_iter();
            let mut peers = || forced.next().unwrap();
            let tree = ExprTree::parse("(+ xbest (* (c 0.5 0) (- xr xr)))").unwrap();
            let got = evaluate_with_peers(&tree, &fixture.view(), i, &mut peers).unwrap();

            let view = fixture.view();
            let want = &view.best_so_far.to_owned()
                + &((&view.positions.row(r1).to_owned() - &view.positions.row(r2).to_owned())
                    * 0.5);
            assert_eq!(got, want);
        }
    }
}
