//! The trainable actor-critic: a gated recurrent cell that emits rule-tree
//! tokens in preorder, with categorical heads for constants and a scalar
//! value head hanging off the first recurrent step.
//!
//! Decoding is masked so every emitted tree is valid by construction: the
//! root only admits operators (height >= 2), slots at the depth limit only
//! admit terminals, and everything else admits the full vocabulary.

use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{Grads, Tape, Value, Var};
use crate::engine::{Decision, FlaState, RulePolicy};
use crate::error::{Error, Result};
use crate::expr::{
    embed_tokens, ExprTree, NodeKind, Token, EMB_DIM, MAX_HEIGHT, N_EPS, N_OMEGA, VOCAB_SIZE,
};

pub const FLA_DIM: usize = 9;
pub const INPUT_DIM: usize = FLA_DIM + EMB_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Sample,
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Recurrent hidden width; anything >= 16 is a sensible policy, tiny
    /// widths are used by gradient-check tests.
    pub hidden: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { hidden: 64 }
    }
}

/// One named parameter block inside the flat vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    /// 0 for vectors.
    pub cols: usize,
}

impl RegistryEntry {
    pub fn len(&self) -> usize {
        if self.cols == 0 {
            self.rows
        } else {
            self.rows * self.cols
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat trainable parameter vector plus its named-slice registry.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    registry: Vec<RegistryEntry>,
    index: HashMap<String, usize>,
    pub theta: Vec<f64>,
}

fn registry_for(hidden: usize) -> Vec<RegistryEntry> {
    let mut entries = Vec::new();
    let mut offset = 0usize;
    let push = |name: &str, rows: usize, cols: usize, offset: &mut usize,
                entries: &mut Vec<RegistryEntry>| {
        let e = RegistryEntry {
            name: name.to_string(),
            offset: *offset,
            rows,
            cols,
        };
        *offset += e.len();
        entries.push(e);
    };
    for gate in ["r", "z", "n"] {
        push(&format!("gru.w_{gate}"), hidden, INPUT_DIM, &mut offset, &mut entries);
        push(&format!("gru.u_{gate}"), hidden, hidden, &mut offset, &mut entries);
        push(&format!("gru.b_{gate}"), hidden, 0, &mut offset, &mut entries);
    }
    push("head.token.w", VOCAB_SIZE, hidden, &mut offset, &mut entries);
    push("head.token.b", VOCAB_SIZE, 0, &mut offset, &mut entries);
    push("head.omega.w", N_OMEGA, hidden, &mut offset, &mut entries);
    push("head.omega.b", N_OMEGA, 0, &mut offset, &mut entries);
    push("head.eps.w", N_EPS, hidden, &mut offset, &mut entries);
    push("head.eps.b", N_EPS, 0, &mut offset, &mut entries);
    push("critic.w1", hidden, FLA_DIM, &mut offset, &mut entries);
    push("critic.b1", hidden, 0, &mut offset, &mut entries);
    push("critic.w2", hidden, 0, &mut offset, &mut entries);
    push("critic.b2", 1, 0, &mut offset, &mut entries);
    entries
}

impl PolicyParams {
    /// Zero-initialized parameters (useful for tests and hand construction).
    pub fn zeros(config: PolicyConfig) -> Self {
        let registry = registry_for(config.hidden);
        let len = registry.iter().map(RegistryEntry::len).sum();
        let index = registry
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), i))
            .collect();
        PolicyParams {
            config,
            registry,
            index,
            theta: vec![0.0; len],
        }
    }

    /// Orthogonal recurrent/input weights, zero biases, small-uniform output
    /// heads, zero value head.
    pub fn init(config: PolicyConfig, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(config);
        let hidden = p.config.hidden;
        for gate in ["r", "z", "n"] {
            p.set_matrix(&format!("gru.w_{gate}"), orthogonal_rows(hidden, INPUT_DIM, rng));
            p.set_matrix(&format!("gru.u_{gate}"), orthogonal_rows(hidden, hidden, rng));
        }
        for head in ["token", "omega", "eps"] {
            let name = format!("head.{head}.w");
            let e = p.entry(&name).clone();
            let m = Array2::from_shape_fn((e.rows, e.cols), |_| rng.gen_range(-0.1..0.1));
            p.set_matrix(&name, m);
        }
        // Critic hidden layer orthogonal; output layer stays zero so fresh
        // policies estimate zero value everywhere.
        p.set_matrix("critic.w1", orthogonal_rows(hidden, FLA_DIM, rng));
        p
    }

    pub fn registry(&self) -> &[RegistryEntry] {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    fn entry(&self, name: &str) -> &RegistryEntry {
        let idx = self.index[name];
        &self.registry[idx]
    }

    pub fn matrix(&self, name: &str) -> Array2<f64> {
        let e = self.entry(name);
        assert!(e.cols > 0, "{name} is not a matrix");
        Array2::from_shape_vec((e.rows, e.cols), self.theta[e.offset..e.offset + e.len()].to_vec())
            .unwrap()
    }

    pub fn vector(&self, name: &str) -> Array1<f64> {
        let e = self.entry(name);
        assert!(e.cols == 0, "{name} is not a vector");
        Array1::from_vec(self.theta[e.offset..e.offset + e.len()].to_vec())
    }

    pub fn set_matrix(&mut self, name: &str, m: Array2<f64>) {
        let e = self.entry(name).clone();
        assert_eq!((e.rows, e.cols), (m.nrows(), m.ncols()), "{name} shape");
        for (k, v) in m.iter().enumerate() {
            self.theta[e.offset + k] = *v;
        }
    }

    pub fn set_vector(&mut self, name: &str, v: Array1<f64>) {
        let e = self.entry(name).clone();
        assert_eq!(e.rows, v.len(), "{name} shape");
        assert_eq!(e.cols, 0);
        for (k, val) in v.iter().enumerate() {
            self.theta[e.offset + k] = *val;
        }
    }

    /// Register every block as a tape leaf; the i-th var matches the i-th
    /// registry entry.
    pub fn leaves(&self, tape: &mut Tape) -> PolicyVars {
        let vars = self
            .registry
            .iter()
            .map(|e| {
                if e.cols == 0 {
                    tape.vector_leaf(Array1::from_vec(
                        self.theta[e.offset..e.offset + e.len()].to_vec(),
                    ))
                } else {
                    tape.matrix_leaf(
                        Array2::from_shape_vec(
                            (e.rows, e.cols),
                            self.theta[e.offset..e.offset + e.len()].to_vec(),
                        )
                        .unwrap(),
                    )
                }
            })
            .collect();
        PolicyVars {
            vars,
            hidden: self.config.hidden,
        }
    }

    /// Scatter tape gradients back into flat-theta order.
    pub fn flat_grad(&self, grads: &Grads, vars: &PolicyVars) -> Vec<f64> {
        let mut out = vec![0.0; self.theta.len()];
        self.accumulate_flat_grad(grads, vars, &mut out);
        out
    }

    /// As [`Self::flat_grad`] but adding into an existing buffer.
    pub fn accumulate_flat_grad(&self, grads: &Grads, vars: &PolicyVars, out: &mut [f64]) {
        for (e, var) in self.registry.iter().zip(vars.vars.iter()) {
            match grads.get(*var) {
                Some(Value::V(g)) => {
                    for (k, v) in g.iter().enumerate() {
                        out[e.offset + k] += *v;
                    }
                }
                Some(Value::M(g)) => {
                    for (k, v) in g.iter().enumerate() {
                        out[e.offset + k] += *v;
                    }
                }
                Some(Value::S(_)) => unreachable!("parameter leaves are tensors"),
                None => {}
            }
        }
    }
}

/// Rows orthonormalized by modified Gram-Schmidt (semi-orthogonal when
/// rows < cols).
fn orthogonal_rows(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((rows, cols), |_| crate::problems::standard_normal(rng));
    for i in 0..rows {
        for j in 0..i {
            let proj = m.row(i).dot(&m.row(j));
            let prev = m.row(j).to_owned();
            let mut row = m.row_mut(i);
            row.scaled_add(-proj, &prev);
        }
        let norm = m.row(i).dot(&m.row(i)).sqrt();
        if norm > 1e-12 {
            m.row_mut(i).mapv_inplace(|v| v / norm);
        }
    }
    m
}

/// Tape leaves for every parameter block, registry-aligned.
pub struct PolicyVars {
    vars: Vec<Var>,
    hidden: usize,
}

impl PolicyVars {
    fn get(&self, params: &PolicyParams, name: &str) -> Var {
        self.vars[params.index[name]]
    }
}

// Legal-token masks. Exactly three shapes occur: the root admits operators
// only, depth-limit slots admit terminals only, everything else admits all.
struct Masks {
    ops_only: Rc<Vec<bool>>,
    terminals_only: Rc<Vec<bool>>,
    all: Rc<Vec<bool>>,
    full_omega: Rc<Vec<bool>>,
    full_eps: Rc<Vec<bool>>,
}

impl Masks {
    fn new() -> Self {
        let mut ops = vec![false; VOCAB_SIZE];
        let mut terms = vec![false; VOCAB_SIZE];
        for t in Token::ALL {
            if t.is_operator() {
                ops[t.index()] = true;
            } else {
                terms[t.index()] = true;
            }
        }
        Masks {
            ops_only: Rc::new(ops),
            terminals_only: Rc::new(terms),
            all: Rc::new(vec![true; VOCAB_SIZE]),
            full_omega: Rc::new(vec![true; N_OMEGA]),
            full_eps: Rc::new(vec![true; N_EPS]),
        }
    }

    /// Mask for a slot with the given remaining height budget; the root is
    /// the unique slot with the full budget.
    fn for_budget(&self, budget: usize) -> Rc<Vec<bool>> {
        if budget >= MAX_HEIGHT {
            self.ops_only.clone()
        } else if budget <= 1 {
            self.terminals_only.clone()
        } else {
            self.all.clone()
        }
    }
}

fn input_leaf(tape: &mut Tape, state: &FlaState, tokens: &[Token]) -> Var {
    let emb = embed_tokens(tokens);
    let mut input = Array1::zeros(INPUT_DIM);
    for (i, v) in state.0.iter().enumerate() {
        input[i] = *v;
    }
    input.slice_mut(ndarray::s![FLA_DIM..]).assign(&emb);
    tape.vector_leaf(input)
}

fn gru_step(tape: &mut Tape, pv: &PolicyVars, params: &PolicyParams, x: Var, h: Var) -> Var {
    let gate = |tape: &mut Tape, w: Var, u: Var, b: Var| {
        let wx = tape.matvec(w, x);
        let uh = tape.matvec(u, h);
        let s = tape.add(wx, uh);
        tape.add(s, b)
    };
    let pre_r = gate(
        tape,
        pv.get(params, "gru.w_r"),
        pv.get(params, "gru.u_r"),
        pv.get(params, "gru.b_r"),
    );
    let r = tape.sigmoid(pre_r);
    let pre_z = gate(
        tape,
        pv.get(params, "gru.w_z"),
        pv.get(params, "gru.u_z"),
        pv.get(params, "gru.b_z"),
    );
    let z = tape.sigmoid(pre_z);

    let wnx = tape.matvec(pv.get(params, "gru.w_n"), x);
    let unh = tape.matvec(pv.get(params, "gru.u_n"), h);
    let runh = tape.mul(r, unh);
    let s = tape.add(wnx, runh);
    let pre_n = tape.add(s, pv.get(params, "gru.b_n"));
    let n = tape.tanh(pre_n);

    let ones = tape.vector_leaf(Array1::ones(pv.hidden));
    let zi = tape.sub(ones, z);
    let a = tape.mul(zi, n);
    let b = tape.mul(z, h);
    tape.add(a, b)
}

fn head_log_probs(
    tape: &mut Tape,
    pv: &PolicyVars,
    params: &PolicyParams,
    head: &str,
    h: Var,
    mask: Rc<Vec<bool>>,
) -> Var {
    let w = pv.get(params, &format!("head.{head}.w"));
    let b = pv.get(params, &format!("head.{head}.b"));
    let wh = tape.matvec(w, h);
    let logits = tape.add(wh, b);
    tape.log_softmax_masked(logits, mask)
}

/// Separate critic: one tanh layer over the nine state features, scalar out.
fn critic_value(tape: &mut Tape, pv: &PolicyVars, params: &PolicyParams, state: &FlaState) -> Var {
    let x = tape.vector_leaf(Array1::from_vec(state.0.to_vec()));
    let w1 = pv.get(params, "critic.w1");
    let b1 = pv.get(params, "critic.b1");
    let wx = tape.matvec(w1, x);
    let pre = tape.add(wx, b1);
    let h = tape.tanh(pre);
    let w2 = pv.get(params, "critic.w2");
    let b2 = pv.get(params, "critic.b2");
    let d = tape.dot(w2, h);
    let b0 = tape.index(b2, 0);
    tape.add(d, b0)
}

fn entropy_of(tape: &Tape, lp: Var, mask: &[bool]) -> f64 {
    let l = tape.vector(lp);
    -l.iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .map(|(v, _)| v.exp() * v)
        .sum::<f64>()
}

fn pick(tape: &Tape, lp: Var, mask: &[bool], mode: DecodeMode, rng: &mut ChaCha8Rng) -> usize {
    let l = tape.vector(lp);
    match mode {
        DecodeMode::Greedy => {
            let mut best = usize::MAX;
            let mut best_v = f64::NEG_INFINITY;
            for (i, (&v, &m)) in l.iter().zip(mask.iter()).enumerate() {
                if m && v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            best
        }
        DecodeMode::Sample => {
            let u: f64 = rng.gen();
            let mut cum = 0.0;
            let mut last_legal = 0;
            for (i, (&v, &m)) in l.iter().zip(mask.iter()).enumerate() {
                if !m {
                    continue;
                }
                last_legal = i;
                cum += v.exp();
                if u < cum {
                    return i;
                }
            }
            last_legal
        }
    }
}

/// Autoregressively decode one rule tree. Tokens come out in preorder; the
/// legal-token mask guarantees the result always validates. Log-probs are
/// recorded per decision point (token, then omega and eps for constants).
pub fn construct_rule(
    params: &PolicyParams,
    state: &FlaState,
    rng: &mut ChaCha8Rng,
    mode: DecodeMode,
) -> Decision {
    let masks = Masks::new();
    let mut tape = Tape::new();
    let pv = params.leaves(&mut tape);

    let mut h = tape.vector_leaf(Array1::zeros(params.config.hidden));
    let mut nodes: Vec<NodeKind> = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut stack = vec![MAX_HEIGHT];
    let mut log_probs = Vec::new();
    let mut entropy = 0.0;
    let value = {
        let v = critic_value(&mut tape, &pv, params, state);
        tape.scalar(v)
    };

    while let Some(budget) = stack.pop() {
        let x = input_leaf(&mut tape, state, &tokens);
        h = gru_step(&mut tape, &pv, params, x, h);

        let mask = masks.for_budget(budget);
        let lp = head_log_probs(&mut tape, &pv, params, "token", h, mask.clone());
        let choice = pick(&tape, lp, &mask, mode, rng);
        log_probs.push(tape.vector(lp)[choice]);
        entropy += entropy_of(&tape, lp, &mask);

        let token = Token::from_index(choice).unwrap();
        tokens.push(token);
        if token.is_operator() {
            stack.push(budget - 1);
            stack.push(budget - 1);
            nodes.push(match token {
                Token::Add => NodeKind::Add,
                Token::Sub => NodeKind::Sub,
                _ => NodeKind::Mul,
            });
        } else if token == Token::Const {
            let lp_om =
                head_log_probs(&mut tape, &pv, params, "omega", h, masks.full_omega.clone());
            let om = pick(&tape, lp_om, &masks.full_omega, mode, rng);
            log_probs.push(tape.vector(lp_om)[om]);
            entropy += entropy_of(&tape, lp_om, &masks.full_omega);

            let lp_eps = head_log_probs(&mut tape, &pv, params, "eps", h, masks.full_eps.clone());
            let eps = pick(&tape, lp_eps, &masks.full_eps, mode, rng);
            log_probs.push(tape.vector(lp_eps)[eps]);
            entropy += entropy_of(&tape, lp_eps, &masks.full_eps);

            nodes.push(NodeKind::Const {
                omega_idx: om as u8,
                eps_idx: eps as u8,
            });
        } else {
            nodes.push(match token {
                Token::X => NodeKind::X,
                Token::BestSoFar => NodeKind::BestSoFar,
                Token::WorstSoFar => NodeKind::WorstSoFar,
                Token::PersonalBest => NodeKind::PersonalBest,
                Token::Velocity => NodeKind::Velocity,
                _ => NodeKind::RandomPeer,
            });
        }
    }

    let tree = ExprTree::from_preorder(nodes);
    debug_assert!(tree.validate());
    Decision {
        tree,
        log_probs,
        entropy,
        value,
    }
}

/// One decision point of a rescored sequence: the masked log-prob vector
/// (differentiable) plus its mask and the chosen index.
pub struct RescoredDecision {
    pub log_probs: Var,
    pub mask: Rc<Vec<bool>>,
    pub choice: usize,
}

/// Differentiable rescoring of a stored token sequence on a caller tape.
pub struct Rescored {
    /// Sum of per-decision log-probs.
    pub log_prob: Var,
    /// Sum of per-decision entropies.
    pub entropy: Var,
    /// Critic value of the conditioning state.
    pub value: Var,
    pub decisions: Vec<RescoredDecision>,
}

/// Walk a stored preorder sequence under the masked decoder, accumulating
/// differentiable log-probs. Errors if the sequence is not a legal preorder
/// encoding of a valid tree.
pub fn rescore_on_tape(
    tape: &mut Tape,
    pv: &PolicyVars,
    params: &PolicyParams,
    state: &FlaState,
    nodes: &[NodeKind],
) -> Result<Rescored> {
    let tree = ExprTree::from_preorder(nodes.to_vec());
    if !tree.validate() {
        return Err(Error::contract("rescore: sequence is not a valid tree"));
    }
    let masks = Masks::new();
    let mut h = tape.vector_leaf(Array1::zeros(params.config.hidden));
    let mut stack = vec![MAX_HEIGHT];
    let mut tokens: Vec<Token> = Vec::new();
    let mut lp_terms = Vec::new();
    let mut ent_terms = Vec::new();
    let mut decisions = Vec::new();
    let value = critic_value(tape, pv, params, state);

    for node in nodes {
        let Some(budget) = stack.pop() else {
            return Err(Error::contract("rescore: sequence extends a complete tree"));
        };
        let token = node.token();
        let mask = masks.for_budget(budget);
        if !mask[token.index()] {
            return Err(Error::contract(format!(
                "rescore: token {token:?} illegal at budget {budget}"
            )));
        }

        let x = input_leaf(tape, state, &tokens);
        h = gru_step(tape, pv, params, x, h);

        let lp = head_log_probs(tape, pv, params, "token", h, mask.clone());
        lp_terms.push(tape.index(lp, token.index()));
        ent_terms.push(tape.entropy_from_log_probs(lp, mask.clone()));
        decisions.push(RescoredDecision {
            log_probs: lp,
            mask,
            choice: token.index(),
        });

        if let NodeKind::Const { omega_idx, eps_idx } = node {
            let lp_om = head_log_probs(tape, pv, params, "omega", h, masks.full_omega.clone());
            lp_terms.push(tape.index(lp_om, *omega_idx as usize));
            ent_terms.push(tape.entropy_from_log_probs(lp_om, masks.full_omega.clone()));
            decisions.push(RescoredDecision {
                log_probs: lp_om,
                mask: masks.full_omega.clone(),
                choice: *omega_idx as usize,
            });
            let lp_eps = head_log_probs(tape, pv, params, "eps", h, masks.full_eps.clone());
            lp_terms.push(tape.index(lp_eps, *eps_idx as usize));
            ent_terms.push(tape.entropy_from_log_probs(lp_eps, masks.full_eps.clone()));
            decisions.push(RescoredDecision {
                log_probs: lp_eps,
                mask: masks.full_eps.clone(),
                choice: *eps_idx as usize,
            });
        }

        tokens.push(token);
        if token.is_operator() {
            stack.push(budget - 1);
            stack.push(budget - 1);
        }
    }
    if !stack.is_empty() {
        return Err(Error::contract("rescore: sequence leaves open slots"));
    }

    let log_prob = tape.sum(lp_terms);
    let entropy = tape.sum(ent_terms);
    Ok(Rescored {
        log_prob,
        entropy,
        value,
        decisions,
    })
}

/// Total log-probability and entropy of a stored sequence under `params`.
pub fn action_log_prob(
    params: &PolicyParams,
    state: &FlaState,
    nodes: &[NodeKind],
) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let pv = params.leaves(&mut tape);
    let r = rescore_on_tape(&mut tape, &pv, params, state, nodes)?;
    Ok((tape.scalar(r.log_prob), tape.scalar(r.entropy)))
}

/// Gradient of the sequence log-probability with respect to theta.
pub fn action_log_prob_grad(
    params: &PolicyParams,
    state: &FlaState,
    nodes: &[NodeKind],
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let pv = params.leaves(&mut tape);
    let r = rescore_on_tape(&mut tape, &pv, params, state, nodes)?;
    let grads = tape.backward(r.log_prob);
    Ok((tape.scalar(r.log_prob), params.flat_grad(&grads, &pv)))
}

/// Critic estimate for a state: a separate small network over the nine
/// state features (the actor's recurrent weights are not shared).
pub fn value_estimate(params: &PolicyParams, state: &FlaState) -> f64 {
    let mut tape = Tape::new();
    let pv = params.leaves(&mut tape);
    let v = value_on_tape(&mut tape, &pv, params, state);
    tape.scalar(v)
}

/// As [`value_estimate`] but on a caller tape (differentiable).
pub fn value_on_tape(
    tape: &mut Tape,
    pv: &PolicyVars,
    params: &PolicyParams,
    state: &FlaState,
) -> Var {
    critic_value(tape, pv, params, state)
}

/// Per-decision log-prob vectors of a sequence under frozen parameters
/// (constants for the KL term).
pub fn reference_log_probs(
    params: &PolicyParams,
    state: &FlaState,
    nodes: &[NodeKind],
) -> Result<Vec<Rc<Array1<f64>>>> {
    let mut tape = Tape::new();
    let pv = params.leaves(&mut tape);
    let r = rescore_on_tape(&mut tape, &pv, params, state, nodes)?;
    Ok(r.decisions
        .iter()
        .map(|d| Rc::new(tape.vector(d.log_probs).clone()))
        .collect())
}

/// KL(pi_theta || pi_elite): per-decision-point categorical KLs summed over
/// each trajectory's steps, averaged over trajectories.
pub fn kl_divergence(
    params: &PolicyParams,
    elite: &PolicyParams,
    trajectories: &[Vec<(FlaState, Vec<NodeKind>)>],
) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(Error::contract("kl_divergence: empty trajectory set"));
    }
    let mut total = 0.0;
    for traj in trajectories {
        let mut tape = Tape::new();
        let pv = params.leaves(&mut tape);
        for (state, nodes) in traj {
            let refs = reference_log_probs(elite, state, nodes)?;
            let r = rescore_on_tape(&mut tape, &pv, params, state, nodes)?;
            for (d, lq) in r.decisions.iter().zip(refs.iter()) {
                let kl = tape.kl_from_log_probs(d.log_probs, lq.clone(), d.mask.clone());
                total += tape.scalar(kl);
            }
        }
    }
    Ok(total / trajectories.len() as f64)
}

/// Policy adapter for the episode engine.
pub struct NeuralPolicy<'a> {
    pub params: &'a PolicyParams,
    pub mode: DecodeMode,
}

impl RulePolicy for NeuralPolicy<'_> {
    fn decide(&mut self, state: &FlaState, rng: &mut ChaCha8Rng) -> Decision {
        construct_rule(self.params, state, rng, self.mode)
    }
}

// ---- checkpoints ----

/// Serialized parameter snapshot; registry + flat values + config hash.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub hidden: usize,
    pub registry: Vec<RegistryEntry>,
    pub values: Vec<f64>,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn from_params(params: &PolicyParams, config_hash: &str) -> Self {
        Checkpoint {
            hidden: params.config.hidden,
            registry: params.registry.clone(),
            values: params.theta.clone(),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn into_params(self, expected_hash: Option<&str>) -> Result<PolicyParams> {
        if let Some(h) = expected_hash {
            if h != self.config_hash {
                return Err(Error::ConfigHashMismatch {
                    found: self.config_hash,
                    expected: h.to_string(),
                });
            }
        }
        let mut params = PolicyParams::zeros(PolicyConfig {
            hidden: self.hidden,
        });
        if params.registry != self.registry {
            return Err(Error::contract("checkpoint registry does not match layout"));
        }
        if params.theta.len() != self.values.len() {
            return Err(Error::contract("checkpoint length mismatch"));
        }
        params.theta = self.values;
        Ok(params)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}
