//! Tree generation and variation operators.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::expr::{Expr, ExprGrammar};

/// Probability that a generated terminal is a variable rather than a constant.
const P_VARIABLE: f64 = 0.6;

pub(crate) fn random_terminal(g: &ExprGrammar, rng: &mut ChaCha8Rng) -> Expr {
    if rng.random_bool(P_VARIABLE) {
        Expr::Var(rng.random_range(0..g.variables.len()))
    } else {
        let (lo, hi) = g.constant_range;
        Expr::Const(if hi > lo { rng.random_range(lo..=hi) } else { lo })
    }
}

/// Random tree of at most `depth` levels. `full` trees only place terminals
/// at the bottom level; `grow` trees may stop early.
pub(crate) fn random_tree(g: &ExprGrammar, rng: &mut ChaCha8Rng, depth: usize, full: bool) -> Expr {
    let unary: Vec<_> = g.unary_operators().collect();
    let binary: Vec<_> = g.binary_operators().collect();
    let n_ops = unary.len() + binary.len();
    if depth <= 1 || n_ops == 0 {
        return random_terminal(g, rng);
    }
    let terminal_here = !full && rng.random_bool(0.3);
    if terminal_here {
        return random_terminal(g, rng);
    }
    let k = rng.random_range(0..n_ops);
    if k < binary.len() {
        let a = random_tree(g, rng, depth - 1, full);
        let b = random_tree(g, rng, depth - 1, full);
        Expr::binary(binary[k], a, b)
    } else {
        Expr::unary(unary[k - binary.len()], random_tree(g, rng, depth - 1, full))
    }
}

/// Deepest complete binary tree that fits under the complexity cap.
pub(crate) fn max_init_depth(cap: usize) -> usize {
    let mut d = 1;
    while (1usize << (d + 1)) - 1 <= cap {
        d += 1;
    }
    d
}

/// Ramped half-and-half initialization within the grammar's cap.
pub(crate) fn ramped_half_and_half(g: &ExprGrammar, rng: &mut ChaCha8Rng, size: usize) -> Vec<Expr> {
    let max_depth = max_init_depth(g.complexity_cap).max(2);
    let mut out = Vec::with_capacity(size);
    let mut i = 0usize;
    while out.len() < size {
        let depth = 1 + i % max_depth;
        let full = (i / max_depth) % 2 == 0;
        i += 1;
        let tree = random_tree(g, rng, depth, full);
        if tree.complexity() <= g.complexity_cap {
            out.push(tree);
        }
    }
    out
}

fn random_node(e: &Expr, rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(0..e.complexity())
}

/// Replaces a random subtree of `a` with a random subtree of `b`.
pub(crate) fn crossover(a: &Expr, b: &Expr, cap: usize, rng: &mut ChaCha8Rng) -> Option<Expr> {
    for _ in 0..8 {
        let i = random_node(a, rng);
        let j = random_node(b, rng);
        let donor = b.node(j)?;
        let child = a.replace_node(i, donor);
        if child.complexity() <= cap {
            return Some(child);
        }
    }
    None
}

pub(crate) fn subtree_mutation(e: &Expr, g: &ExprGrammar, rng: &mut ChaCha8Rng) -> Option<Expr> {
    for _ in 0..8 {
        let i = random_node(e, rng);
        let depth = rng.random_range(1..=3);
        let full = rng.random_bool(0.5);
        let child = e.replace_node(i, &random_tree(g, rng, depth, full));
        if child.complexity() <= g.complexity_cap {
            return Some(child);
        }
    }
    None
}

/// Swaps one node for another of the same arity.
pub(crate) fn point_mutation(e: &Expr, g: &ExprGrammar, rng: &mut ChaCha8Rng) -> Expr {
    let i = random_node(e, rng);
    let node = e.node(i).expect("index within tree");
    let replacement = match node {
        Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => random_terminal(g, rng),
        Expr::Unary(op, a) => {
            let ops: Vec<_> = g.unary_operators().collect();
            let op = if ops.is_empty() { *op } else { ops[rng.random_range(0..ops.len())] };
            Expr::Unary(op, a.clone())
        }
        Expr::Binary(op, a, b) => {
            let ops: Vec<_> = g.binary_operators().collect();
            let op = if ops.is_empty() { *op } else { ops[rng.random_range(0..ops.len())] };
            Expr::Binary(op, a.clone(), b.clone())
        }
    };
    e.replace_node(i, &replacement)
}

/// Multiplies every constant by `1 + 0.1·z`, `z ~ N(0, 1)`.
pub(crate) fn jitter_constants(e: &Expr, rng: &mut ChaCha8Rng) -> Expr {
    let values: Vec<f64> = e
        .constants()
        .into_iter()
        .map(|c| {
            let z: f64 = StandardNormal.sample(rng);
            if c == 0.0 {
                0.1 * z
            } else {
                c * (1.0 + 0.1 * z)
            }
        })
        .collect();
    e.with_constants(&values).expect("same constant count")
}
