//! The GP engine: ramped half-and-half initialization, lexicographic
//! parsimony tournament selection, and the four variation operators under a
//! generational replacement scheme.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EkmError, Result};
use crate::kernel::{KernelExpr, KernelNode, Primitive};

/// Evolution parameters for the kernel population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub prob_crossover: f64,
    pub prob_standard_mutation: f64,
    pub prob_swap_mutation: f64,
    pub prob_shrink_mutation: f64,
    /// Inclusive depth range for ramped half-and-half initialization.
    pub init_depth_range: (usize, usize),
    pub max_depth: usize,
    pub rng_seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population_size: 1000,
            generations: 100,
            tournament_size: 7,
            prob_crossover: 0.7,
            prob_standard_mutation: 0.1,
            prob_swap_mutation: 0.1,
            prob_shrink_mutation: 0.1,
            init_depth_range: (2, 5),
            max_depth: 17,
            rng_seed: 0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(EkmError::Config("population_size must be positive".into()));
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return Err(EkmError::Config(format!(
                "tournament_size {} must be in [1, population_size {}]",
                self.tournament_size, self.population_size
            )));
        }
        let sum = self.prob_crossover
            + self.prob_standard_mutation
            + self.prob_swap_mutation
            + self.prob_shrink_mutation;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EkmError::Config(format!(
                "operator probabilities sum to {sum}, expected 1"
            )));
        }
        if [
            self.prob_crossover,
            self.prob_standard_mutation,
            self.prob_swap_mutation,
            self.prob_shrink_mutation,
        ]
        .iter()
        .any(|p| *p < 0.0)
        {
            return Err(EkmError::Config("operator probabilities must be >= 0".into()));
        }
        let (lo, hi) = self.init_depth_range;
        if lo < 1 || lo > hi || hi > self.max_depth {
            return Err(EkmError::Config(format!(
                "init_depth_range ({lo}, {hi}) must satisfy 1 <= lo <= hi <= max_depth {}",
                self.max_depth
            )));
        }
        Ok(())
    }
}

/// A population member: an expression with its cached size and, once
/// evaluated, a fitness. A stored fitness is only meaningful against the
/// subset pair of the generation that computed it; the evolution loop
/// re-evaluates the whole population every generation.
#[derive(Debug, Clone)]
pub struct Individual {
    pub expr: KernelExpr,
    pub fitness: Option<f64>,
    size: usize,
}

impl Individual {
    pub fn new(expr: KernelExpr) -> Self {
        let size = expr.size();
        Individual { expr, fitness: None, size }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn fitness_or_panic(&self) -> f64 {
        self.fitness
            .expect("tournament participant has no fitness; evaluate the population first")
    }
}

const FUNCTIONS: [Primitive; 12] = [
    Primitive::Add2,
    Primitive::Add3,
    Primitive::Add4,
    Primitive::Sub,
    Primitive::Mul2,
    Primitive::Mul3,
    Primitive::Mul4,
    Primitive::Div,
    Primitive::Max,
    Primitive::Min,
    Primitive::Exp,
    Primitive::Pow2,
];

const N_TERMINAL_FAMILIES: usize = 8;

/// Instantiates terminal family `family` (0..8): the four indexed
/// component families, the crossed products, DOT, EUC, and the ephemeral
/// constants. Drawing the family uniformly gives each indexed terminal the
/// weight 1/d (2/(d(d+1)) for the crossed products), so each family as a
/// whole counts as much as one plain terminal.
fn terminal_from_family<R: Rng>(family: usize, d: usize, rng: &mut R) -> Primitive {
    match family {
        0 => Primitive::SumAt(rng.random_range(1..=d)),
        1 => Primitive::ProdAt(rng.random_range(1..=d)),
        2 => Primitive::MaxAt(rng.random_range(1..=d)),
        3 => Primitive::MinAt(rng.random_range(1..=d)),
        4 => {
            // Uniform over the d(d+1)/2 pairs 1 <= j <= i <= d.
            let mut r = rng.random_range(0..d * (d + 1) / 2);
            let mut i = 1;
            while r >= i {
                r -= i;
                i += 1;
            }
            Primitive::Cross(i, r + 1)
        }
        5 => Primitive::Dot,
        6 => Primitive::Euclid,
        7 => Primitive::Const(rng.random_range(-1.0..=1.0)),
        _ => unreachable!("terminal family out of range"),
    }
}

/// Draws one terminal with the weighted-family distribution.
pub(crate) fn random_terminal<R: Rng>(d: usize, rng: &mut R) -> Primitive {
    let family = rng.random_range(0..N_TERMINAL_FAMILIES);
    terminal_from_family(family, d, rng)
}

/// "Full" construction: function nodes down to the target depth, then
/// terminals; the result has exactly the requested depth.
fn full_node<R: Rng>(d: usize, depth: usize, rng: &mut R) -> KernelNode {
    if depth <= 1 {
        return KernelNode::leaf(random_terminal(d, rng));
    }
    let f = FUNCTIONS[rng.random_range(0..FUNCTIONS.len())];
    let children = (0..f.arity()).map(|_| full_node(d, depth - 1, rng)).collect();
    KernelNode::new(f, children)
}

/// "Grow" construction: below the root each position picks uniformly from
/// the combined primitive set, so branches may stop early; the root is a
/// function whenever the target depth allows, keeping the result's depth
/// within `[2, depth]`.
fn grow_node<R: Rng>(d: usize, depth: usize, root: bool, rng: &mut R) -> KernelNode {
    if depth <= 1 {
        return KernelNode::leaf(random_terminal(d, rng));
    }
    let pick = if root {
        rng.random_range(0..FUNCTIONS.len())
    } else {
        rng.random_range(0..FUNCTIONS.len() + N_TERMINAL_FAMILIES)
    };
    if pick < FUNCTIONS.len() {
        let f = FUNCTIONS[pick];
        let children = (0..f.arity())
            .map(|_| grow_node(d, depth - 1, false, rng))
            .collect();
        KernelNode::new(f, children)
    } else {
        KernelNode::leaf(terminal_from_family(pick - FUNCTIONS.len(), d, rng))
    }
}

/// A fresh random tree built with the grow method at the given target depth.
pub(crate) fn random_grow_tree<R: Rng>(d: usize, depth: usize, rng: &mut R) -> KernelExpr {
    KernelExpr::from_checked(grow_node(d, depth, depth >= 2, rng))
}

/// Ramped half-and-half initialization: depths cycle over
/// `init_depth_range` and each depth stratum alternates full/grow halves.
pub fn init_population<R: Rng>(config: &GpConfig, d: usize, rng: &mut R) -> Vec<Individual> {
    assert!(d >= 1, "dimension must be at least 1");
    let (lo, hi) = config.init_depth_range;
    let n_depths = hi - lo + 1;
    let mut population = Vec::with_capacity(config.population_size);
    for i in 0..config.population_size {
        let stratum = i % (2 * n_depths);
        let depth = lo + stratum / 2;
        let root = if stratum % 2 == 0 {
            full_node(d, depth, rng)
        } else {
            grow_node(d, depth, depth >= 2, rng)
        };
        population.push(Individual::new(KernelExpr::from_checked(root)));
    }
    population
}

/// Lexicographic parsimony pressure tournament: draws
/// `config.tournament_size` participants uniformly with replacement and
/// returns the one with highest fitness, ties resolved toward smaller
/// trees, remaining ties by a uniform random choice.
pub fn select_parent<'a, R: Rng>(
    population: &'a [Individual],
    config: &GpConfig,
    rng: &mut R,
) -> &'a Individual {
    assert!(!population.is_empty());
    let mut best: Vec<usize> = Vec::with_capacity(config.tournament_size);
    for _ in 0..config.tournament_size {
        let i = rng.random_range(0..population.len());
        let cf = population[i].fitness_or_panic();
        if best.is_empty() {
            best.push(i);
            continue;
        }
        let cur = &population[best[0]];
        let cand = &population[i];
        let bf = cur.fitness_or_panic();
        if cf > bf || (cf == bf && cand.size() < cur.size()) {
            best.clear();
            best.push(i);
        } else if cf == bf && cand.size() == cur.size() {
            best.push(i);
        }
    }
    let winner = if best.len() == 1 { best[0] } else { best[rng.random_range(0..best.len())] };
    &population[winner]
}

// --- preorder tree surgery -------------------------------------------------

fn nth_node<'a>(node: &'a KernelNode, idx: &mut usize) -> Option<&'a KernelNode> {
    if *idx == 0 {
        return Some(node);
    }
    *idx -= 1;
    for child in &node.children {
        if let Some(found) = nth_node(child, idx) {
            return Some(found);
        }
    }
    None
}

fn subtree_at(expr: &KernelExpr, index: usize) -> &KernelNode {
    let mut idx = index;
    nth_node(expr.root(), &mut idx).expect("node index within tree size")
}

fn replace_nth(
    node: &KernelNode,
    target: usize,
    counter: &mut usize,
    replacement: &KernelNode,
) -> KernelNode {
    let my_index = *counter;
    *counter += 1;
    if my_index == target {
        return replacement.clone();
    }
    let children = node
        .children
        .iter()
        .map(|c| replace_nth(c, target, counter, replacement))
        .collect();
    KernelNode { primitive: node.primitive, children }
}

fn with_subtree_replaced(expr: &KernelExpr, index: usize, replacement: &KernelNode) -> KernelExpr {
    let mut counter = 0;
    KernelExpr::from_checked(replace_nth(expr.root(), index, &mut counter, replacement))
}

fn internal_node_indices(node: &KernelNode, counter: &mut usize, out: &mut Vec<usize>) {
    if !node.children.is_empty() {
        out.push(*counter);
    }
    *counter += 1;
    for child in &node.children {
        internal_node_indices(child, counter, out);
    }
}

// --- variation operators ---------------------------------------------------

/// Attempts before a depth-violating variation falls back to cloning the
/// parent: the initial try plus three retries.
const DEPTH_RETRY_ATTEMPTS: usize = 4;

fn crossover_exprs<R: Rng>(
    a: &KernelExpr,
    b: &KernelExpr,
    max_depth: usize,
    rng: &mut R,
) -> KernelExpr {
    for _ in 0..DEPTH_RETRY_ATTEMPTS {
        let target = rng.random_range(0..a.size());
        let donor_index = rng.random_range(0..b.size());
        let child = with_subtree_replaced(a, target, subtree_at(b, donor_index));
        if child.depth() <= max_depth {
            return child;
        }
    }
    a.clone()
}

/// Classical subtree crossover: the child is `a` with one uniformly chosen
/// node's subtree replaced by a uniformly chosen subtree of `b`.
pub fn subtree_crossover<R: Rng>(
    a: &Individual,
    b: &Individual,
    config: &GpConfig,
    rng: &mut R,
) -> Individual {
    Individual::new(crossover_exprs(&a.expr, &b.expr, config.max_depth, rng))
}

/// Crossover with a fresh random individual (grow method over the
/// initialization depth range).
pub fn standard_mutation<R: Rng>(
    a: &Individual,
    config: &GpConfig,
    d: usize,
    rng: &mut R,
) -> Individual {
    let (lo, hi) = config.init_depth_range;
    let depth = rng.random_range(lo..=hi);
    let random = random_grow_tree(d, depth, rng);
    Individual::new(crossover_exprs(&a.expr, &random, config.max_depth, rng))
}

/// Replaces one uniformly chosen node's primitive with a different
/// primitive of the same arity; the tree structure is unchanged.
pub fn swap_node_mutation<R: Rng>(a: &Individual, d: usize, rng: &mut R) -> Individual {
    let index = rng.random_range(0..a.expr.size());
    let node = subtree_at(&a.expr, index);
    let current = node.primitive;
    let replacement = if current.arity() > 0 {
        let pool: Vec<Primitive> = FUNCTIONS
            .iter()
            .copied()
            .filter(|f| f.arity() == current.arity() && *f != current)
            .collect();
        debug_assert!(!pool.is_empty(), "every function arity has an alternative");
        pool[rng.random_range(0..pool.len())]
    } else {
        // Resample from the terminal distribution until the primitive
        // differs; the pool always has at least 8 distinct members.
        let mut picked = None;
        for _ in 0..64 {
            let t = random_terminal(d, rng);
            if t != current {
                picked = Some(t);
                break;
            }
        }
        match picked {
            Some(t) => t,
            None => return a.clone(),
        }
    };
    let swapped = KernelNode { primitive: replacement, children: node.children.clone() };
    Individual::new(with_subtree_replaced(&a.expr, index, &swapped))
}

/// Replaces one uniformly chosen internal node by one of its children
/// (uniform), discarding the other subtrees. A single-terminal tree is
/// returned as a clone.
pub fn shrink_mutation<R: Rng>(a: &Individual, rng: &mut R) -> Individual {
    let mut internals = Vec::new();
    let mut counter = 0;
    internal_node_indices(a.expr.root(), &mut counter, &mut internals);
    if internals.is_empty() {
        return a.clone();
    }
    let index = internals[rng.random_range(0..internals.len())];
    let node = subtree_at(&a.expr, index);
    let child = &node.children[rng.random_range(0..node.children.len())];
    Individual::new(with_subtree_replaced(&a.expr, index, &child.clone()))
}

/// The four variation operators of the generational scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariationKind {
    Crossover,
    StandardMutation,
    SwapMutation,
    ShrinkMutation,
}

/// Samples which operator produces the next child; the four probabilities
/// partition the unit interval.
pub fn choose_operator<R: Rng>(config: &GpConfig, rng: &mut R) -> VariationKind {
    let r: f64 = rng.random();
    if r < config.prob_crossover {
        VariationKind::Crossover
    } else if r < config.prob_crossover + config.prob_standard_mutation {
        VariationKind::StandardMutation
    } else if r < config.prob_crossover + config.prob_standard_mutation + config.prob_swap_mutation
    {
        VariationKind::SwapMutation
    } else {
        VariationKind::ShrinkMutation
    }
}

/// Builds the next generation: for each of the `population_size` children,
/// one operator is drawn, parents are tournament-selected, and the child
/// replaces a slot; the previous population is discarded entirely.
pub fn next_generation<R: Rng>(
    population: &[Individual],
    config: &GpConfig,
    d: usize,
    rng: &mut R,
) -> Vec<Individual> {
    let mut next = Vec::with_capacity(config.population_size);
    for _ in 0..config.population_size {
        let child = match choose_operator(config, rng) {
            VariationKind::Crossover => {
                let a = select_parent(population, config, rng);
                let b = select_parent(population, config, rng);
                subtree_crossover(a, b, config, rng)
            }
            VariationKind::StandardMutation => {
                let a = select_parent(population, config, rng);
                standard_mutation(a, config, d, rng)
            }
            VariationKind::SwapMutation => {
                let a = select_parent(population, config, rng);
                swap_node_mutation(a, d, rng)
            }
            VariationKind::ShrinkMutation => {
                let a = select_parent(population, config, rng);
                shrink_mutation(a, rng)
            }
        };
        next.push(child);
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small_config() -> GpConfig {
        GpConfig { population_size: 20, init_depth_range: (2, 3), ..GpConfig::default() }
    }

    fn check_indices(node: &KernelNode, d: usize) {
        match node.primitive {
            Primitive::SumAt(i)
            | Primitive::ProdAt(i)
            | Primitive::MaxAt(i)
            | Primitive::MinAt(i) => assert!((1..=d).contains(&i)),
            Primitive::Cross(i, j) => assert!(1 <= j && j <= i && i <= d),
            Primitive::Const(v) => assert!((-1.0..=1.0).contains(&v)),
            _ => {}
        }
        assert_eq!(node.primitive.arity(), node.children.len());
        for c in &node.children {
            check_indices(c, d);
        }
    }

    #[test]
    fn init_population_depths_and_shape() {
        let cfg = GpConfig { population_size: 4, init_depth_range: (2, 3), ..GpConfig::default() };
        let pop = init_population(&cfg, 2, &mut rng(1));
        assert_eq!(pop.len(), 4);
        for ind in &pop {
            let depth = ind.expr.depth();
            assert!((2..=3).contains(&depth), "depth {depth} outside 2..=3");
            check_indices(ind.expr.root(), 2);
        }
    }

    #[test]
    fn init_population_d1_indices() {
        let cfg = GpConfig { population_size: 200, ..GpConfig::default() };
        let pop = init_population(&cfg, 1, &mut rng(2));
        for ind in &pop {
            check_indices(ind.expr.root(), 1);
        }
    }

    #[test]
    fn terminal_family_weights_chi_square() {
        // 1e5 draws with d = 4; all eight families should be uniform, so in
        // particular the whole A_i family is drawn as often as DOT.
        let d = 4;
        let n = 100_000usize;
        let mut counts = [0usize; 8];
        let mut index_counts = [0usize; 4];
        let mut r = rng(3);
        for _ in 0..n {
            match random_terminal(d, &mut r) {
                Primitive::SumAt(i) => {
                    counts[0] += 1;
                    index_counts[i - 1] += 1;
                }
                Primitive::ProdAt(_) => counts[1] += 1,
                Primitive::MaxAt(_) => counts[2] += 1,
                Primitive::MinAt(_) => counts[3] += 1,
                Primitive::Cross(_, _) => counts[4] += 1,
                Primitive::Dot => counts[5] += 1,
                Primitive::Euclid => counts[6] += 1,
                Primitive::Const(_) => counts[7] += 1,
                other => panic!("function drawn as terminal: {other:?}"),
            }
        }
        let expected = n as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        // dof 7, alpha 0.001
        assert!(chi2 < 24.322, "family chi-square {chi2} too large: {counts:?}");

        let expected_i = counts[0] as f64 / 4.0;
        let chi2_i: f64 =
            index_counts.iter().map(|&o| (o as f64 - expected_i).powi(2) / expected_i).sum();
        // dof 3, alpha 0.001
        assert!(chi2_i < 16.266, "A-index chi-square {chi2_i} too large: {index_counts:?}");
    }

    fn evaluated(exprs: Vec<(&str, f64)>) -> Vec<Individual> {
        exprs
            .into_iter()
            .map(|(text, f)| {
                let mut ind = Individual::new(crate::kernel::parse(text, 2).unwrap());
                ind.fitness = Some(f);
                ind
            })
            .collect()
    }

    #[test]
    fn tournament_lexicographic_rule() {
        // fitness (-5, -3, -3), sizes (9, 20, 7): the (-3, size 7) one wins
        let pop = evaluated(vec![
            ("(ADD2 (ADD2 (DOT) (DOT)) (ADD2 (ADD2 (DOT) (DOT)) (DOT)))", -5.0), // size 9
            (
                "(ADD4 (ADD4 (DOT) (DOT) (DOT) (DOT)) (ADD4 (DOT) (DOT) (DOT) (DOT)) \
                 (ADD4 (DOT) (DOT) (DOT) (DOT)) (ADD3 (DOT) (DOT) (DOT)))",
                -3.0,
            ), // size 20
            ("(ADD2 (ADD2 (DOT) (DOT)) (ADD2 (DOT) (DOT)))", -3.0), // size 7
        ]);
        assert_eq!(pop[0].size(), 9);
        assert_eq!(pop[1].size(), 20);
        assert_eq!(pop[2].size(), 7);

        // With 30 draws over 3 individuals every tournament contains the
        // (-3, size 7) one, which then must always win.
        let cfg = GpConfig { tournament_size: 30, population_size: 30, ..GpConfig::default() };
        let mut r = rng(11);
        for _ in 0..200 {
            let w = select_parent(&pop, &cfg, &mut r);
            assert_eq!(w.fitness, Some(-3.0));
            assert_eq!(w.size(), 7);
        }
    }

    #[test]
    fn tournament_distinct_fitness_ignores_size() {
        let pop = evaluated(vec![("(DOT)", -1.0), ("(ADD2 (DOT) (DOT))", -9.0)]);
        let cfg = GpConfig { tournament_size: 7, population_size: 2, ..GpConfig::default() };
        let mut r = rng(5);
        for _ in 0..100 {
            let w = select_parent(&pop, &cfg, &mut r);
            // The larger tree can only win a tournament that never drew the
            // fitter one; then it is the sole candidate.
            if w.size() == 2 {
                assert_eq!(w.fitness, Some(-9.0));
            }
        }
    }

    #[test]
    #[should_panic(expected = "no fitness")]
    fn tournament_unevaluated_panics() {
        let pop = vec![Individual::new(crate::kernel::parse("(DOT)", 1).unwrap())];
        let cfg = GpConfig { tournament_size: 1, population_size: 1, ..GpConfig::default() };
        select_parent(&pop, &cfg, &mut rng(0));
    }

    #[test]
    fn crossover_single_node_parents() {
        let a = Individual::new(crate::kernel::parse("(DOT)", 1).unwrap());
        let b = Individual::new(crate::kernel::parse("(EUC)", 1).unwrap());
        let cfg = GpConfig::default();
        let mut r = rng(7);
        for _ in 0..20 {
            let child = subtree_crossover(&a, &b, &cfg, &mut r);
            let text = child.expr.format();
            assert!(text == "(DOT)" || text == "(EUC)");
        }
    }

    #[test]
    fn crossover_respects_depth_limit() {
        let cfg = GpConfig { max_depth: 6, init_depth_range: (2, 5), ..small_config() };
        let mut r = rng(13);
        let pop = init_population(&cfg, 3, &mut r);
        for i in 0..pop.len() {
            for j in 0..pop.len() {
                let child = subtree_crossover(&pop[i], &pop[j], &cfg, &mut r);
                assert!(child.expr.depth() <= 6);
            }
        }
    }

    #[test]
    fn standard_mutation_deterministic_under_seed() {
        let a = Individual::new(crate::kernel::parse("(ADD2 (DOT) (EUC))", 2).unwrap());
        let cfg = small_config();
        let x = standard_mutation(&a, &cfg, 2, &mut rng(21));
        let y = standard_mutation(&a, &cfg, 2, &mut rng(21));
        assert_eq!(x.expr.format(), y.expr.format());
        assert!(x.expr.depth() <= cfg.max_depth);
    }

    #[test]
    fn swap_preserves_structure() {
        let a = Individual::new(
            crate::kernel::parse("(ADD2 (MUL2 (A 1) (E 0.5)) (EUC))", 2).unwrap(),
        );
        let mut r = rng(17);
        for _ in 0..100 {
            let m = swap_node_mutation(&a, 2, &mut r);
            assert_eq!(m.size(), a.size());
            assert_eq!(m.expr.depth(), a.expr.depth());
            check_indices(m.expr.root(), 2);
        }
    }

    #[test]
    fn swap_keeps_arity_class() {
        // An ADD2 node may become SUB/MUL2/DIV/MAX/MIN but never EXP.
        let a = Individual::new(crate::kernel::parse("(ADD2 (DOT) (DOT))", 1).unwrap());
        let mut r = rng(19);
        for _ in 0..200 {
            let m = swap_node_mutation(&a, 1, &mut r);
            let root = m.expr.root().primitive;
            if m.expr.root().children.len() == 2 {
                assert!(matches!(
                    root,
                    Primitive::Sub
                        | Primitive::Mul2
                        | Primitive::Div
                        | Primitive::Max
                        | Primitive::Min
                ) || root == Primitive::Add2 && m.expr.format() != a.expr.format());
            }
        }
    }

    #[test]
    fn shrink_examples() {
        let a = Individual::new(crate::kernel::parse("(ADD2 (DOT) (EUC))", 1).unwrap());
        let mut r = rng(23);
        for _ in 0..20 {
            let m = shrink_mutation(&a, &mut r);
            let text = m.expr.format();
            assert!(text == "(DOT)" || text == "(EUC)");
            assert!(m.size() < a.size());
        }

        let leaf = Individual::new(crate::kernel::parse("(DOT)", 1).unwrap());
        let m = shrink_mutation(&leaf, &mut r);
        assert_eq!(m.expr.format(), "(DOT)");
    }

    #[test]
    fn operator_mix_matches_probabilities() {
        let cfg = GpConfig::default();
        let mut counts = [0usize; 4];
        let mut r = rng(29);
        let n = 10_000;
        for _ in 0..n {
            match choose_operator(&cfg, &mut r) {
                VariationKind::Crossover => counts[0] += 1,
                VariationKind::StandardMutation => counts[1] += 1,
                VariationKind::SwapMutation => counts[2] += 1,
                VariationKind::ShrinkMutation => counts[3] += 1,
            }
        }
        let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let expected = [0.7, 0.1, 0.1, 0.1];
        for (f, e) in freqs.iter().zip(expected) {
            assert!((f - e).abs() < 0.015, "operator mix {freqs:?} too far from {expected:?}");
        }
    }

    #[test]
    fn next_generation_size_and_determinism() {
        let cfg = small_config();
        let mut r = rng(31);
        let mut pop = init_population(&cfg, 2, &mut r);
        for (i, ind) in pop.iter_mut().enumerate() {
            ind.fitness = Some(-(i as f64));
        }
        let a = next_generation(&pop, &cfg, 2, &mut rng(77));
        let b = next_generation(&pop, &cfg, 2, &mut rng(77));
        assert_eq!(a.len(), cfg.population_size);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.expr.format(), y.expr.format());
            assert!(x.expr.depth() <= cfg.max_depth);
            assert!(x.fitness.is_none());
        }
    }

    #[test]
    fn config_validation() {
        assert!(GpConfig::default().validate().is_ok());
        let bad = GpConfig { prob_crossover: 0.9, ..GpConfig::default() };
        assert!(bad.validate().is_err());
        let bad = GpConfig { tournament_size: 2000, ..GpConfig::default() };
        assert!(bad.validate().is_err());
        let bad = GpConfig { init_depth_range: (3, 2), ..GpConfig::default() };
        assert!(bad.validate().is_err());
    }
}
