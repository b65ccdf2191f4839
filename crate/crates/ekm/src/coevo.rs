//! The three-species co-evolution loop: a GP kernel population, a
//! cooperative prototype subset evolved by a (1, lambda_p) strategy to
//! maximize kernel fitness, and a competitive fitness-case subset evolved
//! by a (1, lambda_s) strategy to minimize it.
//!
//! Generations are strictly sequential and every RNG draw happens on the
//! calling thread in a fixed order; only pure fitness evaluations are
//! parallelized, so a run is a deterministic function of
//! `(train, config, seed)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledExample};
use crate::error::{EkmError, Result};
use crate::fitness::{error_rate_par, fitness_counted};
use crate::gp::{init_population, next_generation, GpConfig, Individual};
use crate::kernel::KernelExpr;

/// A fixed-size set of distinct indices into a training set, stratified by
/// class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSubset {
    indices: Vec<usize>,
    class_counts: Vec<usize>,
}

impl IndexSubset {
    /// Member indices, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Clones the referenced examples out of the dataset (their
    /// `source_index` stays the dataset position).
    pub fn gather(&self, dataset: &Dataset) -> Vec<LabeledExample> {
        self.indices.iter().map(|&i| dataset.examples[i].clone()).collect()
    }
}

/// Largest-remainder allocation of `total` over classes proportional to
/// `weights`; never exceeds a class's weight. Integer remainders keep the
/// rule exact. Ties go to the larger remainder, then the lower class id.
fn largest_remainder_quotas(weights: &[usize], total: usize) -> Vec<usize> {
    let n: usize = weights.iter().sum();
    debug_assert!(total <= n);
    let mut quotas: Vec<usize> = weights.iter().map(|&w| total * w / n).collect();
    let mut remainders: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(c, &w)| (c, (total * w) % n))
        .collect();
    remainders.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let assigned: usize = quotas.iter().sum();
    for &(c, _) in remainders.iter().take(total - assigned) {
        quotas[c] += 1;
    }
    quotas
}

fn sample_distinct<R: Rng>(pool: &[usize], amount: usize, rng: &mut R) -> Vec<usize> {
    rand::seq::index::sample(rng, pool.len(), amount)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Uniform stratified sample of `size` distinct indices: per-class quotas
/// by largest remainder of the class proportions, uniform without
/// replacement within each class.
pub fn stratified_sample<R: Rng>(
    dataset: &Dataset,
    size: usize,
    rng: &mut R,
) -> Result<IndexSubset> {
    if size > dataset.len() {
        return Err(EkmError::InvalidInput(format!(
            "sample size {size} exceeds dataset size {}",
            dataset.len()
        )));
    }
    let quotas = largest_remainder_quotas(&dataset.class_counts, size);
    let mut indices = Vec::with_capacity(size);
    for (c, &quota) in quotas.iter().enumerate() {
        let members = dataset.class_members(c);
        indices.extend(sample_distinct(&members, quota, rng));
    }
    indices.sort_unstable();
    Ok(IndexSubset { indices, class_counts: quotas })
}

/// (1, lambda) subset mutation: `round_ties_even(fraction * len)` members
/// are removed (uniformly within each class, removal quotas by largest
/// remainder) and replaced by fresh draws from outside the parent subset.
/// Only when a class has too few outside members does the replacement reuse
/// just-removed indices. Size and class counts are preserved and all
/// indices stay distinct.
pub fn mutate_subset<R: Rng>(
    parent: &IndexSubset,
    fraction: f64,
    dataset: &Dataset,
    rng: &mut R,
) -> IndexSubset {
    assert!(fraction > 0.0 && fraction <= 1.0, "replacement fraction must be in (0, 1]");
    let len = parent.len();
    let replace_total = (fraction * len as f64).round_ties_even() as usize;
    if replace_total == 0 {
        return parent.clone();
    }
    let removal_quotas = largest_remainder_quotas(&parent.class_counts, replace_total);

    let mut offspring = Vec::with_capacity(len);
    for (c, &r_c) in removal_quotas.iter().enumerate() {
        let members: Vec<usize> = parent
            .indices
            .iter()
            .copied()
            .filter(|&i| dataset.examples[i].label == c)
            .collect();
        if members.is_empty() {
            continue;
        }
        let removed_set = rand::seq::index::sample(rng, members.len(), r_c);
        let mut is_removed = vec![false; members.len()];
        for i in removed_set {
            is_removed[i] = true;
        }
        let kept: Vec<usize> = members
            .iter()
            .enumerate()
            .filter(|(i, _)| !is_removed[*i])
            .map(|(_, &v)| v)
            .collect();
        let removed: Vec<usize> = members
            .iter()
            .enumerate()
            .filter(|(i, _)| is_removed[*i])
            .map(|(_, &v)| v)
            .collect();

        let pool: Vec<usize> = dataset
            .class_members(c)
            .into_iter()
            .filter(|i| !members.contains(i))
            .collect();
        let mut fresh = if pool.len() >= r_c {
            sample_distinct(&pool, r_c, rng)
        } else {
            // Last resort: the outside pool cannot cover the quota, so the
            // deficit is drawn back from the removed members.
            let mut fresh = pool.clone();
            let deficit = r_c - pool.len();
            fresh.extend(sample_distinct(&removed, deficit, rng));
            fresh
        };
        offspring.extend(kept);
        offspring.append(&mut fresh);
    }
    offspring.sort_unstable();
    debug_assert_eq!(offspring.len(), len);
    IndexSubset { indices: offspring, class_counts: parent.class_counts.clone() }
}

/// Parameters of the co-evolution loop; embeds the GP parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoevoConfig {
    /// Prototype subset size (the classifier's neighbor pool).
    pub prototype_size: usize,
    /// Fitness-case subset size (examples kernels are scored on).
    pub fitness_case_size: usize,
    /// Offsprings per generation in the prototype species.
    pub lambda_p: usize,
    /// Offsprings per generation in the fitness-case species.
    pub lambda_s: usize,
    /// Fraction of the prototype subset replaced per mutation.
    pub rho_p: f64,
    /// Fraction of the fitness-case subset replaced per mutation.
    pub rho_s: f64,
    pub gp: GpConfig,
}

impl Default for CoevoConfig {
    fn default() -> Self {
        CoevoConfig {
            prototype_size: 50,
            fitness_case_size: 100,
            lambda_p: 4,
            lambda_s: 2,
            rho_p: 0.25,
            rho_s: 0.50,
            gp: GpConfig::default(),
        }
    }
}

impl CoevoConfig {
    pub fn validate(&self) -> Result<()> {
        self.gp.validate()?;
        if self.prototype_size < 2 {
            return Err(EkmError::Config("prototype_size must be at least 2".into()));
        }
        if self.fitness_case_size == 0 {
            return Err(EkmError::Config("fitness_case_size must be positive".into()));
        }
        if self.lambda_p == 0 || self.lambda_s == 0 {
            return Err(EkmError::Config("offspring counts must be positive".into()));
        }
        for (name, rho) in [("rho_p", self.rho_p), ("rho_s", self.rho_s)] {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(EkmError::Config(format!("{name} = {rho} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Per-generation record of the co-evolution.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub generation: usize,
    /// Best kernel of this generation's population.
    pub best_kernel: KernelExpr,
    pub best_fitness: f64,
    pub best_size: usize,
    /// Prototype subset after this generation's update.
    pub prototype_subset: IndexSubset,
    /// Fitness-case subset after this generation's update.
    pub fitness_case_subset: IndexSubset,
    /// 1-NN error of (best kernel, prototype subset) on the whole training
    /// set, with self-exclusion for prototype members.
    pub train_error: f64,
    /// (prototype, case) kernel-pair evaluations spent on fitness this
    /// generation.
    pub fitness_pair_evals: u64,
}

/// The full evolution history, one entry per generation `0..=T`.
#[derive(Debug, Clone)]
pub struct EvolutionTrace {
    pub entries: Vec<TraceEntry>,
}

/// Sets every individual's fitness against the given subsets and returns
/// (index of the best individual, kernel-pair evaluations). Evaluations run
/// in parallel; results are identical to sequential evaluation because each
/// fitness is a pure function collected in population order. Ties on
/// fitness go to the smaller tree, then the lower population index.
fn evaluate_population(
    population: &mut [Individual],
    prototypes: &[LabeledExample],
    cases: &[LabeledExample],
) -> (usize, u64) {
    let results: Vec<(f64, u64)> = population
        .par_iter()
        .map(|ind| fitness_counted(&ind.expr, prototypes, cases))
        .collect();
    let mut pairs = 0;
    for (ind, &(f, n)) in population.iter_mut().zip(&results) {
        ind.fitness = Some(f);
        pairs += n;
    }
    let mut best = 0;
    for i in 1..population.len() {
        let (bf, bs) = (population[best].fitness.unwrap(), population[best].size());
        let (cf, cs) = (population[i].fitness.unwrap(), population[i].size());
        if cf > bf || (cf == bf && cs < bs) {
            best = i;
        }
    }
    (best, pairs)
}

/// Runs the co-evolution on a training set. The trace has one entry per
/// generation including generation 0, which is evaluated and recorded
/// before any variation.
pub fn coevolve<R: Rng>(
    train: &Dataset,
    config: &CoevoConfig,
    rng: &mut R,
) -> Result<EvolutionTrace> {
    coevolve_observed(train, config, rng, |_| {})
}

/// [`coevolve`] with a per-generation observer, called right after each
/// entry is recorded (the CLI streams progress through it).
pub fn coevolve_observed<R: Rng>(
    train: &Dataset,
    config: &CoevoConfig,
    rng: &mut R,
    mut on_generation: impl FnMut(&TraceEntry),
) -> Result<EvolutionTrace> {
    config.validate()?;
    if train.n_classes() < 2 {
        return Err(EkmError::InvalidInput("training set needs at least two classes".into()));
    }
    if config.prototype_size > train.len() || config.fitness_case_size > train.len() {
        return Err(EkmError::Config(format!(
            "subset sizes ({}, {}) exceed the training set size {}",
            config.prototype_size,
            config.fitness_case_size,
            train.len()
        )));
    }

    let mut proto_subset = stratified_sample(train, config.prototype_size, rng)?;
    let mut case_subset = stratified_sample(train, config.fitness_case_size, rng)?;
    let mut population = init_population(&config.gp, train.dimension, rng);

    let mut entries: Vec<TraceEntry> = Vec::with_capacity(config.gp.generations + 1);
    let record = |entries: &mut Vec<TraceEntry>,
                  generation: usize,
                  population: &[Individual],
                  best: usize,
                  proto_subset: &IndexSubset,
                  case_subset: &IndexSubset,
                  pairs: u64| {
        let best_ind = &population[best];
        let prototypes = proto_subset.gather(train);
        let train_error = error_rate_par(&best_ind.expr, &prototypes, &train.examples, 1);
        entries.push(TraceEntry {
            generation,
            best_kernel: best_ind.expr.clone(),
            best_fitness: best_ind.fitness.unwrap(),
            best_size: best_ind.size(),
            prototype_subset: proto_subset.clone(),
            fitness_case_subset: case_subset.clone(),
            train_error,
            fitness_pair_evals: pairs,
        });
    };

    // Generation 0: evaluate the initial population on the initial subsets.
    let prototypes = proto_subset.gather(train);
    let cases = case_subset.gather(train);
    let (best, pairs) = evaluate_population(&mut population, &prototypes, &cases);
    record(&mut entries, 0, &population, best, &proto_subset, &case_subset, pairs);
    on_generation(entries.last().unwrap());

    for t in 1..=config.gp.generations {
        // (a) variation builds the new kernel population
        population = next_generation(&population, &config.gp, train.dimension, rng);

        // (b) evaluate everyone against the previous-generation subsets
        let prototypes = proto_subset.gather(train);
        let cases = case_subset.gather(train);
        let (best, mut pairs) = evaluate_population(&mut population, &prototypes, &cases);
        let best_kernel = population[best].expr.clone();

        // (c) prototype species, cooperative: the best offspring by
        // maximal fitness of the generation's best kernel replaces the
        // parent (comma selection; ties to the lowest offspring index).
        let offspring: Vec<IndexSubset> = (0..config.lambda_p)
            .map(|_| mutate_subset(&proto_subset, config.rho_p, train, rng))
            .collect();
        let scored: Vec<(f64, u64)> = offspring
            .par_iter()
            .map(|s| fitness_counted(&best_kernel, &s.gather(train), &cases))
            .collect();
        let mut pick = 0;
        for (i, &(f, n)) in scored.iter().enumerate() {
            pairs += n;
            if f > scored[pick].0 {
                pick = i;
            }
        }
        proto_subset = offspring.into_iter().nth(pick).unwrap();

        // (d) fitness-case species, competitive: keep the offspring that
        // minimizes the best kernel's fitness.
        let prototypes = proto_subset.gather(train);
        let offspring: Vec<IndexSubset> = (0..config.lambda_s)
            .map(|_| mutate_subset(&case_subset, config.rho_s, train, rng))
            .collect();
        let scored: Vec<(f64, u64)> = offspring
            .par_iter()
            .map(|s| fitness_counted(&best_kernel, &prototypes, &s.gather(train)))
            .collect();
        let mut pick = 0;
        for (i, &(f, n)) in scored.iter().enumerate() {
            pairs += n;
            if f < scored[pick].0 {
                pick = i;
            }
        }
        case_subset = offspring.into_iter().nth(pick).unwrap();

        record(&mut entries, t, &population, best, &proto_subset, &case_subset, pairs);
        on_generation(entries.last().unwrap());
    }

    Ok(EvolutionTrace { entries })
}

/// Final-model selection: the generation whose (best kernel, prototype
/// subset) pair minimizes the whole-training-set 1-NN error; ties go to
/// the smaller kernel, then the earlier generation.
pub fn select_final(trace: &EvolutionTrace) -> &TraceEntry {
    assert!(!trace.entries.is_empty(), "select_final needs a nonempty trace");
    let mut best = &trace.entries[0];
    for entry in &trace.entries[1..] {
        if entry.train_error < best.train_error
            || (entry.train_error == best.train_error && entry.best_size < best.best_size)
        {
            best = entry;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledExample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Two well-separated 1-d clusters with a given class split.
    fn toy_dataset(n_a: usize, n_b: usize) -> Dataset {
        let mut examples = Vec::new();
        for i in 0..n_a {
            examples.push(LabeledExample {
                features: vec![i as f64 * 0.01],
                label: 0,
                source_index: i,
            });
        }
        for i in 0..n_b {
            examples.push(LabeledExample {
                features: vec![10.0 + i as f64 * 0.01],
                label: 1,
                source_index: n_a + i,
            });
        }
        Dataset::new("toy", examples, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn stratified_sample_exact_proportion() {
        let ds = toy_dataset(4, 2);
        let s = stratified_sample(&ds, 3, &mut rng(1)).unwrap();
        assert_eq!(s.class_counts(), &[2, 1]);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn stratified_sample_whole_set() {
        let ds = toy_dataset(4, 2);
        let s = stratified_sample(&ds, 6, &mut rng(2)).unwrap();
        assert_eq!(s.indices(), &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn stratified_sample_largest_remainder() {
        // 10 examples (7 A, 3 B), size 4: quotas 2.8 / 1.2 -> 3 A + 1 B
        let ds = toy_dataset(7, 3);
        let s = stratified_sample(&ds, 4, &mut rng(3)).unwrap();
        assert_eq!(s.class_counts(), &[3, 1]);
    }

    #[test]
    fn stratified_sample_size_too_large() {
        let ds = toy_dataset(3, 3);
        assert!(stratified_sample(&ds, 7, &mut rng(0)).is_err());
    }

    #[test]
    fn mutate_subset_replacement_count() {
        // rho = 0.25, l = 50: round-half-even(12.5) = 12 replacements
        let ds = toy_dataset(200, 100);
        let parent = stratified_sample(&ds, 50, &mut rng(4)).unwrap();
        let child = mutate_subset(&parent, 0.25, &ds, &mut rng(5));
        assert_eq!(child.len(), 50);
        assert_eq!(child.class_counts(), parent.class_counts());
        let kept = child.indices().iter().filter(|i| parent.indices().contains(i)).count();
        assert_eq!(kept, 50 - 12);
        // all distinct (indices are sorted)
        assert!(child.indices().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn mutate_subset_full_replacement_disjoint() {
        let ds = toy_dataset(100, 60);
        let parent = stratified_sample(&ds, 40, &mut rng(6)).unwrap();
        let child = mutate_subset(&parent, 1.0, &ds, &mut rng(7));
        assert_eq!(child.class_counts(), parent.class_counts());
        assert!(child.indices().iter().all(|i| !parent.indices().contains(i)));
    }

    #[test]
    fn mutate_subset_reuses_removed_when_pool_exhausted() {
        // The subset is the whole dataset: no outside pool exists, so the
        // replacements must come from the removed members.
        let ds = toy_dataset(6, 4);
        let parent = stratified_sample(&ds, 10, &mut rng(8)).unwrap();
        let child = mutate_subset(&parent, 0.5, &ds, &mut rng(9));
        assert_eq!(child.len(), 10);
        assert_eq!(child.class_counts(), parent.class_counts());
        assert!(child.indices().windows(2).all(|w| w[0] < w[1]));
    }

    fn small_config(generations: usize) -> CoevoConfig {
        CoevoConfig {
            prototype_size: 8,
            fitness_case_size: 10,
            gp: GpConfig {
                population_size: 16,
                generations,
                init_depth_range: (2, 3),
                ..GpConfig::default()
            },
            ..CoevoConfig::default()
        }
    }

    #[test]
    fn zero_generations_records_initial_state() {
        let ds = toy_dataset(20, 12);
        let trace = coevolve(&ds, &small_config(0), &mut rng(10)).unwrap();
        assert_eq!(trace.entries.len(), 1);
        assert_eq!(trace.entries[0].generation, 0);
        let expected = 16 * 8 * 10;
        assert_eq!(trace.entries[0].fitness_pair_evals, expected);
    }

    #[test]
    fn per_generation_pair_budget() {
        let ds = toy_dataset(20, 12);
        let cfg = small_config(3);
        let trace = coevolve(&ds, &cfg, &mut rng(11)).unwrap();
        assert_eq!(trace.entries.len(), 4);
        let lm = (8 * 10) as u64;
        assert_eq!(trace.entries[0].fitness_pair_evals, 16 * lm);
        for e in &trace.entries[1..] {
            assert_eq!(e.fitness_pair_evals, (16 + 4 + 2) * lm);
        }
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let ds = toy_dataset(20, 12);
        let cfg = small_config(3);
        let a = coevolve(&ds, &cfg, &mut rng(12)).unwrap();
        let b = coevolve(&ds, &cfg, &mut rng(12)).unwrap();
        assert_eq!(a.entries.len(), b.entries.len());
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.best_kernel.format(), y.best_kernel.format());
            assert_eq!(x.best_fitness.to_bits(), y.best_fitness.to_bits());
            assert_eq!(x.prototype_subset, y.prototype_subset);
            assert_eq!(x.fitness_case_subset, y.fitness_case_subset);
            assert_eq!(x.train_error.to_bits(), y.train_error.to_bits());
        }
    }

    #[test]
    fn species_sizes_invariant() {
        let ds = toy_dataset(20, 12);
        let trace = coevolve(&ds, &small_config(4), &mut rng(13)).unwrap();
        for e in &trace.entries {
            assert_eq!(e.prototype_subset.len(), 8);
            assert_eq!(e.fitness_case_subset.len(), 10);
        }
    }

    #[test]
    fn comma_selection_replaces_parent() {
        // With rho = 1 and a large pool the offspring are disjoint from the
        // parent, so the comma property is visible from the outside.
        let ds = toy_dataset(30, 20);
        let cfg = CoevoConfig { rho_p: 1.0, rho_s: 1.0, ..small_config(2) };
        let trace = coevolve(&ds, &cfg, &mut rng(14)).unwrap();
        for w in trace.entries.windows(2) {
            assert!(w[1]
                .prototype_subset
                .indices()
                .iter()
                .all(|i| !w[0].prototype_subset.indices().contains(i)));
        }
    }

    #[test]
    fn select_final_rules() {
        let ds = toy_dataset(20, 12);
        let trace = coevolve(&ds, &small_config(3), &mut rng(15)).unwrap();
        let chosen = select_final(&trace);
        for e in &trace.entries {
            assert!(chosen.train_error <= e.train_error);
        }
        // among equal-error entries the chosen one is minimal by
        // (size, generation)
        for e in trace.entries.iter().filter(|e| e.train_error == chosen.train_error) {
            assert!(
                chosen.best_size < e.best_size
                    || (chosen.best_size == e.best_size && chosen.generation <= e.generation)
            );
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let ds = toy_dataset(5, 3);
        // subset larger than the training set
        let cfg = small_config(1);
        assert!(coevolve(&ds, &cfg, &mut rng(16)).is_err());
        // bad rho
        let ds = toy_dataset(20, 12);
        let cfg = CoevoConfig { rho_p: 0.0, ..small_config(1) };
        assert!(coevolve(&ds, &cfg, &mut rng(17)).is_err());
    }
}
