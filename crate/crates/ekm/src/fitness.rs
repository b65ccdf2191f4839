//! Kernel-induced dissimilarity, margin ranks, the margin fitness function,
//! and kernel nearest-neighbor classification.
//!
//! The dissimilarity behind everything here is
//! `d_K(x, x')^2 = K(x,x) + K(x',x') - 2 K(x,x')`. Since evolved kernels
//! need not be positive semi-definite the value may be negative; only its
//! ordering matters, and negative values sort as-is.
//!
//! All functions are pure; case-level work inside [`fitness`] may run
//! concurrently as long as the per-case deltas are reduced in index order
//! (they are integers, so the sum is exact either way).

use crate::data::LabeledExample;
use crate::kernel::KernelExpr;

/// Margin bookkeeping for one example against a prototype set: the rank of
/// the nearest same-class prototype, the rank of the nearest other-class
/// prototype, and their difference.
///
/// When a class is missing from the prototype set the corresponding rank is
/// the sentinel `len + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarginRecord {
    pub p_rank: usize,
    pub n_rank: usize,
    pub delta: i64,
}

/// Signed squared dissimilarity `K(x,x) + K(y,y) - 2 K(x,y)`.
///
/// Exactly zero when `x == y`: the two self terms are the same computation
/// and cancel bit-for-bit against the doubled cross term.
pub fn dissimilarity_sq(
    kernel: &KernelExpr,
    x: &[f64],
    y: &[f64],
) -> Result<f64, crate::EkmError> {
    let kxx = kernel.eval(x, x)?;
    let kyy = kernel.eval(y, y)?;
    let kxy = kernel.eval(x, y)?;
    Ok((kxx + kyy) - 2.0 * kxy)
}

#[inline]
fn d2_with_selfs(kernel: &KernelExpr, e_self: f64, e: &[f64], p_self: f64, p: &[f64]) -> f64 {
    (e_self + p_self) - 2.0 * kernel.eval_unchecked(e, p)
}

/// Numeric comparison of dissimilarities. IEEE equality makes -0.0 equal to
/// 0.0, so such pairs fall through to the source-index tie-break exactly
/// like any other tie (total ordering would instead smuggle the sign bit
/// into the ranking). Kernel evaluation is total, so NaN cannot appear.
#[inline]
pub(crate) fn cmp_d2(a: f64, b: f64) -> std::cmp::Ordering {
    a.partial_cmp(&b).expect("dissimilarities are finite")
}

fn self_kernels(kernel: &KernelExpr, examples: &[LabeledExample]) -> Vec<f64> {
    examples
        .iter()
        .map(|e| kernel.eval_unchecked(&e.features, &e.features))
        .collect()
}

/// Core of [`margin`]: ranks are computed without sorting, by counting how
/// many prototypes are strictly closer (key `(d^2, source_index)`) than the
/// nearest prototype of each side. Returns the record plus the number of
/// (prototype, case) kernel-pair evaluations, which is always the full
/// prototype count: an excluded self pair is still evaluated, then skipped
/// in the ranking.
fn margin_inner(
    kernel: &KernelExpr,
    prototypes: &[LabeledExample],
    proto_selfs: &[f64],
    e: &LabeledExample,
) -> (MarginRecord, u64) {
    let len = prototypes.len();
    let e_self = kernel.eval_unchecked(&e.features, &e.features);
    let mut d2 = Vec::with_capacity(len);
    for (p, &p_self) in prototypes.iter().zip(proto_selfs) {
        d2.push(d2_with_selfs(kernel, e_self, &e.features, p_self, &p.features));
    }

    let mut best_same: Option<(f64, usize)> = None;
    let mut best_other: Option<(f64, usize)> = None;
    for (p, &d) in prototypes.iter().zip(&d2) {
        if p.source_index == e.source_index {
            continue;
        }
        let key = (d, p.source_index);
        let slot = if p.label == e.label { &mut best_same } else { &mut best_other };
        let closer = match slot {
            Some(cur) => key.0 < cur.0 || (key.0 == cur.0 && key.1 < cur.1),
            None => true,
        };
        if closer {
            *slot = Some(key);
        }
    }

    let rank_of = |target: Option<(f64, usize)>| -> usize {
        match target {
            None => len + 1,
            Some(t) => {
                let mut rank = 1;
                for (p, &d) in prototypes.iter().zip(&d2) {
                    if p.source_index == e.source_index {
                        continue;
                    }
                    if d < t.0 || (d == t.0 && p.source_index < t.1) {
                        rank += 1;
                    }
                }
                rank
            }
        }
    };

    let p_rank = rank_of(best_same);
    let n_rank = rank_of(best_other);
    let record =
        MarginRecord { p_rank, n_rank, delta: n_rank as i64 - p_rank as i64 };
    (record, len as u64)
}

/// Margin ranks of example `e` against a prototype set.
///
/// Prototypes are ranked by ascending `(d^2, source_index)`; `p_rank` is the
/// position of the first prototype sharing `e`'s class, `n_rank` the first
/// of any other class. A prototype with `e`'s own `source_index` is skipped.
pub fn margin(
    kernel: &KernelExpr,
    prototypes: &[LabeledExample],
    e: &LabeledExample,
) -> MarginRecord {
    assert!(!prototypes.is_empty(), "margin needs at least one prototype");
    let proto_selfs = self_kernels(kernel, prototypes);
    margin_inner(kernel, prototypes, &proto_selfs, e).0
}

/// Margin fitness: the mean margin over the fitness cases, minus the
/// prototype count. Higher is better; with both classes present in the
/// prototype set the value lies in `[1 - 2l, -1]`.
pub fn fitness(
    kernel: &KernelExpr,
    prototypes: &[LabeledExample],
    cases: &[LabeledExample],
) -> f64 {
    fitness_counted(kernel, prototypes, cases).0
}

/// [`fitness`] plus the number of (prototype, case) kernel-pair
/// evaluations, which is exactly `prototypes.len() * cases.len()`.
pub(crate) fn fitness_counted(
    kernel: &KernelExpr,
    prototypes: &[LabeledExample],
    cases: &[LabeledExample],
) -> (f64, u64) {
    assert!(prototypes.len() >= 2, "fitness needs at least two prototypes");
    assert!(!cases.is_empty(), "fitness needs at least one case");
    let proto_selfs = self_kernels(kernel, prototypes);
    let mut delta_sum: i64 = 0;
    let mut pairs: u64 = 0;
    for e in cases {
        let (record, n) = margin_inner(kernel, prototypes, &proto_selfs, e);
        delta_sum += record.delta;
        pairs += n;
    }
    let value = delta_sum as f64 / cases.len() as f64 - prototypes.len() as f64;
    (value, pairs)
}

/// The k nearest prototypes of `x` by `(d^2, source_index)`, as indices
/// into `prototypes`, ascending. `exclude` drops prototypes carrying that
/// source index (an example never serves as its own neighbor).
fn nearest_indices(
    kernel: &KernelExpr,
    prototypes: &[LabeledExample],
    proto_selfs: &[f64],
    x: &[f64],
    x_self: f64,
    k: usize,
    exclude: Option<usize>,
) -> Vec<usize> {
    let mut order: Vec<(f64, usize, usize)> = prototypes
        .iter()
        .zip(proto_selfs)
        .enumerate()
        .filter(|(_, (p, _))| exclude != Some(p.source_index))
        .map(|(i, (p, &p_self))| {
            (d2_with_selfs(kernel, x_self, x, p_self, &p.features), p.source_index, i)
        })
        .collect();
    order.sort_unstable_by(|a, b| cmp_d2(a.0, b.0).then(a.1.cmp(&b.1)));
    order.truncate(k);
    order.into_iter().map(|(_, _, i)| i).collect()
}

/// Majority vote over already-ranked neighbor indices; a tied vote falls
/// back to the class of the single nearest prototype.
pub(crate) fn vote(prototypes: &[LabeledExample], ranked: &[usize]) -> usize {
    debug_assert!(!ranked.is_empty());
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for &i in ranked {
        let label = prototypes[i].label;
        match counts.iter_mut().find(|(l, _)| *l == label) {
            Some((_, c)) => *c += 1,
            None => counts.push((label, 1)),
        }
    }
    let top = counts.iter().map(|&(_, c)| c).max().unwrap();
    let tied: Vec<usize> =
        counts.iter().filter(|&&(_, c)| c == top).map(|&(l, _)| l).collect();
    if tied.len() == 1 {
        tied[0]
    } else {
        prototypes[ranked[0]].label
    }
}

/// Kernel-NN classification of a raw point: majority class among the `k`
/// prototypes of smallest dissimilarity. `k` must be odd and at most the
/// prototype count.
pub fn classify_nn(
    kernel: &KernelExpr,
    prototypes: &[LabeledExample],
    x: &[f64],
    k: usize,
) -> usize {
    assert!(k >= 1 && k % 2 == 1, "k must be a positive odd integer");
    assert!(k <= prototypes.len(), "k exceeds the prototype count");
    let proto_selfs = self_kernels(kernel, prototypes);
    let x_self = kernel.eval_unchecked(x, x);
    let ranked = nearest_indices(kernel, prototypes, &proto_selfs, x, x_self, k, None);
    vote(prototypes, &ranked)
}

/// Fraction of `eval_set` misclassified by kernel-NN. An example whose
/// `source_index` appears among the prototypes is excluded from its own
/// neighbor list.
pub fn error_rate(
    kernel: &KernelExpr,
    prototypes: &[LabeledExample],
    eval_set: &[LabeledExample],
    k: usize,
) -> f64 {
    assert!(!eval_set.is_empty(), "error_rate needs a nonempty evaluation set");
    assert!(k >= 1 && k % 2 == 1, "k must be a positive odd integer");
    let proto_selfs = self_kernels(kernel, prototypes);
    let errors = eval_set
        .iter()
        .filter(|e| misclassified(kernel, prototypes, &proto_selfs, e, k))
        .count();
    errors as f64 / eval_set.len() as f64
}

/// [`error_rate`] with the per-example checks fanned out over threads. The
/// error count is a sum of 0/1 flags from pure evaluations, so the result
/// is bitwise identical to the sequential version.
pub(crate) fn error_rate_par(
    kernel: &KernelExpr,
    prototypes: &[LabeledExample],
    eval_set: &[LabeledExample],
    k: usize,
) -> f64 {
    use rayon::prelude::*;
    assert!(!eval_set.is_empty(), "error_rate needs a nonempty evaluation set");
    let proto_selfs = self_kernels(kernel, prototypes);
    let errors = eval_set
        .par_iter()
        .filter(|e| misclassified(kernel, prototypes, &proto_selfs, e, k))
        .count();
    errors as f64 / eval_set.len() as f64
}

fn misclassified(
    kernel: &KernelExpr,
    prototypes: &[LabeledExample],
    proto_selfs: &[f64],
    e: &LabeledExample,
    k: usize,
) -> bool {
    let e_self = kernel.eval_unchecked(&e.features, &e.features);
    let ranked = nearest_indices(
        kernel,
        prototypes,
        proto_selfs,
        &e.features,
        e_self,
        k,
        Some(e.source_index),
    );
    debug_assert!(!ranked.is_empty(), "no prototypes left after self-exclusion");
    vote(prototypes, &ranked) != e.label
}
