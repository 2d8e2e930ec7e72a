//! Exact multiple-choice knapsack solver.
//!
//! Neurons are processed in order while a Pareto front of partial
//! assignments is kept: a partial assignment is discarded only when another
//! one is no worse in cost and weight and stays at least as good under every
//! completion, including the final tie-break (lower weight, then the
//! lexicographically smallest code vector). Partial assignments whose cost
//! plus an LP-relaxation bound on the remaining neurons cannot beat a greedy
//! incumbent are pruned as well.
//!
//! Costs and weights are accumulated in neuron order, exactly as
//! [`AssignmentInstance::evaluate`] does, so results compare bit-for-bit with
//! the exhaustive search. Because rounded addition is monotone, `a <= b`
//! implies `a + x <= b + x`; strict dominance without the lexicographic
//! argument is only used with a margin that no chain of roundings can close.

use std::cmp::Ordering;

use super::instance::{AssignmentInstance, VoltageAssignment};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug)]
struct Segment<T> {
    neuron: usize,
    dw: T,
    /// Cost reduction per unit weight.
    rate: T,
}

/// Lower convex hull of one neuron's options, walked from weight 0.
fn hull<T: Real>(cost: &[T], weight: &[T]) -> (usize, Vec<(usize, T, T)>) {
    let mut start = 0;
    for i in 1..cost.len() {
        let better =
            weight[i] < weight[start] || (weight[i] == weight[start] && cost[i] < cost[start]);
        if better {
            start = i;
        }
    }
    let mut cur = start;
    let mut steps = Vec::new();
    loop {
        let mut best: Option<(usize, T)> = None;
        for i in 0..cost.len() {
            if weight[i] > weight[cur] && cost[i] < cost[cur] {
                let rate = (cost[cur] - cost[i]) / (weight[i] - weight[cur]);
                let take = match best {
                    None => true,
                    Some((b, r)) => rate > r || (rate == r && weight[i] > weight[b]),
                };
                if take {
                    best = Some((i, rate));
                }
            }
        }
        match best {
            Some((i, rate)) => {
                steps.push((i, weight[i] - weight[cur], rate));
                cur = i;
            }
            None => break,
        }
    }
    (start, steps)
}

/// LP-relaxation lower bound on the cost of neurons `i..` for any capacity.
struct SuffixBound<T> {
    base: Vec<T>,
    /// Per suffix: cumulative weight and cumulative reduction over segments
    /// sorted by decreasing rate, plus the rates.
    cum_w: Vec<Vec<T>>,
    cum_r: Vec<Vec<T>>,
    rates: Vec<Vec<T>>,
}

impl<T: Real> SuffixBound<T> {
    fn new(starts: &[usize], segs: &[Vec<Segment<T>>], cost: &[Vec<T>]) -> Self {
        let n = starts.len();
        let mut base = vec![T::zero(); n + 1];
        for i in (0..n).rev() {
            base[i] = base[i + 1] + cost[i][starts[i]];
        }
        let mut cum_w = Vec::with_capacity(n + 1);
        let mut cum_r = Vec::with_capacity(n + 1);
        let mut rates = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let mut all: Vec<Segment<T>> = segs[i..].iter().flatten().copied().collect();
            all.sort_by(|a, b| b.rate.partial_cmp(&a.rate).unwrap_or(Ordering::Equal));
            let mut w = T::zero();
            let mut r = T::zero();
            let (mut cw, mut cr, mut rt) = (vec![T::zero()], vec![T::zero()], Vec::new());
            for s in all {
                w += s.dw;
                r += s.dw * s.rate;
                cw.push(w);
                cr.push(r);
                rt.push(s.rate);
            }
            cum_w.push(cw);
            cum_r.push(cr);
            rates.push(rt);
        }
        Self {
            base,
            cum_w,
            cum_r,
            rates,
        }
    }

    fn bound(&self, i: usize, capacity: T) -> T {
        let cw = &self.cum_w[i];
        let cr = &self.cum_r[i];
        // number of whole segments that fit
        let p = cw.partition_point(|&w| w <= capacity) - 1;
        let mut reduction = cr[p];
        if p + 1 < cw.len() {
            reduction += (capacity - cw[p]) * self.rates[i][p];
        }
        self.base[i] - reduction
    }
}

#[derive(Clone, Copy, Debug)]
struct State<T> {
    c: T,
    w: T,
    parent: u32,
    code: u32,
}

/// Fenwick tree answering "minimum weight among inserted ranks < r".
struct MinTree<T> {
    tree: Vec<T>,
}

impl<T: Real> MinTree<T> {
    fn new(n: usize) -> Self {
        Self {
            tree: vec![T::infinity(); n + 1],
        }
    }

    fn insert(&mut self, rank: usize, w: T) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            if w < self.tree[i] {
                self.tree[i] = w;
            }
            i += i & i.wrapping_neg();
        }
    }

    fn min_below(&self, rank: usize) -> T {
        let mut i = rank;
        let mut m = T::infinity();
        while i > 0 {
            if self.tree[i] < m {
                m = self.tree[i];
            }
            i -= i & i.wrapping_neg();
        }
        m
    }
}

fn cmp_key<T: Real>(a: &State<T>, ra: usize, b: &State<T>, rb: usize) -> Ordering {
    a.c.partial_cmp(&b.c)
        .unwrap_or(Ordering::Equal)
        .then(a.w.partial_cmp(&b.w).unwrap_or(Ordering::Equal))
        .then(ra.cmp(&rb))
}

/// Drop candidates dominated under every completion. `cands` is in
/// lexicographic order; the survivors keep that order.
fn pareto_filter<T: Real>(cands: Vec<State<T>>, mc: T, mw: T) -> Vec<State<T>> {
    let n = cands.len();
    if n <= 1 {
        return cands;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp_key(&cands[a], a, &cands[b], b));
    let mut keep = vec![false; n];
    let mut tree = MinTree::new(n);
    let mut min_w = T::infinity();
    let mut margin_ptr = 0;
    let mut margin_min_w = T::infinity();
    for &b in &order {
        let s = &cands[b];
        while margin_ptr < n && cands[order[margin_ptr]].c < s.c - mc {
            margin_min_w = margin_min_w.min(cands[order[margin_ptr]].w);
            margin_ptr += 1;
        }
        let dominated = min_w < s.w - mw || margin_min_w <= s.w || tree.min_below(b) <= s.w;
        keep[b] = !dominated;
        min_w = min_w.min(s.w);
        tree.insert(b, s.w);
    }
    cands
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect()
}

/// Exact optimum: minimum total cost within the budget, ties broken by lower
/// total weight and then the lexicographically smallest code vector (lowest
/// voltage on the lowest neuron id first).
pub fn solve_assignment<T: Real>(inst: &AssignmentInstance<T>) -> VoltageAssignment<T> {
    let n = inst.neuron_count();
    if n == 0 {
        return inst.assignment(Vec::new()).expect("empty assignment");
    }
    let levels = inst.levels().len();
    let budget = inst.budget();
    let cost = inst.costs();
    let weight = inst.weights();

    let mut starts = Vec::with_capacity(n);
    let mut segs: Vec<Vec<Segment<T>>> = Vec::with_capacity(n + 1);
    let mut hull_points = Vec::with_capacity(n);
    for j in 0..n {
        let (s, steps) = hull(&cost[j], &weight[j]);
        starts.push(s);
        segs.push(
            steps
                .iter()
                .map(|&(_, dw, rate)| Segment {
                    neuron: j,
                    dw,
                    rate,
                })
                .collect(),
        );
        hull_points.push(steps.iter().map(|&(i, _, _)| i).collect::<Vec<_>>());
    }
    segs.push(Vec::new());
    let bound = SuffixBound::new(&starts, &segs, cost);

    // greedy incumbent: follow hull segments by decreasing rate while they fit
    let mut greedy: Vec<u32> = starts.iter().map(|&s| s as u32).collect();
    {
        let mut all: Vec<Segment<T>> = segs.iter().flatten().copied().collect();
        all.sort_by(|a, b| b.rate.partial_cmp(&a.rate).unwrap_or(Ordering::Equal));
        let mut step = vec![0usize; n];
        let mut used = T::zero();
        for s in all {
            if used + s.dw > budget {
                break;
            }
            used += s.dw;
            greedy[s.neuron] = hull_points[s.neuron][step[s.neuron]] as u32;
            step[s.neuron] += 1;
        }
    }
    let (mut inc_c, inc_w) = inst.evaluate(&greedy).expect("valid codes");
    if inc_w > budget {
        greedy = starts.iter().map(|&s| s as u32).collect();
        inc_c = inst.evaluate(&greedy).expect("valid codes").0;
    }

    let eps = T::epsilon();
    let steps_margin = T::lit(2.0 * (n as f64 + 2.0));
    let scale_c: T = cost
        .iter()
        .map(|c| c.iter().fold(T::zero(), |m, &x| m.max(x.abs())))
        .sum();
    let scale_w: T = weight
        .iter()
        .map(|w| w.iter().fold(T::zero(), |m, &x| m.max(x)))
        .sum();
    let mc = steps_margin * eps * scale_c;
    let mw = steps_margin * eps * scale_w;
    let slack = T::lit(1e-9) * (scale_c + T::one()) + mc;

    let mut generations: Vec<Vec<State<T>>> = Vec::with_capacity(n);
    let mut front = vec![State {
        c: T::zero(),
        w: T::zero(),
        parent: 0,
        code: 0,
    }];
    for j in 0..n {
        let mut cands = Vec::with_capacity(front.len() * levels);
        for (pi, s) in front.iter().enumerate() {
            for code in 0..levels {
                let c = s.c + cost[j][code];
                let w = s.w + weight[j][code];
                if w > budget {
                    continue;
                }
                if c + bound.bound(j + 1, budget - w) > inc_c + slack {
                    continue;
                }
                cands.push(State {
                    c,
                    w,
                    parent: pi as u32,
                    code: code as u32,
                });
            }
        }
        front = pareto_filter(cands, mc, mw);
        generations.push(front.clone());
    }

    let mut best = 0;
    for i in 1..front.len() {
        if cmp_key(&front[i], i, &front[best], best) == Ordering::Less {
            best = i;
        }
    }
    let codes = if front.is_empty() {
        // unreachable for valid instances: the incumbent itself survives
        greedy
    } else {
        let mut codes = vec![0u32; n];
        let mut idx = best;
        for j in (0..n).rev() {
            let s = generations[j][idx];
            codes[j] = s.code;
            idx = s.parent as usize;
        }
        codes
    };
    inst.assignment(codes).expect("valid codes")
}
