//! The system on a finite reversed `m`-ary tree.
//!
//! Leaves of the depth-`n` tree rooted at `e_n` are numbered `0..m^n`. A
//! vertex at level `l` is `(l, index)`; its `m` inputs are
//! `(l - 1, index * m + j)`, and the level-`l` descendant of leaf `v` is
//! `(l, v / m^l)`. The base-`m` digits of the leaf number spell the path from
//! the root, so `e_n` is `(n, 0)`.
//!
//! Leaf `v` carries `X*(v) >= 1` and a bit `U(v)`, with `X(v) = X*(v) U(v)`;
//! every other vertex holds `(sum of inputs - 1)^+`.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::ExactDist;
use crate::error::{Error, Result};
use crate::model::StarLaw;
use crate::polymode::RationalPoly;
use crate::rational::{factorial, rat_int};

/// Largest tree handled: leaf sets are 64-bit masks.
pub const MAX_LEAVES: usize = 64;
/// Largest `|A|` for the `2^|A|`-term sums.
pub const MAX_NABLA_SET: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Vertex {
    pub level: u32,
    pub index: u64,
}

impl Vertex {
    pub fn new(level: u32, index: u64) -> Self {
        Vertex { level, index }
    }
}

/// Shape of the tree `T^{e_n}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeIndex {
    m: u32,
    n: u32,
}

impl TreeIndex {
    pub fn new(m: u32, n: u32) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "m = {m} but m >= 2 is required"
            )));
        }
        let leaves = (m as u128).checked_pow(n).unwrap_or(u128::MAX);
        if leaves > MAX_LEAVES as u128 {
            return Err(Error::BudgetExceeded(format!(
                "m^n = {leaves} leaves, at most {MAX_LEAVES} supported"
            )));
        }
        Ok(TreeIndex { m, n })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn root(&self) -> Vertex {
        Vertex::new(self.n, 0)
    }

    /// Number of vertices at `level`, `m^(n - level)`.
    pub fn level_len(&self, level: u32) -> usize {
        (self.m as usize).pow(self.n - level)
    }

    pub fn leaf_count(&self) -> usize {
        self.level_len(0)
    }

    /// The `m` inputs of a non-leaf vertex.
    pub fn inputs(&self, v: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        debug_assert!(v.level >= 1);
        let m = self.m as u64;
        (0..m).map(move |j| Vertex::new(v.level - 1, v.index * m + j))
    }

    /// Descendant of leaf `leaf` at `level`.
    pub fn descendant(&self, leaf: u64, level: u32) -> Vertex {
        Vertex::new(level, leaf / (self.m as u64).pow(level))
    }

    /// Path digits `d_1 .. d_{n-l}` in `1..=m`, read from the root down.
    pub fn digits(&self, v: Vertex) -> Vec<u32> {
        let mut out = Vec::with_capacity((self.n - v.level) as usize);
        let mut idx = v.index;
        for _ in v.level..self.n {
            out.push((idx % self.m as u64) as u32 + 1);
            idx /= self.m as u64;
        }
        out.reverse();
        out
    }

    /// Leaves of the subtree `T_0^v`.
    pub fn leaves_under(&self, v: Vertex) -> LeafSet {
        let width = (self.m as u64).pow(v.level);
        LeafSet::from_leaves(v.index * width..(v.index + 1) * width)
    }

    pub fn all_leaves(&self) -> LeafSet {
        self.leaves_under(self.root())
    }
}

/// A set of leaves, as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, PartialOrd, Ord)]
pub struct LeafSet(pub u64);

impl LeafSet {
    pub fn empty() -> Self {
        LeafSet(0)
    }

    pub fn from_leaves(leaves: impl IntoIterator<Item = u64>) -> Self {
        LeafSet(leaves.into_iter().fold(0, |acc, l| acc | (1u64 << l)))
    }

    pub fn contains(&self, leaf: u64) -> bool {
        self.0 >> leaf & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(&self, other: &LeafSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersect(&self, other: &LeafSet) -> LeafSet {
        LeafSet(self.0 & other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> {
        let bits = self.0;
        (0..64).filter(move |&i| bits >> i & 1 == 1)
    }

    /// All subsets, the empty set first.
    pub fn subsets(&self) -> impl Iterator<Item = LeafSet> {
        let full = self.0;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full {
                None
            } else {
                Some((cur.wrapping_sub(full)) & full)
            };
            Some(LeafSet(cur))
        })
    }
}

/// `(X*(v), U(v))` for every leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafAssignment {
    pub x_star: Vec<u32>,
    pub u: Vec<bool>,
}

impl LeafAssignment {
    pub fn new(x_star: Vec<u32>, u: Vec<bool>) -> Result<Self> {
        if x_star.len() != u.len() {
            return Err(Error::InvalidArgument(
                "x_star and u have different lengths".into(),
            ));
        }
        if x_star.contains(&0) {
            return Err(Error::InvalidArgument("x_star must be positive".into()));
        }
        Ok(LeafAssignment { x_star, u })
    }

    /// Leaves with `U = 1` carrying the given values; a value of 0 becomes
    /// `X* = 1, U = 0`.
    pub fn from_values(values: &[u32]) -> Self {
        LeafAssignment {
            x_star: values.iter().map(|&x| x.max(1)).collect(),
            u: values.iter().map(|&x| x > 0).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.x_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_star.is_empty()
    }

    /// `X(v) = X*(v) U(v)`.
    pub fn value(&self, leaf: usize) -> u64 {
        if self.u[leaf] {
            self.x_star[leaf] as u64
        } else {
            0
        }
    }
}

/// Values at every vertex, level by level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeValues {
    levels: Vec<Vec<u64>>,
}

impl TreeValues {
    pub fn root(&self) -> u64 {
        self.levels.last().expect("nonempty")[0]
    }

    pub fn value(&self, v: Vertex) -> u64 {
        self.levels[v.level as usize][v.index as usize]
    }

    pub fn level(&self, level: u32) -> &[u64] {
        &self.levels[level as usize]
    }

    pub fn levels(&self) -> &[Vec<u64>] {
        &self.levels
    }
}

fn evaluate(tree: &TreeIndex, leaves: Vec<u64>) -> TreeValues {
    let m = tree.m as usize;
    let mut levels = vec![leaves];
    for _ in 0..tree.n {
        let prev = levels.last().expect("nonempty");
        let next = prev
            .chunks(m)
            .map(|c| c.iter().sum::<u64>().saturating_sub(1))
            .collect();
        levels.push(next);
    }
    TreeValues { levels }
}

fn check_complete(tree: &TreeIndex, a: &LeafAssignment) -> Result<()> {
    if a.len() != tree.leaf_count() {
        return Err(Error::InvalidArgument(format!(
            "assignment covers {} leaves, tree has {}",
            a.len(),
            tree.leaf_count()
        )));
    }
    Ok(())
}

/// `X` at every vertex.
pub fn eval_tree(tree: &TreeIndex, a: &LeafAssignment) -> Result<TreeValues> {
    theta(tree, a, LeafSet::empty())
}

/// `Theta^A X`: leaves in `A` take `X*` whatever `U` is.
pub fn theta(tree: &TreeIndex, a: &LeafAssignment, set: LeafSet) -> Result<TreeValues> {
    check_complete(tree, a)?;
    if set.0 >> tree.leaf_count() != 0 && tree.leaf_count() < 64 {
        return Err(Error::InvalidArgument(
            "A contains a leaf outside the tree".into(),
        ));
    }
    let leaves = (0..a.len())
        .map(|v| {
            if set.contains(v as u64) {
                a.x_star[v] as u64
            } else {
                a.value(v)
            }
        })
        .collect();
    Ok(evaluate(tree, leaves))
}

/// `nabla^A f(X) = sum over B in A of (-1)^(|A|-|B|) f(Theta^B X)`.
pub fn nabla<F>(tree: &TreeIndex, a: &LeafAssignment, set: LeafSet, f: F) -> Result<i64>
where
    F: Fn(&TreeValues) -> i64,
{
    if set.len() > MAX_NABLA_SET {
        return Err(Error::BudgetExceeded(format!(
            "|A| = {} exceeds {MAX_NABLA_SET}",
            set.len()
        )));
    }
    let mut acc = 0;
    for b in set.subsets() {
        let sign = if (set.len() - b.len()).is_multiple_of(2) {
            1
        } else {
            -1
        };
        acc += sign * f(&theta(tree, a, b)?);
    }
    Ok(acc)
}

/// Indicator of `X(e_n) = i`.
pub fn root_equals(i: u64) -> impl Fn(&TreeValues) -> i64 {
    move |t| i64::from(t.root() == i)
}

/// Indicator of `X(v) = x_v` at every leaf.
pub fn leaves_equal(target: &[u32]) -> impl Fn(&TreeValues) -> i64 + '_ {
    move |t| i64::from(t.level(0).iter().zip(target).all(|(&x, &y)| x == y as u64))
}

/// The sets `O_{u,A}` (descendants of `A` strictly above the leaves, up to
/// `u`) and `L_{u,A}` (inputs of `O` outside `O` and `A`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PivotalSet {
    pub u: Vertex,
    pub a: LeafSet,
    pub o: BTreeSet<Vertex>,
    pub l: BTreeSet<Vertex>,
}

impl PivotalSet {
    pub fn new(tree: &TreeIndex, u: Vertex, a: LeafSet) -> Result<Self> {
        if !a.is_subset(&tree.leaves_under(u)) {
            return Err(Error::InvalidArgument(
                "A must lie in the leaves under u".into(),
            ));
        }
        let o: BTreeSet<Vertex> = a
            .iter()
            .flat_map(|leaf| (1..=u.level).map(move |i| tree.descendant(leaf, i)))
            .collect();
        let l = o
            .iter()
            .flat_map(|&v| tree.inputs(v))
            .filter(|w| !o.contains(w) && !(w.level == 0 && a.contains(w.index)))
            .collect();
        Ok(PivotalSet { u, a, o, l })
    }

    /// `|L cap T_i|` for each level `i`.
    pub fn l_level_counts(&self) -> BTreeMap<u32, usize> {
        let mut out = BTreeMap::new();
        for v in &self.l {
            *out.entry(v.level).or_insert(0) += 1;
        }
        out
    }

    /// Vertices of the smallest subtree holding `A` and `u`, computed
    /// independently of `O`.
    pub fn spanning_subtree(tree: &TreeIndex, u: Vertex, a: LeafSet) -> BTreeSet<Vertex> {
        let mut out = BTreeSet::new();
        for leaf in a.iter() {
            for level in 0..=u.level {
                out.insert(tree.descendant(leaf, level));
            }
        }
        if a.is_empty() {
            out.insert(u);
        }
        out
    }
}

fn star_masses(star: &StarLaw) -> Result<BTreeMap<u32, BigRational>> {
    star.validate()?;
    star.exact_masses()
        .ok_or_else(|| Error::NotExact("tree checks need a finite exact star law".into()))
}

fn check_p(p: &BigRational) -> Result<()> {
    if p.is_negative() || *p > BigRational::one() {
        return Err(Error::InvalidArgument("p must lie in [0, 1]".into()));
    }
    Ok(())
}

/// `P(X(v) = x)` for one leaf.
fn leaf_prob(star: &BTreeMap<u32, BigRational>, p: &BigRational, x: u32) -> BigRational {
    if x == 0 {
        BigRational::one() - p
    } else {
        star.get(&x).map_or_else(BigRational::zero, |w| w * p)
    }
}

/// Same as a polynomial in `p`.
fn leaf_poly(star: &BTreeMap<u32, BigRational>, x: u32) -> RationalPoly {
    if x == 0 {
        RationalPoly::linear(BigRational::one(), -BigRational::one())
    } else {
        let w = star.get(&x).cloned().unwrap_or_default();
        RationalPoly::linear(BigRational::zero(), w)
    }
}

/// Iterates over `k`-subsets of `0..n` as bitmasks, calling `f` on each.
fn for_each_k_subset(n: usize, k: usize, mut f: impl FnMut(LeafSet) -> Result<()>) -> Result<()> {
    fn rec(
        start: usize,
        n: usize,
        k: usize,
        acc: u64,
        f: &mut dyn FnMut(LeafSet) -> Result<()>,
    ) -> Result<()> {
        if k == 0 {
            return f(LeafSet(acc));
        }
        for i in start..=n - k {
            rec(i + 1, n, k - 1, acc | (1 << i), f)?;
        }
        Ok(())
    }
    if k > n {
        return Ok(());
    }
    rec(0, n, k, 0, &mut f)
}

/// Two sides of the leaf-level derivative formula for one target vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafDerivativeRow {
    pub target: Vec<u32>,
    pub lhs: BigRational,
    pub rhs: BigRational,
    pub equal: bool,
}

/// `d^k/dp^k P(X(v) = x_v for all leaves)` against
/// `k!/(1-p)^k sum_{|A|=k} E(1{X|_A = 0} nabla^A 1{X(v) = x_v for all v})`.
///
/// The left side differentiates the product of per-leaf polynomials. The
/// right side enumerates `X*` on `A` (where `U = 0`) and takes the remaining
/// leaves at their target values, the only configurations where the
/// indicator can be nonzero for some `B`.
pub fn leaf_derivative_check(
    tree: &TreeIndex,
    k: usize,
    star: &StarLaw,
    p: &BigRational,
    target: &[u32],
) -> Result<LeafDerivativeRow> {
    let masses = star_masses(star)?;
    check_p(p)?;
    if p.is_one() {
        return Err(Error::Precondition(
            "the formula divides by (1 - p)^k; need p < 1".into(),
        ));
    }
    let leaves = tree.leaf_count();
    if target.len() != leaves {
        return Err(Error::InvalidArgument(format!(
            "target has {} entries, tree has {leaves} leaves",
            target.len()
        )));
    }
    if k > MAX_NABLA_SET {
        return Err(Error::BudgetExceeded(format!(
            "k = {k} exceeds {MAX_NABLA_SET}"
        )));
    }

    let poly = target
        .iter()
        .fold(RationalPoly::constant(BigRational::one()), |acc, &x| {
            acc.mul(&leaf_poly(&masses, x))
        });
    let lhs = poly.derivative(k).eval(p);

    let support: Vec<(u32, BigRational)> = masses.iter().map(|(&x, w)| (x, w.clone())).collect();
    let pred = leaves_equal(target);
    let q = BigRational::one() - p;
    let outside_prob = |a: LeafSet| -> BigRational {
        (0..leaves as u64)
            .filter(|v| !a.contains(*v))
            .map(|v| leaf_prob(&masses, p, target[v as usize]))
            .product()
    };
    let mut sum = BigRational::zero();
    for_each_k_subset(leaves, k, |a| {
        let rest = outside_prob(a);
        if rest.is_zero() {
            return Ok(());
        }
        let in_a: Vec<u64> = a.iter().collect();
        // every choice of X* on A, with U = 0 there
        let mut choice = vec![0usize; in_a.len()];
        loop {
            let mut x_star: Vec<u32> = target.iter().map(|&x| x.max(1)).collect();
            let mut u: Vec<bool> = target.iter().map(|&x| x > 0).collect();
            let mut weight = rest.clone();
            for (slot, &leaf) in in_a.iter().enumerate() {
                let (x, w) = &support[choice[slot]];
                x_star[leaf as usize] = *x;
                u[leaf as usize] = false;
                weight *= &q * w;
            }
            let assign = LeafAssignment { x_star, u };
            let d = nabla(tree, &assign, a, &pred)?;
            if d != 0 {
                sum += weight * rat_int(d);
            }
            // next choice, odometer style
            let mut slot = 0;
            loop {
                if slot == choice.len() {
                    return Ok(());
                }
                choice[slot] += 1;
                if choice[slot] < support.len() {
                    break;
                }
                choice[slot] = 0;
                slot += 1;
            }
        }
    })?;
    let scale =
        BigRational::from_integer(BigInt::from(factorial(k as u64))) / num_traits::pow(q, k);
    let rhs = scale * sum;
    Ok(LeafDerivativeRow {
        target: target.to_vec(),
        equal: lhs == rhs,
        lhs,
        rhs,
    })
}

/// Upper limit on target vectors visited by [`leaf_derivative_sweep`].
pub const MAX_TARGETS: u64 = 100_000;

/// [`leaf_derivative_check`] over every target with entries in
/// `0..=max(n, largest star value)`.
pub fn leaf_derivative_sweep(
    tree: &TreeIndex,
    k: usize,
    star: &StarLaw,
    p: &BigRational,
) -> Result<Vec<LeafDerivativeRow>> {
    let top = tree.n.max(star.max_support());
    let leaves = tree.leaf_count();
    let count = (top as u64 + 1)
        .checked_pow(leaves as u32)
        .unwrap_or(u64::MAX);
    if count > MAX_TARGETS {
        return Err(Error::BudgetExceeded(format!(
            "{count} target vectors, limit {MAX_TARGETS}"
        )));
    }
    let mut rows = Vec::with_capacity(count as usize);
    let mut target = vec![0u32; leaves];
    for _ in 0..count {
        rows.push(leaf_derivative_check(tree, k, star, p, &target)?);
        for e in target.iter_mut() {
            *e += 1;
            if *e <= top {
                break;
            }
            *e = 0;
        }
    }
    Ok(rows)
}

/// Every leaf configuration `(X*, U)` with its probability.
fn configurations(
    tree: &TreeIndex,
    star: &BTreeMap<u32, BigRational>,
    p: &BigRational,
) -> Result<Vec<(LeafAssignment, BigRational)>> {
    let states: Vec<(u32, bool, BigRational)> = star
        .iter()
        .flat_map(|(&x, w)| [(x, false, (BigRational::one() - p) * w), (x, true, p * w)])
        .filter(|s| !s.2.is_zero())
        .collect();
    let leaves = tree.leaf_count();
    let total = (states.len() as u64)
        .checked_pow(leaves as u32)
        .unwrap_or(u64::MAX);
    if total > 1 << 22 {
        return Err(Error::BudgetExceeded(format!(
            "{total} leaf configurations"
        )));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; leaves];
    for _ in 0..total {
        let mut weight = BigRational::one();
        let mut x_star = Vec::with_capacity(leaves);
        let mut u = Vec::with_capacity(leaves);
        for &i in &idx {
            x_star.push(states[i].0);
            u.push(states[i].1);
            weight *= &states[i].2;
        }
        out.push((LeafAssignment { x_star, u }, weight));
        for e in idx.iter_mut() {
            *e += 1;
            if *e < states.len() {
                break;
            }
            *e = 0;
        }
    }
    Ok(out)
}

/// The derivative formula for `P(X_n = 0)` and the bound
/// `|d^k/dp^k P(X_n = 0)| <= 2^k k!/(1-p)^k sum_{|A|=k} P(nabla^A 1{X_n = 0} != 0, X|_A = 0)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroMassDerivativeReport {
    pub derivative: BigRational,
    pub formula: BigRational,
    pub bound: BigRational,
    pub identity_holds: bool,
    pub bound_holds: bool,
}

pub fn zero_mass_derivative_check(
    tree: &TreeIndex,
    k: usize,
    star: &StarLaw,
    p: &BigRational,
) -> Result<ZeroMassDerivativeReport> {
    let masses = star_masses(star)?;
    check_p(p)?;
    if p.is_one() {
        return Err(Error::Precondition("need p < 1".into()));
    }
    // d^k/dp^k P(X_n = 0) from the polynomial law of the root
    let pd = crate::polymode::poly_initial(tree.m, star)?;
    let laws = crate::polymode::poly_iterate(
        &pd,
        tree.n as usize,
        &crate::polymode::PolyBudget::default(),
    )?;
    let derivative = crate::polymode::dkdp_p0(&laws[tree.n as usize], k, p);

    let configs = configurations(tree, &masses, p)?;
    let leaves = tree.leaf_count();
    let (mut expect, mut prob_nonzero) = (BigRational::zero(), BigRational::zero());
    for_each_k_subset(leaves, k, |a| {
        for (assign, w) in &configs {
            if a.iter().any(|v| assign.u[v as usize]) {
                continue;
            }
            let d = nabla(tree, assign, a, root_equals(0))?;
            if d != 0 {
                expect += w * rat_int(d);
                prob_nonzero += w;
            }
        }
        Ok(())
    })?;
    let q = BigRational::one() - p;
    let kf = BigRational::from_integer(BigInt::from(factorial(k as u64)));
    let formula = &kf / num_traits::pow(q.clone(), k) * expect;
    let bound = rat_int(1 << k) * kf / num_traits::pow(q, k) * prob_nonzero;
    Ok(ZeroMassDerivativeReport {
        identity_holds: derivative == formula,
        bound_holds: derivative.abs() <= bound,
        derivative,
        formula,
        bound,
    })
}

/// Tallies of the conditional statements checked on configurations where
/// `nabla^A 1{X(e_n) = i} != 0`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PivotalReport {
    pub configurations: u64,
    pub nonzero: u64,
    /// `X(v) <= n + i - |v|` at every vertex.
    pub spine_failures: u64,
    /// `Theta^A X(e_n) >= max(i, 1)`.
    pub theta_failures: u64,
    /// Existence of `x_1..x_m` with `(sum x_j - 1)^+ = i` and each
    /// `nabla^{A_j} 1{X(e_n^(j)) = x_j} != 0`.
    pub split_failures: u64,
    /// `Theta^A X(e_n) = sum_L X + sum_A X* - |O|`.
    pub identity_failures: u64,
}

impl PivotalReport {
    pub fn pass(&self) -> bool {
        self.spine_failures == 0
            && self.theta_failures == 0
            && self.split_failures == 0
            && self.identity_failures == 0
    }

    fn merge(&mut self, o: &PivotalReport) {
        self.configurations += o.configurations;
        self.nonzero += o.nonzero;
        self.spine_failures += o.spine_failures;
        self.theta_failures += o.theta_failures;
        self.split_failures += o.split_failures;
        self.identity_failures += o.identity_failures;
    }
}

/// Checks one `(assignment, A, i)`.
pub fn pivotal_check(
    tree: &TreeIndex,
    a: &LeafAssignment,
    set: LeafSet,
    i: u64,
) -> Result<PivotalReport> {
    if set.is_empty() {
        return Err(Error::Precondition("A must be nonempty".into()));
    }
    let mut r = PivotalReport {
        configurations: 1,
        ..Default::default()
    };
    if nabla(tree, a, set, root_equals(i))? == 0 {
        return Ok(r);
    }
    r.nonzero = 1;
    let x = eval_tree(tree, a)?;
    let n = tree.n as u64;
    let spine_ok = x
        .levels()
        .iter()
        .enumerate()
        .all(|(lvl, vals)| vals.iter().all(|&v| v + lvl as u64 <= n + i));
    r.spine_failures = u64::from(!spine_ok);

    let full = theta(tree, a, set)?;
    r.theta_failures = u64::from(full.root() < i.max(1));

    if tree.n >= 1 {
        let sub = TreeIndex::new(tree.m, tree.n - 1)?;
        let width = sub.leaf_count();
        let mut per_child = Vec::new();
        for j in 0..tree.m as usize {
            let child_set = LeafSet(set.0 >> (j * width) & mask(width));
            let child = LeafAssignment {
                x_star: a.x_star[j * width..(j + 1) * width].to_vec(),
                u: a.u[j * width..(j + 1) * width].to_vec(),
            };
            let top = theta(&sub, &child, child_set)?.root();
            let mut ok = Vec::new();
            for xj in 0..=top {
                if nabla(&sub, &child, child_set, root_equals(xj))? != 0 {
                    ok.push(xj);
                }
            }
            per_child.push(ok);
        }
        r.split_failures = u64::from(!has_split(&per_child, i));
    }

    let piv = PivotalSet::new(tree, tree.root(), set)?;
    let sum_l: u64 = piv.l.iter().map(|&v| x.value(v)).sum();
    let sum_a: u64 = set.iter().map(|v| a.x_star[v as usize] as u64).sum();
    let rhs = (sum_l + sum_a) as i64 - piv.o.len() as i64;
    r.identity_failures = u64::from(full.root() as i64 != rhs);
    Ok(r)
}

fn mask(bits: usize) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

fn has_split(options: &[Vec<u64>], i: u64) -> bool {
    fn rec(options: &[Vec<u64>], acc: u64, i: u64) -> bool {
        match options.split_first() {
            None => acc.saturating_sub(1) == i,
            Some((first, rest)) => first.iter().any(|&x| rec(rest, acc + x, i)),
        }
    }
    rec(options, 0, i)
}

/// Every `(X*, U)` with `X*` in the star support, every nonempty `A`, and
/// every `i` up to `Theta^A X(e_n)`.
pub fn pivotal_exhaustive(tree: &TreeIndex, star: &StarLaw) -> Result<PivotalReport> {
    let masses = star_masses(star)?;
    let configs = configurations(tree, &masses, &crate::rational::ratio(1, 2))?;
    let mut report = PivotalReport::default();
    let all = tree.all_leaves();
    for (assign, _) in &configs {
        for set in all.subsets().skip(1) {
            let top = theta(tree, assign, set)?.root();
            for i in 0..=top {
                report.merge(&pivotal_check(tree, assign, set, i)?);
            }
        }
    }
    Ok(report)
}

/// Random assignments drawn from the initial law with parameter `p`,
/// random nonempty `A` and random `i` in `0..=Theta^A X(e_n)`.
pub fn pivotal_random(
    tree: &TreeIndex,
    star: &StarLaw,
    p: f64,
    trials: u64,
    seed: u64,
) -> Result<PivotalReport> {
    let masses = star_masses(star)?;
    let values: Vec<u32> = masses.keys().copied().collect();
    let weights: Vec<f64> = masses.values().map(crate::rational::to_f64).collect();
    let pick = rand::distributions::WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaves = tree.leaf_count();
    let mut report = PivotalReport::default();
    for _ in 0..trials {
        let x_star: Vec<u32> = (0..leaves).map(|_| values[rng.sample(&pick)]).collect();
        let u: Vec<bool> = (0..leaves).map(|_| rng.gen_bool(p)).collect();
        let assign = LeafAssignment { x_star, u };
        let size = rng.gen_range(1..=leaves.min(MAX_NABLA_SET));
        let chosen = rand::seq::index::sample(&mut rng, leaves, size);
        let set = LeafSet::from_leaves(chosen.iter().map(|v| v as u64));
        let top = theta(tree, &assign, set)?.root();
        let i = rng.gen_range(0..=top);
        report.merge(&pivotal_check(tree, &assign, set, i)?);
    }
    Ok(report)
}

/// `sum_{|A|=k} m^(-|O_{e_n,A}|)` and its bound `m^(k^m) n^((k-1)^+)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchNumberReport {
    pub value: BigRational,
    pub bound: BigRational,
    pub pass: bool,
}

pub const MAX_BRANCH_SUBSETS: u64 = 5_000_000;

pub fn branch_number_sum(m: u32, n: u32, k: usize) -> Result<BranchNumberReport> {
    let tree = TreeIndex::new(m, n)?;
    let leaves = tree.leaf_count();
    let subsets = crate::rational::binomial(leaves as u64, k as u64);
    if subsets > MAX_BRANCH_SUBSETS.into() {
        return Err(Error::BudgetExceeded(format!(
            "{subsets} subsets of size {k}"
        )));
    }
    // tally by |O| and sum once
    let mut by_size: BTreeMap<usize, u64> = BTreeMap::new();
    for_each_k_subset(leaves, k, |a| {
        let o: BTreeSet<Vertex> = a
            .iter()
            .flat_map(|leaf| (1..=n).map(move |i| tree.descendant(leaf, i)))
            .collect();
        *by_size.entry(o.len()).or_insert(0) += 1;
        Ok(())
    })?;
    let mm = BigInt::from(m);
    let value = by_size
        .iter()
        .map(|(&size, &count)| {
            BigRational::new(BigInt::from(count), num_traits::pow(mm.clone(), size))
        })
        .sum();
    let exp = (k as u32).pow(m);
    let bound = BigRational::from_integer(
        num_traits::pow(mm, exp as usize) * num_traits::pow(BigInt::from(n), k.saturating_sub(1)),
    );
    Ok(BranchNumberReport {
        pass: value <= bound,
        value,
        bound,
    })
}

/// Law of `X(e_n)` by summing over leaf values.
pub fn root_law_by_enumeration(
    tree: &TreeIndex,
    star: &StarLaw,
    p: &BigRational,
) -> Result<ExactDist> {
    let masses = star_masses(star)?;
    check_p(p)?;
    let mut states = vec![(0u64, BigRational::one() - p)];
    states.extend(masses.iter().map(|(&x, w)| (x as u64, w * p)));
    states.retain(|s| !s.1.is_zero());
    let leaves = tree.leaf_count();
    let total = (states.len() as u64)
        .checked_pow(leaves as u32)
        .unwrap_or(u64::MAX);
    if total > 1 << 24 {
        return Err(Error::BudgetExceeded(format!(
            "{total} leaf configurations"
        )));
    }
    let mut law: BTreeMap<u64, BigRational> = BTreeMap::new();
    let mut idx = vec![0usize; leaves];
    for _ in 0..total {
        let vals = idx.iter().map(|&i| states[i].0).collect();
        let w: BigRational = idx.iter().map(|&i| states[i].1.clone()).product();
        *law.entry(evaluate(tree, vals).root()).or_default() += w;
        for e in idx.iter_mut() {
            *e += 1;
            if *e < states.len() {
                break;
            }
            *e = 0;
        }
    }
    let top = law.keys().next_back().copied().unwrap_or(0) as usize;
    let mut dense = vec![BigRational::zero(); top + 1];
    for (k, w) in law {
        dense[k as usize] = w;
    }
    ExactDist::from_rationals(&dense)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{iterate, Dist};
    use crate::model::{mix_initial, ModelSpec};
    use crate::rational::ratio;
    use proptest::prelude::*;

    fn t(m: u32, n: u32) -> TreeIndex {
        TreeIndex::new(m, n).unwrap()
    }

    #[test]
    fn addressing() {
        let tr = t(2, 3);
        assert_eq!(tr.leaf_count(), 8);
        assert_eq!(tr.root(), Vertex::new(3, 0));
        let ins: Vec<_> = tr.inputs(Vertex::new(2, 1)).collect();
        assert_eq!(ins, vec![Vertex::new(1, 2), Vertex::new(1, 3)]);
        assert_eq!(tr.descendant(5, 2), Vertex::new(2, 1));
        assert_eq!(tr.digits(Vertex::new(0, 5)), vec![2, 1, 2]);
        assert_eq!(tr.digits(tr.root()), Vec::<u32>::new());
        assert_eq!(
            tr.leaves_under(Vertex::new(1, 2)),
            LeafSet::from_leaves([4, 5])
        );
        assert!(TreeIndex::new(2, 7).is_err());
    }

    #[test]
    fn subsets_enumerate_power_set() {
        let s = LeafSet::from_leaves([1, 4, 6]);
        let subs: Vec<_> = s.subsets().collect();
        assert_eq!(subs.len(), 8);
        assert_eq!(subs[0], LeafSet::empty());
        assert!(subs.iter().all(|b| b.is_subset(&s)));
        assert_eq!(subs.iter().collect::<BTreeSet<_>>().len(), 8);
    }

    #[test]
    fn eval_examples() {
        for (m, n) in [(2, 2), (3, 1)] {
            let tr = t(m, n);
            let a = LeafAssignment::from_values(&vec![0; tr.leaf_count()]);
            assert_eq!(eval_tree(&tr, &a).unwrap().root(), 0);
        }
        assert_eq!(
            eval_tree(&t(2, 1), &LeafAssignment::from_values(&[2, 2]))
                .unwrap()
                .root(),
            3
        );
        assert_eq!(
            eval_tree(&t(2, 2), &LeafAssignment::from_values(&[2, 0, 0, 0]))
                .unwrap()
                .root(),
            0
        );
        assert!(eval_tree(&t(2, 2), &LeafAssignment::from_values(&[2, 0])).is_err());
    }

    #[test]
    fn theta_examples() {
        let tr = t(2, 1);
        let a = LeafAssignment::new(vec![2, 2], vec![false, false]).unwrap();
        assert_eq!(theta(&tr, &a, LeafSet::from_leaves([0])).unwrap().root(), 1);
        assert_eq!(
            theta(&tr, &a, LeafSet::empty()).unwrap(),
            eval_tree(&tr, &a).unwrap()
        );
        let all_on = LeafAssignment::new(vec![3, 1], vec![true, true]).unwrap();
        assert_eq!(
            theta(&tr, &all_on, LeafSet::from_leaves([0, 1])).unwrap(),
            eval_tree(&tr, &all_on).unwrap()
        );
    }

    #[test]
    fn nabla_examples() {
        let tr = t(2, 0);
        let a = LeafAssignment::new(vec![2], vec![false]).unwrap();
        assert_eq!(nabla(&tr, &a, LeafSet::empty(), root_equals(0)).unwrap(), 1);
        assert_eq!(
            nabla(&tr, &a, LeafSet::from_leaves([0]), root_equals(0)).unwrap(),
            -1
        );
        let big = t(2, 4);
        let z = LeafAssignment::from_values(&[0; 16]);
        assert!(matches!(
            nabla(&big, &z, LeafSet(0x1fff), root_equals(0)),
            Err(Error::BudgetExceeded(_))
        ));
        // substitution that never changes the event cancels
        let tr = t(2, 1);
        let on = LeafAssignment::new(vec![1, 1], vec![true, true]).unwrap();
        assert_eq!(
            nabla(&tr, &on, LeafSet::from_leaves([0]), root_equals(1)).unwrap(),
            0
        );
    }

    #[test]
    fn alternating_sum_vanishes() {
        let tr = t(2, 2);
        let a = LeafAssignment::from_values(&[1, 0, 2, 0]);
        for set in tr.all_leaves().subsets().skip(1) {
            assert_eq!(nabla(&tr, &a, set, |_| 1).unwrap(), 0);
        }
    }

    #[test]
    fn pivotal_sets() {
        let tr = t(2, 3);
        let a = LeafSet::from_leaves([0, 3]);
        let piv = PivotalSet::new(&tr, tr.root(), a).unwrap();
        let o: BTreeSet<_> = [
            Vertex::new(1, 0),
            Vertex::new(1, 1),
            Vertex::new(2, 0),
            Vertex::new(3, 0),
        ]
        .into();
        assert_eq!(piv.o, o);
        let l: BTreeSet<_> = [Vertex::new(0, 1), Vertex::new(0, 2), Vertex::new(2, 1)].into();
        assert_eq!(piv.l, l);
        let mut union = piv.o.clone();
        union.extend(a.iter().map(|v| Vertex::new(0, v)));
        assert_eq!(union, PivotalSet::spanning_subtree(&tr, tr.root(), a));
        let leafroot =
            PivotalSet::new(&t(2, 0), Vertex::new(0, 0), LeafSet::from_leaves([0])).unwrap();
        assert!(leafroot.o.is_empty() && leafroot.l.is_empty());
    }

    #[test]
    fn pivotal_invariants_exhaustive() {
        for (m, n) in [(2, 3), (3, 2)] {
            let tr = t(m, n);
            for level in 1..=n {
                for idx in 0..tr.level_len(level) as u64 {
                    let u = Vertex::new(level, idx);
                    for a in tr.leaves_under(u).subsets().skip(1) {
                        let piv = PivotalSet::new(&tr, u, a).unwrap();
                        for c in piv.l_level_counts().values() {
                            assert!(*c <= (m as usize - 1) * a.len());
                        }
                        let mut union = piv.o.clone();
                        union.extend(a.iter().map(|v| Vertex::new(0, v)));
                        assert_eq!(union, PivotalSet::spanning_subtree(&tr, u, a));
                    }
                }
            }
        }
    }

    #[test]
    fn leaf_derivative_examples() {
        let d2 = StarLaw::Dirac(2);
        let p = ratio(1, 3);
        let r = leaf_derivative_check(&t(2, 0), 1, &d2, &p, &[0]).unwrap();
        assert_eq!((r.lhs.clone(), r.rhs.clone()), (rat_int(-1), rat_int(-1)));
        let r = leaf_derivative_check(&t(2, 1), 1, &d2, &p, &[0, 0]).unwrap();
        assert!(r.equal);
        assert_eq!(r.lhs, rat_int(-2) * (BigRational::one() - &p));
        let r = leaf_derivative_check(&t(2, 1), 0, &d2, &p, &[2, 0]).unwrap();
        assert!(r.equal);
        assert_eq!(r.lhs, &p * (BigRational::one() - &p));
        assert!(leaf_derivative_check(&t(2, 0), 1, &d2, &BigRational::one(), &[0]).is_err());
    }

    #[test]
    fn leaf_derivative_sweeps() {
        let star = StarLaw::finite([(1, ratio(1, 2)), (2, ratio(1, 3)), (3, ratio(1, 6))]).unwrap();
        for k in 0..=2 {
            for (m, n) in [(2, 1), (2, 2), (3, 1)] {
                let rows = leaf_derivative_sweep(&t(m, n), k, &star, &ratio(2, 7)).unwrap();
                assert!(rows.iter().all(|r| r.equal), "m={m} n={n} k={k}");
            }
        }
    }

    #[test]
    fn zero_mass_derivative_on_small_trees() {
        for k in 1..=2 {
            for (m, n) in [(2, 1), (2, 2), (3, 1)] {
                let r = zero_mass_derivative_check(&t(m, n), k, &StarLaw::Dirac(2), &ratio(1, 4))
                    .unwrap();
                assert!(r.identity_holds && r.bound_holds, "{r:?}");
            }
        }
    }

    #[test]
    fn pivotal_exhaustive_small() {
        let star = StarLaw::finite([(1, ratio(1, 2)), (2, ratio(1, 2))]).unwrap();
        let r = pivotal_exhaustive(&t(2, 2), &star).unwrap();
        assert!(r.pass(), "{r:?}");
        assert!(r.nonzero > 0);
        // single leaf, all U = 1
        let a = LeafAssignment::new(vec![1, 2, 1, 1], vec![true; 4]).unwrap();
        for i in 0..4 {
            assert!(pivotal_check(&t(2, 2), &a, LeafSet::from_leaves([2]), i)
                .unwrap()
                .pass());
        }
        assert!(pivotal_check(&t(2, 2), &a, LeafSet::empty(), 0).is_err());
    }

    #[test]
    fn pivotal_randomized() {
        let r = pivotal_random(&t(2, 3), &StarLaw::Dirac(2), 0.3, 2_000, 7).unwrap();
        assert!(r.pass(), "{r:?}");
        assert!(r.nonzero > 0);
    }

    #[test]
    fn branch_number_examples() {
        assert_eq!(
            branch_number_sum(2, 3, 0).unwrap().value,
            BigRational::one()
        );
        for (m, n) in [(2, 1), (2, 4), (3, 2)] {
            assert_eq!(
                branch_number_sum(m, n, 1).unwrap().value,
                BigRational::one()
            );
        }
        let r = branch_number_sum(2, 3, 2).unwrap();
        assert!(r.pass && r.bound == rat_int(48));
        for n in 1..=4 {
            for k in 0..=3 {
                assert!(branch_number_sum(2, n, k).unwrap().pass);
            }
        }
    }

    #[test]
    fn enumeration_matches_engine() {
        for (m, n) in [(2, 2), (2, 3), (3, 1)] {
            let spec = ModelSpec::new(m, StarLaw::Dirac(2), ratio(1, 5)).unwrap();
            let laws = iterate(&mix_initial(&spec).unwrap(), m, n as usize).unwrap();
            let enumerated =
                root_law_by_enumeration(&t(m, n), &StarLaw::Dirac(2), &ratio(1, 5)).unwrap();
            assert_eq!(Dist::Exact(enumerated), laws[n as usize]);
        }
    }

    fn assignment(leaves: usize) -> impl Strategy<Value = LeafAssignment> {
        (
            prop::collection::vec(1u32..4, leaves),
            prop::collection::vec(any::<bool>(), leaves),
        )
            .prop_map(|(x_star, u)| LeafAssignment { x_star, u })
    }

    proptest! {
        #[test]
        fn theta_is_monotone(a in assignment(8), mask_a in 0u64..256, mask_b in 0u64..256) {
            let tr = t(2, 3);
            let big = LeafSet(mask_a | mask_b);
            let small = LeafSet(mask_b);
            let (x, y) = (theta(&tr, &a, small).unwrap(), theta(&tr, &a, big).unwrap());
            for (lx, ly) in x.levels().iter().zip(y.levels()) {
                for (vx, vy) in lx.iter().zip(ly) {
                    prop_assert!(vx <= vy);
                }
            }
        }

        #[test]
        fn nabla_is_linear(a in assignment(4), set in 0u64..16, c1 in -3i64..4, c2 in -3i64..4, i in 0u64..4, j in 0u64..4) {
            let tr = t(2, 2);
            let s = LeafSet(set);
            let f = root_equals(i);
            let g = move |t: &TreeValues| i64::from(t.level(1)[0] == j);
            let lhs = nabla(&tr, &a, s, |t| c1 * f(t) + c2 * g(t)).unwrap();
            let rhs = c1 * nabla(&tr, &a, s, &f).unwrap() + c2 * nabla(&tr, &a, s, g).unwrap();
            prop_assert_eq!(lhs, rhs);
            prop_assert!(nabla(&tr, &a, s, &f).unwrap().abs() <= 1 << s.len());
        }
    }
}
