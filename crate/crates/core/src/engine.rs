//! Distribution engine: m-fold convolution, the shifted positive part, and
//! n-step iteration with explicit tail accounting.
//!
//! Exact laws keep integer numerators over one shared denominator; a step
//! raises the numerator vector to the m-th convolution power and the
//! denominator to the m-th power, so no gcd work is ever done.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::{power_exact, power_float};
use crate::model::ModelSpec;
use crate::rational::{biguint_ratio_to_f64, common_denominator};

/// Default support cap (largest stored value) in float mode.
pub const DEFAULT_FLOAT_CAP: usize = 1_000_000;
/// Default support cap in exact mode; beyond this memory is the real limit.
pub const DEFAULT_EXACT_CAP: usize = 1 << 24;

/// What happens to mass that lands above the support cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    /// Tail sits at +infinity and absorbs every sum it takes part in.
    LumpAtCap,
    /// Tail is fed back as mass at 0.
    LumpAtZero,
    /// Overflow is an error.
    Reject,
}

impl TailPolicy {
    pub fn name(self) -> &'static str {
        match self {
            TailPolicy::LumpAtCap => "lump_at_cap",
            TailPolicy::LumpAtZero => "lump_at_zero",
            TailPolicy::Reject => "reject",
        }
    }
}

impl fmt::Display for TailPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TailPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lump_at_cap" => Ok(TailPolicy::LumpAtCap),
            "lump_at_zero" => Ok(TailPolicy::LumpAtZero),
            "reject" => Ok(TailPolicy::Reject),
            _ => Err(Error::InvalidArgument(format!("unknown tail policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ExactRational,
    Float64,
}

/// Engine settings. `None` fields take the per-mode defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineConfig {
    /// Largest value kept explicitly.
    pub cap: Option<usize>,
    pub policy: Option<TailPolicy>,
    /// Use the FFT product in float mode.
    pub transform: bool,
}

impl EngineConfig {
    pub fn float(cap: usize, policy: TailPolicy) -> Self {
        EngineConfig {
            cap: Some(cap),
            policy: Some(policy),
            transform: false,
        }
    }

    pub fn cap_for(&self, mode: Mode) -> usize {
        self.cap.unwrap_or(match mode {
            Mode::ExactRational => DEFAULT_EXACT_CAP,
            Mode::Float64 => DEFAULT_FLOAT_CAP,
        })
    }

    pub fn policy_for(&self, mode: Mode) -> TailPolicy {
        self.policy.unwrap_or(match mode {
            Mode::ExactRational => TailPolicy::Reject,
            Mode::Float64 => TailPolicy::LumpAtCap,
        })
    }
}

/// Exact law: `P(X = k) = num[k] / denom`, tail `tail / denom`.
/// Equality compares the laws, not the chosen denominators.
#[derive(Debug, Clone)]
pub struct ExactDist {
    num: Vec<BigUint>,
    tail: BigUint,
    denom: BigUint,
}

impl PartialEq for ExactDist {
    fn eq(&self, other: &Self) -> bool {
        if self.denom == other.denom {
            return self.num == other.num && self.tail == other.tail;
        }
        self.num.len() == other.num.len()
            && &self.tail * &other.denom == &other.tail * &self.denom
            && self
                .num
                .iter()
                .zip(&other.num)
                .all(|(a, b)| a * &other.denom == b * &self.denom)
    }
}

impl Eq for ExactDist {}

impl ExactDist {
    pub fn dirac(k: usize) -> Self {
        let mut num = vec![BigUint::zero(); k + 1];
        num[k] = BigUint::one();
        ExactDist {
            num,
            tail: BigUint::zero(),
            denom: BigUint::one(),
        }
    }

    pub fn from_rationals(masses: &[BigRational]) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if masses.iter().any(|x| x.is_negative()) {
            return Err(Error::InvalidArgument("negative mass".into()));
        }
        let den = common_denominator(masses);
        let num = masses
            .iter()
            .map(|x| {
                (x.numer() * (&den / x.denom()))
                    .to_biguint()
                    .expect("nonnegative")
            })
            .collect();
        Self::from_parts(num, BigUint::zero(), den.to_biguint().expect("positive"))
    }

    /// Checks that numerators and tail add up to the denominator.
    pub fn from_parts(num: Vec<BigUint>, tail: BigUint, denom: BigUint) -> Result<Self> {
        if num.is_empty() || denom.is_zero() {
            return Err(Error::InvalidArgument(
                "empty distribution or zero denominator".into(),
            ));
        }
        let total: BigUint = num.iter().sum::<BigUint>() + &tail;
        if total != denom {
            return Err(Error::InvalidArgument("masses do not sum to 1".into()));
        }
        let mut d = ExactDist { num, tail, denom };
        d.trim();
        Ok(d)
    }

    fn trim(&mut self) {
        while self.num.len() > 1 && self.num.last().is_some_and(Zero::is_zero) {
            self.num.pop();
        }
    }

    /// Number of stored entries (largest stored value + 1).
    pub fn len(&self) -> usize {
        self.num.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn numerators(&self) -> &[BigUint] {
        &self.num
    }

    pub fn tail_numerator(&self) -> &BigUint {
        &self.tail
    }

    pub fn denominator(&self) -> &BigUint {
        &self.denom
    }

    pub fn mass(&self, k: usize) -> BigRational {
        match self.num.get(k) {
            Some(x) => BigRational::new(BigInt::from(x.clone()), BigInt::from(self.denom.clone())),
            None => BigRational::zero(),
        }
    }

    pub fn masses(&self) -> Vec<BigRational> {
        (0..self.num.len()).map(|k| self.mass(k)).collect()
    }

    pub fn lumped_tail(&self) -> BigRational {
        BigRational::new(
            BigInt::from(self.tail.clone()),
            BigInt::from(self.denom.clone()),
        )
    }

    pub fn mass_f64(&self, k: usize) -> f64 {
        self.num
            .get(k)
            .map_or(0.0, |x| biguint_ratio_to_f64(x, &self.denom))
    }

    pub fn to_float(&self) -> FloatDist {
        FloatDist {
            masses: (0..self.num.len()).map(|k| self.mass_f64(k)).collect(),
            tail: biguint_ratio_to_f64(&self.tail, &self.denom),
            clamped: 0.0,
        }
    }
}

/// Floating law with a lumped tail and the running total of clamped
/// negative transform output.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatDist {
    masses: Vec<f64>,
    tail: f64,
    clamped: f64,
}

impl FloatDist {
    pub fn from_masses(masses: Vec<f64>) -> Self {
        Self::with_tail(masses, 0.0)
    }

    pub fn with_tail(masses: Vec<f64>, tail: f64) -> Self {
        let mut d = FloatDist {
            masses,
            tail,
            clamped: 0.0,
        };
        if d.masses.is_empty() {
            d.masses.push(0.0);
        }
        d.trim();
        d
    }

    fn trim(&mut self) {
        while self.masses.len() > 1 && self.masses.last() == Some(&0.0) {
            self.masses.pop();
        }
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.masses.get(k).copied().unwrap_or(0.0)
    }

    pub fn lumped_tail(&self) -> f64 {
        self.tail
    }

    /// Total negative mass clamped away by transform products so far.
    pub fn clamped(&self) -> f64 {
        self.clamped
    }
}

/// Law of some `X_n`, exact or floating.
#[derive(Debug, Clone, PartialEq)]
pub enum Dist {
    Exact(ExactDist),
    Float(FloatDist),
}

impl Dist {
    pub fn mode(&self) -> Mode {
        match self {
            Dist::Exact(_) => Mode::ExactRational,
            Dist::Float(_) => Mode::Float64,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Dist::Exact(_))
    }

    pub fn exact(&self) -> Result<&ExactDist> {
        match self {
            Dist::Exact(d) => Ok(d),
            Dist::Float(_) => Err(Error::NotExact("an exact distribution".into())),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dist::Exact(d) => d.len(),
            Dist::Float(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mass_f64(&self, k: usize) -> f64 {
        match self {
            Dist::Exact(d) => d.mass_f64(k),
            Dist::Float(d) => d.mass(k),
        }
    }

    pub fn masses_f64(&self) -> Vec<f64> {
        match self {
            Dist::Exact(d) => d.to_float().masses,
            Dist::Float(d) => d.masses.clone(),
        }
    }

    pub fn lumped_tail_f64(&self) -> f64 {
        match self {
            Dist::Exact(d) => biguint_ratio_to_f64(&d.tail, &d.denom),
            Dist::Float(d) => d.tail,
        }
    }

    pub fn to_float(&self) -> FloatDist {
        match self {
            Dist::Exact(d) => d.to_float(),
            Dist::Float(d) => d.clone(),
        }
    }
}

impl From<ExactDist> for Dist {
    fn from(d: ExactDist) -> Self {
        Dist::Exact(d)
    }
}

impl From<FloatDist> for Dist {
    fn from(d: FloatDist) -> Self {
        Dist::Float(d)
    }
}

fn shift_exact(mut c: Vec<BigUint>) -> Vec<BigUint> {
    if c.len() >= 2 {
        let c0 = c.remove(0);
        c[0] += c0;
    }
    c
}

fn shift_float(mut c: Vec<f64>) -> Vec<f64> {
    if c.len() >= 2 {
        let c0 = c.remove(0);
        c[0] += c0;
    }
    c
}

/// Output of one convolution-power pass, before the optional shift.
struct Pass {
    /// Largest value the untruncated output would reach.
    needed: usize,
    keep: usize,
}

fn plan(
    len: usize,
    m: u32,
    shift: bool,
    cap: usize,
    policy: TailPolicy,
    has_tail: bool,
) -> Result<Pass> {
    let top = (len - 1) * m as usize;
    let needed = if shift { top.saturating_sub(1) } else { top };
    if policy == TailPolicy::Reject {
        if has_tail {
            return Err(Error::InvalidArgument(
                "reject policy given a law with a lumped tail".into(),
            ));
        }
        if needed > cap {
            return Err(Error::SupportCapExceeded {
                needed: needed + 1,
                cap,
            });
        }
    }
    let keep = if shift { cap + 2 } else { cap + 1 };
    Ok(Pass { needed, keep })
}

fn power_pass_exact(d: &ExactDist, m: u32, shift: bool, cfg: &EngineConfig) -> Result<ExactDist> {
    let cap = cfg.cap_for(Mode::ExactRational);
    let policy = cfg.policy_for(Mode::ExactRational);
    let pass = plan(d.len(), m, shift, cap, policy, !d.tail.is_zero())?;
    let conv = if policy == TailPolicy::LumpAtZero && !d.tail.is_zero() {
        let mut base = d.num.clone();
        base[0] += &d.tail;
        power_exact(&base, m, Some(pass.keep))
    } else {
        power_exact(&d.num, m, Some(pass.keep))
    };
    let mut num = if shift { shift_exact(conv) } else { conv };
    num.truncate(cap + 1);
    let denom = num_traits::pow(d.denom.clone(), m as usize);
    let kept: BigUint = num.iter().sum();
    let tail = &denom - kept;
    let mut out = ExactDist { num, tail, denom };
    out.trim();
    Ok(out)
}

fn power_pass_float(d: &FloatDist, m: u32, shift: bool, cfg: &EngineConfig) -> Result<FloatDist> {
    let cap = cfg.cap_for(Mode::Float64);
    let policy = cfg.policy_for(Mode::Float64);
    let pass = plan(d.len(), m, shift, cap, policy, d.tail > 0.0)?;
    let (conv, clamped) = if policy == TailPolicy::LumpAtZero && d.tail > 0.0 {
        let mut base = d.masses.clone();
        base[0] += d.tail;
        power_float(&base, m, Some(pass.keep), cfg.transform)
    } else {
        power_float(&d.masses, m, Some(pass.keep), cfg.transform)
    };
    let mut masses = if shift { shift_float(conv) } else { conv };
    masses.truncate(cap + 1);
    let kept: f64 = masses.iter().sum();
    let tail = if pass.needed <= cap && (d.tail == 0.0 || policy == TailPolicy::LumpAtZero) {
        0.0
    } else {
        (1.0 - kept).max(0.0)
    };
    let mut out = FloatDist {
        masses,
        tail,
        clamped: d.clamped + clamped,
    };
    out.trim();
    Ok(out)
}

/// One step of the recursion `X_{n+1} = (X_{n,1} + ... + X_{n,m} - 1)^+`
/// with default engine settings.
pub fn dr_step(d: &Dist, m: u32) -> Result<Dist> {
    dr_step_with(d, m, &EngineConfig::default())
}

pub fn dr_step_with(d: &Dist, m: u32, cfg: &EngineConfig) -> Result<Dist> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "m = {m} but m >= 2 is required"
        )));
    }
    Ok(match d {
        Dist::Exact(e) => Dist::Exact(power_pass_exact(e, m, true, cfg)?),
        Dist::Float(f) => Dist::Float(power_pass_float(f, m, true, cfg)?),
    })
}

/// Law of the sum of `m` independent copies.
pub fn convolve_power(d: &Dist, m: u32) -> Result<Dist> {
    convolve_power_with(d, m, &EngineConfig::default())
}

pub fn convolve_power_with(d: &Dist, m: u32, cfg: &EngineConfig) -> Result<Dist> {
    if m < 1 {
        return Err(Error::InvalidArgument(
            "convolution power needs m >= 1".into(),
        ));
    }
    Ok(match d {
        Dist::Exact(e) => Dist::Exact(power_pass_exact(e, m, false, cfg)?),
        Dist::Float(f) => Dist::Float(power_pass_float(f, m, false, cfg)?),
    })
}

/// Laws of `X_0, ..., X_n`.
pub fn iterate(d0: &Dist, m: u32, n: usize) -> Result<Vec<Dist>> {
    iterate_with(d0, m, n, &EngineConfig::default())
}

pub fn iterate_with(d0: &Dist, m: u32, n: usize, cfg: &EngineConfig) -> Result<Vec<Dist>> {
    let mut laws = Vec::with_capacity(n + 1);
    laws.push(d0.clone());
    for _ in 0..n {
        let next = dr_step_with(laws.last().expect("nonempty"), m, cfg)?;
        laws.push(next);
    }
    Ok(laws)
}

/// Empirical law from Monte Carlo samples.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Histogram {
    pub counts: BTreeMap<u64, u64>,
    pub total: u64,
}

impl Histogram {
    pub fn record(&mut self, x: u64) {
        *self.counts.entry(x).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (k, c) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += c;
        }
        self.total += other.total;
    }

    pub fn frequency(&self, k: u64) -> f64 {
        self.counts.get(&k).copied().unwrap_or(0) as f64 / self.total as f64
    }

    /// Total variation distance to `d`; samples above the stored support
    /// are compared with the lumped tail.
    pub fn tv_distance(&self, d: &Dist) -> f64 {
        let masses = d.masses_f64();
        let mut diff = 0.0;
        for (k, &p) in masses.iter().enumerate() {
            diff += (self.frequency(k as u64) - p).abs();
        }
        let above: u64 = self
            .counts
            .range(masses.len() as u64..)
            .map(|(_, c)| c)
            .sum();
        diff += (above as f64 / self.total as f64 - d.lumped_tail_f64()).abs();
        diff / 2.0
    }
}

pub(crate) struct LeafSampler {
    p: f64,
    values: Vec<u64>,
    index: WeightedIndex<f64>,
}

impl LeafSampler {
    pub(crate) fn new(spec: &ModelSpec) -> Result<Self> {
        let star = spec.star.float_masses(spec.m);
        let index = WeightedIndex::new(star.iter().map(|(_, w)| *w))
            .map_err(|e| Error::InvalidSpec(format!("star law cannot be sampled: {e}")))?;
        Ok(LeafSampler {
            p: spec.p.to_f64(),
            values: star.iter().map(|(k, _)| *k as u64).collect(),
            index,
        })
    }

    pub(crate) fn leaf<R: Rng>(&self, rng: &mut R) -> u64 {
        if rng.gen::<f64>() < self.p {
            self.values[self.index.sample(rng)]
        } else {
            0
        }
    }

    fn xn<R: Rng>(&self, m: u32, n: usize, rng: &mut R) -> u64 {
        if n == 0 {
            return self.leaf(rng);
        }
        let s: u64 = (0..m).map(|_| self.xn(m, n - 1, rng)).sum();
        s.saturating_sub(1)
    }
}

/// `n_samples` independent draws of `X_n`, each by simulating the full
/// `m`-ary tree of depth `n` on fresh leaves.
pub fn sample_xn(spec: &ModelSpec, n: usize, seed: u64, n_samples: u64) -> Result<Histogram> {
    sample_xn_parallel(spec, n, seed, n_samples, 1)
}

/// Splits the work over `workers` threads; worker `i` uses stream `i` of
/// the seeded generator, so output depends only on `(seed, workers)`.
pub fn sample_xn_parallel(
    spec: &ModelSpec,
    n: usize,
    seed: u64,
    n_samples: u64,
    workers: usize,
) -> Result<Histogram> {
    spec.validate()?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let workers = workers.max(1);
    let sampler = LeafSampler::new(spec)?;
    let per = n_samples / workers as u64;
    let extra = n_samples % workers as u64;
    let parts: Vec<Histogram> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let sampler = &sampler;
                let count = per + u64::from((w as u64) < extra);
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(w as u64);
                    let mut h = Histogram::default();
                    for _ in 0..count {
                        h.record(sampler.xn(spec.m, n, &mut rng));
                    }
                    h
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sampling worker panicked"))
            .collect()
    });
    let mut out = Histogram::default();
    for h in &parts {
        out.merge(h);
    }
    Ok(out)
}

/// CSV metadata written as `# key=value` lines ahead of the rows.
#[derive(Debug, Clone)]
pub struct DistCsvHeader {
    pub n: usize,
    pub m: u32,
    pub p: String,
    pub policy: TailPolicy,
}

/// Writes `d` as CSV. Exact rows are `k,mass_numerator,mass_denominator,mass`
/// over the shared denominator; float rows are `k,mass`.
pub fn write_dist_csv<W: Write>(w: &mut W, d: &Dist, header: &DistCsvHeader) -> io::Result<()> {
    writeln!(w, "# n={}", header.n)?;
    writeln!(w, "# m={}", header.m)?;
    writeln!(w, "# p={}", header.p)?;
    writeln!(w, "# tail_policy={}", header.policy)?;
    match d {
        Dist::Exact(e) => {
            writeln!(w, "# lumped_tail={}/{}", e.tail, e.denom)?;
            writeln!(w, "k,mass_numerator,mass_denominator,mass")?;
            for (k, x) in e.num.iter().enumerate() {
                writeln!(w, "{k},{x},{},{:e}", e.denom, e.mass_f64(k))?;
            }
        }
        Dist::Float(f) => {
            writeln!(w, "# lumped_tail={:e}", f.tail)?;
            writeln!(w, "k,mass")?;
            for (k, x) in f.masses.iter().enumerate() {
                writeln!(w, "{k},{x:e}")?;
            }
        }
    }
    Ok(())
}
