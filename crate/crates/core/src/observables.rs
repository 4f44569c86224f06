//! Moments, the criticality functional, free-energy brackets, and tail
//! checks built on top of the engine.

use std::io::{self, Write};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{dr_step_with, Dist, EngineConfig, ExactDist, FloatDist, LeafSampler};
use crate::error::{Error, Result};
use crate::model::{mix_initial, mix_initial_exact, ModelSpec, FLOAT_CRITICAL_DEAD_BAND};
use crate::rational::{format_rational, rat_int, to_f64, SignClass};

/// `(E(X), E(s^X), E(X s^X))`, tail excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub mean: T,
    pub pgf: T,
    pub weighted: T,
    /// Mass the sums leave out; when positive, `E(s^X)` is not bounded by
    /// the stored values.
    pub tail_mass: T,
}

impl<T> Moments<T> {
    pub fn is_bounded(&self) -> bool
    where
        T: Zero,
    {
        self.tail_mass.is_zero()
    }
}

fn big(x: &BigUint) -> BigInt {
    BigInt::from(x.clone())
}

/// Exact moments of an exact law at rational `s > 0`.
pub fn moments_exact(d: &ExactDist, s: &BigRational) -> Result<Moments<BigRational>> {
    if !s.is_positive() {
        return Err(Error::InvalidArgument("s must be positive".into()));
    }
    let num = d.numerators();
    let top = num.len() - 1;
    let a = s.numer().magnitude().clone();
    let b = s.denom().magnitude().clone();
    // sum_k num_k a^k b^(top-k), over denom b^top
    let mut bpow = vec![BigUint::one(); top + 1];
    for i in 1..=top {
        bpow[i] = &bpow[i - 1] * &b;
    }
    let (mut mean, mut pgf, mut weighted) = (BigUint::zero(), BigUint::zero(), BigUint::zero());
    let mut apow = BigUint::one();
    for (k, x) in num.iter().enumerate() {
        if !x.is_zero() {
            let term = x * &apow * &bpow[top - k];
            mean += x * BigUint::from(k);
            weighted += &term * BigUint::from(k);
            pgf += term;
        }
        apow *= &a;
    }
    let den = big(d.denominator());
    let sden = &den * big(&bpow[top]);
    Ok(Moments {
        mean: BigRational::new(big(&mean), den.clone()),
        pgf: BigRational::new(big(&pgf), sden.clone()),
        weighted: BigRational::new(big(&weighted), sden),
        tail_mass: d.lumped_tail(),
    })
}

/// Float moments; terms are formed in log space so `s^k` never overflows
/// on its own.
pub fn moments_float(d: &FloatDist, s: f64) -> Result<Moments<f64>> {
    if s.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidArgument("s must be positive".into()));
    }
    let ls = s.ln();
    let (mut mean, mut pgf, mut weighted) = (0.0, 0.0, 0.0);
    for (k, &w) in d.masses().iter().enumerate() {
        if w > 0.0 {
            let t = (w.ln() + k as f64 * ls).exp();
            mean += k as f64 * w;
            pgf += t;
            weighted += k as f64 * t;
        }
    }
    Ok(Moments {
        mean,
        pgf,
        weighted,
        tail_mass: d.lumped_tail(),
    })
}

/// `E(X)` of an exact law (tail excluded).
pub fn mean_exact(d: &ExactDist) -> BigRational {
    let s: BigUint = d
        .numerators()
        .iter()
        .enumerate()
        .map(|(k, x)| x * BigUint::from(k))
        .sum();
    BigRational::new(big(&s), big(d.denominator()))
}

pub fn mean_float(d: &FloatDist) -> f64 {
    d.masses()
        .iter()
        .enumerate()
        .map(|(k, w)| k as f64 * w)
        .sum()
}

/// `G = E(m^X) - (m-1) E(X m^X)` with its sign class.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalityFunctional<T> {
    pub value: T,
    pub sign: SignClass,
    /// Stored law has a lumped tail, so `G` is not determined.
    pub divergent: bool,
}

pub fn criticality_exact(d: &ExactDist, m: u32) -> CriticalityFunctional<BigRational> {
    let mm = BigInt::from(m);
    let mut acc = BigInt::zero();
    let mut pw = BigInt::one();
    for (k, x) in d.numerators().iter().enumerate() {
        if !x.is_zero() {
            acc += big(x) * &pw * BigInt::from(1 - (m as i64 - 1) * k as i64);
        }
        pw *= &mm;
    }
    let value = BigRational::new(acc, big(d.denominator()));
    CriticalityFunctional {
        sign: SignClass::of_rational(&value),
        value,
        divergent: !d.tail_numerator().is_zero(),
    }
}

pub fn criticality_float(d: &FloatDist, m: u32) -> CriticalityFunctional<f64> {
    let lm = (m as f64).ln();
    let value: f64 = d
        .masses()
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(k, w)| (w.ln() + k as f64 * lm).exp() * (1.0 - (m as f64 - 1.0) * k as f64))
        .sum();
    CriticalityFunctional {
        value,
        sign: SignClass::of_f64(value, FLOAT_CRITICAL_DEAD_BAND),
        divergent: d.lumped_tail() > 0.0,
    }
}

/// `E(X_{n+1}) = m E(X_n) - 1 + P(X_n = 0)^m`, exactly.
pub fn mean_identity_holds(xn: &ExactDist, xn1: &ExactDist, m: u32) -> bool {
    let rhs = rat_int(m as i64) * mean_exact(xn) - BigRational::one()
        + num_traits::pow(xn.mass(0), m as usize);
    mean_exact(xn1) == rhs
}

/// Bracket `L_N <= F_inf <= U_N` and the series partial sum `S_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeEnergyBracket<T> {
    pub n: usize,
    /// `(E(X_N) - 1/(m-1)) / m^N`.
    pub lower: T,
    /// `E(X_N) / m^N`.
    pub upper: T,
    /// `E(X_0) - 1/(m-1) + sum_{n <= N} P(X_n = 0)^m / m^(n+1)`.
    pub series: T,
    /// Lumped tail of `X_N` (float mode); the bracket ignores it.
    pub tail_mass: f64,
}

/// Brackets for every `N` in `0..=n_max`, exact or float following the spec.
#[derive(Debug, Clone, PartialEq)]
pub enum BracketTable {
    Exact(Vec<FreeEnergyBracket<BigRational>>),
    Float(Vec<FreeEnergyBracket<f64>>),
}

impl BracketTable {
    pub fn len(&self) -> usize {
        match self {
            BracketTable::Exact(v) => v.len(),
            BracketTable::Float(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(N, L, U, S)` rows as floats.
    pub fn rows_f64(&self) -> Vec<(usize, f64, f64, f64)> {
        match self {
            BracketTable::Exact(v) => v
                .iter()
                .map(|b| (b.n, to_f64(&b.lower), to_f64(&b.upper), to_f64(&b.series)))
                .collect(),
            BracketTable::Float(v) => v
                .iter()
                .map(|b| (b.n, b.lower, b.upper, b.series))
                .collect(),
        }
    }
}

pub fn free_energy_brackets_exact(
    spec: &ModelSpec,
    n_max: usize,
) -> Result<Vec<FreeEnergyBracket<BigRational>>> {
    let m = spec.m;
    let cfg = EngineConfig::default();
    let inv = BigRational::new(BigInt::one(), BigInt::from(m - 1));
    let mm = rat_int(m as i64);
    let mut law = Dist::Exact(mix_initial_exact(spec)?);
    let mut series = mean_exact(law.exact()?) - &inv;
    let mut scale = BigRational::one(); // m^N
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let d = law.exact()?;
        let mean = mean_exact(d);
        series += num_traits::pow(d.mass(0), m as usize) / (&scale * &mm);
        out.push(FreeEnergyBracket {
            n,
            lower: (&mean - &inv) / &scale,
            upper: &mean / &scale,
            series: series.clone(),
            tail_mass: 0.0,
        });
        if n < n_max {
            law = dr_step_with(&law, m, &cfg)?;
            scale *= &mm;
        }
    }
    Ok(out)
}

pub fn free_energy_brackets_float(
    spec: &ModelSpec,
    n_max: usize,
    cfg: &EngineConfig,
) -> Result<Vec<FreeEnergyBracket<f64>>> {
    let m = spec.m as f64;
    let inv = 1.0 / (m - 1.0);
    let mut law = Dist::Float(mix_initial(spec)?.to_float());
    let mut series = mean_float(&law.to_float()) - inv;
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let d = law.to_float();
        let mean = mean_float(&d);
        let scale = m.powi(n as i32);
        series += d.mass(0).powi(spec.m as i32) / (scale * m);
        out.push(FreeEnergyBracket {
            n,
            lower: (mean - inv) / scale,
            upper: mean / scale,
            series,
            tail_mass: d.lumped_tail(),
        });
        if n < n_max {
            law = dr_step_with(&law, spec.m, cfg)?;
        }
    }
    Ok(out)
}

/// Exact table when the spec is exact, float otherwise.
pub fn free_energy_brackets(
    spec: &ModelSpec,
    n_max: usize,
    cfg: &EngineConfig,
) -> Result<BracketTable> {
    if spec.is_exact() {
        Ok(BracketTable::Exact(free_energy_brackets_exact(
            spec, n_max,
        )?))
    } else {
        Ok(BracketTable::Float(free_energy_brackets_float(
            spec, n_max, cfg,
        )?))
    }
}

/// Bracket at generation `n`.
pub fn free_energy_bracket(spec: &ModelSpec, n: usize) -> Result<FreeEnergyBracket<BigRational>> {
    Ok(free_energy_brackets_exact(spec, n)?
        .pop()
        .expect("n + 1 rows"))
}

/// `G_n` for `n = 0..=N` and whether the sign class never changes.
#[derive(Debug, Clone, PartialEq)]
pub struct SignReport {
    pub values: Vec<BigRational>,
    pub signs: Vec<SignClass>,
    pub constant: bool,
}

pub fn sign_preservation_check(spec: &ModelSpec, n_max: usize) -> Result<SignReport> {
    if !spec.is_exact() {
        return Err(Error::NotExact(
            "a finite-support star law and rational p".into(),
        ));
    }
    let cfg = EngineConfig::default();
    let mut law = Dist::Exact(mix_initial_exact(spec)?);
    let mut values = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        values.push(criticality_exact(law.exact()?, spec.m).value);
        if n < n_max {
            law = dr_step_with(&law, spec.m, &cfg)?;
        }
    }
    let signs: Vec<SignClass> = values.iter().map(SignClass::of_rational).collect();
    let constant = signs.windows(2).all(|w| w[0] == w[1]);
    Ok(SignReport {
        values,
        signs,
        constant,
    })
}

/// Outcome of the Monte Carlo check of the lower-tail bound for sums of
/// `m^n - k` copies of `X_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoeffdingReport {
    pub n: u32,
    pub k: u64,
    pub samples: u64,
    pub seed: u64,
    /// Estimate of `P(sum_{i <= m^n - k} X_{0,i} <= m^n)`.
    pub estimate: f64,
    pub std_error: f64,
    /// `exp(-c1^2 (m^n - k) / 32)`.
    pub bound: f64,
    pub pass: bool,
}

/// Smallest `n` the tail bound applies to:
/// `floor((log k + log((4 + c1)/c1)) / log m) + 1`.
pub fn hoeffding_min_n(m: u32, k: u64, c1: f64) -> u32 {
    let x = ((k as f64).ln() + ((4.0 + c1) / c1).ln()) / (m as f64).ln();
    x.floor() as u32 + 1
}

pub fn hoeffding_tail_check(
    spec: &ModelSpec,
    n: u32,
    k: u64,
    samples: u64,
    seed: u64,
) -> Result<HoeffdingReport> {
    spec.validate()?;
    if k < 1 {
        return Err(Error::Precondition("k >= 1 is required".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be >= 1".into()));
    }
    let m = spec.m;
    let c1 = spec.star.c1(m);
    if c1 <= 0.0 {
        return Err(Error::Precondition(
            "c1 = P(X* >= 2) must be positive".into(),
        ));
    }
    let p_ok = match (spec.star.c1_exact(), spec.p.to_rational()) {
        (Some(c), Ok(p)) => p >= BigRational::one() - c / rat_int(4),
        _ => spec.p.to_f64() >= 1.0 - c1 / 4.0,
    };
    if !p_ok {
        return Err(Error::Precondition(format!(
            "p = {} is below 1 - c1/4 = {}",
            spec.p.to_f64(),
            1.0 - c1 / 4.0
        )));
    }
    let min_n = hoeffding_min_n(m, k, c1);
    if n < min_n {
        return Err(Error::Precondition(format!(
            "n = {n} is below the threshold {min_n} for k = {k}"
        )));
    }
    let leaves = (m as u64)
        .checked_pow(n)
        .ok_or_else(|| Error::BudgetExceeded(format!("m^n overflows for m = {m}, n = {n}")))?;
    let count = leaves - k;
    let sampler = LeafSampler::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..samples {
        let mut total = 0u64;
        for _ in 0..count {
            total += sampler.leaf(&mut rng);
            if total > leaves {
                break;
            }
        }
        if total <= leaves {
            hits += 1;
        }
    }
    let estimate = hits as f64 / samples as f64;
    let std_error = (estimate * (1.0 - estimate) / samples as f64).sqrt();
    let bound = (-c1 * c1 * count as f64 / 32.0).exp();
    Ok(HoeffdingReport {
        n,
        k,
        samples,
        seed,
        estimate,
        std_error,
        bound,
        pass: estimate <= bound + 3.0 * std_error,
    })
}

/// One row of the zero-mass decay profile.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow {
    pub n: usize,
    pub p_zero: f64,
    /// `log(-log P(X_n = 0))`, when `0 < P(X_n = 0) < 1`.
    pub loglog: Option<f64>,
}

/// `P(X_n = 0)` for `n = 0..=n_max` in float mode.
pub fn zero_mass_decay_profile(
    spec: &ModelSpec,
    n_max: usize,
    cfg: &EngineConfig,
) -> Result<Vec<DecayRow>> {
    let mut law = Dist::Float(mix_initial(spec)?.to_float());
    let mut rows = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let p_zero = law.mass_f64(0);
        let loglog = (p_zero > 0.0 && p_zero < 1.0).then(|| (-p_zero.ln()).ln());
        rows.push(DecayRow { n, p_zero, loglog });
        if n < n_max {
            law = dr_step_with(&law, spec.m, cfg)?;
        }
    }
    Ok(rows)
}

/// Successive differences of `log(-log P(X_n = 0))` as `(n, increment)`,
/// where increment is the value at `n` minus the value at `n - 1`.
pub fn loglog_increments(rows: &[DecayRow]) -> Vec<(usize, Option<f64>)> {
    rows.windows(2)
        .map(|w| (w[1].n, w[0].loglog.zip(w[1].loglog).map(|(a, b)| b - a)))
        .collect()
}

/// CSV `N,L,U,S_N` with exact `num/den` columns when available.
pub fn write_bracket_csv<W: Write>(w: &mut W, table: &BracketTable) -> io::Result<()> {
    match table {
        BracketTable::Exact(rows) => {
            writeln!(w, "N,L,U,S_N,L_float,U_float,S_N_float")?;
            for b in rows {
                writeln!(
                    w,
                    "{},{},{},{},{:e},{:e},{:e}",
                    b.n,
                    format_rational(&b.lower),
                    format_rational(&b.upper),
                    format_rational(&b.series),
                    to_f64(&b.lower),
                    to_f64(&b.upper),
                    to_f64(&b.series)
                )?;
            }
        }
        BracketTable::Float(rows) => {
            writeln!(w, "N,L,U,S_N,tail_mass")?;
            for b in rows {
                writeln!(
                    w,
                    "{},{:e},{:e},{:e},{:e}",
                    b.n, b.lower, b.upper, b.series, b.tail_mass
                )?;
            }
        }
    }
    Ok(())
}

/// CSV `n,G_n,G_n_float,sign`.
pub fn write_sign_csv<W: Write>(w: &mut W, report: &SignReport) -> io::Result<()> {
    writeln!(w, "n,G_n,G_n_float,sign")?;
    for (n, (g, s)) in report.values.iter().zip(&report.signs).enumerate() {
        writeln!(
            w,
            "{n},{},{:e},{}",
            format_rational(g),
            to_f64(g),
            s.symbol()
        )?;
    }
    Ok(())
}

/// `P(X <= k)` for `k = 0..len`, for stochastic comparisons.
pub fn cdf_exact(d: &ExactDist) -> Vec<BigRational> {
    let mut acc = BigRational::zero();
    d.masses()
        .into_iter()
        .map(|w| {
            acc += w;
            acc.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{convolve_power, iterate, TailPolicy};
    use crate::model::StarLaw;
    use crate::rational::ratio;
    use proptest::prelude::*;

    fn law(ms: &[(usize, (i64, i64))]) -> ExactDist {
        let top = ms.iter().map(|(k, _)| *k).max().unwrap();
        let mut v = vec![BigRational::zero(); top + 1];
        for (k, (a, b)) in ms {
            v[*k] = ratio(*a, *b);
        }
        ExactDist::from_rationals(&v).unwrap()
    }

    fn dirac2(p: BigRational) -> ModelSpec {
        ModelSpec::new(2, StarLaw::Dirac(2), p).unwrap()
    }

    #[test]
    fn moments_examples() {
        let m = moments_exact(&ExactDist::dirac(0), &rat_int(2)).unwrap();
        assert_eq!(
            (m.mean, m.pgf, m.weighted),
            (ratio(0, 1), ratio(1, 1), ratio(0, 1))
        );
        let m = moments_exact(&law(&[(0, (4, 5)), (2, (1, 5))]), &rat_int(2)).unwrap();
        assert_eq!(
            (m.mean, m.pgf, m.weighted),
            (ratio(2, 5), ratio(8, 5), ratio(8, 5))
        );
        let m = moments_exact(
            &law(&[(0, (16, 25)), (1, (8, 25)), (3, (1, 25))]),
            &rat_int(2),
        )
        .unwrap();
        assert!(m.is_bounded());
        assert_eq!((m.pgf, m.weighted), (ratio(8, 5), ratio(8, 5)));
        let half = moments_exact(&law(&[(0, (1, 2)), (2, (1, 2))]), &ratio(3, 2)).unwrap();
        assert_eq!(half.pgf, ratio(13, 8));
        let f = moments_float(&law(&[(0, (4, 5)), (2, (1, 5))]).to_float(), 2.0).unwrap();
        assert!((f.pgf - 1.6).abs() < 1e-15 && (f.weighted - 1.6).abs() < 1e-15);
        assert!(moments_exact(&ExactDist::dirac(0), &rat_int(0)).is_err());
    }

    #[test]
    fn bracket_examples() {
        let b = free_energy_bracket(&dirac2(ratio(1, 1)), 5).unwrap();
        assert_eq!((b.lower, b.upper), (ratio(1, 1), ratio(33, 32)));
        let b = free_energy_bracket(&dirac2(ratio(0, 1)), 3).unwrap();
        assert_eq!((b.lower, b.upper), (ratio(-1, 8), ratio(0, 1)));
    }

    #[test]
    fn bracket_identities_and_monotonicity() {
        for p in [ratio(1, 10), ratio(1, 5), ratio(2, 5)] {
            let rows = free_energy_brackets_exact(&dirac2(p), 8).unwrap();
            for (i, b) in rows.iter().enumerate() {
                assert_eq!(
                    &b.upper - &b.lower,
                    BigRational::new(BigInt::one(), BigInt::from(2u32).pow(i as u32))
                );
                if i > 0 {
                    assert_eq!(rows[i - 1].series, b.lower);
                    assert!(rows[i - 1].lower <= b.lower);
                    assert!(rows[i - 1].upper >= b.upper);
                }
            }
        }
    }

    #[test]
    fn float_brackets_track_exact() {
        let spec = dirac2(ratio(3, 10));
        let ex = free_energy_brackets_exact(&spec, 8).unwrap();
        let fl =
            free_energy_brackets_float(&spec.with_p(0.3).unwrap(), 8, &EngineConfig::default())
                .unwrap();
        for (a, b) in ex.iter().zip(&fl) {
            assert!((to_f64(&a.lower) - b.lower).abs() < 1e-12);
            assert!((to_f64(&a.series) - b.series).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_preservation_examples() {
        let at = |p| sign_preservation_check(&dirac2(p), 4).unwrap();
        let crit = at(ratio(1, 5));
        assert!(crit.constant && crit.signs.iter().all(|s| *s == SignClass::Zero));
        let below = at(ratio(19, 100));
        assert!(below.constant && below.signs[0] == SignClass::Positive);
        let above = at(ratio(21, 100));
        assert!(above.constant && above.signs[0] == SignClass::Negative);
        let mut buf = Vec::new();
        write_sign_csv(&mut buf, &crit).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("\n1,0/1,0e0,0\n"));
    }

    #[test]
    fn hoeffding_examples() {
        let r = hoeffding_tail_check(&dirac2(ratio(1, 1)), 6, 1, 10_000, 1).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert!(r.pass);
        let r = hoeffding_tail_check(&dirac2(ratio(3, 4)), 6, 1, 100_000, 7).unwrap();
        assert!((r.bound - (-63.0f64 / 32.0).exp()).abs() < 1e-15);
        assert!(r.pass, "{r:?}");
        assert!(matches!(
            hoeffding_tail_check(&dirac2(ratio(1, 1)), 6, 64, 10, 1),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            hoeffding_tail_check(&dirac2(ratio(1, 2)), 6, 1, 10, 1),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            hoeffding_tail_check(&dirac2(ratio(1, 1)), 2, 1, 10, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn decay_profile_rows() {
        let spec = dirac2(ratio(2, 5)).with_p(0.4).unwrap();
        let rows =
            zero_mass_decay_profile(&spec, 6, &EngineConfig::float(1000, TailPolicy::LumpAtCap))
                .unwrap();
        assert_eq!(rows.len(), 7);
        assert!((rows[0].p_zero - 0.6).abs() < 1e-15);
        let inc = loglog_increments(&rows);
        assert_eq!(inc.len(), 6);
        assert!(inc.iter().all(|(_, d)| d.is_some()));
    }

    #[test]
    fn stochastic_sandwich_small_trees() {
        // sum of m^n copies minus m^n <= X_n <= sum of m^n copies, in CDF order
        for p in [ratio(1, 5), ratio(1, 2)] {
            let spec = dirac2(p);
            let d0 = mix_initial(&spec).unwrap();
            let laws = iterate(&d0, 2, 3).unwrap();
            for (n, xn) in laws.iter().enumerate() {
                let copies = 1u32 << n;
                let sum = convolve_power(&d0, copies).unwrap();
                let upper = cdf_exact(sum.exact().unwrap());
                let x = cdf_exact(xn.exact().unwrap());
                let lower_shift = copies as usize;
                for (k, fx) in x.iter().enumerate() {
                    let fu = upper.get(k).cloned().unwrap_or_else(BigRational::one);
                    assert!(fu <= *fx, "upper bound fails at n={n}, k={k}");
                    let fl = upper
                        .get(k + lower_shift)
                        .cloned()
                        .unwrap_or_else(BigRational::one);
                    assert!(*fx <= fl, "lower bound fails at n={n}, k={k}");
                }
            }
        }
    }

    fn small_star() -> impl Strategy<Value = StarLaw> {
        prop::collection::vec((1u32..4, 1u32..5), 1..3).prop_map(|pairs| {
            let total: u32 = pairs.iter().map(|(_, w)| w).sum();
            let mut masses = std::collections::BTreeMap::new();
            for (k, w) in pairs {
                *masses.entry(k).or_insert_with(BigRational::zero) += ratio(w as i64, total as i64);
            }
            StarLaw::Finite(masses)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn criticality_sign_is_preserved(star in small_star(), m in 2u32..4, a in 0i64..=20) {
            prop_assume!(m > 2 || star.c1(m) > 0.0);
            let spec = ModelSpec::new(m, star, ratio(a, 20)).unwrap();
            let report = sign_preservation_check(&spec, 4).unwrap();
            prop_assert!(report.constant, "{:?}", report.signs);
        }

        #[test]
        fn mean_identity_on_random_specs(star in small_star(), m in 2u32..4, a in 0i64..=10) {
            prop_assume!(m > 2 || star.c1(m) > 0.0);
            let spec = ModelSpec::new(m, star, ratio(a, 10)).unwrap();
            let laws = iterate(&mix_initial(&spec).unwrap(), m, 3).unwrap();
            for w in laws.windows(2) {
                prop_assert!(mean_identity_holds(w[0].exact().unwrap(), w[1].exact().unwrap(), m));
            }
        }
    }
}
