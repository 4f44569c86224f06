//! Truncated laws `X_i^(M) = min(X_i, M - i)`, their generating function
//! `H(s) = E(s^X)`, and the functional
//!
//! `Delta(s) = H - s(s-1)H' - ((m-1)(m-s)/m)(2sH' + s^2 H'')`
//!
//! that contracts under the recursion near criticality, with exact checks of
//! the inequalities it satisfies.

use std::io::{self, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::engine::{dr_step_with, iterate_with, Dist, EngineConfig, ExactDist, TailPolicy};
use crate::error::{Error, Result};
use crate::model::{mix_initial, mix_initial_exact, ModelSpec, StarLaw};
use crate::rational::{format_rational, rat_int, ratio, rational_from_f64_exact, to_f64};

/// Law of `min(X_i, M - i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncatedLaw {
    masses: Vec<BigRational>,
    i: usize,
    horizon: usize,
}

impl TruncatedLaw {
    /// Wraps a law already supported on `0..=M-i`.
    pub fn from_masses(masses: Vec<BigRational>, i: usize, horizon: usize) -> Result<Self> {
        if i >= horizon {
            return Err(Error::InvalidArgument(format!(
                "need i < M, got i = {i}, M = {horizon}"
            )));
        }
        if masses.is_empty() || masses.len() > horizon - i + 1 {
            return Err(Error::InvalidArgument(
                "law must be supported on 0..=M-i".into(),
            ));
        }
        if masses.iter().any(Signed::is_negative) || !masses.iter().sum::<BigRational>().is_one() {
            return Err(Error::InvalidArgument(
                "masses must form a probability vector".into(),
            ));
        }
        Ok(TruncatedLaw { masses, i, horizon })
    }

    pub fn masses(&self) -> &[BigRational] {
        &self.masses
    }

    pub fn generation(&self) -> usize {
        self.i
    }

    /// The horizon `M`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn mass(&self, k: usize) -> BigRational {
        self.masses.get(k).cloned().unwrap_or_default()
    }

    pub fn to_dist(&self) -> ExactDist {
        ExactDist::from_rationals(&self.masses).expect("valid law")
    }
}

/// `min(X, M - i)` for the law `d` of `X_i`; the cap absorbs the upper tail,
/// including any lumped tail.
pub fn truncate(d: &Dist, i: usize, horizon: usize) -> Result<TruncatedLaw> {
    if i >= horizon {
        return Err(Error::InvalidArgument(format!(
            "need i < M, got i = {i}, M = {horizon}"
        )));
    }
    let cap = horizon - i;
    let mut masses: Vec<BigRational> = match d {
        Dist::Exact(e) => (0..cap.min(e.len())).map(|k| e.mass(k)).collect(),
        Dist::Float(f) => (0..cap.min(f.len()))
            .map(|k| rational_from_f64_exact(f.mass(k)))
            .collect(),
    };
    let below: BigRational = masses.iter().sum();
    let top = BigRational::one() - below;
    if !top.is_zero() {
        masses.resize(cap, BigRational::zero());
        masses.push(top);
    }
    while masses.len() > 1 && masses.last().is_some_and(Zero::is_zero) {
        masses.pop();
    }
    Ok(TruncatedLaw { masses, i, horizon })
}

/// `(H(s), H'(s), H''(s))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HValues {
    pub h: BigRational,
    pub hp: BigRational,
    pub hpp: BigRational,
}

pub fn h_and_derivs(t: &TruncatedLaw, s: &BigRational) -> HValues {
    let (mut h, mut hp, mut hpp) = (
        BigRational::zero(),
        BigRational::zero(),
        BigRational::zero(),
    );
    // s^(k-2), s^(k-1), s^k built up together so s = 0 is fine
    let mut pows = vec![BigRational::one()];
    for k in 1..t.masses.len() {
        let next = &pows[k - 1] * s;
        pows.push(next);
    }
    for (k, w) in t.masses.iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        h += w * &pows[k];
        if k >= 1 {
            hp += w * rat_int(k as i64) * &pows[k - 1];
        }
        if k >= 2 {
            hpp += w * rat_int((k * (k - 1)) as i64) * &pows[k - 2];
        }
    }
    HValues { h, hp, hpp }
}

fn kappa(s: &BigRational, m: u32) -> BigRational {
    // (m-1)(m-s)/m
    let mm = rat_int(m as i64);
    (&mm - BigRational::one()) * (&mm - s) / mm
}

/// `Delta(s)` from `H, H', H''`.
pub fn delta(t: &TruncatedLaw, s: &BigRational, m: u32) -> BigRational {
    let hv = h_and_derivs(t, s);
    delta_from_h(&hv, s, m)
}

fn delta_from_h(hv: &HValues, s: &BigRational, m: u32) -> BigRational {
    let one = BigRational::one();
    &hv.h - s * (s - &one) * &hv.hp - kappa(s, m) * (rat_int(2) * s * &hv.hp + s * s * &hv.hpp)
}

/// `f_s(k) = [1 - (s-1)k - ((m-1)(m-s)/m) k(k+1)] s^k`.
pub fn f_s(k: u64, s: &BigRational, m: u32) -> BigRational {
    let kk = rat_int(k as i64);
    let bracket = BigRational::one()
        - (s - BigRational::one()) * &kk
        - kappa(s, m) * &kk * (&kk + BigRational::one());
    bracket * num_traits::pow(s.clone(), k as usize)
}

/// `E(f_s(X))`, which equals `Delta(s)`.
pub fn delta_via_fs(t: &TruncatedLaw, s: &BigRational, m: u32) -> BigRational {
    t.masses
        .iter()
        .enumerate()
        .filter(|(_, w)| !w.is_zero())
        .map(|(k, w)| w * f_s(k as u64, s, m))
        .sum()
}

/// Both sides of
/// `E f_s((X_1+...+X_m-1)^+) = (m/s) Delta H^(m-1) - ((m-s)/s) [(m-1)sH' - H]^2 H^(m-2)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityCheck {
    pub lhs: BigRational,
    pub rhs: BigRational,
    pub equal: bool,
}

pub fn one_step_delta_identity_check(
    t: &TruncatedLaw,
    s: &BigRational,
    m: u32,
) -> Result<IdentityCheck> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "m = {m} but m >= 2 is required"
        )));
    }
    let mm = rat_int(m as i64);
    if *s <= BigRational::one() || *s > mm {
        return Err(Error::Precondition("s must lie in (1, m]".into()));
    }
    let next = dr_step_with(&Dist::Exact(t.to_dist()), m, &EngineConfig::default())?;
    let lhs: BigRational = next
        .exact()?
        .masses()
        .iter()
        .enumerate()
        .filter(|(_, w)| !w.is_zero())
        .map(|(k, w)| w * f_s(k as u64, s, m))
        .sum();
    let hv = h_and_derivs(t, s);
    let d = delta_from_h(&hv, s, m);
    let hm1 = num_traits::pow(hv.h.clone(), (m - 1) as usize);
    let hm2 = num_traits::pow(hv.h.clone(), (m - 2) as usize);
    let sq = (&(&mm - BigRational::one()) * s * &hv.hp) - &hv.h;
    let rhs = &mm / s * d * hm1 - (&mm - s) / s * &sq * &sq * hm2;
    Ok(IdentityCheck {
        equal: lhs == rhs,
        lhs,
        rhs,
    })
}

/// `g(s) = E([(m-1)X - 1] s^X)`, exactly.
pub fn g_value(t: &TruncatedLaw, s: &BigRational, m: u32) -> BigRational {
    let mut acc = BigRational::zero();
    let mut pw = BigRational::one();
    for (k, w) in t.masses.iter().enumerate() {
        if !w.is_zero() {
            acc += w * rat_int((m as i64 - 1) * k as i64 - 1) * &pw;
        }
        pw *= s;
    }
    acc
}

/// Root of `g` with a certified bracket: `g(lo) < 0 <= g(hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiRoot {
    pub root: f64,
    pub lo: f64,
    pub hi: f64,
}

pub const SI_LOWER: f64 = 1e-6;
pub const SI_REL_TOL: f64 = 1e-12;

/// Solves `E([(m-1)X - 1] s^X) = 0` by bisection on `[1e-6, 64m]`.
/// `g` is nondecreasing on `s > 0`, so one sign change brackets the root.
pub fn solve_si(t: &TruncatedLaw, m: u32) -> Result<SiRoot> {
    let sign = |x: f64| g_value(t, &rational_from_f64_exact(x), m);
    let (mut lo, mut hi) = (SI_LOWER, 64.0 * m as f64);
    if !sign(lo).is_negative() {
        let why = if t.mass(0).is_zero() {
            "no mass at 0, so g > 0 (or g = 0 identically) for every s > 0"
        } else {
            "g(1e-6) >= 0"
        };
        return Err(Error::NoSignChange(why.into()));
    }
    if sign(hi).is_negative() {
        return Err(Error::NoSignChange(format!(
            "g < 0 on the whole search interval up to {hi}: no mass where (m-1)k > 1"
        )));
    }
    while hi - lo > SI_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sign(mid).is_negative() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SiRoot {
        root: 0.5 * (lo + hi),
        lo,
        hi,
    })
}

/// `s_i >= threshold`, decided exactly: `g` is nondecreasing, so this holds
/// iff `g(threshold) <= 0`, given that a root exists.
pub fn si_at_least(t: &TruncatedLaw, m: u32, threshold: &BigRational) -> bool {
    !g_value(t, threshold, m).is_positive()
}

/// Rational stand-in for `s = m^(1-delta)`: the exact value of the nearest
/// double. The recursion factor `m^(-2 delta)` is taken as `(s/m)^2`.
pub fn surrogate_s(m: u32, delta: &BigRational) -> BigRational {
    rational_from_f64_exact((m as f64).powf(1.0 - to_f64(delta)))
}

/// `n_2 = floor(log(1/c1) / log(5/4)) + 1`: the least `t` with `c1 (5/4)^t > 1`.
pub fn n2(star: &StarLaw) -> Result<usize> {
    star.validate()?;
    match star.c1_exact() {
        Some(c1) => {
            if !c1.is_positive() {
                return Err(Error::Precondition("c1 = P(X* >= 2) = 0".into()));
            }
            let step = ratio(5, 4);
            let mut t = 0;
            let mut acc = c1;
            while acc <= BigRational::one() {
                acc *= &step;
                t += 1;
            }
            Ok(t)
        }
        None => {
            let c1 = star.c1(2);
            if c1 <= 0.0 {
                return Err(Error::Precondition("c1 = P(X* >= 2) = 0".into()));
            }
            Ok(((1.0 / c1).ln() / 1.25f64.ln()).floor() as usize + 1)
        }
    }
}

/// Outcome of a conditional check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Pass,
    Fail,
    NotApplicable,
}

impl Check {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Check::Pass
        } else {
            Check::Fail
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Check::Pass => "pass",
            Check::Fail => "fail",
            Check::NotApplicable => "n/a",
        }
    }

    pub fn failed(self) -> bool {
        self == Check::Fail
    }
}

/// Inequalities at one generation:
/// `[H - (m-1)sH']^2 <= 2 H(0) Delta` and `Delta >= delta^2/128`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaBounds {
    pub s: BigRational,
    pub h: HValues,
    pub delta_value: BigRational,
    pub s_i: Option<SiRoot>,
    pub preconditions_met: bool,
    pub cauchy_schwarz: Check,
    pub lower_bound: Check,
}

fn check_delta_range(m: u32, d: &BigRational) -> Result<()> {
    if !d.is_positive() || *d >= BigRational::new(BigInt::one(), BigInt::from(16 * m)) {
        return Err(Error::InvalidArgument(
            "delta must lie in (0, 1/(16m))".into(),
        ));
    }
    Ok(())
}

/// Hypotheses of the bounds: `n2 <= i <= M-2` and `s_i >= m - m delta^3`.
fn hypotheses_hold(t: &TruncatedLaw, m: u32, d: &BigRational, n2: usize) -> (Option<SiRoot>, bool) {
    let root = solve_si(t, m).ok();
    let in_range = t.i >= n2 && t.i + 2 <= t.horizon;
    let mm = rat_int(m as i64);
    let threshold = &mm - &mm * d * d * d;
    let met = in_range && root.is_some() && si_at_least(t, m, &threshold);
    (root, met)
}

pub fn delta_bounds_check(
    t: &TruncatedLaw,
    m: u32,
    d: &BigRational,
    n2: usize,
) -> Result<DeltaBounds> {
    check_delta_range(m, d)?;
    let s = surrogate_s(m, d);
    let h = h_and_derivs(t, &s);
    let delta_value = delta_from_h(&h, &s, m);
    let (s_i, met) = hypotheses_hold(t, m, d, n2);
    let (cauchy_schwarz, lower_bound) = if met {
        let lhs = &h.h - rat_int(m as i64 - 1) * &s * &h.hp;
        let cs = &lhs * &lhs <= rat_int(2) * t.mass(0) * &delta_value;
        let lb = delta_value >= d * d / rat_int(128);
        (Check::from_bool(cs), Check::from_bool(lb))
    } else {
        (Check::NotApplicable, Check::NotApplicable)
    };
    Ok(DeltaBounds {
        s,
        h,
        delta_value,
        s_i,
        preconditions_met: met,
        cauchy_schwarz,
        lower_bound,
    })
}

/// `Delta_{i+1}(s) >= (s/m)^2 Delta_i(s) H_i(s)^(m-1)` for consecutive
/// truncated laws, gated on the hypotheses at generation `i`.
pub fn recursion_inequality(
    t: &TruncatedLaw,
    next: &TruncatedLaw,
    m: u32,
    d: &BigRational,
    n2: usize,
) -> Result<Check> {
    check_delta_range(m, d)?;
    if next.i != t.i + 1 || next.horizon != t.horizon {
        return Err(Error::InvalidArgument(
            "laws must be consecutive generations with the same M".into(),
        ));
    }
    let (_, met) = hypotheses_hold(t, m, d, n2);
    if !met {
        return Ok(Check::NotApplicable);
    }
    let s = surrogate_s(m, d);
    let h = h_and_derivs(t, &s);
    let factor = (&s / rat_int(m as i64)) * (&s / rat_int(m as i64));
    let rhs = factor * delta_from_h(&h, &s, m) * num_traits::pow(h.h.clone(), (m - 1) as usize);
    Ok(Check::from_bool(delta(next, &s, m) >= rhs))
}

/// One row of the sweep over generations `i < M`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaReport {
    pub i: usize,
    pub horizon: usize,
    pub bounds: DeltaBounds,
    pub recursion: Check,
}

/// Sweep over `i = 0..M` for an exact spec, with default `delta = 1/64`
/// when `m = 2`.
pub fn delta_sweep(spec: &ModelSpec, horizon: usize, d: &BigRational) -> Result<Vec<DeltaReport>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("M must be >= 1".into()));
    }
    let n2 = n2(&spec.star)?;
    let d0 = Dist::Exact(mix_initial_exact(spec)?);
    let laws = iterate_with(&d0, spec.m, horizon - 1, &EngineConfig::default())?;
    let truncated = laws
        .iter()
        .enumerate()
        .map(|(i, law)| truncate(law, i, horizon))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(horizon);
    for (i, t) in truncated.iter().enumerate() {
        let bounds = delta_bounds_check(t, spec.m, d, n2)?;
        let recursion = match truncated.get(i + 1) {
            Some(next) => recursion_inequality(t, next, spec.m, d, n2)?,
            None => Check::NotApplicable,
        };
        rows.push(DeltaReport {
            i,
            horizon,
            bounds,
            recursion,
        });
    }
    Ok(rows)
}

/// Default `delta`: `1/64` for `m = 2`, otherwise `1/(32m)`.
pub fn default_delta(m: u32) -> BigRational {
    if m == 2 {
        ratio(1, 64)
    } else {
        BigRational::new(BigInt::one(), BigInt::from(32 * m))
    }
}

/// CSV `i,M,s,H,H',H'',Delta,s_i,cauchy_schwarz,delta_lower_bound,recursion_ineq,preconditions_met`.
pub fn write_delta_csv<W: Write>(w: &mut W, rows: &[DeltaReport]) -> io::Result<()> {
    writeln!(w, "i,M,s,H,Hp,Hpp,Delta,s_i,cauchy_schwarz,delta_lower_bound,recursion_ineq,preconditions_met")?;
    for r in rows {
        let l = &r.bounds;
        let si = l
            .s_i
            .map_or_else(|| "none".to_string(), |x| format!("{:.15e}", x.root));
        writeln!(
            w,
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{},{},{},{}",
            r.i,
            r.horizon,
            to_f64(&l.s),
            to_f64(&l.h.h),
            to_f64(&l.h.hp),
            to_f64(&l.h.hpp),
            format_rational(&l.delta_value),
            si,
            l.cauchy_schwarz.name(),
            l.lower_bound.name(),
            r.recursion.name(),
            l.preconditions_met
        )?;
    }
    Ok(())
}

/// `P(X_n = 1)` for `n2 <= n <= n2 + span` on a grid of `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassAtOneReport {
    pub n2: usize,
    /// `(p, n, P(X_n = 1))`.
    pub rows: Vec<(f64, usize, f64)>,
    pub max_mass_at_one: f64,
    pub pass: bool,
}

/// For `m = 2`, checks `P(X_n = 1) <= 1/2` past `n2`. Runs in float mode
/// with a small cap and the tail at +infinity, which leaves every mass below
/// the cap untouched.
pub fn mass_at_one_check(star: &StarLaw, p_grid: &[f64], span: usize) -> Result<MassAtOneReport> {
    let n2 = n2(star)?;
    let cfg = EngineConfig::float(256, TailPolicy::LumpAtCap);
    let mut rows = Vec::new();
    for &p in p_grid {
        let spec = ModelSpec::new(2, star.clone(), p)?;
        let laws = iterate_with(&mix_initial(&spec)?, 2, n2 + span, &cfg)?;
        for (n, law) in laws.iter().enumerate().skip(n2) {
            rows.push((p, n, law.mass_f64(1)));
        }
    }
    let max_mass_at_one = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok(MassAtOneReport {
        n2,
        rows,
        max_mass_at_one,
        pass: max_mass_at_one <= 0.5,
    })
}
