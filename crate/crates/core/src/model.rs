//! System specifications: branching factor, the law of the positive part
//! `X_0^*`, the mixing parameter, and the closed-form critical point.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Map, Value};

use crate::engine::{Dist, ExactDist, FloatDist};
use crate::error::{Error, Result};
use crate::rational::{
    format_rational, parse_rational, rat_int, rational_from_decimal_f64, to_f64, SignClass,
};

/// Dead band for float-mode criticality tests.
pub const FLOAT_CRITICAL_DEAD_BAND: f64 = 1e-9;

/// Law of `X_0^*`, supported on the positive integers.
#[derive(Debug, Clone, PartialEq)]
pub enum StarLaw {
    Dirac(u32),
    Finite(BTreeMap<u32, BigRational>),
    /// Mass proportional to `m^-k k^-alpha` on `1..=cutoff`, renormalized.
    PowerGeometric {
        alpha: f64,
        cutoff: u32,
    },
}

/// Truncated power-geometric family with its dropped mass.
#[derive(Debug, Clone)]
pub struct PowerGeometricTruncation {
    /// `masses[k - 1]` is the renormalized mass at `k`.
    pub masses: Vec<f64>,
    /// Fraction of the untruncated mass lying above the cutoff.
    pub dropped_tail: f64,
}

/// Which expectations of the untruncated family are infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Divergence {
    /// `E(m^{X*}) = inf`.
    pub pgf_at_m: bool,
    /// `E(X* m^{X*}) = inf`, hence also `E(((m-1)X* - 1) m^{X*}) = inf`.
    pub weighted_at_m: bool,
}

impl StarLaw {
    pub fn finite(masses: impl IntoIterator<Item = (u32, BigRational)>) -> Result<Self> {
        let law = StarLaw::Finite(masses.into_iter().collect());
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StarLaw::Dirac(k) => {
                if *k == 0 {
                    return Err(Error::InvalidSpec(
                        "dirac star law must sit on a positive integer".into(),
                    ));
                }
            }
            StarLaw::Finite(masses) => {
                if masses.is_empty() {
                    return Err(Error::InvalidSpec("finite star law has no masses".into()));
                }
                if masses.contains_key(&0) {
                    return Err(Error::InvalidSpec("star law puts mass at 0".into()));
                }
                if masses.values().any(|w| w.is_negative()) {
                    return Err(Error::InvalidSpec("negative mass in star law".into()));
                }
                let total: BigRational = masses.values().sum();
                if !total.is_one() {
                    return Err(Error::InvalidSpec(format!(
                        "star masses sum to {}, not 1",
                        format_rational(&total)
                    )));
                }
            }
            StarLaw::PowerGeometric { alpha, cutoff } => {
                if !alpha.is_finite() {
                    return Err(Error::InvalidSpec(
                        "power_geometric alpha must be finite".into(),
                    ));
                }
                if *cutoff == 0 {
                    return Err(Error::InvalidSpec(
                        "power_geometric cutoff must be >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Exact masses for finite-support laws; `None` for the truncated family.
    pub fn exact_masses(&self) -> Option<BTreeMap<u32, BigRational>> {
        match self {
            StarLaw::Dirac(k) => Some(BTreeMap::from([(*k, BigRational::one())])),
            StarLaw::Finite(m) => Some(
                m.clone()
                    .into_iter()
                    .filter(|(_, w)| !w.is_zero())
                    .collect(),
            ),
            StarLaw::PowerGeometric { .. } => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, StarLaw::PowerGeometric { .. })
    }

    pub fn power_geometric_truncation(alpha: f64, cutoff: u32, m: u32) -> PowerGeometricTruncation {
        let weight = |k: u32| (m as f64).powi(-(k as i32)) * (k as f64).powf(-alpha);
        let kept: Vec<f64> = (1..=cutoff).map(weight).collect();
        let kept_total: f64 = kept.iter().sum();
        // the untruncated series is geometric-dominated; sum until negligible
        let mut tail = 0.0;
        let mut k = cutoff + 1;
        loop {
            let w = weight(k);
            tail += w;
            if w <= 1e-18 * (kept_total + tail) || k > cutoff + 10_000 {
                break;
            }
            k += 1;
        }
        PowerGeometricTruncation {
            masses: kept.iter().map(|w| w / kept_total).collect(),
            dropped_tail: tail / (kept_total + tail),
        }
    }

    /// `(k, mass)` pairs as floats.
    pub fn float_masses(&self, m: u32) -> Vec<(u32, f64)> {
        match self {
            StarLaw::PowerGeometric { alpha, cutoff } => {
                Self::power_geometric_truncation(*alpha, *cutoff, m)
                    .masses
                    .into_iter()
                    .enumerate()
                    .map(|(i, w)| (i as u32 + 1, w))
                    .collect()
            }
            _ => self
                .exact_masses()
                .expect("exact law")
                .iter()
                .map(|(k, w)| (*k, to_f64(w)))
                .collect(),
        }
    }

    pub fn max_support(&self) -> u32 {
        match self {
            StarLaw::Dirac(k) => *k,
            StarLaw::Finite(m) => m
                .iter()
                .filter(|(_, w)| !w.is_zero())
                .map(|(k, _)| *k)
                .max()
                .unwrap_or(0),
            StarLaw::PowerGeometric { cutoff, .. } => *cutoff,
        }
    }

    /// `c_1 = P(X* >= 2)`, exact when possible.
    pub fn c1_exact(&self) -> Option<BigRational> {
        self.exact_masses().map(|ms| {
            ms.iter()
                .filter(|(k, _)| **k >= 2)
                .map(|(_, w)| w.clone())
                .sum()
        })
    }

    pub fn c1(&self, m: u32) -> f64 {
        match self.c1_exact() {
            Some(c) => to_f64(&c),
            None => self
                .float_masses(m)
                .iter()
                .filter(|(k, _)| *k >= 2)
                .map(|(_, w)| w)
                .sum(),
        }
    }

    /// Divergence of the untruncated family's moments at `s = m`.
    pub fn divergence(&self) -> Divergence {
        match self {
            StarLaw::PowerGeometric { alpha, .. } => Divergence {
                pgf_at_m: *alpha <= 1.0,
                weighted_at_m: *alpha <= 2.0,
            },
            _ => Divergence::default(),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            StarLaw::Dirac(k) => json!({"kind": "dirac", "k0": k}),
            StarLaw::Finite(masses) => {
                let map: Map<String, Value> = masses
                    .iter()
                    .map(|(k, w)| (k.to_string(), Value::String(format_rational(w))))
                    .collect();
                json!({"kind": "finite", "masses": map})
            }
            StarLaw::PowerGeometric { alpha, cutoff } => {
                json!({"kind": "power_geometric", "alpha": alpha, "cutoff": cutoff})
            }
        }
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let kind = v
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidSpec("star needs a \"kind\"".into()))?;
        let law =
            match kind {
                "dirac" => {
                    let k = v.get("k0").and_then(Value::as_u64).ok_or_else(|| {
                        Error::InvalidSpec("dirac star needs integer \"k0\"".into())
                    })?;
                    StarLaw::Dirac(
                        u32::try_from(k).map_err(|_| Error::InvalidSpec("k0 too large".into()))?,
                    )
                }
                "finite" => {
                    let obj = v.get("masses").and_then(Value::as_object).ok_or_else(|| {
                        Error::InvalidSpec("finite star needs a \"masses\" object".into())
                    })?;
                    let mut masses = BTreeMap::new();
                    for (k, w) in obj {
                        let k: u32 = k
                            .parse()
                            .map_err(|_| Error::InvalidSpec(format!("bad support point {k:?}")))?;
                        masses.insert(k, json_rational(w)?);
                    }
                    StarLaw::Finite(masses)
                }
                "power_geometric" => {
                    let alpha = v.get("alpha").and_then(Value::as_f64).ok_or_else(|| {
                        Error::InvalidSpec("power_geometric needs \"alpha\"".into())
                    })?;
                    let cutoff = v.get("cutoff").and_then(Value::as_u64).ok_or_else(|| {
                        Error::InvalidSpec("power_geometric needs integer \"cutoff\"".into())
                    })?;
                    StarLaw::PowerGeometric {
                        alpha,
                        cutoff: u32::try_from(cutoff)
                            .map_err(|_| Error::InvalidSpec("cutoff too large".into()))?,
                    }
                }
                other => return Err(Error::InvalidSpec(format!("unknown star kind {other:?}"))),
            };
        law.validate()?;
        Ok(law)
    }
}

/// A JSON value holding a probability: `"num/den"` strings and decimal
/// numbers are both read exactly.
pub fn json_rational(v: &Value) -> Result<BigRational> {
    match v {
        Value::String(s) => parse_rational(s),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(rat_int(i))
            } else {
                rational_from_decimal_f64(n.as_f64().unwrap_or(f64::NAN))
            }
        }
        _ => Err(Error::Parse(format!("expected a rational, got {v}"))),
    }
}

/// Mixing parameter, exact or floating.
#[derive(Debug, Clone, PartialEq)]
pub enum Prob {
    Exact(BigRational),
    Float(f64),
}

impl Prob {
    pub fn to_f64(&self) -> f64 {
        match self {
            Prob::Exact(r) => to_f64(r),
            Prob::Float(x) => *x,
        }
    }

    /// Exact value; floats are read through their decimal rendering.
    pub fn to_rational(&self) -> Result<BigRational> {
        match self {
            Prob::Exact(r) => Ok(r.clone()),
            Prob::Float(x) => rational_from_decimal_f64(*x),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Prob::Exact(r) => r.is_zero(),
            Prob::Float(x) => *x == 0.0,
        }
    }
}

impl From<BigRational> for Prob {
    fn from(r: BigRational) -> Self {
        Prob::Exact(r)
    }
}

impl From<f64> for Prob {
    fn from(x: f64) -> Self {
        Prob::Float(x)
    }
}

/// A Derrida-Retaux system: `(m, law of X_0^*, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub m: u32,
    pub star: StarLaw,
    pub p: Prob,
}

impl ModelSpec {
    pub fn new(m: u32, star: StarLaw, p: impl Into<Prob>) -> Result<Self> {
        let spec = ModelSpec {
            m,
            star,
            p: p.into(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidSpec(format!(
                "m = {} but m >= 2 is required",
                self.m
            )));
        }
        let in_range = match &self.p {
            Prob::Exact(r) => !r.is_negative() && *r <= BigRational::one(),
            Prob::Float(x) => (0.0..=1.0).contains(x),
        };
        if !in_range {
            return Err(Error::InvalidSpec("p must lie in [0, 1]".into()));
        }
        self.star.validate()?;
        if self.m == 2 && self.star.c1(self.m) <= 0.0 {
            return Err(Error::InvalidSpec(
                "m = 2 requires c1 = P(X* >= 2) > 0".into(),
            ));
        }
        Ok(())
    }

    /// Exact arithmetic is possible: finite star and rational `p`.
    pub fn is_exact(&self) -> bool {
        self.star.is_exact() && matches!(self.p, Prob::Exact(_))
    }

    pub fn with_p(&self, p: impl Into<Prob>) -> Result<Self> {
        ModelSpec::new(self.m, self.star.clone(), p)
    }

    pub fn to_json(&self) -> Value {
        let p = match &self.p {
            Prob::Exact(r) => Value::String(format_rational(r)),
            Prob::Float(x) => json!(x),
        };
        json!({"m": self.m, "star": self.star.to_json(), "p": p})
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json(&v)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let m = v
            .get("m")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::InvalidSpec("spec needs integer \"m\"".into()))?;
        let m = u32::try_from(m).map_err(|_| Error::InvalidSpec("m too large".into()))?;
        let star = StarLaw::from_json(
            v.get("star")
                .ok_or_else(|| Error::InvalidSpec("spec needs \"star\"".into()))?,
        )?;
        let p = match v.get("p") {
            Some(Value::String(s)) => Prob::Exact(parse_rational(s)?),
            Some(Value::Number(n)) => Prob::Float(n.as_f64().unwrap_or(f64::NAN)),
            _ => {
                return Err(Error::InvalidSpec(
                    "spec needs \"p\" (\"num/den\" string or number)".into(),
                ))
            }
        };
        ModelSpec::new(m, star, p)
    }
}

/// Law of `X_0 = (1-p) delta_0 + p P_{X*}`, exact when the spec allows it.
pub fn mix_initial(spec: &ModelSpec) -> Result<Dist> {
    if spec.is_exact() {
        mix_initial_exact(spec).map(Dist::Exact)
    } else {
        Ok(Dist::Float(mix_initial_float(spec)?))
    }
}

pub fn mix_initial_exact(spec: &ModelSpec) -> Result<ExactDist> {
    spec.validate()?;
    let star = spec
        .star
        .exact_masses()
        .ok_or_else(|| Error::NotExact("a finite-support star law".into()))?;
    let p = spec.p.to_rational()?;
    let top = star.keys().max().copied().unwrap_or(0) as usize;
    let mut masses = vec![BigRational::zero(); top + 1];
    masses[0] = BigRational::one() - &p;
    for (k, w) in &star {
        masses[*k as usize] = w * &p;
    }
    ExactDist::from_rationals(&masses)
}

pub fn mix_initial_float(spec: &ModelSpec) -> Result<FloatDist> {
    spec.validate()?;
    let p = spec.p.to_f64();
    let star = spec.star.float_masses(spec.m);
    let top = star.iter().map(|(k, _)| *k).max().unwrap_or(0) as usize;
    let mut masses = vec![0.0; top + 1];
    masses[0] = 1.0 - p;
    for (k, w) in star {
        masses[k as usize] += p * w;
    }
    Ok(FloatDist::from_masses(masses))
}

/// Critical mixing parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum CriticalP {
    Exact(BigRational),
    Approx(f64),
    /// `E(X* m^{X*}) = inf`: supercritical for every `p > 0`, so `p_c = 0`.
    Divergent,
}

impl CriticalP {
    pub fn to_f64(&self) -> f64 {
        match self {
            CriticalP::Exact(r) => to_f64(r),
            CriticalP::Approx(x) => *x,
            CriticalP::Divergent => 0.0,
        }
    }
}

/// `p_c = 1 / (1 + E(((m-1)X* - 1) m^{X*}))`.
pub fn critical_p(m: u32, star: &StarLaw) -> Result<CriticalP> {
    if m < 2 {
        return Err(Error::InvalidSpec(format!(
            "m = {m} but m >= 2 is required"
        )));
    }
    star.validate()?;
    if star.divergence().weighted_at_m {
        return Ok(CriticalP::Divergent);
    }
    match star.exact_masses() {
        Some(masses) => {
            let mm = BigInt::from(m);
            let e: BigRational = masses
                .iter()
                .map(|(k, w)| {
                    let coef = BigInt::from((m as i64 - 1) * *k as i64 - 1) * mm.pow(*k);
                    w * BigRational::from_integer(coef)
                })
                .sum();
            if !e.is_positive() {
                return Err(Error::Degenerate(
                    "E(((m-1)X*-1)m^X*) <= 0 puts p_c at 1; needs c1 > 0 when m = 2".into(),
                ));
            }
            Ok(CriticalP::Exact(
                BigRational::one() / (BigRational::one() + e),
            ))
        }
        None => {
            let e: f64 = star
                .float_masses(m)
                .iter()
                .map(|(k, w)| w * ((m as f64 - 1.0) * *k as f64 - 1.0) * (m as f64).powi(*k as i32))
                .sum();
            if e <= 0.0 {
                return Err(Error::Degenerate("E(((m-1)X*-1)m^X*) <= 0".into()));
            }
            Ok(CriticalP::Approx(1.0 / (1.0 + e)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Subcritical,
    Critical,
    Supercritical,
}

impl Classification {
    /// From the sign of `G = E(m^X) - (m-1) E(X m^X)`.
    pub fn from_sign(sign: SignClass) -> Self {
        match sign {
            SignClass::Positive => Classification::Subcritical,
            SignClass::Zero => Classification::Critical,
            SignClass::Negative => Classification::Supercritical,
        }
    }
}

/// Sign class of `(m-1) E(X_0 m^{X_0}) - E(m^{X_0})`.
pub fn classify(spec: &ModelSpec) -> Result<Classification> {
    spec.validate()?;
    if spec.p.is_zero() {
        return Ok(Classification::Subcritical);
    }
    if spec.star.divergence().weighted_at_m {
        return Ok(Classification::Supercritical);
    }
    let m = spec.m;
    if spec.is_exact() {
        let p = spec.p.to_rational()?;
        let star = spec.star.exact_masses().expect("exact star");
        let mm = BigInt::from(m);
        let star_g: BigRational = star
            .iter()
            .map(|(k, w)| {
                w * BigRational::from_integer(
                    mm.pow(*k) * BigInt::from(1 - (m as i64 - 1) * *k as i64),
                )
            })
            .sum();
        let g = (BigRational::one() - &p) + p * star_g;
        Ok(Classification::from_sign(SignClass::of_rational(&g)))
    } else {
        let p = spec.p.to_f64();
        let star_g: f64 = spec
            .star
            .float_masses(m)
            .iter()
            .map(|(k, w)| w * (m as f64).powi(*k as i32) * (1.0 - (m as f64 - 1.0) * *k as f64))
            .sum();
        let g = (1.0 - p) + p * star_g;
        Ok(Classification::from_sign(SignClass::of_f64(
            g,
            FLOAT_CRITICAL_DEAD_BAND,
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use proptest::prelude::*;

    fn dirac2(p: BigRational) -> ModelSpec {
        ModelSpec::new(2, StarLaw::Dirac(2), p).unwrap()
    }

    #[test]
    fn mix_initial_examples() {
        let d = mix_initial_exact(&dirac2(ratio(0, 1))).unwrap();
        assert_eq!(d.masses(), vec![ratio(1, 1)]);
        let d = mix_initial_exact(&dirac2(ratio(1, 1))).unwrap();
        assert_eq!(d.masses(), vec![ratio(0, 1), ratio(0, 1), ratio(1, 1)]);
        let d = mix_initial_exact(&dirac2(ratio(1, 5))).unwrap();
        assert_eq!(d.masses(), vec![ratio(4, 5), ratio(0, 1), ratio(1, 5)]);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ModelSpec::new(1, StarLaw::Dirac(2), ratio(1, 2)).is_err());
        assert!(ModelSpec::new(2, StarLaw::Dirac(2), ratio(3, 2)).is_err());
        assert!(ModelSpec::new(2, StarLaw::Dirac(2), -0.1).is_err());
        assert!(ModelSpec::new(2, StarLaw::Dirac(1), ratio(1, 2)).is_err());
        assert!(ModelSpec::new(3, StarLaw::Dirac(1), ratio(1, 2)).is_ok());
        assert!(StarLaw::finite([(0, ratio(1, 1))]).is_err());
        assert!(StarLaw::finite([(1, ratio(1, 2))]).is_err());
        assert!(StarLaw::Dirac(0).validate().is_err());
    }

    #[test]
    fn critical_p_examples() {
        assert_eq!(
            critical_p(2, &StarLaw::Dirac(2)).unwrap(),
            CriticalP::Exact(ratio(1, 5))
        );
        assert_eq!(
            critical_p(3, &StarLaw::Dirac(1)).unwrap(),
            CriticalP::Exact(ratio(1, 4))
        );
        let pg = StarLaw::PowerGeometric {
            alpha: 1.0,
            cutoff: 50,
        };
        assert_eq!(critical_p(2, &pg).unwrap(), CriticalP::Divergent);
        assert_eq!(critical_p(2, &pg).unwrap().to_f64(), 0.0);
        assert!(matches!(
            critical_p(2, &StarLaw::Dirac(1)),
            Err(Error::Degenerate(_))
        ));
        let light = StarLaw::PowerGeometric {
            alpha: 5.0,
            cutoff: 60,
        };
        let pc = critical_p(2, &light).unwrap().to_f64();
        assert!(pc > 0.0 && pc < 1.0);
    }

    #[test]
    fn power_geometric_divergence_boundary() {
        assert!(
            StarLaw::PowerGeometric {
                alpha: 2.0,
                cutoff: 10
            }
            .divergence()
            .weighted_at_m
        );
        assert!(
            !StarLaw::PowerGeometric {
                alpha: 2.0,
                cutoff: 10
            }
            .divergence()
            .pgf_at_m
        );
        assert!(
            StarLaw::PowerGeometric {
                alpha: 0.5,
                cutoff: 10
            }
            .divergence()
            .pgf_at_m
        );
        assert!(
            !StarLaw::PowerGeometric {
                alpha: 2.5,
                cutoff: 10
            }
            .divergence()
            .weighted_at_m
        );
    }

    #[test]
    fn power_geometric_truncation_is_normalized() {
        let t = StarLaw::power_geometric_truncation(3.0, 20, 2);
        let total: f64 = t.masses.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(t.dropped_tail > 0.0 && t.dropped_tail < 1e-6);
        assert!(t.masses.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify(&dirac2(ratio(1, 5))).unwrap(),
            Classification::Critical
        );
        assert_eq!(
            classify(&dirac2(ratio(0, 1))).unwrap(),
            Classification::Subcritical
        );
        assert_eq!(
            classify(&dirac2(ratio(1, 2))).unwrap(),
            Classification::Supercritical
        );
        let pg = ModelSpec::new(
            2,
            StarLaw::PowerGeometric {
                alpha: 1.5,
                cutoff: 30,
            },
            0.01,
        )
        .unwrap();
        assert_eq!(classify(&pg).unwrap(), Classification::Supercritical);
        let f = ModelSpec::new(2, StarLaw::Dirac(2), 0.2).unwrap();
        assert_eq!(classify(&f).unwrap(), Classification::Critical);
    }

    #[test]
    fn json_roundtrip() {
        let text = r#"{"m": 3, "star": {"kind": "finite", "masses": {"1": "1/2", "2": 0.5}}, "p": "1/10"}"#;
        let spec = ModelSpec::from_json_str(text).unwrap();
        assert_eq!(spec.m, 3);
        assert!(spec.is_exact());
        let again = ModelSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(again, spec);
        let float =
            ModelSpec::from_json_str(r#"{"m": 2, "star": {"kind": "dirac", "k0": 2}, "p": 0.15}"#)
                .unwrap();
        assert!(!float.is_exact());
        assert!(
            ModelSpec::from_json_str(r#"{"m": 2, "star": {"kind": "nope"}, "p": 0.1}"#).is_err()
        );
    }

    fn small_star() -> impl Strategy<Value = StarLaw> {
        prop::collection::vec((1u32..5, 1u32..6), 1..4).prop_map(|pairs| {
            let total: u32 = pairs.iter().map(|(_, w)| w).sum();
            let mut masses = BTreeMap::new();
            for (k, w) in pairs {
                *masses.entry(k).or_insert_with(BigRational::zero) += ratio(w as i64, total as i64);
            }
            StarLaw::Finite(masses)
        })
    }

    proptest! {
        #[test]
        fn critical_p_is_the_classification_root(star in small_star(), m in 2u32..4) {
            prop_assume!(star.c1(m) > 0.0 || m > 2);
            let pc = match critical_p(m, &star).unwrap() {
                CriticalP::Exact(r) => r,
                other => panic!("expected exact, got {other:?}"),
            };
            prop_assert!(!pc.is_negative() && pc < BigRational::one());
            let at = |p: BigRational| classify(&ModelSpec::new(m, star.clone(), p).unwrap()).unwrap();
            prop_assert_eq!(at(pc.clone()), Classification::Critical);
            let eps = ratio(1, 1_000_000);
            if pc > eps {
                prop_assert_eq!(at(&pc - &eps), Classification::Subcritical);
            }
            prop_assert_eq!(at(&pc + &eps), Classification::Supercritical);
            let total: BigRational = mix_initial_exact(&ModelSpec::new(m, star.clone(), pc).unwrap())
                .unwrap().masses().into_iter().sum();
            prop_assert!(total.is_one());
        }
    }
}
