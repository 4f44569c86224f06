//! Laws of `X_n` as exact polynomials in `p`.
//!
//! A [`PolyDist`] is stored in homogeneous form: with `q = 1 - p` and
//! `d = m^n`, the mass at `k` is `sum_j c[k][j] p^j q^(d-j) / denom` with
//! nonnegative integers `c`. The recursion never subtracts in this basis, so
//! a step is one Kronecker-packed convolution power, exactly like the
//! numeric engine. Monomial coefficients are produced only on demand.

use std::io::{self, Write};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};

use crate::engine::ExactDist;
use crate::error::{Error, Result};
use crate::kernel::power_exact;
use crate::model::StarLaw;
use crate::rational::{common_denominator, factorial, format_rational, parse_rational, rat_int};

/// Polynomial in `p` with exact rational coefficients, lowest power first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RationalPoly {
    coeffs: Vec<BigRational>,
}

impl RationalPoly {
    pub fn new(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        RationalPoly { coeffs }
    }

    pub fn zero() -> Self {
        RationalPoly::default()
    }

    pub fn constant(c: BigRational) -> Self {
        RationalPoly::new(vec![c])
    }

    /// `a + b p`.
    pub fn linear(a: BigRational, b: BigRational) -> Self {
        RationalPoly::new(vec![a, b])
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with the zero polynomial reported as `None`.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn add(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        RationalPoly::new(
            (0..len)
                .map(|i| {
                    let a = self.coeffs.get(i).cloned().unwrap_or_default();
                    a + other.coeffs.get(i).cloned().unwrap_or_default()
                })
                .collect(),
        )
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        RationalPoly::new(self.coeffs.iter().map(|x| x * c).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return RationalPoly::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        RationalPoly::new(out)
    }

    pub fn pow(&self, e: u32) -> Self {
        (0..e).fold(RationalPoly::constant(BigRational::one()), |acc, _| {
            acc.mul(self)
        })
    }

    /// `k`-th formal derivative.
    pub fn derivative(&self, k: usize) -> Self {
        if k >= self.coeffs.len() {
            return RationalPoly::zero();
        }
        RationalPoly::new(
            self.coeffs[k..]
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let falling: BigUint = ((i + 1)..=(i + k)).map(BigUint::from).product();
                    c * BigRational::from_integer(BigInt::from(falling))
                })
                .collect(),
        )
    }

    /// Horner evaluation, exact.
    pub fn eval(&self, p: &BigRational) -> BigRational {
        self.coeffs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * p + c)
    }

    pub fn to_json(&self) -> Value {
        json!({"coeffs": self.coeffs.iter().map(format_rational).collect::<Vec<_>>()})
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let arr = v
            .get("coeffs")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("polynomial needs a \"coeffs\" array".into()))?;
        let coeffs = arr
            .iter()
            .map(|c| {
                c.as_str()
                    .ok_or_else(|| Error::Parse("coefficients are \"num/den\" strings".into()))
                    .and_then(parse_rational)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RationalPoly::new(coeffs))
    }
}

/// Limit on the homogeneous degree `m^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolyBudget {
    pub max_degree: usize,
}

impl Default for PolyBudget {
    /// Allows `n <= 8` for `m = 2` and `n <= 5` for `m = 3`.
    fn default() -> Self {
        PolyBudget { max_degree: 256 }
    }
}

/// Size of the packed product a step will perform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepCost {
    pub out_degree: usize,
    pub out_support: usize,
    pub packed_entries: usize,
    pub coeff_bits: u64,
    /// Rough bit length of the final big-integer product.
    pub product_bits: u64,
}

/// Family `{P(X_n = k)}` as polynomials in `p`, homogeneous form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyDist {
    m: u32,
    n: usize,
    degree: usize,
    coeffs: Vec<Vec<BigUint>>,
    denom: BigUint,
}

/// Law `mass_k = mu_k (1 - p) + lambda_k p` for two exact laws.
pub fn from_mixture(m: u32, mu: &[BigRational], lambda: &[BigRational]) -> Result<PolyDist> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "m = {m} but m >= 2 is required"
        )));
    }
    for law in [mu, lambda] {
        if law.is_empty()
            || law.iter().any(Signed::is_negative)
            || !law.iter().sum::<BigRational>().is_one()
        {
            return Err(Error::InvalidArgument(
                "mixture components must be probability vectors".into(),
            ));
        }
    }
    let den = common_denominator(mu.iter().chain(lambda));
    let scaled = |x: Option<&BigRational>| -> BigUint {
        x.map_or_else(BigUint::zero, |x| {
            (x.numer() * (&den / x.denom()))
                .to_biguint()
                .expect("nonnegative")
        })
    };
    let len = mu.len().max(lambda.len());
    let coeffs = (0..len)
        .map(|k| vec![scaled(mu.get(k)), scaled(lambda.get(k))])
        .collect();
    let mut pd = PolyDist {
        m,
        n: 0,
        degree: 1,
        coeffs,
        denom: den.to_biguint().expect("positive"),
    };
    pd.trim();
    Ok(pd)
}

/// `X_0` with `P(X_0 = 0) = 1 - p` and `P(X_0 = k) = P(X* = k) p`.
pub fn poly_initial(m: u32, star: &StarLaw) -> Result<PolyDist> {
    star.validate()?;
    let masses = star
        .exact_masses()
        .ok_or_else(|| Error::NotExact("a finite-support star law".into()))?;
    let top = *masses.keys().max().expect("nonempty") as usize;
    let mut lambda = vec![BigRational::zero(); top + 1];
    for (k, w) in masses {
        lambda[k as usize] = w;
    }
    from_mixture(m, &[BigRational::one()], &lambda)
}

impl PolyDist {
    fn trim(&mut self) {
        while self.coeffs.len() > 1
            && self
                .coeffs
                .last()
                .is_some_and(|c| c.iter().all(Zero::is_zero))
        {
            self.coeffs.pop();
        }
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn generation(&self) -> usize {
        self.n
    }

    /// Homogeneous degree `m^n`; every mass has degree at most this.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of stored support points.
    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn homogeneous(&self, k: usize) -> Option<&[BigUint]> {
        self.coeffs.get(k).map(Vec::as_slice)
    }

    pub fn denominator(&self) -> &BigUint {
        &self.denom
    }

    /// Checks `sum_k c[k][j] = C(d, j) denom`, i.e. the masses add up to the
    /// constant polynomial 1.
    pub fn mass_sum_is_one(&self) -> bool {
        let mut binom = BigUint::one();
        for j in 0..=self.degree {
            let col: BigUint = self.coeffs.iter().map(|c| &c[j]).sum();
            if col != &binom * &self.denom {
                return false;
            }
            binom = binom * BigUint::from(self.degree - j) / BigUint::from(j + 1);
        }
        true
    }

    pub fn mass(&self, k: usize) -> RationalPoly {
        match self.coeffs.get(k) {
            Some(c) => homogeneous_to_monomial(c, self.degree, &self.denom),
            None => RationalPoly::zero(),
        }
    }

    pub fn masses(&self) -> Vec<RationalPoly> {
        (0..self.coeffs.len()).map(|k| self.mass(k)).collect()
    }

    /// `E(X_n)` as a polynomial in `p`.
    pub fn mean(&self) -> RationalPoly {
        let mut acc = vec![BigUint::zero(); self.degree + 1];
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            let kk = BigUint::from(k);
            for (a, x) in acc.iter_mut().zip(c) {
                *a += x * &kk;
            }
        }
        homogeneous_to_monomial(&acc, self.degree, &self.denom)
    }

    /// Exact law at `p`, which must lie in `[0, 1]`.
    pub fn evaluate(&self, p: &BigRational) -> Result<ExactDist> {
        if p.is_negative() || *p > BigRational::one() {
            return Err(Error::InvalidArgument("p must lie in [0, 1]".into()));
        }
        let a = p.numer().to_biguint().expect("nonnegative");
        let b = p.denom().to_biguint().expect("positive");
        let q = &b - &a;
        let d = self.degree;
        let mut apow = Vec::with_capacity(d + 1);
        let mut qpow = Vec::with_capacity(d + 1);
        let (mut x, mut y) = (BigUint::one(), BigUint::one());
        for _ in 0..=d {
            apow.push(x.clone());
            qpow.push(y.clone());
            x *= &a;
            y *= &q;
        }
        let num = self
            .coeffs
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .filter(|(_, x)| !x.is_zero())
                    .map(|(j, x)| x * &apow[j] * &qpow[d - j])
                    .sum()
            })
            .collect();
        let denom = &self.denom * num_traits::pow(b, d);
        ExactDist::from_parts(num, BigUint::zero(), denom)
    }

    pub fn step_cost(&self) -> StepCost {
        let m = self.m as usize;
        let out_degree = self.degree * m;
        let stride = out_degree + 1;
        let out_support = (self.coeffs.len() - 1) * m + 1;
        let bits = self
            .coeffs
            .iter()
            .flatten()
            .map(|x| x.bits())
            .max()
            .unwrap_or(0);
        let coeff_bits = bits * m as u64 + 2 * m as u64;
        StepCost {
            out_degree,
            out_support,
            packed_entries: out_support * stride,
            coeff_bits,
            product_bits: out_support as u64 * stride as u64 * coeff_bits,
        }
    }
}

fn binomial_rows(d: usize) -> Vec<Vec<BigInt>> {
    let mut rows: Vec<Vec<BigInt>> = Vec::with_capacity(d + 1);
    for r in 0..=d {
        let mut row = vec![BigInt::one(); r + 1];
        for t in 1..r {
            row[t] = &rows[r - 1][t - 1] + &rows[r - 1][t];
        }
        rows.push(row);
    }
    rows
}

/// `sum_j c_j p^j (1-p)^(d-j) / denom` in the monomial basis:
/// `a_i = sum_{j <= i} c_j (-1)^(i-j) C(d-j, i-j)`.
fn homogeneous_to_monomial(c: &[BigUint], d: usize, denom: &BigUint) -> RationalPoly {
    let rows = binomial_rows(d);
    let den = BigInt::from(denom.clone());
    let coeffs = (0..=d)
        .map(|i| {
            let mut a = BigInt::zero();
            for (j, cj) in c.iter().enumerate().take(i + 1) {
                if cj.is_zero() {
                    continue;
                }
                let term = BigInt::from(cj.clone()) * &rows[d - j][i - j];
                if (i - j) % 2 == 0 {
                    a += term;
                } else {
                    a -= term;
                }
            }
            BigRational::new(a, den.clone())
        })
        .collect();
    RationalPoly::new(coeffs)
}

/// One symbolic recursion step with the default budget.
pub fn poly_step(pd: &PolyDist) -> Result<PolyDist> {
    poly_step_with(pd, &PolyBudget::default())
}

pub fn poly_step_with(pd: &PolyDist, budget: &PolyBudget) -> Result<PolyDist> {
    let cost = pd.step_cost();
    if cost.out_degree > budget.max_degree {
        return Err(Error::BudgetExceeded(format!(
            "step to generation {} needs degree {} > {} (about {} packed coefficients, {} product bits)",
            pd.n + 1,
            cost.out_degree,
            budget.max_degree,
            cost.packed_entries,
            cost.product_bits
        )));
    }
    let m = pd.m;
    let d = pd.degree;
    let stride = cost.out_degree + 1;
    // flatten (k, j) to k * stride + j; sums of m j-indices never reach stride
    let mut flat = vec![BigUint::zero(); (pd.coeffs.len() - 1) * stride + d + 1];
    for (k, c) in pd.coeffs.iter().enumerate() {
        for (j, x) in c.iter().enumerate() {
            flat[k * stride + j] = x.clone();
        }
    }
    let prod = power_exact(&flat, m, None);
    let mut sums: Vec<Vec<BigUint>> = prod
        .chunks(stride)
        .map(|ch| {
            let mut row = ch.to_vec();
            row.resize(stride, BigUint::zero());
            row
        })
        .collect();
    if sums.len() >= 2 {
        let first = sums.remove(0);
        for (a, b) in sums[0].iter_mut().zip(first) {
            *a += b;
        }
    }
    let mut out = PolyDist {
        m,
        n: pd.n + 1,
        degree: cost.out_degree,
        coeffs: sums,
        denom: num_traits::pow(pd.denom.clone(), m as usize),
    };
    out.trim();
    Ok(out)
}

/// Generations `0..=n` starting from `pd`.
pub fn poly_iterate(pd: &PolyDist, n: usize, budget: &PolyBudget) -> Result<Vec<PolyDist>> {
    let mut out = vec![pd.clone()];
    for _ in 0..n {
        let next = poly_step_with(out.last().expect("nonempty"), budget)?;
        out.push(next);
    }
    Ok(out)
}

/// `d^k/dp^k P(X_n = 0)` at `p0`.
pub fn dkdp_p0(pd: &PolyDist, k: usize, p0: &BigRational) -> BigRational {
    pd.mass(0).derivative(k).eval(p0)
}

/// Derivatives `f(p0), f'(p0), ..., f^(k)(p0)` of a polynomial.
pub fn derivatives_at(f: &RationalPoly, k: usize, p0: &BigRational) -> Vec<BigRational> {
    (0..=k).map(|i| f.derivative(i).eval(p0)).collect()
}

/// `d^k/dp^k f^m` at a point from the derivatives of `f` there, by the
/// Leibniz rule for the m-fold product:
/// `sum over k_1 + ... + k_m = k of k!/(k_1! ... k_m!) prod f^(k_i)`.
///
/// Evaluated as `k!` times the `t^k` coefficient of `(sum_i f^(i) t^i / i!)^m`,
/// which is the same multinomial sum grouped by partial products.
pub fn leibniz_power_derivative(derivs: &[BigRational], m: u32, k: usize) -> BigRational {
    assert!(derivs.len() > k, "need derivatives up to order k");
    let taylor: Vec<BigRational> = derivs[..=k]
        .iter()
        .enumerate()
        .map(|(i, f)| f / BigRational::from_integer(BigInt::from(factorial(i as u64))))
        .collect();
    let mut acc = vec![BigRational::zero(); k + 1];
    acc[0] = BigRational::one();
    for _ in 0..m {
        let mut next = vec![BigRational::zero(); k + 1];
        for (i, a) in acc.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, t) in taylor.iter().enumerate().take(k + 1 - i) {
                next[i + j] += a * t;
            }
        }
        acc = next;
    }
    &acc[k] * BigRational::from_integer(BigInt::from(factorial(k as u64)))
}

/// `d^k/dp^k P(X_n = 0)^m` at `p0`.
pub fn dkdp_zero_mass_power(pd: &PolyDist, k: usize, p0: &BigRational) -> BigRational {
    let derivs = derivatives_at(&pd.mass(0), k, p0);
    leibniz_power_derivative(&derivs, pd.m, k)
}

/// `d^k/dp^k` at `p0` of `E(X_0) - 1/(m-1) + sum_{n <= N} P(X_n = 0)^m / m^(n+1)`,
/// for the generations in `laws` (index = generation).
pub fn series_partial_derivative(
    laws: &[PolyDist],
    n_max: usize,
    k: usize,
    p0: &BigRational,
) -> Result<BigRational> {
    if laws.len() <= n_max {
        return Err(Error::InvalidArgument(format!(
            "need generations up to {n_max}, have {}",
            laws.len().saturating_sub(1)
        )));
    }
    let m = laws[0].m;
    let mut total = laws[0].mean().derivative(k).eval(p0);
    if k == 0 {
        total -= BigRational::new(BigInt::one(), BigInt::from(m - 1));
    }
    let mut scale = BigRational::one();
    for pd in &laws[..=n_max] {
        scale /= rat_int(m as i64);
        total += dkdp_zero_mass_power(pd, k, p0) * &scale;
    }
    Ok(total)
}

/// Exact `d^k/dp^k` of the free-energy series truncated at `N`, at `p0`.
pub fn free_energy_partial_derivative(
    m: u32,
    star: &StarLaw,
    n: usize,
    k: usize,
    p0: &BigRational,
) -> Result<BigRational> {
    free_energy_partial_derivative_with(m, star, n, k, p0, &PolyBudget::default())
}

pub fn free_energy_partial_derivative_with(
    m: u32,
    star: &StarLaw,
    n: usize,
    k: usize,
    p0: &BigRational,
    budget: &PolyBudget,
) -> Result<BigRational> {
    let laws = poly_iterate(&poly_initial(m, star)?, n, budget)?;
    series_partial_derivative(&laws, n, k, p0)
}

/// One entry of a derivative table.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeRow {
    pub n: usize,
    pub k: usize,
    pub p0: BigRational,
    pub value: BigRational,
}

/// `d^k/dp^k P(X_n = 0)^m` at `p0` for every generation and `k <= k_max`.
pub fn zero_mass_power_table(
    laws: &[PolyDist],
    k_max: usize,
    p0: &BigRational,
) -> Vec<DerivativeRow> {
    let mut rows = Vec::new();
    for pd in laws {
        let derivs = derivatives_at(&pd.mass(0), k_max, p0);
        for k in 0..=k_max {
            rows.push(DerivativeRow {
                n: pd.n,
                k,
                p0: p0.clone(),
                value: leibniz_power_derivative(&derivs, pd.m, k),
            });
        }
    }
    rows
}

/// `d^k/dp^k E(X_n)` at `p0` for every generation and `k <= k_max`.
pub fn mean_derivative_table(
    laws: &[PolyDist],
    k_max: usize,
    p0: &BigRational,
) -> Vec<DerivativeRow> {
    let mut rows = Vec::new();
    for pd in laws {
        let mean = pd.mean();
        for k in 0..=k_max {
            rows.push(DerivativeRow {
                n: pd.n,
                k,
                p0: p0.clone(),
                value: mean.derivative(k).eval(p0),
            });
        }
    }
    rows
}

/// CSV with columns `n,k,p0,value,value_float`.
pub fn write_derivative_csv<W: Write>(w: &mut W, rows: &[DerivativeRow]) -> io::Result<()> {
    writeln!(w, "n,k,p0,value,value_float")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:e}",
            r.n,
            r.k,
            format_rational(&r.p0),
            format_rational(&r.value),
            crate::rational::to_f64(&r.value)
        )?;
    }
    Ok(())
}
