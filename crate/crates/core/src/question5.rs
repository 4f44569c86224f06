//! Mixtures `(1 - p) mu + p lambda` of two exactly critical laws, and the
//! exact slope `d/dp E(X_n)` along the mixture.

use std::io::{self, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::engine::ExactDist;
use crate::error::{Error, Result};
use crate::observables::criticality_exact;
use crate::polymode::{from_mixture, poly_iterate, PolyBudget};
use crate::rational::{format_rational, to_f64};

/// `G = E((1 - (m-1)X) m^X)` of an exact law given as dense masses.
pub fn criticality_of(m: u32, law: &[BigRational]) -> Result<BigRational> {
    Ok(criticality_exact(&ExactDist::from_rationals(law)?, m).value)
}

/// An exactly critical law on `support`: the weight at `0`, the only point
/// with `(1 - (m-1)k) m^k > 0`, is rescaled so that `G = 0`, then the
/// weights are normalized.
pub fn critical_law(m: u32, support: &[u32], weights: &[BigRational]) -> Result<Vec<BigRational>> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "m = {m} but m >= 2 is required"
        )));
    }
    if support.len() != weights.len() || support.is_empty() {
        return Err(Error::InvalidArgument(
            "support and weights must be nonempty and of equal length".into(),
        ));
    }
    if weights.iter().any(|w| !w.is_positive()) {
        return Err(Error::InvalidArgument("weights must be positive".into()));
    }
    let mm = BigInt::from(m);
    let g = |k: u32| -> BigRational {
        BigRational::from_integer(
            (BigInt::one() - BigInt::from(m - 1) * BigInt::from(k))
                * num_traits::pow(mm.clone(), k as usize),
        )
    };
    let (mut pos, mut neg) = (BigRational::zero(), BigRational::zero());
    for (&k, w) in support.iter().zip(weights) {
        let gk = g(k);
        if gk.is_positive() {
            pos += w * gk;
        } else {
            neg += w * gk;
        }
    }
    if pos.is_zero() || neg.is_zero() {
        return Err(Error::Precondition(
            "support needs a point with (1-(m-1)k) m^k > 0 (k = 0) and one with it < 0".into(),
        ));
    }
    let scale = -neg / pos;
    let top = *support.iter().max().expect("nonempty") as usize;
    let mut law = vec![BigRational::zero(); top + 1];
    for (&k, w) in support.iter().zip(weights) {
        let wk = if g(k).is_positive() {
            w * &scale
        } else {
            w.clone()
        };
        law[k as usize] += wk;
    }
    let total: BigRational = law.iter().sum();
    Ok(law.into_iter().map(|w| w / &total).collect())
}

/// One row: `d/dp E(X_n)` at `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question5Row {
    pub n: usize,
    pub p: BigRational,
    pub slope: BigRational,
}

fn trimmed(law: &[BigRational]) -> &[BigRational] {
    let end = law.iter().rposition(|w| !w.is_zero()).map_or(0, |i| i + 1);
    &law[..end]
}

/// Table of `d/dp E(X_n)` for `n <= n_max` at each grid point. Both laws
/// must be exactly critical and distinct.
pub fn question5_table(
    m: u32,
    mu: &[BigRational],
    lambda: &[BigRational],
    p_grid: &[BigRational],
    n_max: usize,
    budget: &PolyBudget,
) -> Result<Vec<Question5Row>> {
    if trimmed(mu) == trimmed(lambda) {
        return Err(Error::Precondition(
            "mu = lambda: the mixture does not depend on p".into(),
        ));
    }
    for (name, law) in [("mu", mu), ("lambda", lambda)] {
        let g = criticality_of(m, law)?;
        if !g.is_zero() {
            return Err(Error::Precondition(format!(
                "{name} is not critical: G = {} ({:e})",
                format_rational(&g),
                to_f64(&g)
            )));
        }
    }
    if p_grid
        .iter()
        .any(|p| p.is_negative() || *p > BigRational::one())
    {
        return Err(Error::InvalidArgument(
            "grid points must lie in [0, 1]".into(),
        ));
    }
    let pd = from_mixture(m, mu, lambda)?;
    let laws = poly_iterate(&pd, n_max, budget)?;
    let slopes: Vec<_> = laws.iter().map(|l| l.mean().derivative(1)).collect();
    let mut rows = Vec::with_capacity(p_grid.len() * laws.len());
    for p in p_grid {
        for (n, s) in slopes.iter().enumerate() {
            rows.push(Question5Row {
                n,
                p: p.clone(),
                slope: s.eval(p),
            });
        }
    }
    Ok(rows)
}

/// CSV `n,p,slope,slope_float`.
pub fn write_question5_csv<W: Write>(w: &mut W, rows: &[Question5Row]) -> io::Result<()> {
    writeln!(w, "n,p,slope,slope_float")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:e}",
            r.n,
            format_rational(&r.p),
            format_rational(&r.slope),
            to_f64(&r.slope)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat_int, ratio};
    use proptest::prelude::*;

    fn mu() -> Vec<BigRational> {
        vec![ratio(4, 5), ratio(0, 1), ratio(1, 5)]
    }

    #[test]
    fn generator_example() {
        let law = critical_law(2, &[0, 1, 3], &[rat_int(1), rat_int(1), rat_int(1)]).unwrap();
        assert_eq!(
            law,
            vec![ratio(8, 9), ratio(1, 18), ratio(0, 1), ratio(1, 18)]
        );
        assert!(criticality_of(2, &law).unwrap().is_zero());
        assert!(criticality_of(2, &mu()).unwrap().is_zero());
        assert!(critical_law(2, &[1, 2], &[rat_int(1), rat_int(1)]).is_err());
    }

    #[test]
    fn table_example() {
        let lambda = critical_law(2, &[0, 1, 3], &[rat_int(1), rat_int(1), rat_int(1)]).unwrap();
        let grid = [ratio(1, 4), ratio(1, 2)];
        let rows = question5_table(2, &mu(), &lambda, &grid, 4, &PolyBudget::default()).unwrap();
        assert_eq!(rows.len(), 10);
        // E_lambda - E_mu = (1/18 + 3/18) - 2/5
        let expected = ratio(4, 18) - ratio(2, 5);
        for r in rows.iter().filter(|r| r.n == 0) {
            assert_eq!(r.slope, expected);
        }
        let mut buf = Vec::new();
        write_question5_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("n,p,slope,slope_float\n0,1/4,"));
    }

    #[test]
    fn rejects_bad_pairs() {
        let err = question5_table(2, &mu(), &mu(), &[ratio(1, 2)], 2, &PolyBudget::default())
            .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        let sub = vec![ratio(9, 10), ratio(0, 1), ratio(1, 10)];
        let err =
            question5_table(2, &mu(), &sub, &[ratio(1, 2)], 2, &PolyBudget::default()).unwrap_err();
        assert!(err.to_string().contains("G = 1/2"), "{err}");
    }

    proptest! {
        #[test]
        fn generated_laws_are_critical(m in 2u32..5, w in prop::collection::vec(1i64..20, 4), top in 2u32..6) {
            let support = [0, 1, top, top + 1];
            let weights: Vec<_> = w.iter().map(|&x| rat_int(x)).collect();
            let law = critical_law(m, &support, &weights).unwrap();
            prop_assert!(criticality_of(m, &law).unwrap().is_zero());
            prop_assert!(law.iter().sum::<BigRational>().is_one());
        }
    }
}
