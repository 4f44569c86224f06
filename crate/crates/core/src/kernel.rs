//! Convolution kernels.
//!
//! Exact products of nonnegative integer coefficient vectors go through
//! Kronecker substitution: every coefficient is packed into a fixed-width bit
//! slot of one huge integer, the integers are multiplied once, and the slots
//! are read back. Slots are wide enough that no carry crosses a boundary.
//! The packed product runs on GMP with the `gmp` feature, else on malachite
//! with `malachite`, else on num-bigint.

use num_bigint::BigUint;
use num_traits::Zero;
use rustfft::{num_complex::Complex, FftPlanner};

/// Below this many coefficient pairs the schoolbook product is used.
const SCHOOLBOOK_PAIRS: usize = 256;

fn max_bits(v: &[BigUint]) -> u64 {
    v.iter().map(|x| x.bits()).max().unwrap_or(0)
}

fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as u64
    }
}

#[cfg(feature = "gmp")]
fn limb_product(a: Vec<u64>, b: Option<Vec<u64>>) -> Vec<u64> {
    use rug::integer::Order;
    use rug::Integer;
    let a = Integer::from_digits(&a, Order::Lsf);
    let prod = match b {
        None => a.square(),
        Some(b) => a * Integer::from_digits(&b, Order::Lsf),
    };
    prod.to_digits(Order::Lsf)
}

#[cfg(all(not(feature = "gmp"), feature = "malachite"))]
fn limb_product(a: Vec<u64>, b: Option<Vec<u64>>) -> Vec<u64> {
    use malachite_nz::natural::Natural;
    let a = Natural::from_owned_limbs_asc(a);
    let prod = match b {
        None => &a * &a,
        Some(b) => &a * &Natural::from_owned_limbs_asc(b),
    };
    prod.to_limbs_asc()
}

#[cfg(not(any(feature = "gmp", feature = "malachite")))]
fn limb_product(a: Vec<u64>, b: Option<Vec<u64>>) -> Vec<u64> {
    let a = BigUint::from_slice(split_limbs(&a).as_slice());
    let prod = match b {
        None => &a * &a,
        Some(b) => &a * BigUint::from_slice(split_limbs(&b).as_slice()),
    };
    prod.to_u64_digits()
}

#[cfg(not(any(feature = "gmp", feature = "malachite")))]
fn split_limbs(v: &[u64]) -> Vec<u32> {
    v.iter()
        .flat_map(|&w| [w as u32, (w >> 32) as u32])
        .collect()
}

fn pack(coeffs: &[BigUint], width: u64) -> Vec<u64> {
    let total_bits = coeffs.len() as u64 * width;
    let mut words = vec![0u64; (total_bits / 64) as usize + 2];
    for (i, c) in coeffs.iter().enumerate() {
        let base = i as u64 * width;
        for (t, d) in c.to_u64_digits().into_iter().enumerate() {
            let pos = base + 64 * t as u64;
            let idx = (pos / 64) as usize;
            let sh = pos % 64;
            words[idx] |= d << sh;
            if sh != 0 {
                words[idx + 1] |= d >> (64 - sh);
            }
        }
    }
    words
}

fn unpack(limbs: &[u64], count: usize, width: u64) -> Vec<BigUint> {
    let word = |i: usize| limbs.get(i).copied().unwrap_or(0);
    let nwords = width.div_ceil(64) as usize;
    (0..count)
        .map(|i| {
            let base = i as u64 * width;
            let mut digits = Vec::with_capacity(2 * nwords);
            for t in 0..nwords {
                let pos = base + 64 * t as u64;
                let idx = (pos / 64) as usize;
                let sh = pos % 64;
                let mut w = word(idx) >> sh;
                if sh != 0 {
                    w |= word(idx + 1) << (64 - sh);
                }
                let remaining = width - 64 * t as u64;
                if remaining < 64 {
                    w &= (1u64 << remaining) - 1;
                }
                digits.push(w as u32);
                digits.push((w >> 32) as u32);
            }
            BigUint::new(digits)
        })
        .collect()
}

fn schoolbook(a: &[BigUint], b: &[BigUint], len: usize) -> Vec<BigUint> {
    let mut out = vec![BigUint::zero(); len];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(len.saturating_sub(i)) {
            if !y.is_zero() {
                out[i + j] += x * y;
            }
        }
    }
    out
}

/// Product of two nonnegative integer polynomials, truncated to `keep`
/// coefficients when given.
pub fn mul_exact(a: &[BigUint], b: &[BigUint], keep: Option<usize>) -> Vec<BigUint> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let full = a.len() + b.len() - 1;
    let len = keep.map_or(full, |k| k.min(full));
    let a = &a[..a.len().min(len)];
    let b = &b[..b.len().min(len)];
    if a.len() * b.len() <= SCHOOLBOOK_PAIRS {
        return schoolbook(a, b, len);
    }
    let (ba, bb) = (max_bits(a), max_bits(b));
    if ba == 0 || bb == 0 {
        return vec![BigUint::zero(); len];
    }
    let width = ba + bb + ceil_log2(a.len().min(b.len())) + 1;
    let same = std::ptr::eq(a, b);
    let pb = (!same).then(|| pack(b, width));
    let prod = limb_product(pack(a, width), pb);
    unpack(&prod, len, width)
}

/// `a` convolved with itself `m` times (binary powering).
pub fn power_exact(a: &[BigUint], m: u32, keep: Option<usize>) -> Vec<BigUint> {
    assert!(m >= 1, "convolution power needs m >= 1");
    let mut base = a.to_vec();
    if let Some(k) = keep {
        base.truncate(k);
    }
    let mut acc: Option<Vec<BigUint>> = None;
    let mut e = m;
    loop {
        if e & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(x) => mul_exact(&x, &base, keep),
            });
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        base = mul_exact(&base, &base, keep);
    }
    acc.expect("m >= 1")
}

/// Float product, direct or transform-based. Returns the product and the
/// total magnitude of negative entries clamped to zero (transform only).
pub fn mul_float(a: &[f64], b: &[f64], keep: Option<usize>, transform: bool) -> (Vec<f64>, f64) {
    if a.is_empty() || b.is_empty() {
        return (Vec::new(), 0.0);
    }
    let full = a.len() + b.len() - 1;
    let len = keep.map_or(full, |k| k.min(full));
    let a = &a[..a.len().min(len)];
    let b = &b[..b.len().min(len)];
    if !transform || a.len() * b.len() <= SCHOOLBOOK_PAIRS {
        let mut out = vec![0.0; len];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &y) in out[i..].iter_mut().zip(b) {
                *o += x * y;
            }
        }
        return (out, 0.0);
    }
    let size = (a.len() + b.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let lift = |v: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (c, &x) in buf.iter_mut().zip(v) {
            c.re = x;
        }
        buf
    };
    let mut fa = lift(a);
    fwd.process(&mut fa);
    if std::ptr::eq(a, b) {
        for x in fa.iter_mut() {
            *x = *x * *x;
        }
    } else {
        let mut fb = lift(b);
        fwd.process(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= *y;
        }
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    let mut clamped = 0.0;
    let out = fa[..len]
        .iter()
        .map(|c| {
            let v = c.re * scale;
            if v < 0.0 {
                clamped -= v;
                0.0
            } else {
                v
            }
        })
        .collect();
    (out, clamped)
}

pub fn power_float(a: &[f64], m: u32, keep: Option<usize>, transform: bool) -> (Vec<f64>, f64) {
    assert!(m >= 1, "convolution power needs m >= 1");
    let mut base = a.to_vec();
    if let Some(k) = keep {
        base.truncate(k);
    }
    let mut clamped = 0.0;
    let mut acc: Option<Vec<f64>> = None;
    let mut e = m;
    loop {
        if e & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(x) => {
                    let (r, c) = mul_float(&x, &base, keep, transform);
                    clamped += c;
                    r
                }
            });
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        let (sq, c) = mul_float(&base, &base, keep, transform);
        clamped += c;
        base = sq;
    }
    (acc.expect("m >= 1"), clamped)
}
