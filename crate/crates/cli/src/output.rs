//! Spec loading, argument parsing and output sinks shared by the commands.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use drsys::rational::{format_rational, parse_rational};
use drsys::{ModelSpec, Prob};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::ModeArg;

pub fn load_spec(path: Option<&Path>) -> Result<ModelSpec> {
    let path = path.context("--spec is required")?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read spec file {}", path.display()))?;
    ModelSpec::from_json_str(&text).with_context(|| format!("invalid spec in {}", path.display()))
}

/// Forces the requested mode; without one the spec decides.
pub fn apply_mode(spec: ModelSpec, mode: Option<ModeArg>) -> Result<ModelSpec> {
    match mode {
        None => Ok(spec),
        Some(ModeArg::Exact) => {
            if !spec.star.is_exact() {
                bail!("exact mode needs a finite star law");
            }
            let p = spec.p.to_rational()?;
            Ok(spec.with_p(Prob::Exact(p))?)
        }
        Some(ModeArg::Float) => {
            let p = spec.p.to_f64();
            Ok(spec.with_p(Prob::Float(p))?)
        }
    }
}

/// Buffered writer to `path`, or stdout.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)
                    .with_context(|| format!("cannot create {}", dir.display()))?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// `# key=value` lines.
pub fn write_header(w: &mut dyn Write, pairs: &[(&str, String)]) -> io::Result<()> {
    for (k, v) in pairs {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

pub fn spec_p(spec: &ModelSpec) -> String {
    match &spec.p {
        Prob::Exact(r) => format_rational(r),
        Prob::Float(x) => format!("{x}"),
    }
}

/// `a:b:steps` as `steps` evenly spaced exact points, ends included.
pub fn parse_grid(text: &str) -> Result<Vec<BigRational>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, steps] = parts[..] else {
        bail!("grid must look like a:b:steps, got {text:?}");
    };
    let (a, b) = (parse_rational(a)?, parse_rational(b)?);
    let steps: usize = steps
        .parse()
        .with_context(|| format!("bad step count {steps:?}"))?;
    if steps == 0 {
        bail!("empty grid: steps must be >= 1");
    }
    let zero = BigRational::zero();
    if a < zero || b > BigRational::one() || a > b {
        bail!("grid must satisfy 0 <= a <= b <= 1");
    }
    if steps == 1 {
        return Ok(vec![a]);
    }
    let width = (&b - &a) / BigRational::from_integer((steps as i64 - 1).into());
    Ok((0..steps)
        .map(|j| &a + &width * BigRational::from_integer((j as i64).into()))
        .collect())
}

/// `k:w,k:w,...` as dense masses.
pub fn parse_law(text: &str) -> Result<Vec<BigRational>> {
    let mut pairs = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, w) = item
            .split_once(':')
            .with_context(|| format!("expected k:w, got {item:?}"))?;
        let k: usize = k
            .trim()
            .parse()
            .with_context(|| format!("bad support point {k:?}"))?;
        let w = parse_rational(w.trim())?;
        if w.is_negative() {
            bail!("negative mass at {k}");
        }
        pairs.push((k, w));
    }
    let top = pairs.iter().map(|p| p.0).max().context("empty law")?;
    let mut law = vec![BigRational::zero(); top + 1];
    for (k, w) in pairs {
        law[k] += w;
    }
    if !law.iter().sum::<BigRational>().is_one() {
        bail!("masses of {text:?} do not sum to 1");
    }
    Ok(law)
}

pub fn parse_support(text: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .with_context(|| format!("bad support point {s:?}"))
        })
        .collect()
}

pub fn rational_json(r: &BigRational) -> serde_json::Value {
    serde_json::json!({ "exact": format_rational(r), "float": drsys::rational::to_f64(r) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use drsys::rational::ratio;

    #[test]
    fn grids() {
        assert_eq!(
            parse_grid("0:1:3").unwrap(),
            vec![ratio(0, 1), ratio(1, 2), ratio(1, 1)]
        );
        assert_eq!(parse_grid("1/5:1/5:1").unwrap(), vec![ratio(1, 5)]);
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("1/2:1/4:3").is_err());
    }

    #[test]
    fn laws() {
        assert_eq!(
            parse_law("0:4/5, 2:1/5").unwrap(),
            vec![ratio(4, 5), ratio(0, 1), ratio(1, 5)]
        );
        assert!(parse_law("0:1/2").is_err());
        assert!(parse_law("x:1").is_err());
    }
}
