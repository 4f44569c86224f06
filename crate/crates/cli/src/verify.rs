//! Verification suites. Each check reports pass, fail or n/a.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;

use anyhow::{bail, Context, Result};
use drsys::engine::{iterate, iterate_with, sample_xn};
use drsys::mgfdelta::{default_delta, delta_sweep, Check};
use drsys::model::critical_p;
use drsys::observables::{
    free_energy_bracket, free_energy_brackets, hoeffding_min_n, hoeffding_tail_check, mean_exact,
    mean_identity_holds, sign_preservation_check,
};
use drsys::polymode::{dkdp_p0, poly_initial, poly_iterate, PolyBudget};
use drsys::question5::critical_law;
use drsys::rational::{format_rational, parse_rational, rat_int, ratio};
use drsys::tree::{
    branch_number_sum, leaf_derivative_sweep, pivotal_exhaustive, zero_mass_derivative_check,
    TreeIndex,
};
use drsys::{
    classify, mix_initial, Classification, CriticalP, EngineConfig, Error, ModelSpec, StarLaw,
};
use num_rational::BigRational;
use serde_json::{json, Value};

use crate::output::{apply_mode, load_spec, sink, write_header};
use crate::{Format, VerifyArgs};

const BUILTIN_GOLDEN: &str = include_str!("../golden/golden.json");
const SUITES: [&str; 7] = [
    "model",
    "engine",
    "polymode",
    "observables",
    "tree",
    "delta",
    "golden",
];
const GENERATIONS: usize = 6;

struct Row {
    suite: &'static str,
    name: String,
    status: Check,
    detail: String,
}

struct Report {
    suite: &'static str,
    rows: Vec<Row>,
}

impl Report {
    fn push(&mut self, name: impl Into<String>, status: Check, detail: impl Into<String>) {
        self.rows.push(Row {
            suite: self.suite,
            name: name.into(),
            status,
            detail: detail.into(),
        });
    }

    fn check(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.push(name, Check::from_bool(ok), detail);
    }

    /// Records `Err` as n/a when a precondition or size limit rules the check out, as a failure otherwise.
    fn outcome(&mut self, name: &str, r: drsys::Result<(bool, String)>) {
        match r {
            Ok((ok, detail)) => self.check(name, ok, detail),
            Err(
                e @ (Error::Precondition(_)
                | Error::NotExact(_)
                | Error::BudgetExceeded(_)
                | Error::SupportCapExceeded { .. }),
            ) => self.push(name, Check::NotApplicable, e.to_string()),
            Err(e) => self.push(name, Check::Fail, e.to_string()),
        }
    }
}

fn default_spec(m: u32) -> Result<ModelSpec> {
    let star = StarLaw::Dirac(2);
    let p = match critical_p(m, &star)? {
        CriticalP::Exact(p) => p,
        other => bail!("unexpected critical point {other:?}"),
    };
    Ok(ModelSpec::new(m, star, p)?)
}

fn model_suite(r: &mut Report, spec: &ModelSpec) {
    r.outcome(
        "critical_p_in_unit_interval",
        (|| {
            let pc = critical_p(spec.m, &spec.star)?;
            let x = pc.to_f64();
            let shown = match &pc {
                CriticalP::Exact(r) => format_rational(r),
                _ => format!("{x:e}"),
            };
            Ok(((0.0..=1.0).contains(&x), format!("p_c = {shown}")))
        })(),
    );
    r.outcome(
        "classification_matches_critical_p",
        (|| {
            let class = classify(spec)?;
            let pc = critical_p(spec.m, &spec.star)?;
            let expected = match (&pc, &spec.p) {
                (CriticalP::Exact(pc), drsys::Prob::Exact(p)) => Some(p.cmp(pc)),
                (CriticalP::Divergent, _) => Some(if spec.p.is_zero() {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Greater
                }),
                _ => None,
            };
            let ok = match expected {
                Some(std::cmp::Ordering::Less) => class == Classification::Subcritical,
                Some(std::cmp::Ordering::Equal) => class == Classification::Critical,
                Some(std::cmp::Ordering::Greater) => class == Classification::Supercritical,
                None => return Err(Error::NotExact("an exact critical point".into())),
            };
            Ok((ok, format!("{class:?}")))
        })(),
    );
    r.outcome(
        "initial_law_mass",
        (|| {
            let d = mix_initial(spec)?;
            let total: f64 = d.masses_f64().iter().sum::<f64>() + d.lumped_tail_f64();
            Ok(((total - 1.0).abs() <= 1e-12, format!("total mass {total}")))
        })(),
    );
}

fn engine_suite(r: &mut Report, spec: &ModelSpec, a: &VerifyArgs) {
    r.outcome(
        "mean_identity",
        (|| {
            let laws = iterate(&mix_initial(&exact_spec(spec)?)?, spec.m, GENERATIONS)?;
            let mut ok = true;
            for w in laws.windows(2) {
                ok &= mean_identity_holds(w[0].exact()?, w[1].exact()?, spec.m);
            }
            Ok((ok, format!("n <= {GENERATIONS}")))
        })(),
    );
    r.outcome(
        "float_tracks_exact",
        (|| {
            let exact = iterate(&mix_initial(&exact_spec(spec)?)?, spec.m, GENERATIONS)?;
            let float = iterate_with(
                &mix_initial(&spec.with_p(spec.p.to_f64())?)?,
                spec.m,
                GENERATIONS,
                &EngineConfig::default(),
            )?;
            let mut worst = 0.0f64;
            for (e, f) in exact.iter().zip(&float) {
                let (e, f) = (e.masses_f64(), f.masses_f64());
                for k in 0..e.len().max(f.len()) {
                    let gap = (e.get(k).unwrap_or(&0.0) - f.get(k).unwrap_or(&0.0)).abs();
                    worst = worst.max(gap);
                }
            }
            Ok((worst <= 1e-10, format!("max mass gap {worst:.2e}")))
        })(),
    );
    r.outcome(
        "monte_carlo_tv",
        (|| {
            let n = 4;
            let exact = iterate(&mix_initial(&exact_spec(spec)?)?, spec.m, n)?
                .pop()
                .expect("laws");
            let hist = sample_xn(spec, n, a.seed, a.samples)?;
            let tv = hist.tv_distance(&exact);
            let tol = 0.01 + 5.0 / (a.samples as f64).sqrt();
            Ok((tv <= tol, format!("TV {tv:.4} (tolerance {tol:.4}, n={n})")))
        })(),
    );
}

fn exact_spec(spec: &ModelSpec) -> drsys::Result<ModelSpec> {
    if spec.is_exact() {
        Ok(spec.clone())
    } else {
        Err(Error::NotExact("a finite star law and rational p".into()))
    }
}

fn polymode_suite(r: &mut Report, spec: &ModelSpec) {
    r.outcome(
        "evaluation_matches_engine",
        (|| {
            let spec = exact_spec(spec)?;
            let p = spec.p.to_rational()?;
            let n = 4;
            let poly = poly_iterate(
                &poly_initial(spec.m, &spec.star)?,
                n,
                &PolyBudget::default(),
            )?;
            let laws = iterate(&mix_initial(&spec)?, spec.m, n)?;
            let mut ok = true;
            for (pd, law) in poly.iter().zip(&laws) {
                ok &= pd.mass_sum_is_one() && &pd.evaluate(&p)? == law.exact()?;
            }
            Ok((ok, format!("n <= {n}")))
        })(),
    );
}

fn observables_suite(r: &mut Report, spec: &ModelSpec, a: &VerifyArgs) {
    r.outcome(
        "bracket_order",
        (|| {
            let rows = free_energy_brackets(spec, 12, &EngineConfig::default())?.rows_f64();
            let ok = rows.iter().all(|(_, l, u, _)| l <= u)
                && rows
                    .windows(2)
                    .all(|w| w[0].1 <= w[1].1 + 1e-12 && w[1].2 <= w[0].2 + 1e-12);
            let (_, l, u, _) = rows.last().copied().expect("rows");
            Ok((ok, format!("L_12 = {l:.6e}, U_12 = {u:.6e}")))
        })(),
    );
    r.outcome(
        "criticality_sign_constant",
        (|| {
            let rep = sign_preservation_check(spec, GENERATIONS)?;
            Ok((rep.constant, format!("{:?}", rep.signs)))
        })(),
    );
    r.outcome(
        "hoeffding_tail",
        (|| {
            let n = hoeffding_min_n(spec.m, 1, spec.star.c1(spec.m).max(f64::MIN_POSITIVE));
            if (spec.m as f64).powi(n as i32) > (1u64 << 20) as f64 {
                return Err(Error::BudgetExceeded(format!("m^n with n = {n}")));
            }
            let rep = hoeffding_tail_check(spec, n, 1, a.samples, a.seed)?;
            Ok((
                rep.pass,
                format!(
                    "estimate {:.3e}, bound {:.3e}, n = {n}",
                    rep.estimate, rep.bound
                ),
            ))
        })(),
    );
}

fn tree_suite(r: &mut Report, spec: &ModelSpec, a: &VerifyArgs) {
    let prep = || -> drsys::Result<(TreeIndex, BigRational)> {
        let spec = exact_spec(spec)?;
        Ok((TreeIndex::new(spec.m, a.n)?, spec.p.to_rational()?))
    };
    r.outcome(
        "leaf_derivative_formula",
        (|| {
            let (tree, p) = prep()?;
            let rows = leaf_derivative_sweep(&tree, a.k, &spec.star, &p)?;
            let bad = rows.iter().filter(|x| !x.equal).count();
            Ok((
                bad == 0,
                format!("{} targets, {bad} mismatches", rows.len()),
            ))
        })(),
    );
    r.outcome(
        "zero_mass_derivative",
        (|| {
            let (tree, p) = prep()?;
            let rep = zero_mass_derivative_check(&tree, a.k, &spec.star, &p)?;
            Ok((
                rep.identity_holds && rep.bound_holds,
                format!(
                    "derivative {}, bound {}",
                    format_rational(&rep.derivative),
                    format_rational(&rep.bound)
                ),
            ))
        })(),
    );
    r.outcome(
        "pivotal_sets",
        (|| {
            let (tree, _) = prep()?;
            let rep = pivotal_exhaustive(&tree, &spec.star)?;
            Ok((
                rep.pass(),
                format!(
                    "{} configurations, {} nonzero",
                    rep.configurations, rep.nonzero
                ),
            ))
        })(),
    );
    r.outcome(
        "branch_number_sum",
        (|| {
            let rep = branch_number_sum(spec.m, a.n, a.k)?;
            Ok((
                rep.pass,
                format!(
                    "{} <= {}",
                    format_rational(&rep.value),
                    format_rational(&rep.bound)
                ),
            ))
        })(),
    );
}

fn delta_suite(r: &mut Report, spec: &ModelSpec, a: &VerifyArgs) {
    let reports =
        match exact_spec(spec).and_then(|s| delta_sweep(&s, a.big_m, &default_delta(spec.m))) {
            Ok(v) => v,
            Err(e) => {
                r.outcome("delta_sweep", Err(e));
                return;
            }
        };
    let fold = |f: &dyn Fn(&drsys::mgfdelta::DeltaReport) -> Check| {
        let checks: Vec<Check> = reports.iter().map(f).collect();
        let applied = checks
            .iter()
            .filter(|c| **c != Check::NotApplicable)
            .count();
        let failed = checks.iter().filter(|c| c.failed()).count();
        let status = if failed > 0 {
            Check::Fail
        } else if applied == 0 {
            Check::NotApplicable
        } else {
            Check::Pass
        };
        (
            status,
            format!(
                "{applied} of {} rows applicable, {failed} failed",
                checks.len()
            ),
        )
    };
    let (s, d) = fold(&|x| x.bounds.cauchy_schwarz);
    r.push("cauchy_schwarz", s, d);
    let (s, d) = fold(&|x| x.bounds.lower_bound);
    r.push("delta_lower_bound", s, d);
    let (s, d) = fold(&|x| x.recursion);
    r.push("recursion_inequality", s, d);
}

type Quantity = fn() -> drsys::Result<BigRational>;

fn dirac2(p: BigRational) -> drsys::Result<ModelSpec> {
    ModelSpec::new(2, StarLaw::Dirac(2), p)
}

fn quantities() -> BTreeMap<&'static str, Quantity> {
    let mut q: BTreeMap<&'static str, Quantity> = BTreeMap::new();
    q.insert("critical_p/m=2/dirac2", || {
        match critical_p(2, &StarLaw::Dirac(2))? {
            CriticalP::Exact(p) => Ok(p),
            other => Err(Error::NotExact(format!("{other:?}"))),
        }
    });
    q.insert("p_zero/n=1/m=2/dirac2/p=1/5", || {
        Ok(iterate(&mix_initial(&dirac2(ratio(1, 5))?)?, 2, 1)?[1]
            .exact()?
            .mass(0))
    });
    q.insert("mean/n=1/m=2/dirac2/p=1/5", || {
        Ok(mean_exact(
            iterate(&mix_initial(&dirac2(ratio(1, 5))?)?, 2, 1)?[1].exact()?,
        ))
    });
    q.insert("d_p_zero/n=1/k=1/m=2/dirac2/p=1/5", || {
        let laws = poly_iterate(
            &poly_initial(2, &StarLaw::Dirac(2))?,
            1,
            &PolyBudget::default(),
        )?;
        Ok(dkdp_p0(&laws[1], 1, &ratio(1, 5)))
    });
    q.insert("upper/N=10/m=2/dirac2/p=1", || {
        Ok(free_energy_bracket(&dirac2(rat_int(1))?, 10)?.upper)
    });
    q.insert("lower/N=10/m=2/dirac2/p=1", || {
        Ok(free_energy_bracket(&dirac2(rat_int(1))?, 10)?.lower)
    });
    q.insert("branch_number_sum/m=2/n=3/k=2", || {
        Ok(branch_number_sum(2, 3, 2)?.value)
    });
    q.insert("branch_number_sum/m=2/n=3/k=1", || {
        Ok(branch_number_sum(2, 3, 1)?.value)
    });
    q.insert("critical_law/m=2/support=0_1_3/mass0", || {
        let law = critical_law(2, &[0, 1, 3], &[rat_int(1), rat_int(1), rat_int(1)])?;
        Ok(law[0].clone())
    });
    q
}

fn golden_suite(r: &mut Report, a: &VerifyArgs) -> Result<()> {
    let text = match &a.golden {
        Some(path) => fs::read_to_string(path)
            .with_context(|| format!("cannot read golden file {}", path.display()))?,
        None => BUILTIN_GOLDEN.to_string(),
    };
    let expected: BTreeMap<String, String> =
        serde_json::from_str(&text).context("golden file must map names to rationals")?;
    let known = quantities();
    for (name, want) in &expected {
        let Some(compute) = known.get(name.as_str()) else {
            r.push(name.clone(), Check::Fail, "unknown golden quantity");
            continue;
        };
        let want = parse_rational(want).with_context(|| format!("golden value for {name}"))?;
        r.outcome(
            name,
            compute().map(|got| {
                (
                    got == want,
                    format!(
                        "got {}, want {}",
                        format_rational(&got),
                        format_rational(&want)
                    ),
                )
            }),
        );
    }
    for name in known.keys().filter(|k| !expected.contains_key(**k)) {
        r.push(*name, Check::NotApplicable, "no golden value given");
    }
    Ok(())
}

fn write_rows(
    w: &mut dyn Write,
    header: &[(&str, String)],
    rows: &[Row],
    format: Format,
) -> Result<()> {
    match format {
        Format::Json => {
            let v: Vec<Value> = rows
                .iter()
                .map(|x| json!({ "suite": x.suite, "check": x.name, "status": x.status, "detail": x.detail }))
                .collect();
            let h: serde_json::Map<String, Value> = header
                .iter()
                .map(|(k, v)| (k.to_string(), Value::from(v.clone())))
                .collect();
            serde_json::to_writer_pretty(&mut *w, &json!({ "header": h, "checks": v }))?;
            writeln!(w)?;
        }
        Format::Csv => {
            write_header(w, header)?;
            writeln!(w, "suite,check,status,detail")?;
            for x in rows {
                writeln!(
                    w,
                    "{},{},{},\"{}\"",
                    x.suite,
                    x.name,
                    x.status.name(),
                    x.detail.replace('"', "'")
                )?;
            }
        }
    }
    Ok(())
}

pub fn run(a: &VerifyArgs) -> Result<bool> {
    let suites: Vec<&'static str> = match a.suite.as_str() {
        "all" => SUITES.to_vec(),
        s => vec![*SUITES.iter().find(|x| **x == s).with_context(|| {
            format!(
                "unknown suite {s:?}; expected all or one of {}",
                SUITES.join(", ")
            )
        })?],
    };
    let spec = match &a.common.spec {
        Some(_) => apply_mode(load_spec(a.common.spec.as_deref())?, a.common.mode)?,
        None => default_spec(a.m)?,
    };
    let mut rows = Vec::new();
    for suite in suites {
        let mut r = Report {
            suite,
            rows: Vec::new(),
        };
        match suite {
            "model" => model_suite(&mut r, &spec),
            "engine" => engine_suite(&mut r, &spec, a),
            "polymode" => polymode_suite(&mut r, &spec),
            "observables" => observables_suite(&mut r, &spec, a),
            "tree" => tree_suite(&mut r, &spec, a),
            "delta" => delta_suite(&mut r, &spec, a),
            _ => golden_suite(&mut r, a)?,
        }
        rows.extend(r.rows);
    }
    let header = [
        ("command", "verify".to_string()),
        ("suite", a.suite.clone()),
        ("spec", spec.to_json().to_string()),
        ("tree_n", a.n.to_string()),
        ("k", a.k.to_string()),
        ("M", a.big_m.to_string()),
        ("samples", a.samples.to_string()),
        ("seed", a.seed.to_string()),
    ];
    let mut w = sink(a.common.out.as_deref())?;
    write_rows(&mut w, &header, &rows, a.common.format)?;
    w.flush()?;
    Ok(!rows.iter().any(|x| x.status.failed()))
}
