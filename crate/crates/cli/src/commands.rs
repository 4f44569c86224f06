use std::fs;
use std::io::Write;

use anyhow::{bail, Context, Result};
use drsys::engine::{iterate_with, write_dist_csv, DistCsvHeader};
use drsys::observables::{
    criticality_exact, criticality_float, free_energy_brackets, mean_exact, mean_float,
    write_bracket_csv, BracketTable,
};
use drsys::polymode::{
    derivatives_at, leibniz_power_derivative, poly_initial, poly_iterate, PolyBudget,
};
use drsys::question5::{critical_law, question5_table, write_question5_csv};
use drsys::rational::{format_rational, parse_rational, rat_int, to_f64};
use drsys::{mix_initial, Dist, EngineConfig, Mode, ModelSpec};
use num_rational::BigRational;
use serde_json::{json, Value};

use crate::output::{
    apply_mode, load_spec, parse_grid, parse_law, parse_support, rational_json, sink, spec_p,
    write_header,
};
use crate::{DerivativeArgs, Format, FreeEnergyArgs, IterateArgs, Question5Args};

fn engine_config(cap: Option<usize>, policy: Option<drsys::TailPolicy>) -> EngineConfig {
    EngineConfig {
        cap,
        policy,
        ..EngineConfig::default()
    }
}

struct MomentRow {
    n: usize,
    mean: String,
    mean_float: f64,
    p_zero: f64,
    tail: f64,
    sign: &'static str,
}

fn moments(law: &Dist, n: usize, m: u32) -> Result<MomentRow> {
    Ok(match law {
        Dist::Exact(d) => {
            let mean = mean_exact(d);
            MomentRow {
                n,
                mean_float: to_f64(&mean),
                mean: format_rational(&mean),
                p_zero: d.mass_f64(0),
                tail: 0.0,
                sign: criticality_exact(d, m).sign.symbol(),
            }
        }
        Dist::Float(d) => {
            let mean = mean_float(d);
            let g = criticality_float(d, m);
            MomentRow {
                n,
                mean: format!("{mean:e}"),
                mean_float: mean,
                p_zero: d.mass(0),
                tail: d.lumped_tail(),
                sign: if g.divergent { "?" } else { g.sign.symbol() },
            }
        }
    })
}

fn exact_masses_json(law: &Dist) -> Value {
    match law {
        Dist::Exact(d) => Value::from(d.masses().iter().map(format_rational).collect::<Vec<_>>()),
        Dist::Float(d) => Value::from(d.masses().to_vec()),
    }
}

pub fn iterate(a: &IterateArgs) -> Result<()> {
    let spec = apply_mode(load_spec(a.common.spec.as_deref())?, a.common.mode)?;
    let cfg = engine_config(a.cap, a.tail_policy);
    let laws = iterate_with(&mix_initial(&spec)?, spec.m, a.n, &cfg)?;
    let mode = laws[0].mode();
    let policy = cfg.policy_for(mode);
    let rows: Vec<MomentRow> = laws
        .iter()
        .enumerate()
        .map(|(n, l)| moments(l, n, spec.m))
        .collect::<Result<_>>()?;
    let header = vec![
        ("command", "iterate".to_string()),
        ("m", spec.m.to_string()),
        ("p", spec_p(&spec)),
        (
            "mode",
            if mode == Mode::ExactRational {
                "exact"
            } else {
                "float"
            }
            .to_string(),
        ),
        ("tail_policy", policy.name().to_string()),
        ("star", spec.star.to_json().to_string()),
    ];

    if a.common.format == Format::Json {
        let gens: Vec<Value> = laws
            .iter()
            .zip(&rows)
            .map(|(l, r)| {
                json!({ "n": r.n, "masses": exact_masses_json(l), "lumped_tail": r.tail,
                        "mean": r.mean, "mean_float": r.mean_float, "criticality_sign": r.sign })
            })
            .collect();
        let header: serde_json::Map<String, Value> = header
            .into_iter()
            .map(|(k, v)| (k.to_string(), Value::from(v)))
            .collect();
        let mut w = sink(
            a.common
                .out
                .as_deref()
                .map(|d| d.join("iterate.json"))
                .as_deref(),
        )?;
        serde_json::to_writer_pretty(&mut w, &json!({ "header": header, "generations": gens }))?;
        writeln!(w)?;
        w.flush()?;
        return Ok(());
    }

    if let Some(dir) = &a.common.out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (n, law) in laws.iter().enumerate() {
            let mut w = sink(Some(&dir.join(format!("gen_{n:03}.csv"))))?;
            let h = DistCsvHeader {
                n,
                m: spec.m,
                p: spec_p(&spec),
                policy,
            };
            write_dist_csv(&mut w, law, &h)?;
            w.flush()?;
        }
    }
    let mut w = sink(
        a.common
            .out
            .as_deref()
            .map(|d| d.join("moments.csv"))
            .as_deref(),
    )?;
    write_header(&mut w, &header)?;
    writeln!(w, "n,mean,mean_float,p_zero,lumped_tail,criticality_sign")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{:e},{:e},{:e},{}",
            r.n, r.mean, r.mean_float, r.p_zero, r.tail, r.sign
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn free_energy(a: &FreeEnergyArgs) -> Result<()> {
    let spec = apply_mode(load_spec(a.common.spec.as_deref())?, a.common.mode)?;
    let cfg = EngineConfig::default();
    let mut w = sink(a.common.out.as_deref())?;
    let mut header = vec![
        ("command", "free-energy".to_string()),
        ("m", spec.m.to_string()),
        ("N", a.big_n.to_string()),
    ];

    match &a.p_grid {
        None => {
            header.push(("p", spec_p(&spec)));
            let table = free_energy_brackets(&spec, a.big_n, &cfg)?;
            if a.common.format == Format::Json {
                serde_json::to_writer_pretty(
                    &mut w,
                    &json!({ "rows": bracket_rows_json(&table) }),
                )?;
                writeln!(w)?;
            } else {
                write_header(&mut w, &header)?;
                write_bracket_csv(&mut w, &table)?;
            }
        }
        Some(grid) => {
            let grid = parse_grid(grid)?;
            header.push(("p_grid", a.p_grid.clone().unwrap_or_default()));
            let mut rows = Vec::with_capacity(grid.len());
            for p in &grid {
                let s = if spec.is_exact() {
                    spec.with_p(p.clone())?
                } else {
                    spec.with_p(to_f64(p))?
                };
                let table = free_energy_brackets(&s, a.big_n, &cfg)?;
                let (_, l, u, series) = *table.rows_f64().last().context("no rows")?;
                rows.push((p.clone(), l, u, series));
            }
            if a.common.format == Format::Json {
                let v: Vec<Value> = rows
                    .iter()
                    .map(|(p, l, u, s)| json!({ "p": format_rational(p), "L": l, "U": u, "S": s }))
                    .collect();
                serde_json::to_writer_pretty(&mut w, &json!({ "N": a.big_n, "rows": v }))?;
                writeln!(w)?;
            } else {
                write_header(&mut w, &header)?;
                writeln!(w, "p,p_float,L,U,S_N")?;
                for (p, l, u, s) in &rows {
                    writeln!(
                        w,
                        "{},{:e},{:e},{:e},{:e}",
                        format_rational(p),
                        to_f64(p),
                        l,
                        u,
                        s
                    )?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn bracket_rows_json(table: &BracketTable) -> Value {
    match table {
        BracketTable::Exact(rows) => Value::from(
            rows.iter()
                .map(|b| json!({ "N": b.n, "L": rational_json(&b.lower), "U": rational_json(&b.upper), "S": rational_json(&b.series) }))
                .collect::<Vec<_>>(),
        ),
        BracketTable::Float(rows) => Value::from(
            rows.iter()
                .map(|b| json!({ "N": b.n, "L": b.lower, "U": b.upper, "S": b.series, "tail_mass": b.tail_mass }))
                .collect::<Vec<_>>(),
        ),
    }
}

/// `(n, k, p0, d^k P(X_n = 0), d^k P(X_n = 0)^m / m^(n+1))`.
pub struct DerivativeRow {
    pub n: usize,
    pub k: usize,
    pub value: BigRational,
    pub term: BigRational,
}

pub fn derivative_rows(
    spec: &ModelSpec,
    n_max: usize,
    k_max: usize,
    p0: &BigRational,
) -> Result<Vec<DerivativeRow>> {
    let laws = poly_iterate(
        &poly_initial(spec.m, &spec.star)?,
        n_max,
        &PolyBudget::default(),
    )?;
    let mut rows = Vec::new();
    for pd in &laws {
        let derivs = derivatives_at(&pd.mass(0), k_max, p0);
        let scale = num_traits::pow(rat_int(spec.m as i64), pd.generation() + 1);
        for (k, d) in derivs.iter().enumerate() {
            let term = leibniz_power_derivative(&derivs, spec.m, k) / &scale;
            rows.push(DerivativeRow {
                n: pd.generation(),
                k,
                value: d.clone(),
                term,
            });
        }
    }
    Ok(rows)
}

pub fn derivative(a: &DerivativeArgs) -> Result<()> {
    let spec = load_spec(a.common.spec.as_deref())?;
    if a.common.mode == Some(crate::ModeArg::Float) {
        bail!("derivatives are computed exactly; float mode is not available");
    }
    let p0 = match &a.p0 {
        Some(text) => parse_rational(text)?,
        None => spec.p.to_rational()?,
    };
    let rows = derivative_rows(&spec, a.n, a.k, &p0)?;
    let mut w = sink(a.common.out.as_deref())?;
    if a.common.format == Format::Json {
        let v: Vec<Value> = rows
            .iter()
            .map(|r| json!({ "n": r.n, "k": r.k, "p0": format_rational(&p0), "value": rational_json(&r.value), "term": rational_json(&r.term) }))
            .collect();
        serde_json::to_writer_pretty(&mut w, &json!({ "m": spec.m, "rows": v }))?;
        writeln!(w)?;
    } else {
        write_header(
            &mut w,
            &[
                ("command", "derivative".into()),
                ("m", spec.m.to_string()),
                ("p0", format_rational(&p0)),
            ],
        )?;
        writeln!(w, "n,k,p0,dk_p_zero,dk_p_zero_float,term,term_float")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{:e},{},{:e}",
                r.n,
                r.k,
                format_rational(&p0),
                format_rational(&r.value),
                to_f64(&r.value),
                format_rational(&r.term),
                to_f64(&r.term)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn question5(a: &Question5Args) -> Result<()> {
    let mu = parse_law(&a.mu)?;
    let lambda = match (&a.lambda, &a.lambda_support) {
        (Some(text), None) => parse_law(text)?,
        (None, Some(support)) => {
            let support = parse_support(support)?;
            let weights = vec![rat_int(1); support.len()];
            critical_law(a.m, &support, &weights)?
        }
        _ => bail!("give exactly one of --lambda and --lambda-support"),
    };
    let grid = parse_grid(&a.p_grid)?;
    let rows = question5_table(a.m, &mu, &lambda, &grid, a.n, &PolyBudget::default())?;
    let mut w = sink(a.common.out.as_deref())?;
    let law_text = |l: &[BigRational]| {
        l.iter()
            .enumerate()
            .filter(|(_, x)| *x != &BigRational::from_integer(0.into()))
            .map(|(k, x)| format!("{k}:{}", format_rational(x)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    if a.common.format == Format::Json {
        let v: Vec<Value> = rows
            .iter()
            .map(|r| json!({ "n": r.n, "p": format_rational(&r.p), "slope": rational_json(&r.slope) }))
            .collect();
        serde_json::to_writer_pretty(
            &mut w,
            &json!({ "m": a.m, "mu": law_text(&mu), "lambda": law_text(&lambda), "rows": v }),
        )?;
        writeln!(w)?;
    } else {
        write_header(
            &mut w,
            &[
                ("command", "question5".into()),
                ("m", a.m.to_string()),
                ("mu", law_text(&mu)),
                ("lambda", law_text(&lambda)),
            ],
        )?;
        write_question5_csv(&mut w, &rows)?;
    }
    w.flush()?;
    Ok(())
}
