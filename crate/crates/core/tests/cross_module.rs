use drsys::engine::{iterate, iterate_with, sample_xn_parallel};
use drsys::mgfdelta::{mass_at_one_check, n2, truncate};
use drsys::observables::{free_energy_brackets, mean_exact};
use drsys::polymode::{poly_initial, poly_iterate, PolyBudget};
use drsys::question5::{critical_law, question5_table};
use drsys::rational::{rat_int, ratio};
use drsys::tree::{root_law_by_enumeration, zero_mass_derivative_check, TreeIndex};
use drsys::{
    classify, mix_initial, Classification, Dist, EngineConfig, ModelSpec, StarLaw, TailPolicy,
};
use num_rational::BigRational;
use num_traits::Zero;

fn star123() -> StarLaw {
    StarLaw::finite([(1, ratio(1, 2)), (2, ratio(1, 3)), (3, ratio(1, 6))]).unwrap()
}

#[test]
fn tree_engine_and_polymode_agree_on_root_law() {
    let p = ratio(2, 7);
    for (m, n) in [(2u32, 2u32), (3, 1)] {
        let spec = ModelSpec::new(m, star123(), p.clone()).unwrap();
        let engine = iterate(&mix_initial(&spec).unwrap(), m, n as usize)
            .unwrap()
            .pop()
            .unwrap();
        let tree = root_law_by_enumeration(&TreeIndex::new(m, n).unwrap(), &star123(), &p).unwrap();
        let poly = poly_iterate(
            &poly_initial(m, &star123()).unwrap(),
            n as usize,
            &PolyBudget::default(),
        )
        .unwrap()
        .pop()
        .unwrap()
        .evaluate(&p)
        .unwrap();
        assert_eq!(engine, Dist::Exact(tree.clone()));
        assert_eq!(tree, poly);
    }
}

#[test]
fn spec_json_drives_the_engine() {
    let text = r#"{"m": 2, "star": {"kind": "dirac", "k0": 2}, "p": "1/5"}"#;
    let spec = ModelSpec::from_json_str(text).unwrap();
    assert_eq!(classify(&spec).unwrap(), Classification::Critical);
    let laws = iterate(&mix_initial(&spec).unwrap(), 2, 3).unwrap();
    let via_poly = poly_iterate(
        &poly_initial(2, &spec.star).unwrap(),
        3,
        &PolyBudget::default(),
    )
    .unwrap();
    assert_eq!(
        laws[3].exact().unwrap().mass(0),
        via_poly[3].mass(0).eval(&ratio(1, 5))
    );
}

#[test]
fn float_and_exact_brackets_agree() {
    let exact = ModelSpec::new(2, StarLaw::Dirac(2), ratio(1, 4)).unwrap();
    let float = ModelSpec::new(2, StarLaw::Dirac(2), 0.25).unwrap();
    let a = free_energy_brackets(&exact, 10, &EngineConfig::default())
        .unwrap()
        .rows_f64();
    let b = free_energy_brackets(&float, 10, &EngineConfig::default())
        .unwrap()
        .rows_f64();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.1 - y.1).abs() <= 1e-12 * x.1.abs().max(1.0));
        assert!((x.2 - y.2).abs() <= 1e-12 * x.2.abs().max(1.0));
    }
}

#[test]
fn zero_mass_derivative_formula_on_trees() {
    for k in 1..=2 {
        let r =
            zero_mass_derivative_check(&TreeIndex::new(2, 2).unwrap(), k, &star123(), &ratio(1, 3))
                .unwrap();
        assert!(r.identity_holds, "k={k}: {} vs {}", r.derivative, r.formula);
        assert!(r.bound_holds);
    }
}

#[test]
fn truncation_keeps_mass_and_caps_support() {
    let spec = ModelSpec::new(2, StarLaw::Dirac(2), ratio(1, 5)).unwrap();
    let laws = iterate(&mix_initial(&spec).unwrap(), 2, 4).unwrap();
    for (i, law) in laws.iter().enumerate() {
        let t = truncate(law, i, 6).unwrap();
        assert!(t.masses().len() <= 6 - i + 1);
        assert_eq!(t.masses().iter().sum::<BigRational>(), rat_int(1));
        assert_eq!(t.mass(0), law.exact().unwrap().mass(0));
    }
}

#[test]
fn mass_at_one_stays_below_half_for_two_point_star() {
    let star = StarLaw::finite([(1, ratio(3, 4)), (2, ratio(1, 4))]).unwrap();
    assert_eq!(n2(&star).unwrap(), 7);
    let grid: Vec<f64> = (1..=20).map(|j| j as f64 / 20.0).collect();
    assert!(mass_at_one_check(&star, &grid, 10).unwrap().pass);
}

#[test]
fn parallel_sampling_tracks_exact_law() {
    let spec = ModelSpec::new(3, StarLaw::Dirac(2), ratio(1, 10)).unwrap();
    let exact = iterate(&mix_initial(&spec).unwrap(), 3, 3)
        .unwrap()
        .pop()
        .unwrap();
    let hist = sample_xn_parallel(&spec, 3, 5, 40_000, 4).unwrap();
    assert!(hist.tv_distance(&exact) < 0.03);
}

#[test]
fn lumped_tails_bracket_the_exact_mean() {
    let spec = ModelSpec::new(2, StarLaw::Dirac(2), ratio(1, 2)).unwrap();
    let exact = iterate(&mix_initial(&spec).unwrap(), 2, 6).unwrap();
    let e = drsys::rational::to_f64(&mean_exact(exact[6].exact().unwrap()));
    let at_zero = iterate_with(
        &mix_initial(&spec).unwrap(),
        2,
        6,
        &EngineConfig::float(20, TailPolicy::LumpAtZero),
    )
    .unwrap();
    let m0: f64 = at_zero[6]
        .masses_f64()
        .iter()
        .enumerate()
        .map(|(k, w)| k as f64 * w)
        .sum();
    assert!(m0 <= e + 1e-12);
}

#[test]
fn question5_slope_at_generation_zero() {
    let mu = vec![ratio(4, 5), BigRational::zero(), ratio(1, 5)];
    let lambda = critical_law(2, &[0, 1, 3], &[rat_int(1), rat_int(2), rat_int(1)]).unwrap();
    let rows = question5_table(2, &mu, &lambda, &[ratio(1, 3)], 3, &PolyBudget::default()).unwrap();
    let e = |law: &[BigRational]| -> BigRational {
        law.iter()
            .enumerate()
            .map(|(k, w)| w * rat_int(k as i64))
            .sum()
    };
    assert_eq!(rows[0].slope, e(&lambda) - e(&mu));
    assert_eq!(rows.len(), 4);
}
