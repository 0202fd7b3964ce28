use bess_pfc::quadrature::adaptive_simpson;
use bess_pfc::{build_energy_distribution, CdfPoint, EnergyBuildOptions, ScalarDistribution};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kinds() -> Vec<ScalarDistribution> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..3.0_f64).powi(2)).collect();
    vec![
        ScalarDistribution::exponential(2.0).unwrap(),
        ScalarDistribution::uniform(0.5, 1.0).unwrap(),
        ScalarDistribution::empirical(samples).unwrap(),
        ScalarDistribution::tabulated(&[
            CdfPoint { x: 0.0, cdf: 0.0 },
            CdfPoint { x: 1.0, cdf: 0.6 },
            CdfPoint { x: 4.0, cdf: 1.0 },
        ])
        .unwrap(),
    ]
}

fn pdf_integral(d: &ScalarDistribution, a: f64, b: f64) -> f64 {
    // integrate cell by cell so kinks of piecewise laws fall on panel edges
    let mut edges: Vec<f64> = match d.table() {
        Some(t) => t.iter().map(|p| p.x).filter(|x| *x > a && *x < b).collect(),
        None => Vec::new(),
    };
    edges.insert(0, a);
    edges.push(b);
    edges
        .windows(2)
        .map(|w| adaptive_simpson(|x| d.pdf(x), w[0], w[1], 1e-12, 8).unwrap())
        .sum()
}

#[test]
fn pdf_integrates_to_one() {
    for d in kinds() {
        let hi = d.bounded_upper(Some(1.0 - 1e-12)).unwrap();
        let total = pdf_integral(&d, d.lower(), hi);
        assert!((total - 1.0).abs() < 1e-6, "{}: {total}", d.kind_name());
    }
}

#[test]
fn ccdf_is_tail_integral_of_pdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in kinds() {
        let hi = d.bounded_upper(Some(1.0 - 1e-12)).unwrap();
        for _ in 0..100 {
            let x = rng.gen_range(d.lower()..hi);
            let tail = pdf_integral(&d, x, hi);
            assert!((d.ccdf(x) - tail).abs() < 1e-6, "{} at {x}", d.kind_name());
        }
    }
}

#[test]
fn support_edges() {
    for d in kinds() {
        let hi = d.bounded_upper(Some(1.0 - 1e-12)).unwrap();
        assert_eq!(d.ccdf(d.lower()), 1.0);
        assert!(d.ccdf(hi) < 1e-9, "{}", d.kind_name());
    }
}

#[test]
fn sampling_matches_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = ScalarDistribution::uniform(0.0, 1.0).unwrap();
    let mean = (0..100_000).map(|_| u.sample(&mut rng)).sum::<f64>() / 1e5;
    assert!((mean - 0.5).abs() < 0.01);

    let e = ScalarDistribution::exponential_mean(10.0).unwrap();
    let above = (0..100_000).filter(|_| e.sample(&mut rng) > 10.0).count() as f64 / 1e5;
    assert!((above - (-1.0_f64).exp()).abs() < 0.01);
    assert_eq!(ScalarDistribution::point(3.0).unwrap().sample(&mut rng), 3.0);
}

#[test]
fn energy_mean_matches_product_sampling() {
    let p = ScalarDistribution::uniform(500.0, 1000.0).unwrap();
    let j = ScalarDistribution::exponential_mean(1.0 / 60.0).unwrap();
    let e = build_energy_distribution(&p, &j, &EnergyBuildOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 1_000_000;
    let mc = (0..n).map(|_| p.sample(&mut rng) * j.sample(&mut rng)).sum::<f64>() / n as f64;
    assert!((e.mean() / mc - 1.0).abs() < 0.01, "{} vs {mc}", e.mean());
    assert!((e.mean() / 12.5 - 1.0).abs() < 0.01);
    assert_eq!(e.lower(), 0.0);
    let j_max = j.bounded_upper(EnergyBuildOptions::default().truncation).unwrap();
    assert!((e.upper() - 1000.0 * j_max).abs() < 1e-9);
}

#[test]
fn point_and_scaled_products() {
    let opts = EnergyBuildOptions::default();
    let e = build_energy_distribution(
        &ScalarDistribution::point(1000.0).unwrap(),
        &ScalarDistribution::point(0.5).unwrap(),
        &opts,
    )
    .unwrap();
    assert_eq!(e.is_point(), Some(500.0));
    let e = build_energy_distribution(
        &ScalarDistribution::uniform(500.0, 1000.0).unwrap(),
        &ScalarDistribution::point(1.0).unwrap(),
        &opts,
    )
    .unwrap();
    assert_eq!((e.lower(), e.upper()), (500.0, 1000.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn product_invariance(c in 0.2f64..5.0) {
        let opts = EnergyBuildOptions::default();
        let p = ScalarDistribution::uniform(500.0, 1000.0).unwrap();
        let j = ScalarDistribution::exponential_mean(1.0 / 60.0).unwrap();
        let a = build_energy_distribution(&p, &j, &opts).unwrap();
        let b = build_energy_distribution(&p.scaled(c).unwrap(), &j.scaled(1.0 / c).unwrap(), &opts).unwrap();
        for x in [1.0, 5.0, 12.5, 30.0, 60.0] {
            let (ca, cb) = (a.ccdf(x), b.ccdf(x));
            prop_assert!((ca - cb).abs() <= 0.01 * ca.max(1e-3), "x={} {} vs {}", x, ca, cb);
        }
    }

    #[test]
    fn ccdf_non_increasing_and_pdf_non_negative(x in 0.0f64..6.0, dx in 0.0f64..2.0) {
        for d in kinds() {
            prop_assert!(d.pdf(x) >= 0.0);
            prop_assert!(d.ccdf(x + dx) <= d.ccdf(x) + 1e-15);
        }
    }

    #[test]
    fn limited_plus_excess_is_mean(x in 0.0f64..6.0) {
        for d in kinds() {
            prop_assert!((d.limited_mean(x) + d.excess_mean(x) - d.mean()).abs() < 1e-9);
        }
    }
}
