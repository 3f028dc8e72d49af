use flexw_core::biasvar::*;

fn with_seed(seed: u64) -> BiasVarConfig {
    BiasVarConfig { seed, ..BiasVarConfig::default() }
}

#[test]
fn global_terms_are_the_region_mixture() {
    let report = run_biasvar(&with_seed(5)).unwrap();
    let p = &report.proportions;
    assert!((p.easy + p.medium + p.hard - 1.0).abs() < 1e-12);
    for row in &report.rows {
        let mix = |f: fn(&Terms) -> f64| Region::ALL.iter().map(|r| p.get(*r) * f(row.region(*r))).sum::<f64>();
        assert!((row.global.bias - mix(|t| t.bias)).abs() < 1e-9, "bias, degree {}", row.degree);
        assert!((row.global.variance - mix(|t| t.variance)).abs() < 1e-9, "variance, degree {}", row.degree);
        assert!((row.global.error - mix(|t| t.error)).abs() < 1e-9, "error, degree {}", row.degree);
    }
}

#[test]
fn c_star_new_grows_with_hard_epsilon() {
    let epsilons = [0.0, 0.5, 1.0, 2.0];
    let mut monotone = 0;
    for seed in 0..20 {
        let base = with_seed(seed);
        let stars: Vec<usize> = epsilons
            .iter()
            .map(|&e| run_biasvar(&base.weighted(Region::Hard, e)).unwrap().c_star_new)
            .collect();
        monotone += usize::from(stars.windows(2).all(|w| w[0] <= w[1]));
    }
    assert!(monotone >= 16, "monotone in {monotone}/20 seeds");
}

#[test]
fn reports_are_reproducible() {
    let cfg = with_seed(11).weighted(Region::Easy, 1.0);
    let a = serde_json::to_string(&run_biasvar(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&run_biasvar(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn default_config_satisfies_assumptions() {
    let report = run_biasvar(&with_seed(0)).unwrap();
    let verdict = check_assumptions(&report).unwrap();
    assert!(verdict.assumption1);
    assert!(verdict.assumption2);
    assert!(verdict.c_star_easy <= verdict.c_star && verdict.c_star <= verdict.c_star_hard);
}

#[test]
fn zero_epsilon_margin_is_zero() {
    for seed in 0..5 {
        let base = run_biasvar(&with_seed(seed)).unwrap();
        for (region, dir) in [(Region::Hard, Direction::Hard), (Region::Easy, Direction::Easy)] {
            let w = run_biasvar(&with_seed(seed).weighted(region, 0.0)).unwrap();
            let check = check_proposition(&base, &w, dir).unwrap();
            assert_eq!(check.margin, 0);
            assert!(check.holds);
        }
    }
}
