use contkd_core::schedules::{phi_of_temperature, PsiSchedule, PsiSpec, TemperatureLadder};

fn assert_non_decreasing_in_unit(values: &[f64], what: &str) {
    for w in values.windows(2) {
        assert!(w[0] <= w[1], "{what} decreased: {w:?}");
    }
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)), "{what} left [0, 1]");
}

#[test]
fn ladder_and_phi_invariants_exhaustive() {
    for t_max in 1..=50u32 {
        for n in t_max..=500 {
            let ladder = TemperatureLadder::new(t_max, n).unwrap();
            let mut prev_t = u32::MAX;
            let mut prev_phi = 0.0;
            for i in 1..=n {
                let t = ladder.temperature_at_epoch(i).unwrap();
                assert!((1..=t_max).contains(&t), "T={t} at n={n} T_max={t_max} i={i}");
                assert!(t <= prev_t);
                let phi = ladder.phi_at_epoch(i).unwrap();
                assert!(phi >= prev_phi);
                assert!(phi >= 1.0 / f64::from(t_max) && phi <= 1.0);
                prev_t = t;
                prev_phi = phi;
            }
            if ladder.step() >= 2 {
                assert_eq!(ladder.temperature_at_epoch(1).unwrap(), t_max);
            }
        }
    }
}

#[test]
fn phi_endpoints() {
    for t_max in 1..=50u32 {
        assert_eq!(phi_of_temperature(1, t_max).unwrap(), 1.0);
        assert_eq!(phi_of_temperature(t_max, t_max).unwrap(), 1.0 / f64::from(t_max));
    }
}

#[test]
fn psi_instances_non_decreasing_in_unit_interval() {
    for n in 1..=500u32 {
        for k in (0..=n).step_by(7) {
            let spec = PsiSpec::step(k, n);
            let v: Vec<f64> = (1..=n).map(|i| spec.psi(i).unwrap()).collect();
            assert_non_decreasing_in_unit(&v, "step");
        }
    }
    for spec in [PsiSpec::image_ramp(), PsiSpec::language_ramp()] {
        let v: Vec<f64> = (1..=spec.epochs).map(|i| spec.psi(i).unwrap()).collect();
        assert_non_decreasing_in_unit(&v, "ramp");
    }
    for n in 1..=500u32 {
        for (d, c) in [(150.0, 150), (40.0, 20), (10.0, 5)] {
            let spec = PsiSpec::new(
                PsiSchedule::CappedRamp {
                    denominator: d,
                    cutover: c,
                },
                n,
            )
            .unwrap();
            let v: Vec<f64> = (1..=n).map(|i| spec.psi(i).unwrap()).collect();
            assert_non_decreasing_in_unit(&v, "capped ramp");
        }
    }
}

#[test]
fn ramp_instances_hit_their_midpoints_exactly() {
    assert_eq!(PsiSpec::image_ramp().psi(75).unwrap(), 0.5);
    assert_eq!(PsiSpec::language_ramp().psi(20).unwrap(), 0.5);
    assert_eq!(PsiSpec::language_ramp().psi(21).unwrap(), 1.0);
}
