use proptest::prelude::*;
use tailbound::utility::*;

fn power_family() -> impl Strategy<Value = (UtilitySpec, f64, f64)> {
    prop_oneof![
        (0.05f64..0.95).prop_map(|g| (UtilitySpec::power_gain(g).unwrap(), 0.0, f64::INFINITY)),
        (1.05f64..5.0).prop_map(|g| (UtilitySpec::power_loss(g).unwrap(), f64::NEG_INFINITY, 0.0)),
    ]
}

fn concave_family() -> impl Strategy<Value = (UtilitySpec, f64, f64)> {
    prop_oneof![
        (0.05f64..0.95).prop_map(|g| (UtilitySpec::power_gain(g).unwrap(), 0.0, f64::INFINITY)),
        (1.05f64..5.0).prop_map(|g| (UtilitySpec::power_loss(g).unwrap(), f64::NEG_INFINITY, 0.0)),
        (0.1f64..0.9, 1.0f64..4.0).prop_map(|(g, l)| (UtilitySpec::kahneman_tversky(g, l).unwrap(), 0.0, f64::INFINITY)),
    ]
}

#[test]
fn text_and_json_round_trip() {
    for s in ["kt:0.5:2.25", "powgain:0.3", "powloss:2"] {
        let u: UtilitySpec = s.parse().unwrap();
        assert_eq!(u.to_string().parse::<UtilitySpec>().unwrap(), u);
        let json = serde_json::to_string(&u).unwrap();
        assert_eq!(serde_json::from_str::<UtilitySpec>(&json).unwrap(), u);
    }
    assert!("kt:1.5:2".parse::<UtilitySpec>().is_err());
    assert!("powloss:0.5".parse::<UtilitySpec>().is_err());
    assert!("cara:1".parse::<UtilitySpec>().is_err());
}

#[test]
fn s_shape_checks() {
    let kt = UtilitySpec::kahneman_tversky(0.5, 2.25).unwrap();
    assert!(!kt.is_concave_on(-1.0, 1.0));
    assert!(kt.is_concave_on(0.0, 100.0));
    assert!(is_nondecreasing_on(&kt, -100.0, 100.0, 2001));
    let left = TailCertificate::left(-2.0, 0.75, 2.25).unwrap();
    let right = TailCertificate::right(2.0, 0.75, 1.0).unwrap();
    let check = check_s_shaped(&kt, &left, &right, GridPlan::default());
    assert!(check.all(), "{check:?}");
}

#[test]
fn left_tail_certificate() {
    let kt = UtilitySpec::kahneman_tversky(0.5, 2.25).unwrap();
    let ok = verify_tail_certificate(&kt, &TailCertificate::left(-2.0, 0.75, 2.25).unwrap(), GridPlan::default());
    assert!(ok.holds && ok.first_violation.is_none());
    // −2.25|x|^{1/2} ≥ −2.25|x|^{3/4} fails for |x| < 1
    let bad = verify_tail_certificate(&kt, &TailCertificate::left(-0.5, 0.75, 2.25).unwrap(), GridPlan::default());
    assert!(!bad.holds);
    // η must stay below 1 for a risk-seeking certificate
    assert!(TailCertificate::left(-2.0, 1.0, 2.25).is_err());
}

proptest! {
    #[test]
    fn inverse_marginal_inverts_slope((u, lo, hi) in power_family(), ln_y in -5.0f64..5.0) {
        let y = ln_y.exp();
        let x = u.inverse_marginal(y).unwrap();
        prop_assert!(x > lo && x < hi);
        let slope = u.right_slope(x);
        prop_assert!((slope - y).abs() <= 1e-9 * y, "slope {} at {} vs {}", slope, x, y);
    }

    #[test]
    fn kt_has_no_global_inverse_marginal(g in 0.1f64..0.9, l in 1.0f64..4.0) {
        prop_assert!(UtilitySpec::kahneman_tversky(g, l).unwrap().inverse_marginal(1.0).is_err());
    }

    #[test]
    fn argmax_linear_is_optimal((u, lo, hi) in concave_family(), ln_y in -3.0f64..3.0, probes in prop::collection::vec(0.0f64..1.0, 20)) {
        let y = ln_y.exp();
        let v = u.argmax_linear(y, lo, hi).unwrap();
        let best = u.evaluate(v) - y * v;
        for t in probes {
            // probe across a wide window on the feasible side
            let w = if lo == 0.0 { t * 4.0 * v.abs().max(1.0) } else { -t * 4.0 * v.abs().max(1.0) };
            prop_assert!(u.evaluate(w) - y * w <= best + 1e-9 * best.abs().max(1.0));
        }
    }

    #[test]
    fn subdifferential_brackets_slopes((u, lo, hi) in concave_family(), t in 0.01f64..50.0) {
        let x = if lo == 0.0 { t } else { -t };
        let sd = u.subdifferential(x, lo, hi).unwrap();
        prop_assert!(sd.contains(u.right_slope(x)));
        prop_assert!(sd.contains(u.left_slope(x)));
        prop_assert!(u.left_slope(x) >= u.right_slope(x) - 1e-12 * u.left_slope(x).abs());
    }

    #[test]
    fn concave_family_is_monotone_and_concave((u, lo, hi) in concave_family(), a in 0.0f64..10.0, b in 0.0f64..10.0, t in 0.0f64..1.0) {
        let s = if lo == 0.0 { 1.0 } else { -1.0 };
        let (x, z) = (s * a, s * b);
        let m = t * x + (1.0 - t) * z;
        prop_assert!(u.evaluate(m) >= t * u.evaluate(x) + (1.0 - t) * u.evaluate(z) - 1e-12 * (1.0 + a + b).powi(5));
        prop_assert!(u.is_concave_on(lo.max(-10.0), hi.min(10.0)));
        let (l, h) = (x.min(z), x.max(z));
        prop_assert!(u.evaluate(l) <= u.evaluate(h));
    }
}
