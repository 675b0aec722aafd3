use discrete_riemann::fixtures::{self, parse_entry};
use discrete_riemann::mesh::{estimate_counts, refine};
use discrete_riemann::theta::ThetaCharacteristic;
use discrete_riemann::{make_js, make_l, BasisVariant, Rational, RiemannMatrix, SurfaceSpec};
use num_complex::Complex64;
use proptest::prelude::*;

fn odd(max: i64) -> impl Strategy<Value = i64> {
    (0..max).prop_map(|k| 2 * k + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rational_display_round_trips(p in -1_000_000i64..1_000_000, q in 1i64..1_000_000) {
        let r = Rational::new(p, q).unwrap();
        let back: Rational = r.to_string().parse().unwrap();
        prop_assert_eq!(back, r);
        prop_assert!(r.den() > 0);
        prop_assert!((r.to_f64() - p as f64 / q as f64).abs() <= 1e-12 * (p as f64 / q as f64).abs().max(1.0));
    }

    #[test]
    fn rational_parse_never_panics(s in "\\PC{0,24}") {
        let _ = s.parse::<Rational>();
    }

    #[test]
    fn rational_parse_of_sign_forms(p in 1i64..10_000, q in 1i64..10_000) {
        let a: Rational = format!("-{p}/{q}").parse().unwrap();
        let b: Rational = format!("{p}/-{q}").parse().unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a.to_f64() < 0.0);
    }

    #[test]
    fn printed_entries_never_panic(s in "[-+0-9.i ]{0,20}") {
        let _ = parse_entry(&s);
    }

    #[test]
    fn printed_entries_round_trip(re in -10.0f64..10.0, im in -10.0f64..10.0) {
        let s = format!("{re:.9}{im:+.9}i");
        let e = parse_entry(&s).unwrap();
        prop_assert!((e.value() - Complex64::new(re, im)).norm() < 1e-8);
        prop_assert_eq!(e.re.decimals, 9);
        prop_assert_eq!(e.im.decimals, 9);
    }

    #[test]
    fn characteristics_round_trip(bits in prop::collection::vec(0u8..2, 2..12)) {
        let g = bits.len() / 2;
        let ch = ThetaCharacteristic::new(bits[..g].to_vec(), bits[g..2 * g].to_vec()).unwrap();
        let back: ThetaCharacteristic = ch.to_string().parse().unwrap();
        prop_assert_eq!(&back, &ch);
        let json = serde_json::to_string(&ch).unwrap();
        let back: ThetaCharacteristic = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, ch);
    }

    #[test]
    fn l_spec_json_round_trips(p in odd(12), q in odd(6), delta in any::<bool>()) {
        let lambda = Rational::new(p + 2 * q, q).unwrap();
        let basis = if delta { BasisVariant::Delta } else { BasisVariant::Alpha };
        let spec = make_l(lambda, basis).unwrap();
        let back = SurfaceSpec::from_json(&spec.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &spec);
    }

    #[test]
    fn js_spec_json_round_trips(g in 2usize..7, a in odd(4), b in odd(4), c in odd(4), d in odd(4)) {
        let spec = make_js(g, Rational::new(a, b).unwrap(), Rational::new(c, d).unwrap()).unwrap();
        let back = SurfaceSpec::from_json(&spec.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &spec);
    }

    #[test]
    fn spec_json_never_panics(s in "\\PC{0,64}") {
        let _ = SurfaceSpec::from_json(&s);
    }

    #[test]
    fn riemann_json_round_trips(a in 0.5f64..3.0, b in -0.4f64..0.4, c in 0.5f64..3.0, re in -1.0f64..1.0) {
        let tau = vec![
            vec![Complex64::new(re, a), Complex64::new(0.0, b)],
            vec![Complex64::new(0.0, b), Complex64::new(-re, c)],
        ];
        let m = RiemannMatrix::from_tau(tau).unwrap();
        let back = RiemannMatrix::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.tau, m.tau);
        prop_assert_eq!(back.genus, 2);
    }

    #[test]
    fn mesh_counts_within_estimates(p in odd(6), q in odd(3), level in 0u32..3) {
        let spec = make_l(Rational::new(p + 2 * q, q).unwrap(), BasisVariant::Alpha).unwrap();
        let mesh = refine(&spec, level).unwrap();
        let (v, s) = estimate_counts(&spec, level).unwrap();
        prop_assert!(mesh.n_vertices() as u64 <= v);
        prop_assert_eq!(mesh.n_squares() as u64, s);
    }
}

#[test]
fn fixture_json_rejects_garbage() {
    assert!(fixtures::Fixture::from_json("{}").is_err());
    assert!(fixtures::Fixture::from_json("[1,2]").is_err());
    assert!(RiemannMatrix::from_json(r#"{"genus":2,"tau_re":[[0]],"tau_im":[[1]]}"#).is_err());
    assert!(RiemannMatrix::from_json(r#"{"genus":0,"tau_re":[],"tau_im":[]}"#).is_err());
}

#[test]
fn every_fixture_reparses_from_its_own_json() {
    for f in fixtures::load_all().unwrap() {
        for row in &f.rows {
            let m = fixtures::parse_matrix(&row.tau).unwrap();
            assert_eq!(m.len(), f.rows[0].tau.len(), "{} level {}", f.id, row.level);
        }
    }
}
