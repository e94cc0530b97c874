//! Property tests for the structural invariants of the spectral core, the operators
//! and the stochastic weights.

use proptest::prelude::*;

use fracns::background::{make_background, FlowFamily};
use fracns::operators::{bilinear_sym, LinearizedOperator, OperatorOptions};
use fracns::semigroups::{heat_flow, random_compact_divfree};
use fracns::spectral_core::{fractional_laplacian, leray_project, make_grid, ssnf, GridSpec, SpectralField};
use fracns::stochastic::{exp_transform, geometric_grid, sample_bm, ExpDirection};

fn grid() -> GridSpec {
    make_grid(2, 32, 4.0, 1.5, false).unwrap()
}

/// Smooth periodic vector field with random low-mode amplitudes (not divergence-free).
fn field(g: &GridSpec, amps: &[f64]) -> SpectralField {
    let a = amps.to_vec();
    SpectralField::from_fn(g, 2, move |x| {
        let s = std::f64::consts::PI / 4.0;
        vec![
            a[0] * (s * x[0]).sin() + a[1] * (2.0 * s * x[1]).cos() + a[2] * (s * (x[0] + x[1])).sin(),
            a[3] * (s * x[1]).cos() + a[4] * (3.0 * s * x[0]).sin() + a[5] * (s * (x[0] - 2.0 * x[1])).cos(),
        ]
    })
}

fn amps() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leray_is_idempotent_and_divergence_free(a in amps()) {
        let u = field(&grid(), &a);
        prop_assume!(u.norm_l2() > 1e-6);
        let p = leray_project(&u);
        prop_assert!(leray_project(&p).sub(&p).norm_l2() <= 1e-12 * u.norm_l2());
        prop_assert!(p.divergence_ratio() <= 1e-10);
    }

    #[test]
    fn parseval_matches_quadrature(a in amps()) {
        let u = field(&grid(), &a);
        prop_assume!(u.norm_l2() > 1e-6);
        prop_assert!((u.norm_l2() - u.norm_l2_quadrature()).abs() <= 1e-10 * u.norm_l2());
    }

    #[test]
    fn fractional_laplacian_commutes_with_leray(a in amps(), alpha in 0.5f64..2.0) {
        let u = field(&grid(), &a);
        let lhs = fractional_laplacian(&leray_project(&u), alpha).unwrap();
        let rhs = leray_project(&fractional_laplacian(&u, alpha).unwrap());
        prop_assert!(lhs.sub(&rhs).norm_l2() <= 1e-12 * (1.0 + rhs.norm_l2()));
    }

    #[test]
    fn heat_semigroup_composes(seed in 0u64..1000, s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let u = random_compact_divfree(&grid(), 5, 1.0, seed).unwrap();
        let two = heat_flow(&heat_flow(&u, s, 1.5).unwrap(), t, 1.5).unwrap();
        let one = heat_flow(&u, s + t, 1.5).unwrap();
        prop_assert!(two.sub(&one).norm_l2() <= 1e-13 * u.norm_l2());
    }

    #[test]
    fn ssnf_round_trip_is_bit_exact(seed in 0u64..1000) {
        let g = grid();
        let u = random_compact_divfree(&g, 6, 1.2, seed).unwrap();
        let bytes = ssnf::encode(&u);
        let back = ssnf::decode(&bytes, "prop.ssnf", Some(&g)).unwrap();
        let bits = |f: &SpectralField| f.components().concat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&u));
    }

    #[test]
    fn bilinear_form_is_symmetric(a in amps(), b in amps()) {
        let g = grid();
        let u = leray_project(&field(&g, &a));
        let v = leray_project(&field(&g, &b));
        let d = bilinear_sym(&u, &v).unwrap().sub(&bilinear_sym(&v, &u).unwrap());
        prop_assert!(d.norm_l2() <= 1e-13 * (1.0 + u.norm_l2() * v.norm_l2()));
    }

    #[test]
    fn linearized_operator_is_linear(a in amps(), b in amps(), x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let g = make_grid(2, 128, 8.0, 1.5, false).unwrap();
        let fam = FlowFamily { radius: 2.0, amplitude: 2.0, ..FlowFamily::default() };
        let ubar = make_background(&fam, &g).unwrap();
        let op = LinearizedOperator::new(&ubar, OperatorOptions::default()).unwrap();
        let u = leray_project(&field(&g, &a));
        let v = leray_project(&field(&g, &b));
        let lhs = op.apply_full(&u.scale(x).add(&v.scale(y)));
        let rhs = op.apply_full(&u).scale(x).add(&op.apply_full(&v).scale(y));
        prop_assert!(lhs.sub(&rhs).norm_l2() <= 1e-12 * (1.0 + rhs.norm_l2()));
    }

    #[test]
    fn exponential_transform_round_trips(seed in 0u64..1000, gamma in 0.0f64..1.0) {
        let times = geometric_grid(1e-4, 1.3, 0.05, 1.0).unwrap();
        let path = sample_bm(seed, &times, gamma).unwrap();
        let g = grid();
        let u = random_compact_divfree(&g, 4, 1.0, seed).unwrap();
        let pick = [1usize, times.len() / 2, times.len() - 1];
        let ts: Vec<f64> = pick.iter().map(|&i| times[i]).collect();
        let fields = vec![u.clone(); ts.len()];
        let v = exp_transform(&fields, &ts, &path, ExpDirection::UToV).unwrap();
        let back = exp_transform(&v, &ts, &path, ExpDirection::VToU).unwrap();
        for (j, &i) in pick.iter().enumerate() {
            prop_assert!(back[j].sub(&u).norm_l2() <= 1e-14 * u.norm_l2());
            let factor = path.log_inv_h(i).exp();
            let ratio = fields[j].norm_l2() / v[j].norm_l2();
            prop_assert!((ratio / factor - 1.0).abs() <= 1e-14);
        }
    }
}
