use gyrodrift::diagnostics::{csiszar_kullback, entropy_h};
use gyrodrift::guiding_center::{LimitOptions, LimitSolver, PicardMode};
use gyrodrift::harness::FieldFile;
use gyrodrift::{
    eval_magnetic, neutral_background, Density, DensityRole, Error, MagneticSpec, PhysicsParams,
    PoissonSolver, SpatialGrid,
};
use proptest::prelude::*;

fn gaussian(g: SpatialGrid, c: [f64; 2], w: f64, mass: f64) -> Density {
    let norm = mass / (std::f64::consts::PI * w * w);
    Density::from_fn(g, DensityRole::Plasma, |a, b| {
        norm * (-((a - c[0]).powi(2) + (b - c[1]).powi(2)) / (w * w)).exp()
    })
    .unwrap()
}

fn solver(g: SpatialGrid, spec: MagneticSpec, n_in: &Density) -> LimitSolver {
    let p = PhysicsParams::default();
    let mag = eval_magnetic(&spec, &g, &p).unwrap();
    let d = neutral_background(n_in, 1.5).unwrap();
    LimitSolver::new(p, mag, d, LimitOptions::default()).unwrap()
}

#[test]
fn picard_from_background_converges_immediately() {
    let g = SpatialGrid::new(8.0, 48).unwrap();
    let s = solver(
        g,
        MagneticSpec::Uniform { b0: 1.0 },
        &gaussian(g, [0.0, 0.0], 1.0, 1.0),
    );
    let d = s.background.clone();
    let out = s
        .picard_field(&d, PicardMode::Step { dt: 0.05 }, 1e-12, 5)
        .unwrap();
    assert_eq!(out.iterations, 1);
    assert!(out.e.sup_norm() < 1e-12);
}

#[test]
fn picard_contracts_and_reports_non_convergence() {
    let g = SpatialGrid::new(8.0, 48).unwrap();
    let n = gaussian(g, [1.0, 0.0], 1.0, 1.0);
    let s = solver(g, MagneticSpec::Uniform { b0: 1.0 }, &n);
    let mode = PicardMode::Step { dt: 0.05 };
    match s.picard_field(&n, mode, 1e-14, 1) {
        Err(Error::NonConvergence {
            iterations,
            history,
        }) => {
            assert_eq!(iterations, 1);
            assert_eq!(history.len(), 1);
            assert!(history[0] > 1e-14);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
    let out = s.picard_field(&n, mode, 1e-10, 50).unwrap();
    assert!(out.iterations > 1);
    for w in out.residuals.windows(2) {
        assert!(w[1] < w[0], "{:?}", out.residuals);
    }
    let frozen = s.picard_field(&n, PicardMode::Frozen, 1e-12, 3).unwrap();
    assert_eq!(frozen.iterations, 1);
    assert!(s.picard_field(&n, mode, 0.0, 3).is_err());
}

#[test]
fn limit_conserves_mass_under_grad_b_drift() {
    let g = SpatialGrid::new(8.0, 128).unwrap();
    let n_in = gaussian(g, [0.0, 0.0], 1.0, 1.0);
    let spec = MagneticSpec::Bump {
        b0: 1.0,
        amplitude: 0.5,
        width: 2.0,
    };
    let s = solver(g, spec, &n_in);
    let d = s.background.clone();
    let mut st = s.state(d.clone(), 0.0).unwrap();
    for _ in 0..100 {
        s.step(&mut st, 5e-3).unwrap();
    }
    let drift = (st.n.mass() - d.mass()) / d.mass();
    assert!(drift.abs() < 1e-8, "{drift:e}");
    assert!(st.n.values.iter().all(|v| *v >= 0.0));
}

#[test]
fn limit_rejects_charged_input() {
    let g = SpatialGrid::new(8.0, 48).unwrap();
    let n = gaussian(g, [0.0, 0.0], 1.0, 1.0);
    let s = solver(g, MagneticSpec::Uniform { b0: 1.0 }, &n);
    let heavier = gaussian(g, [0.0, 0.0], 1.0, 1.1);
    assert!(matches!(
        s.state(heavier, 0.0),
        Err(Error::Neutrality { .. })
    ));
}

#[test]
fn entropy_function_edge_values() {
    assert_eq!(entropy_h(1.0).unwrap(), 0.0);
    assert_eq!(entropy_h(0.0).unwrap(), 1.0);
    assert!(entropy_h(-1e-3).is_err());
    assert!(entropy_h(f64::NAN).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn poisson_is_linear(
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        c1 in -2.0..2.0f64,
        c2 in -2.0..2.0f64,
    ) {
        let g = SpatialGrid::new(8.0, 32).unwrap();
        let p = PhysicsParams::default();
        let solver = PoissonSolver::new(&g, &p).unwrap().relaxed();
        let r1 = Density::from_fn(g, DensityRole::NetCharge, |x, y| {
            (-((x - c1).powi(2) + y * y)).exp()
        }).unwrap();
        let r2 = Density::from_fn(g, DensityRole::NetCharge, |x, y| {
            (-(x * x + (y - c2).powi(2)) / 2.0).exp() - 0.5 * (-(x * x + y * y)).exp()
        }).unwrap();
        let mix = Density::new(
            g,
            r1.values.iter().zip(&r2.values).map(|(u, v)| a * u + b * v).collect(),
            DensityRole::NetCharge,
        ).unwrap();
        let e1 = solver.field_from_charge(&r1).unwrap();
        let e2 = solver.field_from_charge(&r2).unwrap();
        let em = solver.field_from_charge(&mix).unwrap();
        let scale = 1.0 + a.abs() * e1.sup_norm() + b.abs() * e2.sup_norm();
        for k in 0..g.len() {
            prop_assert!((em.x1[k] - a * e1.x1[k] - b * e2.x1[k]).abs() < 1e-12 * scale);
            prop_assert!((em.x2[k] - a * e1.x2[k] - b * e2.x2[k]).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn ck_inequality_holds(
        pairs in prop::collection::vec((0.0..5.0f64, 1e-3..5.0f64), 1..200),
        w in 1e-3..1.0f64,
    ) {
        let (g, g0): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let audit = csiszar_kullback(&g, &g0, w).unwrap();
        prop_assert!(audit.holds(), "{} > {}", audit.l1, audit.bound);
    }

    #[test]
    fn field_file_round_trips(
        dims in prop::collection::vec(1usize..6, 1..5),
        seed in any::<u64>(),
    ) {
        let len: usize = dims.iter().product();
        let data: Vec<f64> = (0..len)
            .map(|k| f64::from_bits(seed.rotate_left(k as u32 % 64) ^ k as u64))
            .map(|v| if v.is_nan() { 0.0 } else { v })
            .collect();
        let file = FieldFile::new(dims, data).unwrap();
        let bytes = file.to_bytes().unwrap();
        prop_assert_eq!(bytes.len(), file.encoded_len());
        let back = FieldFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back, file);
    }
}
