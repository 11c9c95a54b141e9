use std::fs;

use semiquantum::integrators::{integrate, IntegratorSpec, Scheme};
use semiquantum::model::{
    energy, initial_condition_from_energy, InitialConditionConvention, MeanFieldState, ModelKind, ModelParams,
};
use semiquantum::schrodinger::{
    checkpoint_load, checkpoint_save, evolve, evolve_with, gaussian_init, gaussian_l1_distance,
    matched_initial_state, observe, step_order4, step_strang, EvolveOptions, GaussianInitParams, Grid2D,
    Propagator, SplitOrder, WaveFunction2D, CHECKPOINT_MAGIC,
};
use semiquantum::Error;

fn packet(a0: f64, pa0: f64, d0: f64, g0: f64) -> GaussianInitParams {
    GaussianInitParams {
        a0,
        pa0,
        x0: 0.0,
        p0: 0.0,
        d0,
        g0,
        pi_d0: 0.0,
        pi_g0: 0.0,
    }
}

fn max_diff(wf: &WaveFunction2D, other: &WaveFunction2D) -> f64 {
    wf.amplitudes
        .iter()
        .zip(&other.amplitudes)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

#[test]
fn free_spreading_matches_closed_form_and_hartree() {
    let p = ModelParams::with_coupling(0.0);
    let d0 = 0.5;
    let grid = Grid2D::new(256, 64, 64.0, 8.0).unwrap();
    let mut wf = gaussian_init(&grid, &packet(0.0, 0.0, d0, 0.5), &p).unwrap();
    let spec = IntegratorSpec::composition4(1e-2, 10.0);
    let series = evolve(&mut wf, &p, &spec, 100).unwrap().into_result().unwrap();

    let s0 = MeanFieldState::hartree(0.0, 0.0, 0.5f64.sqrt(), 0.0, d0.sqrt(), 0.0).unwrap();
    let mf = integrate(&s0, &p, &spec.sampled(100)).unwrap().into_result().unwrap();
    assert_eq!(mf.len(), series.records.len());
    for (rec, s) in series.records.iter().zip(&mf.states) {
        let t = rec.t;
        let closed = d0 + t * t / (4.0 * d0);
        let hartree_d = s.d().unwrap().rho.powi(2);
        assert!((rec.d(p.hbar) - closed).abs() < 1e-6, "exact D({t}) = {}", rec.d(p.hbar));
        assert!((hartree_d - closed).abs() < 1e-6, "Hartree D({t}) = {hartree_d}");
        // The x factor starts in the oscillator ground state and stays there.
        assert!((rec.g(p.hbar) - 0.5).abs() < 1e-8);
    }
}

#[test]
fn uncoupled_breathing_matches_hartree() {
    let p = ModelParams::with_coupling(0.0);
    let grid = Grid2D::new(128, 128, 32.0, 12.0).unwrap();
    let mut wf = gaussian_init(&grid, &packet(0.5, 0.2, 0.8, 1.2), &p).unwrap();
    let spec = IntegratorSpec::composition4(1e-2, 5.0);
    let series = evolve(&mut wf, &p, &spec, 50).unwrap().into_result().unwrap();
    let s0 = MeanFieldState::hartree(0.5, 0.2, 1.2f64.sqrt(), 0.0, 0.8f64.sqrt(), 0.0).unwrap();
    let mf = integrate(&s0, &p, &spec.sampled(50)).unwrap().into_result().unwrap();
    for (rec, s) in series.records.iter().zip(&mf.states) {
        assert!((rec.g(p.hbar) - s.g()).abs() < 1e-8, "t={}: {} vs {}", rec.t, rec.g(p.hbar), s.g());
        assert!((rec.mean_a - s.a()).abs() < 1e-10);
    }
}

#[test]
fn initial_state_reproduces_hartree_energy_and_moments() {
    let p = ModelParams::with_coupling(1.0);
    let s = initial_condition_from_energy(5.0, &InitialConditionConvention::default(), &p, ModelKind::Hartree)
        .unwrap();
    let spec = IntegratorSpec::composition4(1e-2, 2.0);
    let wf = matched_initial_state(&s, &p, &spec).unwrap();
    let rec = observe(&wf, &p).unwrap();
    assert!((rec.energy - energy(&s, &p).unwrap()).abs() < 1e-10, "{}", rec.energy);
    assert!((rec.mean_a - s.a()).abs() < 1e-12);
    assert!((rec.g(p.hbar) - 0.5).abs() < 1e-12);
    assert!((rec.d(p.hbar) - 0.5).abs() < 1e-12);
    assert!(gaussian_l1_distance(&wf.grid, &wf.a_marginal()).unwrap() < 1e-6);
    let total: f64 = wf.a_marginal().iter().sum::<f64>() * wf.grid.da();
    assert!((total - 1.0).abs() < 1e-8);
}

fn chaotic_start(grid: Grid2D) -> (WaveFunction2D, ModelParams) {
    let p = ModelParams::with_coupling(1.0);
    let s = initial_condition_from_energy(5.0, &InitialConditionConvention::default(), &p, ModelKind::Hartree)
        .unwrap();
    let ip = GaussianInitParams::from_state(&s, &p, 0.0).unwrap();
    (gaussian_init(&grid, &ip, &p).unwrap(), p)
}

fn run(wf: &WaveFunction2D, p: &ModelParams, dt: f64, t: f64, order: SplitOrder) -> WaveFunction2D {
    let mut out = wf.clone();
    let mut prop = Propagator::new(wf.grid, p, dt, order).unwrap();
    for _ in 0..(t / dt).round() as usize {
        prop.step(&mut out).unwrap();
    }
    out
}

fn l2_distance(a: &WaveFunction2D, b: &WaveFunction2D) -> f64 {
    let s: f64 = a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| (x - y).norm_sqr()).sum();
    (s * a.grid.cell_area()).sqrt()
}

#[test]
fn splitting_orders_are_observed() {
    let (wf, p) = chaotic_start(Grid2D::new(128, 128, 16.0, 8.0).unwrap());
    let t = 0.4;
    for (order, dts, lo, hi) in [
        (SplitOrder::Fourth, [0.02, 0.01], 12.0, 20.0),
        (SplitOrder::Second, [0.01, 0.005], 3.6, 4.4),
    ] {
        let reference = run(&wf, &p, 0.00125, t, SplitOrder::Fourth);
        let coarse = l2_distance(&run(&wf, &p, dts[0], t, order), &reference);
        let fine = l2_distance(&run(&wf, &p, dts[1], t, order), &reference);
        let ratio = coarse / fine;
        assert!((lo..=hi).contains(&ratio), "{order:?}: error ratio {ratio}");
    }
}

#[test]
fn strang_and_fourth_order_agree_at_small_steps() {
    let (wf, p) = chaotic_start(Grid2D::new(128, 128, 16.0, 8.0).unwrap());
    let a = run(&wf, &p, 1e-3, 0.5, SplitOrder::Second);
    let b = run(&wf, &p, 1e-3, 0.5, SplitOrder::Fourth);
    assert!((a.overlap(&b).unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn symmetric_start_keeps_zero_mean() {
    let p = ModelParams::with_coupling(1.0);
    let grid = Grid2D::new(256, 128, 32.0, 10.0).unwrap();
    let mut wf = gaussian_init(&grid, &packet(0.0, 0.0, 0.5, 0.5), &p).unwrap();
    let spec = IntegratorSpec::composition4(1e-2, 2.0);
    let series = evolve(&mut wf, &p, &spec, 10).unwrap().into_result().unwrap();
    for rec in &series.records {
        assert!(rec.mean_a.abs() < 1e-12 && rec.mean_pa.abs() < 1e-12, "{rec:?}");
    }
}

#[test]
fn norm_survives_many_steps() {
    let (mut wf, p) = chaotic_start(Grid2D::new(64, 64, 16.0, 8.0).unwrap());
    let mut prop = Propagator::new(wf.grid, &p, 1e-4, SplitOrder::Second).unwrap();
    for _ in 0..10_000 {
        prop.step(&mut wf).unwrap();
    }
    assert!((wf.norm() - 1.0).abs() < 1e-10, "norm {}", wf.norm());
}

#[test]
fn escaping_packet_returns_partial_series() {
    let p = ModelParams::with_coupling(0.0);
    let grid = Grid2D::new(64, 32, 8.0, 6.0).unwrap();
    let mut wf = gaussian_init(&grid, &packet(0.0, 3.0, 0.5, 0.5), &p).unwrap();
    let spec = IntegratorSpec::composition4(1e-2, 10.0);
    let series = evolve(&mut wf, &p, &spec, 10).unwrap();
    let escape = series.aborted.expect("packet should reach the edge");
    assert!(escape.t > 0.0 && escape.t < 10.0);
    assert!(series.last_time() < escape.t);
    assert!(matches!(series.into_result(), Err(Error::BoxEscape { .. })));
}

#[test]
fn sample_hook_sees_every_observation() {
    let (mut wf, p) = chaotic_start(Grid2D::new(64, 64, 16.0, 8.0).unwrap());
    let spec = IntegratorSpec::composition4(1e-2, 0.5);
    let mut seen = Vec::new();
    let series = evolve_with(&mut wf, &p, &spec, &EvolveOptions::every(10), |k, w| {
        seen.push((k, w.t));
        Ok(())
    })
    .unwrap();
    assert_eq!(seen.len(), series.records.len());
    assert_eq!(seen[1], (10, 0.1));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.sqc");
    let (wf, p) = chaotic_start(Grid2D::new(64, 32, 16.0, 8.0).unwrap());
    let wf = step_order4(&wf, &p, 0.01).unwrap();
    checkpoint_save(&wf, &p, &path).unwrap();
    let loaded = checkpoint_load(&path).unwrap();
    assert_eq!(loaded.wf, wf);
    assert_eq!(loaded.params, p);
    for (x, y) in loaded.wf.amplitudes.iter().zip(&wf.amplitudes) {
        assert_eq!(x.re.to_bits(), y.re.to_bits());
        assert_eq!(x.im.to_bits(), y.im.to_bits());
    }
    let a = step_strang(&wf, &p, 0.01).unwrap();
    let b = step_strang(&loaded.wf, &loaded.params, 0.01).unwrap();
    assert_eq!(max_diff(&a, &b), 0.0);

    let bytes = fs::read(&path).unwrap();
    assert_eq!(bytes[..8], CHECKPOINT_MAGIC);
    assert_eq!(bytes.len(), 68 + 16 * 64 * 32);
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.sqc");
    let (wf, p) = chaotic_start(Grid2D::new(32, 32, 16.0, 8.0).unwrap());
    checkpoint_save(&wf, &p, &path).unwrap();
    let good = fs::read(&path).unwrap();

    fs::write(&path, &good[..good.len() - 5]).unwrap();
    assert!(matches!(checkpoint_load(&path), Err(Error::SizeMismatch { .. })));

    let mut bad = good.clone();
    bad[0] = b'X';
    fs::write(&path, &bad).unwrap();
    assert!(matches!(checkpoint_load(&path), Err(Error::Format(_))));

    let mut bad = good.clone();
    bad[8..12].copy_from_slice(&7u32.to_le_bytes());
    fs::write(&path, &bad).unwrap();
    assert!(matches!(checkpoint_load(&path), Err(Error::Version(7))));

    assert!(matches!(
        checkpoint_load(&dir.path().join("missing.sqc")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn rk4_cannot_drive_the_exact_solver() {
    let (mut wf, p) = chaotic_start(Grid2D::new(32, 32, 16.0, 8.0).unwrap());
    let spec = IntegratorSpec::new(Scheme::Rk4Generic, 1e-2, 0.1, 1).unwrap();
    assert!(evolve(&mut wf, &p, &spec, 1).is_err());
}
