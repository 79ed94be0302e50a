use super::*;
use crate::geometry::Domain;
use proptest::prelude::*;

struct Uniform(Vec2);

impl GuidanceField for Uniform {
    fn velocity(&self, _: Vec2, _: f64) -> (Vec2, bool) {
        (self.0, false)
    }
    fn inside(&self, p: Vec2) -> bool {
        Domain::default().contains(p)
    }
}

/// Linear rotation plus a fast decaying radial mode: a stiff system.
struct StiffSpiral;

impl GuidanceField for StiffSpiral {
    fn velocity(&self, p: Vec2, _: f64) -> (Vec2, bool) {
        let r = p.norm();
        let radial = -1e4 * (r - 1.0) * p / r;
        (Vec2::new(-p.y, p.x) + radial, false)
    }
    fn inside(&self, _: Vec2) -> bool {
        true
    }
}

#[test]
fn default_ensemble_has_eighty_points_on_four_rings() {
    let spec = EnsembleSpec::default();
    let pts = sample_initial(&spec, &Domain::default()).unwrap();
    assert_eq!(pts.len(), 80);
    let c = spec.center();
    let max = pts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
    assert!((max - 0.1).abs() < 1e-12);
    for (k, &r) in spec.rings.iter().enumerate() {
        for p in &pts[20 * k..20 * (k + 1)] {
            assert!(((p - c).norm() - r).abs() < 1e-12);
        }
    }
    assert_eq!(pts, sample_initial(&spec, &Domain::default()).unwrap());
    let other = EnsembleSpec { seed: 7, ..spec };
    assert_ne!(pts, sample_initial(&other, &Domain::default()).unwrap());
}

#[test]
fn zero_ring_is_the_centre() {
    let spec = EnsembleSpec { rings: vec![0.0], counts: vec![1], ..Default::default() };
    assert_eq!(sample_initial(&spec, &Domain::default()).unwrap(), vec![Vec2::new(1.0, 0.5)]);
}

#[test]
fn ring_crossing_walls_is_rejected() {
    let spec = EnsembleSpec { rings: vec![0.6], counts: vec![20], ..Default::default() };
    assert!(matches!(sample_initial(&spec, &Domain::default()), Err(Error::RingOutside { .. })));
}

#[test]
fn with_total_splits_evenly() {
    assert_eq!(EnsembleSpec::default().with_total(82).counts, vec![21, 21, 20, 20]);
    assert_eq!(EnsembleSpec::default().with_total(80).total(), 80);
}

#[test]
fn mesh_is_uniform_and_closed() {
    let m = output_mesh(0.1, 2.5e-4).unwrap();
    assert_eq!(m.len(), 401);
    assert_eq!(m[0], 0.0);
    assert_eq!(m[400], 0.1);
    let m = output_mesh(0.01, 0.003).unwrap();
    assert_eq!(m.len(), 5);
    assert_eq!(*m.last().unwrap(), 0.01);
    assert!(output_mesh(0.0, 0.1).is_err());
}

#[test]
fn uniform_flow_is_exact() {
    let v = Vec2::new(96.0 / 5f64.sqrt() * 2.0, -48.0 / 5f64.sqrt() * 2.0);
    let opts = IntegrationOptions { t_end: 0.005, dt_out: 0.001, ..Default::default() };
    let ens = integrate_ensemble(&[Vec2::new(1.0, 0.5)], &Uniform(v), &opts).unwrap();
    let tr = &ens.trajectories[0];
    assert_eq!(tr.status, TrajectoryStatus::Ok);
    assert_eq!(tr.samples.len(), 6);
    for s in &tr.samples {
        assert!((s.pos - (Vec2::new(1.0, 0.5) + v * s.t)).norm() < 1e-12);
        assert!((s.momentum() - v * MASS).norm() < 1e-12);
    }
}

#[test]
fn free_gaussian_trajectories_follow_the_width() {
    let free = FreeGaussian { alpha: 30.68, center: Vec2::new(0.3, -0.2), momentum: Vec2::new(5.0, 2.0) };
    let t_end = 3.0 * free.spreading_time();
    let opts = IntegrationOptions { t_end, dt_out: t_end / 60.0, ..Default::default() };
    let starts: Vec<Vec2> = [0.01, 0.05, 0.1, 0.2].iter().map(|&d| free.center + Vec2::new(d, -0.5 * d)).collect();
    let ens = integrate_ensemble(&starts, &free, &opts).unwrap();
    for (tr, &s0) in ens.trajectories.iter().zip(&starts) {
        assert_eq!(tr.status, TrajectoryStatus::Ok);
        for s in &tr.samples {
            let exact = free.position(s0, s.t);
            let offset = (exact - free.centre_at(s.t)).norm();
            assert!((s.pos - exact).norm() <= 1e-6 * offset, "t={} err={}", s.t, (s.pos - exact).norm());
        }
    }
}

#[test]
fn tolerance_halving_converges() {
    let free = FreeGaussian::new(30.68);
    let t_end = 3.0 * free.spreading_time();
    let start = Vec2::new(0.07, 0.02);
    let run = |tol| {
        let opts = IntegrationOptions { t_end, dt_out: t_end / 10.0, tol: Tolerances { abs: tol, rel: tol }, ..Default::default() };
        integrate_ensemble(&[start], &free, &opts).unwrap().trajectories[0].samples.last().unwrap().pos
    };
    let exact = free.position(start, t_end);
    let (a, b) = (run(1e-7), run(5e-8));
    assert!((a - exact).norm() < 10.0 * 1e-7 * exact.norm());
    assert!((a - b).norm() < 10.0 * 1e-7 * exact.norm());
}

#[test]
fn stiff_field_is_integrated_with_few_steps() {
    let opts = IntegrationOptions { t_end: 1.0, dt_out: 0.25, tol: Tolerances { abs: 1e-8, rel: 1e-8 }, ..Default::default() };
    let ens = integrate_ensemble(&[Vec2::new(1.01, 0.0)], &StiffSpiral, &opts).unwrap();
    let tr = &ens.trajectories[0];
    assert_eq!(tr.status, TrajectoryStatus::Ok);
    let end = tr.samples.last().unwrap().pos;
    assert!((end - Vec2::new(1f64.cos(), 1f64.sin())).norm() < 1e-6, "{end:?}");
    // An explicit method would need ~ 1e4 steps for stability alone.
    assert!(tr.stats.accepted < 2000, "{:?}", tr.stats);
}

#[test]
fn leaving_the_domain_is_reported_with_prefix() {
    let opts = IntegrationOptions { t_end: 0.01, dt_out: 0.001, ..Default::default() };
    let ens = integrate_ensemble(&[Vec2::new(1.0, 0.5)], &Uniform(Vec2::new(0.0, 100.0)), &opts).unwrap();
    let tr = &ens.trajectories[0];
    assert!(matches!(tr.status, TrajectoryStatus::LeftDomain { t } if t > 0.005 && t <= 0.006));
    assert_eq!(tr.samples.len(), 6);
    assert_eq!(ens.count_status("left-domain"), 1);
}

#[test]
fn start_outside_is_an_error() {
    let opts = IntegrationOptions::default();
    assert!(integrate_ensemble(&[Vec2::new(3.0, 0.5)], &Uniform(Vec2::zeros()), &opts).is_err());
}

fn toy_ensemble() -> TrajectoryEnsemble {
    let opts = IntegrationOptions { t_end: 0.004, dt_out: 0.001, ..Default::default() };
    let pts = [Vec2::new(1.0, 0.5), Vec2::new(0.5, 0.5)];
    integrate_ensemble(&pts, &Uniform(Vec2::new(10.0, -3.0)), &opts).unwrap()
}

#[test]
fn panels_concatenate_to_full_paths() {
    let ens = toy_ensemble();
    let panels = segment_panels(&ens, &[0.001, 0.003]).unwrap();
    assert_eq!(panels.len(), 3);
    assert_eq!((panels[0].t_start, panels[0].t_end), (0.0, 0.001));
    for (id, tr) in ens.trajectories.iter().enumerate() {
        let mut joined: Vec<TrajectorySample> = Vec::new();
        for p in &panels {
            for s in &p.paths[id].1 {
                if joined.last().is_none_or(|l| l.t < s.t) {
                    joined.push(*s);
                }
            }
        }
        assert_eq!(joined, tr.samples);
    }
    assert_eq!(segment_panels(&ens, &[]).unwrap()[0].paths[0].1, ens.trajectories[0].samples);
    let at_zero = segment_panels(&ens, &[0.0]).unwrap();
    assert!(at_zero[0].paths.iter().all(|(_, s)| s.len() == 1));
    assert!(segment_panels(&ens, &[0.003, 0.001]).is_err());
}

#[test]
fn csv_round_trip_is_exact() {
    let ens = toy_ensemble();
    let mut buf = Vec::new();
    write_ensemble_csv(&mut buf, &ens).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("id,t,x,y,px,py,status\n0,0,1,0.5,5,-1.5,ok\n"));
    let back = read_ensemble_csv(&buf[..], ens.mesh.clone()).unwrap();
    for (a, b) in back.trajectories.iter().zip(&ens.trajectories) {
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.status, b.status);
    }
    let mut panel = Vec::new();
    write_panel_csv(&mut panel, &segment_panels(&ens, &[0.002]).unwrap()[1], &ens).unwrap();
    assert_eq!(String::from_utf8(panel).unwrap().lines().count(), 1 + 2 * 3);
}

#[test]
fn pair_distance_and_centroid() {
    let ens = toy_ensemble();
    let (d, _) = ens.min_pair_distance().unwrap();
    assert!((d - 0.5).abs() < 1e-12);
    assert!((ens.centroid(0).unwrap() - Vec2::new(0.75, 0.5)).norm() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn free_offsets_scale_with_width(dx in -0.2f64..0.2, dy in -0.2f64..0.2, alpha in 5.0f64..60.0) {
        let free = FreeGaussian::new(alpha);
        let t_end = 2.0 * free.spreading_time();
        let start = Vec2::new(dx, dy);
        let opts = IntegrationOptions { t_end, dt_out: t_end / 4.0, ..Default::default() };
        let tr = integrate_ensemble(&[start], &free, &opts).unwrap().trajectories.remove(0);
        for s in &tr.samples {
            let want = start * free.width_ratio(s.t);
            prop_assert!((s.pos - want).norm() <= 1e-6 * want.norm().max(1e-12) + 1e-12);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic(seed in any::<u64>()) {
        let spec = EnsembleSpec { seed, ..Default::default() };
        let a = sample_initial(&spec, &Domain::default()).unwrap();
        let b = sample_initial(&spec, &Domain::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
