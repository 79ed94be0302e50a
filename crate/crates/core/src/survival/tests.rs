use super::*;
use crate::bohm::{Trajectory, TrajectorySample, TrajectoryStatus, StepStats};
use crate::geometry::{diagonal_po, Domain};
use proptest::prelude::*;

fn state(weights: &[(f64, f64)]) -> SpectralState {
    SpectralState {
        coeffs: weights.iter().map(|&(w, _)| Complex64::new(w.sqrt(), 0.0)).collect(),
        energies: weights.iter().map(|&(_, e)| e).collect(),
        t: 0.0,
        norm_capture: 1.0,
    }
}

fn mesh(n: usize, dt: f64) -> Vec<f64> {
    (0..n).map(|k| k as f64 * dt).collect()
}

fn ensemble(paths: Vec<Vec<(Vec2, Vec2)>>, dt: f64) -> TrajectoryEnsemble {
    let n = paths.iter().map(Vec::len).max().unwrap();
    TrajectoryEnsemble {
        mesh: mesh(n, dt),
        trajectories: paths
            .into_iter()
            .enumerate()
            .map(|(id, p)| Trajectory {
                id,
                status: if p.len() == n { TrajectoryStatus::Ok } else { TrajectoryStatus::StepFailure { t: (p.len() - 1) as f64 * dt } },
                samples: p.into_iter().enumerate().map(|(k, (pos, vel))| TrajectorySample { t: k as f64 * dt, pos, vel }).collect(),
                stats: StepStats::default(),
            })
            .collect(),
    }
}

#[test]
fn exact_series_starts_at_one_and_stays_bounded() {
    let s = state(&[(0.5, 10.0), (0.3, 25.0), (0.2, 31.0)]);
    let series = survival_exact(&s, &mesh(500, 0.01));
    assert!((series[0] - 1.0).abs() < 1e-15);
    assert!(series.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
}

#[test]
fn single_mode_never_decays() {
    let s = state(&[(1.0, 1234.5)]);
    assert!(survival_exact(&s, &mesh(50, 0.003)).iter().all(|&v| (v - 1.0).abs() < 1e-14));
}

#[test]
fn two_modes_beat_at_their_difference() {
    let s = state(&[(0.5, 0.0), (0.5, 2.0 * std::f64::consts::PI)]);
    let v = survival_exact(&s, &[0.0, 0.5, 1.0]);
    assert!((v[1]).abs() < 1e-15 && (v[2] - 1.0).abs() < 1e-14);
}

#[test]
fn time_average_approaches_the_participation_ratio() {
    let weights: Vec<(f64, f64)> = (0..40).map(|k| ((-(k as f64 - 20.0).powi(2) / 50.0).exp(), 100.0 + 13.7 * k as f64 + (k as f64).sqrt())).collect();
    let total: f64 = weights.iter().map(|w| w.0).sum();
    let s = state(&weights.iter().map(|&(w, e)| (w / total, e)).collect::<Vec<_>>());
    let series = survival_exact(&s, &mesh(40000, 0.0173));
    let avg = series.iter().sum::<f64>() / series.len() as f64;
    let ipr = inverse_participation(&s);
    assert!((avg - ipr).abs() < 0.02 * ipr, "{avg} vs {ipr}");
}

#[test]
fn frozen_single_trajectory_gives_one() {
    let c = Vec2::new(1.0, 0.5);
    let ens = ensemble(vec![vec![(c, Vec2::new(3.0, 1.0)); 3]], 0.01);
    let a = survival_approx(&ens, DEFAULT_SIGMA).unwrap();
    assert_eq!(a.raw, vec![1.0; 3]);
    assert_eq!(a.rescaled, vec![1.0; 3]);
    assert_eq!(a.truncated_from, None);
}

#[test]
fn tiny_sigma_kills_mismatched_momenta() {
    let c = Vec2::new(1.0, 0.5);
    let ens = ensemble(vec![vec![(c, Vec2::new(3.0, 1.0)), (c, Vec2::new(4.0, 1.0))]], 0.01);
    let a = survival_approx(&ens, 1e-6).unwrap();
    assert!((a.raw[0] - 1.0).abs() < 1e-5);
    assert!(a.raw[1] < 1e-100);
}

fn random_ensemble(n: usize, steps: usize, seed: u64) -> TrajectoryEnsemble {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let paths = (0..n)
        .map(|_| {
            (0..steps)
                .map(|_| {
                    let p = Vec2::new(rng.random_range(0.8..1.2), rng.random_range(0.3..0.7));
                    let v = Vec2::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
                    (p, v)
                })
                .collect()
        })
        .collect();
    ensemble(paths, 0.001)
}

#[test]
fn contributions_add_up_to_the_estimate() {
    let ens = random_ensemble(12, 30, 3);
    let a = survival_approx(&ens, DEFAULT_SIGMA).unwrap();
    let top = top_contributors(&ens, DEFAULT_SIGMA, (0.005, 0.02)).unwrap();
    let sum: f64 = top.ranked.iter().map(|r| r.1).sum();
    assert!((sum - top.total).abs() < 1e-12 * top.total.max(1e-300));
    assert_eq!(top.total, a.raw[top.mesh_index]);
    assert!(top.ranked.windows(2).all(|w| w[0].1 >= w[1].1));
    let (lo, hi) = (5, 20);
    assert!((lo..=hi).all(|k| a.raw[k] <= top.total));
    assert!(top_contributors(&ens, DEFAULT_SIGMA, (1.0, 2.0)).is_err());
}

#[test]
fn truncated_trajectories_are_flagged() {
    let mut ens = random_ensemble(3, 10, 5);
    ens.trajectories[1].samples.truncate(6);
    let a = survival_approx(&ens, DEFAULT_SIGMA).unwrap();
    assert_eq!(a.truncated_from, Some(6));
    assert_eq!(row_contributions(&ens, DEFAULT_SIGMA, 8)[1], 0.0);
}

#[test]
fn chord_distance_and_self_overlap() {
    let po = diagonal_po(&Domain::default());
    let on = Vec2::new(1.0, 0.5);
    let off = Vec2::new(1.0, 0.8);
    let v = Vec2::new(10.0, 0.0);
    let ens = ensemble(vec![vec![(on, v); 4], vec![(off, v), (off, v), (on, v), (off, v)]], 0.01);
    assert!(chord_distance(&ens, 0, &po, None) < 1e-12);
    assert!(chord_distance(&ens, 1, &po, None) > 0.1);
    assert_eq!(self_overlap_peak(&ens, 1, DEFAULT_SIGMA, (0.005, 0.03)), Some(1));
}

#[test]
fn csv_has_four_columns() {
    let s = state(&[(1.0, 5.0)]);
    let t = mesh(3, 0.1);
    let mut buf = Vec::new();
    write_survival_csv(&mut buf, &t, &survival_exact(&s, &t), None).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,s_exact,s_approx,s_approx_rescaled");
    assert_eq!(text.lines().nth(1).unwrap(), "0,1,,");
}

fn bump(t: f64, c: f64, w: f64, h: f64) -> f64 {
    h * (-((t - c) / w).powi(2)).exp()
}

#[test]
fn constant_series_has_no_peaks() {
    let t = mesh(100, 0.001);
    assert!(find_peaks(&t, &vec![0.3; 100], 0.02).peaks.is_empty());
}

#[test]
fn peak_refinement_recovers_the_vertex() {
    let t = mesh(200, 0.001);
    let v: Vec<f64> = t.iter().map(|&x| 1.0 - (x - 0.07321).powi(2) * 100.0).collect();
    let r = find_peaks(&t, &v, 0.0);
    assert_eq!(r.peaks.len(), 1);
    assert!((r.peaks[0].t - 0.07321).abs() < 1e-12);
}

#[test]
fn recurrences_and_shoulders_are_labelled() {
    let period = 0.0466;
    let t = mesh(401, 0.00025);
    let v: Vec<f64> = t
        .iter()
        .map(|&x| {
            bump(x, 0.0, 0.003, 1.0)
                + bump(x, 0.046, 0.003, 0.095)
                + bump(x, 0.094, 0.003, 0.035)
                + bump(x, 0.0885, 0.0015, 0.004)
        })
        .collect();
    let r = analyze_peaks(&t, &v, DEFAULT_PROMINENCE, &RecurrenceWindows::new(period));
    let a = r.first(PeakLabel::A).unwrap();
    let c = r.first(PeakLabel::C).unwrap();
    assert!((a.t - 0.046).abs() < 1e-4 && (c.t - 0.094).abs() < 2e-4);
    assert!(r.first(PeakLabel::B).is_none());
    let sh: Vec<&Peak> = r.with_label(PeakLabel::Shoulder).collect();
    assert!(!sh.is_empty() && sh.iter().all(|p| p.t > 0.08 && p.t < c.t), "{}", r.summary("x"));
    assert!(r.peaks.windows(2).all(|w| w[0].t <= w[1].t));
    let text = r.summary("test");
    assert!(text.contains("shoulder") && text.contains(" a "));
}

#[test]
fn two_tails_give_a_and_b() {
    let t = mesh(401, 0.00025);
    let v: Vec<f64> = t.iter().map(|&x| bump(x, 0.0, 0.003, 1.0) + bump(x, 0.042, 0.001, 0.02) + bump(x, 0.052, 0.001, 0.012)).collect();
    let r = analyze_peaks(&t, &v, DEFAULT_PROMINENCE, &RecurrenceWindows::new(0.0466));
    assert!((r.first(PeakLabel::A).unwrap().t - 0.042).abs() < 1e-4);
    assert!((r.first(PeakLabel::B).unwrap().t - 0.052).abs() < 1e-4);
}

#[test]
fn smooth_rise_has_no_shoulder() {
    let t = mesh(401, 0.00025);
    let v: Vec<f64> = t.iter().map(|&x| bump(x, 0.0, 0.003, 1.0) + bump(x, 0.094, 0.004, 0.035)).collect();
    let r = analyze_peaks(&t, &v, DEFAULT_PROMINENCE, &RecurrenceWindows::new(0.0466));
    assert_eq!(r.with_label(PeakLabel::Shoulder).count(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn estimator_is_permutation_invariant(seed in any::<u64>(), shift in 1usize..7) {
        let ens = random_ensemble(7, 5, seed);
        let mut perm = ens.clone();
        perm.trajectories.rotate_left(shift);
        for (i, t) in perm.trajectories.iter_mut().enumerate() {
            t.id = i;
        }
        let a = survival_approx(&ens, DEFAULT_SIGMA).unwrap();
        let b = survival_approx(&perm, DEFAULT_SIGMA).unwrap();
        for (x, y) in a.raw.iter().zip(&b.raw) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn exact_series_is_bounded(ws in proptest::collection::vec((0.01f64..1.0, 0.0f64..5000.0), 1..30)) {
        let total: f64 = ws.iter().map(|w| w.0).sum();
        let s = state(&ws.iter().map(|&(w, e)| (w / total, e)).collect::<Vec<_>>());
        let v = survival_exact(&s, &mesh(64, 0.0017));
        prop_assert!((v[0] - 1.0).abs() < 1e-9);
        prop_assert!(v.iter().all(|&x| (-1e-12..=1.0 + 1e-9).contains(&x)));
    }
}
