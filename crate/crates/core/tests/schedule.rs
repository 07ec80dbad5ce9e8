mod common;

use common::rel_err;
use diffuseslide::schedule::{reinjection_std, InjectionPoint, SigmaSchedule};

fn golden() -> Vec<f64> {
    include_str!("data/schedule_25_karras.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let (idx, v) = l.split_once(' ').unwrap();
            assert_eq!(idx.parse::<usize>().unwrap(), i);
            v.trim().parse().unwrap()
        })
        .collect()
}

#[test]
fn default_schedule_matches_high_precision_table() {
    let s = SigmaSchedule::default_svd();
    let want = golden();
    assert_eq!(s.sigmas().len(), 26);
    assert_eq!(want.len(), 26);
    for (i, (&got, &w)) in s.sigmas().iter().zip(&want).enumerate() {
        if w == 0.0 {
            assert_eq!(got, 0.0);
        } else {
            assert!(rel_err(got, w) < 1e-12, "sigma[{i}] = {got:e}, want {w:e}");
        }
    }
}

#[test]
fn injection_level_of_the_four_x_setting() {
    let s = SigmaSchedule::default_svd();
    let want = golden();
    assert_eq!(s.level_at(8).unwrap(), s.sigmas()[17]);
    assert!(rel_err(s.level_at(8).unwrap(), want[17]) < 1e-12);
    assert!(rel_err(s.level_at(7).unwrap(), want[18]) < 1e-12);
    assert_eq!(s.level_at(0).unwrap(), 0.0);
    assert_eq!(s.level_at(25).unwrap(), 700.0);
    assert!(s.level_at(26).is_err());
}

#[test]
fn reinjection_restores_the_upper_level() {
    let s = SigmaSchedule::default_svd();
    for r in 1..=s.n_steps() {
        let (hi, lo) = (s.level_at(r).unwrap(), s.level_at(r - 1).unwrap());
        let lift = s.reinjection_std(r).unwrap();
        assert!(rel_err(lift * lift + lo * lo, hi * hi) < 1e-12, "r={r}");
    }
    assert!(reinjection_std(1.0, 1.0).is_err());
    assert!(reinjection_std(1.0, 2.0).is_err());
    assert_eq!(reinjection_std(5.0, 3.0).unwrap(), 4.0);
}

#[test]
fn round_count_formula() {
    assert_eq!(InjectionPoint::new(8, 3, 5, 25).unwrap().expected_rounds(), 33);
    assert_eq!(InjectionPoint::new(4, 4, 5, 25).unwrap().expected_rounds(), 4);
    assert_eq!(InjectionPoint::new(8, 0, 0, 25).unwrap().expected_rounds(), 8);
    assert!(InjectionPoint::new(0, 0, 5, 25).is_err());
    assert!(InjectionPoint::new(26, 3, 5, 25).is_err());
}
