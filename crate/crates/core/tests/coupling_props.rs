use joyshare::coupling::{coupling_forces, disagreement_index, unclipped_forces, CouplingGains};
use joyshare::{Deflection2D, Vec2};
use proptest::prelude::*;

fn deflection() -> impl Strategy<Value = Deflection2D> {
    (-1.0..=1.0f64, -1.0..=1.0f64).prop_map(|(x, y)| Deflection2D::new(x, y).unwrap())
}

fn rate() -> impl Strategy<Value = Vec2> {
    (-5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, y)| Vec2::new(x, y))
}

fn gains() -> impl Strategy<Value = CouplingGains> {
    (0.0..5.0f64, 0.0..1.0f64, 0.001..1.0f64).prop_map(|(k_p, k_d, f_max)| CouplingGains {
        k_p,
        k_d,
        f_max,
    })
}

fn players() -> impl Strategy<Value = (Vec<Deflection2D>, Vec<Vec2>)> {
    (2usize..=4).prop_flat_map(|n| {
        (
            prop::collection::vec(deflection(), n),
            prop::collection::vec(rate(), n),
        )
    })
}

/// f_i = k·N/(N−1)·(mean of all − x_i), the same law written around the global mean.
fn oracle(positions: &[Deflection2D], velocities: &[Vec2], g: &CouplingGains) -> Vec<Vec2> {
    let n = positions.len() as f64;
    let mean_p = positions.iter().fold(Vec2::ZERO, |a, p| a + p.as_vec()) / n;
    let mean_v = velocities.iter().fold(Vec2::ZERO, |a, v| a + *v) / n;
    let scale = n / (n - 1.0);
    positions
        .iter()
        .zip(velocities)
        .map(|(p, v)| ((mean_p - p.as_vec()) * g.k_p + (mean_v - *v) * g.k_d) * scale)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn matches_global_mean_form((p, v) in players(), g in gains()) {
        let got = unclipped_forces(&p, &v, &g).unwrap();
        for (a, b) in got.iter().zip(oracle(&p, &v, &g)) {
            prop_assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn consensus_null(p in deflection(), v in rate(), n in 1usize..=4, g in gains()) {
        let f = coupling_forces(&vec![p; n], &vec![v; n], &g).unwrap();
        prop_assert!(f.forces().iter().all(|f| *f == Vec2::ZERO));
    }

    #[test]
    fn unclipped_net_force_is_zero((p, v) in players(), g in gains()) {
        let g = CouplingGains { f_max: f64::INFINITY, ..g };
        let f = coupling_forces(&p, &v, &g).unwrap();
        let net = f.forces().iter().fold(Vec2::ZERO, |a, f| a + *f);
        prop_assert!(net.x.abs() < 1e-12 && net.y.abs() < 1e-12, "{net:?}");
    }

    #[test]
    fn two_player_antisymmetry(p in prop::collection::vec(deflection(), 2), v in prop::collection::vec(rate(), 2), g in gains()) {
        let f = coupling_forces(&p, &v, &g).unwrap();
        prop_assert_eq!(f.forces()[0], -f.forces()[1]);
    }

    #[test]
    fn monotone_in_separation(
        p1 in deflection(),
        angle in 0.0..std::f64::consts::TAU,
        d in 0.0..0.9f64,
        extra in 1e-6..0.5f64,
        k_p in 0.01..5.0f64,
    ) {
        let g = CouplingGains { k_p, k_d: 0.0, f_max: f64::INFINITY };
        let dir = Vec2::new(angle.cos(), angle.sin());
        let force_at = |dist: f64| {
            let (x, y) = (p1.x() + dir.x * dist, p1.y() + dir.y * dist);
            (x.abs() <= 1.0 && y.abs() <= 1.0).then(|| Deflection2D::new(x, y).unwrap()).map(|p2| unclipped_forces(&[p1, p2], &[Vec2::ZERO; 2], &g).unwrap()[0].norm())
        };
        if let (Some(near), Some(far)) = (force_at(d), force_at(d + extra)) {
            prop_assert!(near < far, "{near} !< {far}");
        }
    }

    #[test]
    fn haptics_off_is_neutral((p, v) in players(), g in gains()) {
        let f = coupling_forces(&p, &v, &g.off()).unwrap();
        prop_assert!(f.forces().iter().all(|f| *f == Vec2::ZERO));
    }

    #[test]
    fn clip_bound((p, v) in players(), g in gains()) {
        let f = coupling_forces(&p, &v, &g).unwrap();
        prop_assert_eq!(f.len(), p.len());
        for f in f.forces() {
            prop_assert!(f.x.abs() <= g.f_max && f.y.abs() <= g.f_max);
        }
    }

    #[test]
    fn disagreement_matches_pairwise_loop(p in prop::collection::vec(deflection(), 2..=4)) {
        let mut sum = 0.0;
        let mut pairs = 0.0;
        for (i, a) in p.iter().enumerate() {
            for b in &p[..i] {
                sum += ((a.x() - b.x()).powi(2) + (a.y() - b.y()).powi(2)).sqrt();
                pairs += 1.0;
            }
        }
        let got = disagreement_index(&p).unwrap();
        prop_assert!((got - sum / pairs).abs() < 1e-12);
        prop_assert!((0.0..=2.0 * 2f64.sqrt() + 1e-12).contains(&got));
    }
}

#[test]
fn opposite_corners_reach_the_maximum_disagreement() {
    let p = [
        Deflection2D::new(1.0, 1.0).unwrap(),
        Deflection2D::new(-1.0, -1.0).unwrap(),
    ];
    assert!((disagreement_index(&p).unwrap() - 8f64.sqrt()).abs() < 1e-15);
}
