use joyshare::device::{handle_energy, step_handle, ActuatorParams, JoystickState};
use joyshare::game::{step_world, Course, GameParams, PenguinWorld, Rect, Status};
use joyshare::{Deflection2D, Vec2};
use proptest::prelude::*;

fn command() -> impl Strategy<Value = Deflection2D> {
    (-1.0..=1.0f64, -1.0..=1.0f64).prop_map(|(x, y)| Deflection2D::new(x, y).unwrap())
}

fn game_params() -> impl Strategy<Value = GameParams> {
    (0.5..20.0f64, 0.01..5.0f64).prop_map(|(accel_max, friction)| GameParams {
        accel_max,
        friction,
        dt_game: 0.02,
    })
}

/// A rink large enough that most trajectories keep sliding.
fn open_world(v0: Vec2) -> PenguinWorld {
    let course = Course {
        rink: Rect::new(-1e6, -1e6, 1e6, 1e6),
        goal: Rect::new(2e6, 2e6, 2e6 + 1.0, 2e6 + 1.0),
        start: Vec2::ZERO,
    };
    PenguinWorld {
        velocity: v0,
        ..PenguinWorld::new(&course)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn speed_stays_under_bound(
        p in game_params(),
        v0 in (-20.0..20.0f64, -20.0..20.0f64),
        cmds in prop::collection::vec(command(), 1..300),
    ) {
        let v0 = Vec2::new(v0.0, v0.1);
        let mut w = open_world(v0);
        let decay = 1.0 - p.friction * p.dt_game;
        let terminal = p.accel_max * 2f64.sqrt() / p.friction;
        let mut initial = v0.norm();
        for c in cmds {
            w = step_world(&w, c, &p).unwrap();
            initial *= decay;
            prop_assert!(w.velocity.norm() <= terminal + initial + 1e-9, "{} > {}", w.velocity.norm(), terminal + initial);
        }
    }

    #[test]
    fn zero_input_speed_never_grows(p in game_params(), v0 in (-20.0..20.0f64, -20.0..20.0f64), steps in 1usize..500) {
        let mut w = open_world(Vec2::new(v0.0, v0.1));
        for _ in 0..steps {
            let next = step_world(&w, Deflection2D::CENTER, &p).unwrap();
            prop_assert!(next.velocity.norm() <= w.velocity.norm());
            w = next;
        }
    }

    #[test]
    fn terminal_states_absorb(cmds in prop::collection::vec(command(), 1..600), later in prop::collection::vec(command(), 1..20)) {
        let course = Course::default();
        let p = GameParams::default();
        let mut w = PenguinWorld::new(&course);
        for c in cmds {
            w = step_world(&w, c, &p).unwrap();
            if w.status.is_terminal() {
                break;
            }
        }
        if w.status.is_terminal() {
            for c in later {
                prop_assert_eq!(step_world(&w, c, &p).unwrap(), w);
            }
        } else {
            prop_assert!(w.rink.contains(w.position));
        }
    }

    #[test]
    fn reversal_flips_sign_exactly_when_update_rule_says(
        s in 0.01..20.0f64,
        accel_max in 0.5..50.0f64,
        friction in 0.0..49.9f64,
    ) {
        let p = GameParams { accel_max, friction, dt_game: 0.02 };
        let next = step_world(&open_world(Vec2::new(s, 0.0)), Deflection2D::new(-1.0, 0.0).unwrap(), &p).unwrap();
        let flips = next.velocity.x < 0.0;
        let predicted = accel_max * p.dt_game > s * (1.0 - friction * p.dt_game);
        // skip the knife edge where rounding decides
        let margin = (accel_max * p.dt_game - s * (1.0 - friction * p.dt_game)).abs();
        if margin > 1e-9 {
            prop_assert_eq!(flips, predicted);
        }
    }

    #[test]
    fn trajectories_are_bitwise_deterministic(cmds in prop::collection::vec(command(), 1..200)) {
        let p = GameParams::default();
        let run = || {
            let mut w = PenguinWorld::new(&Course::default());
            cmds.iter().map(|c| { w = step_world(&w, *c, &p).unwrap(); w }).collect::<Vec<_>>()
        };
        let a = run();
        let b = run();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.position.x.to_bits(), y.position.x.to_bits());
            prop_assert_eq!(x.velocity.y.to_bits(), y.velocity.y.to_bits());
        }
    }

    #[test]
    fn free_handle_energy_never_increases(
        p0 in (-1.0..=1.0f64, -1.0..=1.0f64),
        v0 in (-10.0..10.0f64, -10.0..10.0f64),
        damping in 0.2..3.0f64,
        stiffness in 0.5..5.0f64,
        inertia in 0.5..2.0f64,
        steps in 1usize..400,
    ) {
        let params = ActuatorParams { damping, centering_stiffness: stiffness, handle_inertia: inertia, ..Default::default() };
        let mut s = JoystickState {
            position: Deflection2D::new(p0.0, p0.1).unwrap(),
            velocity: Vec2::new(v0.0, v0.1),
            applied_current: Vec2::ZERO,
        };
        for _ in 0..steps {
            let next = step_handle(&s, Vec2::ZERO, Vec2::ZERO, 0.005, &params).unwrap();
            prop_assert!(handle_energy(&next, &params) <= handle_energy(&s, &params) + 1e-9);
            s = next;
        }
    }
}

#[test]
fn default_course_reaches_goal_on_a_straight_dash_and_falls_when_overshooting() {
    let course = Course::default();
    let p = GameParams::default();
    let mut w = PenguinWorld::new(&course);
    let mut ticks = 0;
    while w.status == Status::Sliding && ticks < 1000 {
        // full throttle for 1 s, then coast
        let c = if ticks < 50 {
            Deflection2D::new(1.0, 0.0)
        } else {
            Deflection2D::new(0.0, 0.0)
        };
        w = step_world(&w, c.unwrap(), &p).unwrap();
        ticks += 1;
    }
    assert_eq!(w.status, Status::Goal);

    let mut w = PenguinWorld::new(&course);
    while w.status == Status::Sliding {
        w = step_world(&w, Deflection2D::new(1.0, 0.0).unwrap(), &p).unwrap();
        if w.position.x > 7.0 {
            break;
        }
    }
    assert_eq!(w.status, Status::Goal, "the goal sits in the flight path");
    let mut w = PenguinWorld::new(&course);
    while w.status == Status::Sliding {
        w = step_world(&w, Deflection2D::new(1.0, 0.6).unwrap(), &p).unwrap();
    }
    assert_eq!(w.status, Status::Fell);
}
