use joyshare::agents::{AgentParams, PolicyKind};
use joyshare::osc::{decode_osc, encode_osc};
use joyshare::schema::{ControlMessage, PlayerId};
use joyshare::session::{
    records_to_csv, run_scripted, AgentSpec, Phase, RunConfig, Session, SessionConfig,
    SessionError, StepOutcome,
};
use joyshare::transport::{memory_link, LatencyModel, MemoryEndpoint, SimTime, Transport};
use joyshare::{Deflection2D, Vec2};

/// The far end of a remote slot, standing in for a controller.
struct FakeController {
    player: PlayerId,
    link: MemoryEndpoint,
}

impl FakeController {
    fn join(session: &mut Session, slot: i64) -> Self {
        let (server, client) = memory_link();
        let player = session.handle_join(slot, Box::new(server)).unwrap();
        Self {
            player,
            link: client,
        }
    }

    fn stick(&mut self, x: f32, y: f32) {
        let msg = ControlMessage::Stick {
            player: self.player,
            x,
            y,
        };
        self.link
            .send(encode_osc(&msg.to_osc()).unwrap(), SimTime(0))
            .unwrap();
    }

    fn drain(&mut self) -> Vec<ControlMessage> {
        let mut out = Vec::new();
        while let Some(b) = self.link.recv(SimTime(0)).unwrap() {
            out.push(ControlMessage::try_from(&decode_osc(&b).unwrap()).unwrap());
        }
        out
    }

    fn forces(&mut self) -> Vec<(f32, f32)> {
        self.drain()
            .into_iter()
            .filter_map(|m| match m {
                ControlMessage::Force { fx, fy, .. } => Some((fx, fy)),
                _ => None,
            })
            .collect()
    }
}

fn agent(slot: u8, policy: PolicyKind) -> AgentSpec {
    AgentSpec {
        slot,
        policy,
        params: AgentParams::default(),
    }
}

fn stubborn(x: f64, y: f64) -> PolicyKind {
    PolicyKind::Stubborn {
        direction: Vec2::new(x, y),
    }
}

#[test]
fn slots_and_pausing() {
    let mut s = Session::new(SessionConfig {
        player_count: 4,
        ..Default::default()
    })
    .unwrap();
    let _a = FakeController::join(&mut s, 1);
    assert!(!s.is_runnable());
    assert_eq!(s.step().unwrap(), StepOutcome::Paused);
    let _b = FakeController::join(&mut s, 2);
    assert!(s.is_runnable());
    let _c = FakeController::join(&mut s, 3);
    let _d = FakeController::join(&mut s, 4);
    let (extra, _) = memory_link();
    assert!(matches!(
        s.handle_join(5, Box::new(extra)),
        Err(SessionError::SlotOutOfRange { slot: 5, .. })
    ));
    let (dup, _) = memory_link();
    assert!(matches!(
        s.handle_join(2, Box::new(dup)),
        Err(SessionError::SlotOccupied(_))
    ));
    assert!(matches!(s.step().unwrap(), StepOutcome::Advanced { .. }));

    s.handle_leave(2).unwrap();
    s.handle_leave(3).unwrap();
    s.handle_leave(4).unwrap();
    let ticks = s.device_ticks();
    assert_eq!(s.step().unwrap(), StepOutcome::Paused);
    assert_eq!(s.device_ticks(), ticks, "a paused world does not advance");
    assert!(matches!(s.handle_leave(2), Err(SessionError::SlotEmpty(_))));
}

#[test]
fn player_count_bounds_the_slots() {
    for n in [0u8, 1, 5] {
        assert!(
            Session::new(SessionConfig {
                player_count: n,
                ..Default::default()
            })
            .is_err(),
            "{n}"
        );
    }
    let mut s = Session::new(SessionConfig::default()).unwrap();
    let (link, _) = memory_link();
    assert!(matches!(
        s.handle_join(3, Box::new(link)),
        Err(SessionError::SlotOutOfRange { slot: 3, max: 2 })
    ));
}

#[test]
fn tick_rate_contract() {
    let run = RunConfig {
        session: SessionConfig {
            scenario: vec![Phase::timed(true, 2.0)],
            ..Default::default()
        },
        agents: vec![agent(1, stubborn(1.0, 0.0)), agent(2, stubborn(0.0, 1.0))],
        max_duration_s: 10.0,
    };
    let mut s = Session::from_run_config(&run).unwrap();
    let mut since = 0;
    let mut gaps = Vec::new();
    loop {
        match s.step().unwrap() {
            StepOutcome::Advanced { game_tick } => {
                since += 1;
                if game_tick {
                    gaps.push(since);
                    since = 0;
                }
            }
            StepOutcome::Finished => break,
            StepOutcome::Paused => unreachable!(),
        }
    }
    assert_eq!(gaps.len(), 100);
    assert!(gaps.iter().all(|&g| g == 200 / 50));
    let ticks: Vec<u64> = s.records().iter().map(|r| r.tick).collect();
    assert!(ticks.windows(2).all(|w| w[1] == w[0] + 1));
}

#[test]
fn opposed_players_feel_saturated_forces_and_none_when_haptics_off() {
    let mut s = Session::new(SessionConfig::exhibition(2, 0.5)).unwrap();
    let mut a = FakeController::join(&mut s, 1);
    let mut b = FakeController::join(&mut s, 2);
    let mut phases = [Vec::new(), Vec::new()];
    for _ in 0..400 {
        a.stick(1.0, 0.0);
        b.stick(-1.0, 0.0);
        let phase = s.phase();
        s.step().unwrap();
        phases[phase.min(1)].extend(a.forces().into_iter().map(|f| (1, f)));
        phases[phase.min(1)].extend(b.forces().into_iter().map(|f| (2, f)));
    }
    assert!(!phases[0].is_empty() && phases[0].iter().all(|(_, f)| *f == (0.0, 0.0)));
    // after the toggle lands, the pair sits at ±current_max
    let on = &phases[1][2..];
    assert!(
        on.iter()
            .all(|(p, f)| *f == if *p == 1 { (-3.0, 0.0) } else { (3.0, 0.0) }),
        "{:?}",
        &on[..4]
    );
}

#[test]
fn identical_sticks_feel_nothing() {
    let mut s = Session::new(SessionConfig::default()).unwrap();
    let mut a = FakeController::join(&mut s, 1);
    let mut b = FakeController::join(&mut s, 2);
    for _ in 0..20 {
        a.stick(0.4, -0.7);
        b.stick(0.4, -0.7);
        let cmds = s.device_tick().unwrap();
        assert!(cmds.iter().all(|c| c.current == Vec2::ZERO));
    }
}

#[test]
fn haptic_toggle_lands_on_the_next_device_tick() {
    let mut s = Session::new(SessionConfig {
        haptic_enabled: false,
        ..Default::default()
    })
    .unwrap();
    let mut a = FakeController::join(&mut s, 1);
    let mut b = FakeController::join(&mut s, 2);
    a.stick(1.0, 0.0);
    b.stick(-1.0, 0.0);
    assert!(s
        .device_tick()
        .unwrap()
        .iter()
        .all(|c| c.current == Vec2::ZERO));
    s.set_haptic_mode(true);
    assert!(s.haptics_enabled(), "reports the requested mode");
    let cmds = s.device_tick().unwrap();
    assert_eq!(cmds[0].current, Vec2::new(-3.0, 0.0));
    s.set_haptic_mode(true);
    assert_eq!(s.device_tick().unwrap(), cmds);
}

#[test]
fn four_equal_sticks_aggregate_to_the_same_command() {
    let mut s = Session::new(SessionConfig {
        player_count: 4,
        ..Default::default()
    })
    .unwrap();
    let mut cs: Vec<FakeController> = (1..=4).map(|i| FakeController::join(&mut s, i)).collect();
    for _ in 0..4 {
        for c in &mut cs {
            c.stick(1.0, 0.0);
        }
        s.step().unwrap();
    }
    let r = s.records().last().unwrap();
    assert_eq!(r.command, Deflection2D::new(1.0, 0.0).unwrap());
    assert_eq!(r.disagreement, 0.0);
}

#[test]
fn resting_penguin_broadcast_changes_only_elapsed() {
    let mut s = Session::new(SessionConfig::default()).unwrap();
    let mut a = FakeController::join(&mut s, 1);
    let _b = FakeController::join(&mut s, 2);
    let states = |c: &mut FakeController| {
        c.drain()
            .into_iter()
            .filter_map(|m| match m {
                ControlMessage::GameState(g) => Some(g),
                _ => None,
            })
            .collect::<Vec<_>>()
    };
    s.run(3).unwrap();
    let seen = states(&mut a);
    assert_eq!(seen.len(), 3);
    assert!(seen.windows(2).all(|w| w[0] == w[1]));
    let recs = s.records();
    assert!(recs[2].world.elapsed > recs[1].world.elapsed);
    assert_eq!(recs[2].world.position, recs[0].world.position);
}

#[test]
fn silent_stick_recenters_after_the_stale_window() {
    let mut s = Session::new(SessionConfig {
        haptic_enabled: false,
        ..Default::default()
    })
    .unwrap();
    let mut a = FakeController::join(&mut s, 1);
    let mut b = FakeController::join(&mut s, 2);
    let p1 = PlayerId::new(1).unwrap();
    a.stick(1.0, 0.0);
    for _ in 0..100 {
        b.stick(0.0, 0.0);
        s.step().unwrap();
        assert_eq!(
            s.reported_deflection(p1).unwrap().x(),
            1.0,
            "held within 500 ms"
        );
    }
    for _ in 0..400 {
        b.stick(0.0, 0.0);
        s.step().unwrap();
    }
    let x = s.reported_deflection(p1).unwrap().x();
    assert!(x < 0.5, "x = {x}");
}

#[test]
fn step_input_reaches_the_partner_no_sooner_than_the_delay() {
    let config = SessionConfig {
        latency: LatencyModel {
            delay_ms: 50.0,
            jitter_ms: 0.0,
        },
        ..Default::default()
    };
    let mut s = Session::new(config).unwrap();
    let mut a = FakeController::join(&mut s, 1);
    let mut b = FakeController::join(&mut s, 2);
    for _ in 0..40 {
        a.stick(0.0, 0.0);
        b.stick(0.0, 0.0);
        s.step().unwrap();
        assert!(b.forces().iter().all(|f| *f == (0.0, 0.0)));
    }
    let t0 = s.now();
    let mut first = None;
    for _ in 0..200 {
        a.stick(1.0, 0.0);
        b.stick(0.0, 0.0);
        s.step().unwrap();
        if first.is_none() && b.forces().iter().any(|f| f.0 > 0.0) {
            first = Some(s.now());
        }
    }
    let first = first.expect("the step never arrived");
    let lag_ms = (first.0 - t0.0) as f64 / 1000.0;
    assert!(lag_ms >= 50.0, "lag {lag_ms} ms");
}

fn four_player_run(seed: u64) -> RunConfig {
    let goal = |x, y| PolicyKind::Noisy {
        target: Vec2::new(x, y),
        noise_scale: 0.15,
    };
    RunConfig {
        session: SessionConfig {
            player_count: 4,
            seed,
            latency: LatencyModel {
                delay_ms: 30.0,
                jitter_ms: 10.0,
            },
            scenario: vec![Phase::timed(true, 5.0)],
            ..Default::default()
        },
        agents: vec![
            agent(1, goal(7.0, 0.0)),
            agent(2, goal(7.0, 0.5)),
            agent(3, PolicyKind::Braker),
            agent(4, stubborn(0.0, 1.0)),
        ],
        max_duration_s: 10.0,
    }
}

#[test]
fn scripted_sessions_are_reproducible() {
    let a = records_to_csv(&run_scripted(&four_player_run(11)).unwrap());
    let b = records_to_csv(&run_scripted(&four_player_run(11)).unwrap());
    assert_eq!(a, b);
    let c = records_to_csv(&run_scripted(&four_player_run(12)).unwrap());
    assert_ne!(a, c, "the seed reaches noise and latency");
}

#[test]
fn exhibition_resets_the_world_between_phases() {
    let run = RunConfig {
        session: SessionConfig::exhibition(2, 1.0),
        agents: vec![agent(1, stubborn(1.0, 0.0)), agent(2, stubborn(1.0, 0.0))],
        max_duration_s: 30.0,
    };
    let recs = run_scripted(&run).unwrap();
    let first_on = recs.iter().position(|r| r.phase == 1).unwrap();
    assert_eq!(first_on, 50);
    assert!(recs[..first_on].iter().all(|r| !r.haptics));
    assert!(
        recs[first_on].world.position.x < recs[first_on - 1].world.position.x,
        "respawned at the start"
    );
    assert!(recs.last().unwrap().world.status.is_terminal());
}
