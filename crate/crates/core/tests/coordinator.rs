use fsnav_core::coordinator::{BehaviorNode, Mission, Phase, Status, TreeSpec};
use fsnav_core::harness::config::ExperimentConfig;
use fsnav_core::harness::run::run_on_track_with;
use fsnav_core::sensors::{NoiseConfig, SensorFrame};
use fsnav_core::sim::Simulator;
use fsnav_core::track::{generate_track, TrackSpec};
use fsnav_core::vehicle::ControlCommand;
use proptest::prelude::*;

fn zero_noise() -> ExperimentConfig {
    ExperimentConfig { id: "zero".into(), noise: NoiseConfig::zero(), seeds: vec![5], ..ExperimentConfig::default() }
}

#[test]
fn zero_noise_lap_visits_each_phase_once() {
    let cfg = zero_noise();
    let track = generate_track(&cfg.track_spec(5)).unwrap();
    let mut phases = vec![Phase::Discovery];
    let mut swaps = 0;
    let mut last_path = None;
    let run = run_on_track_with(&cfg, track, 5, |_, m| {
        let st = m.state();
        if *phases.last().unwrap() != st.phase {
            phases.push(st.phase);
        }
        // a swapped path is a whole new plan, never a mix of old and new
        if st.active_path != last_path {
            if let Some(p) = &st.active_path {
                assert!(p.max_step() <= 0.25 + 1e-9, "partial path with step {}", p.max_step());
            }
            swaps += 1;
            last_path = st.active_path.clone();
        }
    })
    .unwrap();
    // planning completes inside the tick that enters it
    assert_eq!(phases, vec![Phase::Discovery, Phase::Racing, Phase::Finished]);
    let changes: Vec<_> = run.events.iter().filter(|e| e.event == "phase").map(|e| e.phase).collect();
    assert_eq!(changes, vec![Phase::Planning, Phase::Racing, Phase::Finished]);
    assert!(swaps >= 2);
    assert_eq!(run.metrics.boundary_crossings, 0);
    // discovery plus one fast lap
    assert_eq!(run.metrics.laps_completed, 2);
}

#[test]
fn empty_frame_holds_command() {
    let cfg = zero_noise();
    let track = generate_track(&cfg.track_spec(5)).unwrap();
    let mut sim = Simulator::new(track.clone(), cfg.vehicle, cfg.noise, cfg.sensors, 5);
    let mut mission = Mission::new(cfg.mission_config(), track.staging_pose()).unwrap();
    let mut cmd = ControlCommand::stop();
    for _ in 0..200 {
        let f = sim.sense();
        cmd = mission.tick(&f).cmd;
        sim.advance(&cmd);
    }
    assert!(cmd.target_speed > 0.0);
    let before = mission.state().clone();
    let empty = SensorFrame { t: sim.time(), tick: sim.tick(), ..SensorFrame::default() };
    assert!(empty.is_empty());
    let out = mission.tick(&empty);
    assert_eq!(out.status, Status::Running);
    assert_eq!(out.cmd, cmd);
    assert_eq!(mission.state(), &before);
}

#[test]
fn identical_streams_give_identical_transitions() {
    let cfg = ExperimentConfig { id: "det".into(), seeds: vec![2], max_time: 40.0, ..ExperimentConfig::default() };
    let track = generate_track(&TrackSpec { seed: 2, ..TrackSpec::default() }).unwrap();
    let mut sim = Simulator::new(track.clone(), cfg.vehicle, cfg.noise, cfg.sensors, 2);
    let frames: Vec<SensorFrame> = (0..3000)
        .map(|_| {
            let f = sim.sense();
            // open-loop drive: the stream must not depend on either mission
            sim.advance(&ControlCommand { target_speed: 4.0, steer: 0.05 });
            f
        })
        .collect();
    let replay = || {
        let mut m = Mission::new(cfg.mission_config(), track.staging_pose()).unwrap();
        let cmds: Vec<ControlCommand> = frames.iter().map(|f| m.tick(f).cmd).collect();
        (m.events().to_vec(), cmds, m.nav_log().to_vec())
    };
    assert_eq!(replay(), replay());
}

#[test]
fn mission_rejects_bad_tree() {
    let cfg = fsnav_core::coordinator::MissionConfig {
        racing_tree: Some(TreeSpec::sequence(vec![TreeSpec::action("teleport")])),
        ..Default::default()
    };
    assert!(Mission::new(cfg, Default::default()).is_err());
}

proptest! {
    #[test]
    fn rate_limiter_fires_at_most_once_per_period(
        period in 0.05f64..3.0,
        steps in prop::collection::vec(0.001f64..0.5, 1..400),
    ) {
        let spec = TreeSpec::rate_limiter(period, TreeSpec::action("work"));
        let mut tree = BehaviorNode::build(&spec, &["work"]).unwrap();
        let mut now = 0.0;
        let mut fired = Vec::new();
        for dt in steps {
            now += dt;
            let mut hit = false;
            let s = tree.tick(now, &mut |_| { hit = true; Status::Success });
            prop_assert!(matches!(s, Status::Success | Status::Failure));
            if hit {
                fired.push(now);
            }
        }
        prop_assert!(!fired.is_empty());
        for w in fired.windows(2) {
            prop_assert!(w[1] - w[0] >= period - 1e-6);
        }
    }

    #[test]
    fn rate_limiter_fires_on_the_first_due_tick(period in 0.1f64..2.0, dt in 0.01f64..0.05) {
        // with a steady clock the child runs again within one tick of being due
        let spec = TreeSpec::rate_limiter(period, TreeSpec::action("work"));
        let mut tree = BehaviorNode::build(&spec, &["work"]).unwrap();
        let mut fired = Vec::new();
        for k in 0..400 {
            let now = k as f64 * dt;
            let mut hit = false;
            tree.tick(now, &mut |_| { hit = true; Status::Success });
            if hit {
                fired.push(now);
            }
        }
        for w in fired.windows(2) {
            prop_assert!(w[1] - w[0] < period + dt + 1e-9);
        }
    }
}
