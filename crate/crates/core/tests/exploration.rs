use nalgebra::Unit;
use proptest::prelude::*;
use tactile_core::completion::OracleCompleter;
use tactile_core::exploration::*;
use tactile_core::geometry::{coverage_distance, Point3, PointCloud, Pose};
use tactile_core::gripper::GripperModel;
use tactile_core::modes::{InteractionMode, ModeKind};
use tactile_core::primitives::{
    sample_surface, NamedObject, ObjectSuite, PrimitiveShape, ShapeKind, Variation,
};
use tactile_core::Error;

fn ball(r: f64) -> PrimitiveShape {
    PrimitiveShape::sphere(r).unwrap()
}

fn config(kind: ModeKind) -> ExplorationConfig {
    ExplorationConfig {
        mode: InteractionMode::default_for(kind),
        ..Default::default()
    }
}

#[test]
fn information_gain_examples() {
    assert_eq!(information_gain(0.0, 5.0), 0.0);
    assert_eq!(information_gain(5.0, 5.0), 0.5);
    assert_eq!(information_gain(10.0, 5.0), 2.0);
}

proptest! {
    #[test]
    fn information_gain_is_monotone(d1 in 0.0..500.0f64, gap in 1e-6..100.0f64, sigma in 0.01..50.0f64) {
        prop_assert!(information_gain(d1, sigma) < information_gain(d1 + gap, sigma));
    }

    #[test]
    fn information_gain_scales_with_bandwidth(d in 0.0..500.0f64, sigma in 0.01..50.0f64, c in 0.1..10.0f64) {
        let want = information_gain(d, sigma) / (c * c);
        prop_assert!((information_gain(d, c * sigma) - want).abs() <= 1e-12 * want.max(1e-300));
    }
}

#[test]
fn covered_belief_has_nothing_to_explore() {
    let belief = sample_surface(&ball(30.0), 300, 1).unwrap();
    let measured = belief.map_points(|p| p * 1.05);
    let err =
        sample_candidates(&belief, &measured, &ExplorationConfig::default(), 60.0, 2).unwrap_err();
    assert!(matches!(err, Error::NothingToExplore));
}

/// A covered sphere plus a few uncovered points at known distances.
fn sphere_with_gaps() -> (PointCloud, PointCloud) {
    let measured = sample_surface(&ball(30.0), 400, 3).unwrap();
    let extra = vec![
        Point3::new(0.0, 0.0, 80.0),
        Point3::new(36.5, 0.0, 0.0),
        Point3::new(-36.5, 0.0, 0.0),
        Point3::new(0.0, 36.5, 0.0),
        Point3::new(0.0, -36.5, 0.0),
    ];
    let mut pts = measured.points().to_vec();
    pts.extend(extra);
    (PointCloud::new(pts), measured.without_normals())
}

#[test]
fn far_point_dominates_the_draws() {
    let (belief, measured) = sphere_with_gaps();
    let cfg = ExplorationConfig {
        samples: 10_000,
        ..Default::default()
    };
    let cands = sample_candidates(&belief, &measured, &cfg, 60.0, 4).unwrap();
    assert_eq!(cands.len(), 10_000);
    let far = Point3::new(0.0, 0.0, 80.0);
    let d_far = coverage_distance(&far, &measured).unwrap();
    assert!((d_far - 50.0).abs() < 1.0, "{d_far}");
    let gains: Vec<f64> = belief
        .points()
        .iter()
        .map(|p| coverage_distance(p, &measured).unwrap())
        .filter(|&d| d > cfg.coverage_threshold)
        .map(|d| information_gain(d, cfg.sigma))
        .collect();
    let expected = information_gain(d_far, cfg.sigma) / gains.iter().sum::<f64>();
    let share = cands.iter().filter(|c| c.target == far).count() as f64 / 1e4;
    assert!(share > 0.9, "{share}");
    // five binomial standard deviations
    assert!(
        (share - expected).abs() < 5.0 * (expected * (1.0 - expected) / 1e4).sqrt(),
        "{share} vs {expected}"
    );
}

#[test]
fn candidates_face_their_targets() {
    let (belief, measured) = sphere_with_gaps();
    let cands =
        sample_candidates(&belief, &measured, &ExplorationConfig::default(), 60.0, 5).unwrap();
    assert_eq!(cands.len(), 500);
    for c in &cands {
        let to_target = c.target - c.pose.translation();
        assert!(c.pose.axis(2).dot(&to_target) > 0.0);
        assert!((to_target.norm() - 60.0).abs() < 1e-9);
        assert!(c.coverage > 5.0);
        assert_eq!(c.feasible, None);
        assert!(c.pose.orthonormality_error() < 1e-12);
    }
    assert_eq!(
        cands,
        sample_candidates(&belief, &measured, &ExplorationConfig::default(), 60.0, 5).unwrap()
    );
    assert_ne!(
        cands,
        sample_candidates(&belief, &measured, &ExplorationConfig::default(), 60.0, 6).unwrap()
    );
}

fn candidate(pose: Pose, ig: f64, index: usize) -> CandidatePose {
    CandidatePose {
        index,
        target: Point3::zeros(),
        normal: Unit::new_normalize(Point3::z()),
        pose,
        coverage: 0.0,
        information_gain: ig,
        motion_cost: 0.0,
        score: ig,
        feasible: None,
    }
}

fn facing_down(at: Point3) -> Pose {
    Pose::from_z_and_x(&Unit::new_normalize(-Point3::z()), &Point3::x(), at).unwrap()
}

#[test]
fn feasibility_flags_without_dropping() {
    let m = GripperModel::default();
    let shape = ball(30.0);
    let cfg = ExplorationConfig::default();
    let standoff = m.depth() + cfg.clearance;
    let cands = vec![
        candidate(facing_down(Point3::new(0.0, 0.0, 30.0 + standoff)), 1.0, 0),
        candidate(facing_down(Point3::zeros()), 1.0, 1),
        candidate(facing_down(Point3::new(0.0, 0.0, 1000.0)), 1.0, 2),
        candidate(
            facing_down(Point3::new(200.0, 0.0, 30.0 + standoff)),
            1.0,
            3,
        ),
    ];
    let flagged = filter_feasible(&cands, &shape, &cfg, &m);
    assert_eq!(flagged.len(), cands.len());
    let flags: Vec<Option<bool>> = flagged.iter().map(|c| c.feasible).collect();
    // clear sky above the top; inside the object; outside the workspace; missing the object
    assert_eq!(
        flags,
        vec![Some(true), Some(false), Some(false), Some(false)]
    );
    for (a, b) in cands.iter().zip(&flagged) {
        assert_eq!(
            CandidatePose {
                feasible: None,
                ..b.clone()
            },
            *a
        );
    }
}

#[test]
fn motion_cost_examples() {
    let w = [1.0; 6];
    let a = Pose::from_translation(Point3::new(5.0, -2.0, 1.0));
    assert_eq!(motion_cost(&a, &a, &w, 20), 0.0);
    let b = a.translated(&Point3::new(100.0, 0.0, 0.0));
    for steps in [1, 7, 20, 100] {
        assert!((motion_cost(&a, &b, &w, steps) - 100.0).abs() < 1e-9);
    }
    let turned = Pose::from_axis_angle(&Unit::new_normalize(Point3::new(1.0, 2.0, 3.0)), 0.7)
        .translated(&Point3::new(3.0, 1.0, -4.0));
    let base = motion_cost(&a, &turned, &[1.0, 1.0, 1.0, 50.0, 50.0, 50.0], 20);
    let doubled = motion_cost(&a, &turned, &[2.0, 2.0, 2.0, 100.0, 100.0, 100.0], 20);
    assert!((doubled - 2.0 * base).abs() < 1e-9 * base);
    assert!(base > 0.0);
    // splitting a straight path does not change its cost
    let mid = a.translated(&Point3::new(30.0, 0.0, 0.0));
    assert!((motion_cost(&a, &mid, &w, 20) + motion_cost(&mid, &b, &w, 20) - 100.0).abs() < 1e-9);
}

#[test]
fn scoring_examples() {
    let cfg = ExplorationConfig {
        weights: [1.0; 6],
        ..Default::default()
    };
    let here = Pose::identity();
    let cands = vec![
        candidate(Pose::from_translation(Point3::new(2.0, 0.0, 0.0)), 2.0, 0),
        candidate(Pose::from_translation(Point3::new(1.0, 0.0, 0.0)), 2.0, 1),
        candidate(Pose::from_translation(Point3::new(0.5, 0.0, 0.0)), 2.0, 2),
    ];
    let ranked = score_candidates(&cands, &here, &cfg);
    assert_eq!(
        ranked.iter().map(|c| c.index).collect::<Vec<_>>(),
        vec![2, 1, 0]
    );
    assert!((ranked[0].score - 1.5).abs() < 1e-12);
    assert!((ranked[0].motion_cost - 0.5).abs() < 1e-12);

    // equal scores fall back to cost, then to draw order
    let tie = vec![
        CandidatePose {
            score: 1.0,
            motion_cost: 2.0,
            ..candidate(here, 3.0, 0)
        },
        CandidatePose {
            score: 1.0,
            motion_cost: 1.0,
            ..candidate(here, 2.0, 1)
        },
        CandidatePose {
            score: 1.0,
            motion_cost: 1.0,
            ..candidate(here, 2.0, 2)
        },
    ];
    assert_eq!(
        rank_candidates(tie)
            .iter()
            .map(|c| c.index)
            .collect::<Vec<_>>(),
        vec![1, 2, 0]
    );

    // a common offset in cost leaves the order alone
    let ranked_ids: Vec<usize> = ranked.iter().map(|c| c.index).collect();
    let shifted: Vec<CandidatePose> = ranked
        .iter()
        .rev()
        .map(|c| CandidatePose {
            motion_cost: c.motion_cost + 7.0,
            score: c.score - 7.0,
            ..c.clone()
        })
        .collect();
    assert_eq!(
        rank_candidates(shifted)
            .iter()
            .map(|c| c.index)
            .collect::<Vec<_>>(),
        ranked_ids
    );
}

fn named(shape: &PrimitiveShape) -> NamedObject {
    NamedObject {
        name: "probe".into(),
        category: ShapeKind::Ball,
        variation: Variation::Small,
        shape: shape.clone(),
    }
}

#[test]
fn small_sphere_grazing_converges() {
    let m = GripperModel::default();
    let obj = ObjectSuite::table_one().get("ball_small").unwrap().clone();
    let cfg = config(ModeKind::FingerGrazing);
    let r = run_episode(&m, &obj.shape, &cfg, 11).unwrap();
    assert!(r.outcome.converged, "{:?}", r.outcome);
    assert!(r.outcome.interactions <= 20);
    assert!(r.outcome.final_chamfer.unwrap() < 0.08);
    assert_eq!(r.iterations.len(), r.outcome.interactions);
}

#[test]
fn one_interaction_cap() {
    let m = GripperModel::default();
    let cfg = ExplorationConfig {
        max_interactions: 1,
        ..config(ModeKind::GraspReleasing)
    };
    let r = run_episode(&m, &ball(30.0), &cfg, 1).unwrap();
    assert_eq!(r.outcome.interactions, 1);
    assert!(!r.outcome.converged);
    assert_eq!(r.outcome.termination, Termination::InteractionCap);
}

#[test]
fn episodes_are_seeded() {
    let m = GripperModel::default();
    let obj = ObjectSuite::table_one().get("box_small").unwrap().clone();
    let cfg = config(ModeKind::PalmRolling);
    let a = run_episode(&m, &obj.shape, &cfg, 5).unwrap();
    let b = run_episode(&m, &obj.shape, &cfg, 5).unwrap();
    let c = run_episode(&m, &obj.shape, &cfg, 6).unwrap();
    assert_eq!(a.digest(&obj, 0, &cfg), b.digest(&obj, 0, &cfg));
    assert_ne!(a.digest(&obj, 0, &cfg), c.digest(&obj, 0, &cfg));
}

#[test]
fn episode_records_grow_monotonically() {
    let m = GripperModel::default();
    for kind in ModeKind::ALL {
        let obj = ObjectSuite::table_one().get("cylinder_dr").unwrap().clone();
        let r = run_episode(&m, &obj.shape, &config(kind), 3).unwrap();
        let mut last_size = 0;
        let mut last_stamp: Option<u64> = None;
        for it in &r.iterations {
            assert!(it.measured_points >= last_size);
            last_size = it.measured_points;
            for e in &it.events {
                let ts = e.points.timestamps().unwrap();
                assert!(ts.iter().all(|t| *t == ts[0]));
                assert!(last_stamp.is_none_or(|s| ts[0] > s));
                last_stamp = Some(ts[0]);
            }
        }
        assert!(r.outcome.interactions <= 20);
    }
}

#[test]
fn oracle_beliefs_converge_within_the_window() {
    let m = GripperModel::default();
    let cfg = config(ModeKind::GraspReleasing);
    for name in ["ball_big", "box_dr", "cylinder_small"] {
        let obj = ObjectSuite::table_one().get(name).unwrap().clone();
        let oracle = OracleCompleter {
            shape: obj.shape.clone(),
        };
        let r = run_episode_with(&m, &obj.shape, &cfg, &oracle, 9).unwrap();
        assert!(r.outcome.converged);
        assert!(
            r.outcome.interactions <= cfg.window + 1,
            "{name}: {:?}",
            r.outcome
        );
    }
}

#[test]
fn unreachable_workspace_ends_without_a_candidate() {
    let m = GripperModel::default();
    let cfg = ExplorationConfig {
        workspace: Workspace {
            min: [1000.0; 3],
            max: [1001.0; 3],
        },
        ..config(ModeKind::GraspReleasing)
    };
    let r = run_episode(&m, &ball(30.0), &cfg, 2).unwrap();
    assert_eq!(r.outcome.termination, Termination::NoFeasibleCandidate);
    assert!(!r.outcome.converged);
    assert_eq!(r.outcome.interactions, 1);
}

#[test]
fn invalid_configs_are_rejected() {
    let m = GripperModel::default();
    let bad = [
        ExplorationConfig {
            sigma: 0.0,
            ..Default::default()
        },
        ExplorationConfig {
            samples: 0,
            ..Default::default()
        },
        ExplorationConfig {
            max_interactions: 0,
            ..Default::default()
        },
    ];
    for cfg in bad {
        assert!(matches!(
            run_episode(&m, &ball(30.0), &cfg, 1),
            Err(Error::InvalidParameter(_))
        ));
    }
}

#[test]
fn logs_roundtrip_and_check_their_schema() {
    let m = GripperModel::default();
    let shape = ball(30.0);
    let cfg = ExplorationConfig {
        max_interactions: 3,
        ..config(ModeKind::FingerGrazing)
    };
    let r = run_episode(&m, &shape, &cfg, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("episode.jsonl");
    r.write_log(&path, &named(&shape), 2, &cfg).unwrap();
    let (header, back) = read_episode_log(&path).unwrap();
    assert_eq!(header.trial, 2);
    assert_eq!(header.config, cfg);
    assert_eq!(header.object, named(&shape));
    assert_eq!(back.iterations, r.iterations);
    assert_eq!(back.outcome, r.outcome);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), r.iterations.len() + 3);

    r.write_snapshots(&dir.path().join("snap")).unwrap();
    let snaps = std::fs::read_dir(dir.path().join("snap")).unwrap().count();
    assert_eq!(snaps, r.beliefs.iter().flatten().count());

    let old = text.replacen("\"schema_version\":1", "\"schema_version\":0", 1);
    std::fs::write(&path, old).unwrap();
    assert!(matches!(
        read_episode_log(&path),
        Err(Error::SchemaMismatch { .. })
    ));
    let unversioned = text.replacen("\"schema_version\":1,", "", 1);
    std::fs::write(&path, unversioned).unwrap();
    assert!(matches!(
        read_episode_log(&path),
        Err(Error::SchemaMismatch { .. })
    ));
}
