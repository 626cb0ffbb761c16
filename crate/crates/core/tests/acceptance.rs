//! Acceptance run: one PASS/FAIL line per criterion, then the grid table.
//!
//! The exit status is nonzero only when the run itself breaks. Set
//! `ACCEPTANCE_STRICT=1` to also fail on any FAIL line.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactile_core::completion::{Completer, CompleterInput, ReferenceCompleter};
use tactile_core::datagen::{haar_rotation, truncate_points};
use tactile_core::experiment::{report_table, run_grid, GridConfig, Report};
use tactile_core::exploration::{information_gain, read_episode_log, run_episode, ExplorationConfig};
use tactile_core::geometry::{
    chamfer_distance, denormalize_cloud, normalize_cloud, normalized_chamfer, Point3, PointCloud, Pose,
    SpatialIndex,
};
use tactile_core::gripper::GripperModel;
use tactile_core::modes::{InteractionMode, ModeKind};
use tactile_core::primitives::{sample_surface, ObjectSuite, PrimitiveShape, ShapeKind};

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_point(rng: &mut ChaCha8Rng, scale: f64) -> Point3 {
    Point3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn norm_sigma(c: &PointCloud) -> (Point3, f64) {
    let n = c.len() as f64;
    let m: Point3 = c.points().iter().sum::<Point3>() / n;
    let r: Vec<f64> = c.points().iter().map(|p| (p - m).norm()).collect();
    let mr = r.iter().sum::<f64>() / n;
    (m, (r.iter().map(|x| (x - mr).powi(2)).sum::<f64>() / n).sqrt())
}

fn max_gap(a: &PointCloud, b: &PointCloud) -> f64 {
    a.points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| (p - q).amax())
        .fold(0.0, f64::max)
}

fn normalization_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 1000 {
        let n = rng.random_range(3..300);
        let scale = 10f64.powf(rng.random_range(-1.0..3.0));
        let offset = random_point(&mut rng, 500.0);
        let cloud = PointCloud::new((0..n).map(|_| random_point(&mut rng, scale) + offset).collect());
        let lambda = rng.random_range(0.25..4.0);
        let Ok((norm, params)) = normalize_cloud(&cloud, lambda) else {
            continue;
        };
        let (mean, sigma) = norm_sigma(&norm);
        worst = worst.max(mean.amax()).max((sigma - 1.0 / lambda).abs());
        let (again, _) = normalize_cloud(&norm, lambda).expect("normalized clouds stay normalizable");
        worst = worst.max(max_gap(&again, &norm));
        worst = worst.max(max_gap(&denormalize_cloud(&norm, &params), &cloud));
        done += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-6 && secs < 5.0,
        format!("1000 clouds, worst deviation {worst:.1e}, {secs:.2} s"),
    )
}

fn information_gain_suite() -> Outcome {
    let start = Instant::now();
    let mut exact = true;
    let mut monotone = true;
    let mut scaling: f64 = 0.0;
    for i in 0..10 {
        let sigma = 0.5 + i as f64;
        let grid: Vec<f64> = (0..10).map(|j| j as f64 * 3.7).collect();
        for (j, &d) in grid.iter().enumerate() {
            exact &= information_gain(d, sigma) == d * d / (2.0 * sigma * sigma);
            if j > 0 {
                monotone &= information_gain(d, sigma) > information_gain(grid[j - 1], sigma);
            }
            for c in [0.5, 2.0, 3.0] {
                let want = information_gain(d, sigma) / (c * c);
                let got = information_gain(d, c * sigma);
                scaling = scaling.max((got - want).abs() / want.max(f64::MIN_POSITIVE));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        exact && monotone && scaling < 1e-12 && secs < 1.0,
        format!("100 grid points exact={exact}, monotone={monotone}, scaling error {scaling:.1e}"),
    )
}

fn index_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<Point3> = (0..5000).map(|_| random_point(&mut rng, 100.0)).collect();
    let index = SpatialIndex::new(&pts);
    let queries: Vec<Point3> = (0..1000).map(|_| random_point(&mut rng, 150.0)).collect();
    let mut mismatches = 0;
    for q in &queries {
        let brute = pts
            .iter()
            .enumerate()
            .map(|(i, p)| ((q - p).norm(), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(d, i)| (i, d));
        if index.nearest(q) != brute {
            mismatches += 1;
        }
    }
    let a = PointCloud::new(pts.clone());
    let b = PointCloud::new(queries.clone());
    let brute_directed = |from: &[Point3], to: &[Point3]| {
        from.iter()
            .map(|p| to.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / from.len() as f64
    };
    let brute_chamfer = 0.5 * (brute_directed(&queries, &pts) + brute_directed(&pts, &queries));
    let chamfer_ok = chamfer_distance(&b, &a).unwrap() == brute_chamfer;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        mismatches == 0 && chamfer_ok && secs < 30.0,
        format!("1000 queries over 5000 points, {mismatches} mismatches, chamfer exact={chamfer_ok}, {secs:.2} s"),
    )
}

fn contact_validity(grid_logs: &Path) -> Outcome {
    let mut points = 0usize;
    let mut bad_sdf = 0usize;
    let mut bad_normal = 0usize;
    let mut bad_in_edge_zone = 0usize;
    let mut worst_sdf: f64 = 0.0;
    for entry in std::fs::read_dir(grid_logs).unwrap() {
        let (header, record) = read_episode_log(&entry.unwrap().path()).unwrap();
        let shape = &header.object.shape;
        for it in &record.iterations {
            for e in &it.events {
                let normals = e.points.normals().expect("contacts carry normals");
                for (p, n) in e.points.points().iter().zip(normals) {
                    points += 1;
                    let sdf = shape.signed_distance(p).abs();
                    worst_sdf = worst_sdf.max(sdf);
                    if sdf > 1e-6 {
                        bad_sdf += 1;
                    }
                    let aligned = shape.fd_gradient(p, 1e-3).is_some_and(|g| n.dot(&g) > 0.99);
                    if !aligned {
                        bad_normal += 1;
                        bad_in_edge_zone += usize::from(shape.in_edge_zone(p));
                    }
                }
            }
        }
    }
    verdict(
        points > 0 && bad_sdf == 0 && bad_normal == 0,
        format!(
            "{points} contact points, {bad_sdf} off-surface (worst {worst_sdf:.1e} mm), \
             {bad_normal} normals off the finite-difference gradient ({bad_in_edge_zone} of them on edges or rims)"
        ),
    )
}

fn truncation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..500 {
        let m = rng.random_range(1..200);
        let pts: Vec<Point3> = (0..m).map(|_| random_point(&mut rng, 50.0)).collect();
        let mut stamps: Vec<u64> = (0..m).map(|_| rng.random_range(0..20)).collect();
        stamps.sort_unstable();
        let cloud = PointCloud::new(pts.clone()).with_timestamps(stamps.clone()).unwrap();
        let fraction = rng.random_range(0.0..1.0);
        let got = truncate_points(&cloud, fraction).unwrap();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| stamps[a].cmp(&stamps[b]).then(a.cmp(&b)));
        let drop = (fraction * m as f64).floor() as usize;
        let kept: HashSet<usize> = order[..m - drop].iter().copied().collect();
        let want: Vec<usize> = (0..m).filter(|i| kept.contains(i)).collect();
        let want_pts: Vec<Point3> = want.iter().map(|&i| pts[i]).collect();
        let want_stamps: Vec<u64> = want.iter().map(|&i| stamps[i]).collect();
        if got.points() != want_pts.as_slice() || got.timestamps() != Some(want_stamps.as_slice()) {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("500 clouds, {mismatches} mismatches"))
}

fn patch(shape: &PrimitiveShape, n: usize, seed: u64, dir: Point3, deg: f64) -> PointCloud {
    let dense = sample_surface(shape, 40 * n, seed).unwrap();
    let cos = deg.to_radians().cos();
    let d = dir.normalize();
    let keep: Vec<usize> = (0..dense.len())
        .filter(|&i| dense.normals().unwrap()[i].dot(&d) >= cos)
        .take(n)
        .collect();
    dense.select(&keep)
}

fn bits(c: &PointCloud) -> HashSet<[u64; 3]> {
    c.points()
        .iter()
        .map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])
        .collect()
}

fn completer_contracts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let completer = ReferenceCompleter::default();
    let mut echoed = 0;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    while cases < 50 {
        let shape = match cases % 3 {
            0 => PrimitiveShape::sphere(rng.random_range(20.0..50.0)),
            1 => PrimitiveShape::cuboid(
                rng.random_range(40.0..90.0),
                rng.random_range(40.0..90.0),
                rng.random_range(40.0..90.0),
            ),
            _ => PrimitiveShape::cylinder(
                rng.random_range(20.0..40.0),
                rng.random_range(20.0..40.0),
                rng.random_range(60.0..120.0),
            ),
        }
        .unwrap()
        .with_pose(Pose::from_parts(haar_rotation(&mut rng), Point3::zeros()));
        let dir = random_point(&mut rng, 1.0);
        let cloud = patch(&shape, 150, rng.random(), dir, 75.0);
        if cloud.len() < 150 {
            continue;
        }
        cases += 1;
        let complete = |c: &PointCloud| {
            let input = CompleterInput::new(c, 1.0).unwrap();
            completer.complete(&input, 2048, 3).unwrap().cloud
        };
        let base = complete(&cloud);
        let motion = Pose::from_parts(haar_rotation(&mut rng), random_point(&mut rng, 100.0));
        let s = rng.random_range(0.5..2.0);
        let moved = cloud.transform(&motion).map_points(|p| p * s);
        let got = complete(&moved);
        for (input, output) in [(&cloud, &base), (&moved, &got)] {
            if !bits(input).is_disjoint(&bits(output)) {
                echoed += 1;
            }
        }
        let want = base.transform(&motion).map_points(|p| p * s);
        worst = worst.max(normalized_chamfer(&got, &want, &want, 1.0).unwrap());
    }
    verdict(
        echoed == 0 && worst < 0.02,
        format!("50 cases, {echoed} calls echoing input, worst equivariance chamfer {worst:.4}"),
    )
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let model = GripperModel::default();
    let obj = ObjectSuite::table_one().get("cylinder_dr").unwrap().clone();
    let cfg = ExplorationConfig {
        mode: InteractionMode::default_for(ModeKind::PalmRolling),
        ..Default::default()
    };
    let one = run_episode(&model, &obj.shape, &cfg, 21).unwrap().to_log(&obj, 0, &cfg);
    let two = run_episode(&model, &obj.shape, &cfg, 21).unwrap().to_log(&obj, 0, &cfg);
    let mut differing = Vec::new();
    let mut names: Vec<_> = std::fs::read_dir(a.join("logs"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in &names {
        let x = std::fs::read(a.join("logs").join(name)).unwrap();
        let y = std::fs::read(b.join("logs").join(name)).ok();
        if Some(x) != y {
            differing.push(name.to_string_lossy().into_owned());
        }
    }
    let reports_equal = std::fs::read(a.join("report.json")).unwrap() == std::fs::read(b.join("report.json")).unwrap();
    verdict(
        one == two && differing.is_empty() && reports_equal && names.len() == 135,
        format!(
            "episode rerun identical={}, {} grid logs compared, {} differ, reports identical={reports_equal}",
            one == two,
            names.len(),
            differing.len()
        ),
    )
}

fn mean_of(report: &Report, mode: ModeKind, f: impl Fn(&tactile_core::experiment::ModeStats) -> Option<f64>) -> f64 {
    report.mode_mean(mode).and_then(f).unwrap_or(f64::NAN)
}

fn volume_ordering(report: &Report) -> Outcome {
    let vol = |m| mean_of(report, m, |s| s.mean_volume_per_interaction);
    let (gr, fg, pr) = (
        vol(ModeKind::GraspReleasing),
        vol(ModeKind::FingerGrazing),
        vol(ModeKind::PalmRolling),
    );
    verdict(
        fg >= 2.0 * gr && pr >= 2.0 * gr,
        format!("volume per interaction GR {gr:.1}, FG {fg:.1} ({:.2}x), PR {pr:.1} ({:.2}x) mm³", fg / gr, pr / gr),
    )
}

fn interaction_ordering(report: &Report) -> Outcome {
    let n = |m| mean_of(report, m, |s| s.mean_interactions);
    let (gr, fg, pr) = (
        n(ModeKind::GraspReleasing),
        n(ModeKind::FingerGrazing),
        n(ModeKind::PalmRolling),
    );
    verdict(
        fg <= gr && pr <= gr,
        format!("mean interactions GR {gr:.2}, FG {fg:.2}, PR {pr:.2}"),
    )
}

fn reconstruction_quality(report: &Report, cap: usize) -> Outcome {
    let fg: Vec<(String, f64)> = report
        .rows
        .iter()
        .map(|r| {
            let s = r.modes.iter().find(|s| s.mode == ModeKind::FingerGrazing);
            (r.object.clone(), s.and_then(|s| s.mean_chamfer).unwrap_or(f64::NAN))
        })
        .collect();
    let worst = fg.iter().map(|(_, c)| *c).fold(0.0, f64::max);
    let over: Vec<&str> = fg.iter().filter(|(_, c)| !(*c < 0.10)).map(|(o, _)| o.as_str()).collect();
    let most = report.episodes.iter().map(|e| e.interactions).max().unwrap_or(0);
    verdict(
        fg.len() == 9 && over.is_empty() && most <= cap,
        format!(
            "FG mean chamfer worst {worst:.4} over {} objects, above 0.10: {over:?}; most interactions {most} (cap {cap})",
            fg.len()
        ),
    )
}

fn flat_rolling(report: &Report) -> Outcome {
    let v = |c| {
        report
            .category_mean(c, ModeKind::PalmRolling)
            .and_then(|s| s.mean_volume_per_interaction)
            .unwrap_or(f64::NAN)
    };
    let (boxes, balls) = (v(ShapeKind::Box), v(ShapeKind::Ball));
    verdict(
        boxes < balls,
        format!("PR volume per interaction: box {boxes:.1} mm³, ball {balls:.1} mm³"),
    )
}

fn main() {
    // cargo passes harness flags such as --nocapture; none apply here
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let dir = tempfile::tempdir().expect("temporary directory");
    let grid = GridConfig {
        output_dir: dir.path().join("grid"),
        ..Default::default()
    };
    let again = GridConfig {
        output_dir: dir.path().join("again"),
        ..grid.clone()
    };

    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "normalization", normalization_suite()),
        (2, "information gain", information_gain_suite()),
        (3, "spatial index oracle", index_oracle()),
    ];
    let started = Instant::now();
    let summary = run_grid(&grid, false).expect("grid runs");
    let grid_secs = started.elapsed().as_secs_f64();
    run_grid(&again, false).expect("grid reruns");
    let report = &summary.report;

    results.push((4, "contact validity", contact_validity(&grid.logs_dir())));
    results.push((5, "truncation oracle", truncation_oracle()));
    results.push((6, "completer contracts", completer_contracts()));
    results.push((7, "determinism", determinism(&grid.output_dir, &again.output_dir)));
    results.push((8, "contact volume ordering", volume_ordering(report)));
    results.push((9, "interaction count ordering", interaction_ordering(report)));
    results.push((10, "reconstruction quality", reconstruction_quality(report, grid.exploration.max_interactions)));
    results.push((11, "flat surface rolling", flat_rolling(report)));

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{tag} criterion {n:>2} {name}: {}", o.detail);
    }
    println!(
        "\ngrid: {} episodes, {} failed, {grid_secs:.0} s\n",
        summary.cells.len(),
        summary.failures()
    );
    print!("{}", report_table(report));
    println!("\n{} of {} criteria pass", results.len() - failed, results.len());
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
