//! Aggregates recomputed from episode logs alone.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exploration::{read_episode_log, Termination};
use crate::files;
use crate::modes::ModeKind;
use crate::primitives::{ShapeKind, Variation};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Progression checks skip this many leading iterations.
const SETTLING_ITERATIONS: usize = 2;
const SOFT_TARGET: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub object: String,
    pub category: ShapeKind,
    pub variation: Variation,
    pub mode: ModeKind,
    pub trial: usize,
    pub seed: u64,
    pub converged: bool,
    pub termination: Termination,
    pub interactions: usize,
    pub final_chamfer: Option<f64>,
    /// mm³
    pub contact_volume: f64,
    pub volume_per_interaction: f64,
    /// Ground-truth Chamfer after each interaction, when a belief existed.
    pub chamfer_by_iteration: Vec<Option<f64>>,
}

impl EpisodeSummary {
    fn sort_key(&self) -> (ShapeKind, Variation, &str, ModeKind, usize) {
        (
            self.category,
            self.variation,
            &self.object,
            self.mode,
            self.trial,
        )
    }

    /// Whether the Chamfer sequence never rises after the settling
    /// iterations.
    fn settles_monotonically(&self) -> bool {
        let tail: Vec<f64> = self
            .chamfer_by_iteration
            .iter()
            .skip(SETTLING_ITERATIONS)
            .flatten()
            .copied()
            .collect();
        tail.windows(2).all(|w| w[1] <= w[0] + 1e-12)
    }
}

/// Means over the completed trials of one mode; a mean is absent when no
/// trial contributes to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    pub mode: ModeKind,
    pub trials: usize,
    pub converged: usize,
    pub mean_chamfer: Option<f64>,
    pub mean_interactions: Option<f64>,
    pub mean_contact_volume: Option<f64>,
    pub mean_volume_per_interaction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub object: String,
    pub category: ShapeKind,
    pub variation: Variation,
    pub modes: Vec<ModeStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub category: ShapeKind,
    pub modes: Vec<ModeStats>,
}

/// Mean ground-truth Chamfer after `iteration` interactions. Finished
/// episodes keep contributing their last value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressionPoint {
    pub mode: ModeKind,
    pub iteration: usize,
    pub episodes: usize,
    pub mean_chamfer: Option<f64>,
}

/// Share of converged ball episodes whose Chamfer never rises after the
/// settling iterations. Reported, not enforced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftCheck {
    pub mode: ModeKind,
    pub episodes: usize,
    pub share: Option<f64>,
    pub target: f64,
    pub met: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub episodes: Vec<EpisodeSummary>,
    pub rows: Vec<ReportRow>,
    pub mode_means: Vec<ModeStats>,
    pub category_means: Vec<CategoryStats>,
    pub progression: Vec<ProgressionPoint>,
    pub soft_checks: Vec<SoftCheck>,
}

impl Report {
    pub fn mode_mean(&self, mode: ModeKind) -> Option<&ModeStats> {
        self.mode_means.iter().find(|m| m.mode == mode)
    }

    pub fn category_mean(&self, category: ShapeKind, mode: ModeKind) -> Option<&ModeStats> {
        self.category_means
            .iter()
            .find(|c| c.category == category)
            .and_then(|c| c.modes.iter().find(|m| m.mode == mode))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn stats(mode: ModeKind, eps: &[&EpisodeSummary]) -> ModeStats {
    ModeStats {
        mode,
        trials: eps.len(),
        converged: eps.iter().filter(|e| e.converged).count(),
        mean_chamfer: mean(eps.iter().filter_map(|e| e.final_chamfer)),
        mean_interactions: mean(eps.iter().map(|e| e.interactions as f64)),
        mean_contact_volume: mean(eps.iter().map(|e| e.contact_volume)),
        mean_volume_per_interaction: mean(eps.iter().map(|e| e.volume_per_interaction)),
    }
}

fn per_mode(modes: &[ModeKind], eps: &[&EpisodeSummary]) -> Vec<ModeStats> {
    modes
        .iter()
        .map(|&m| {
            let sel: Vec<&EpisodeSummary> = eps.iter().copied().filter(|e| e.mode == m).collect();
            stats(m, &sel)
        })
        .collect()
}

fn summarize(path: &Path) -> Result<EpisodeSummary> {
    let (h, r) = read_episode_log(path)?;
    Ok(EpisodeSummary {
        object: h.object.name,
        category: h.object.category,
        variation: h.object.variation,
        mode: r.mode.kind(),
        trial: h.trial,
        seed: r.seed,
        converged: r.outcome.converged,
        termination: r.outcome.termination,
        interactions: r.outcome.interactions,
        final_chamfer: r.outcome.final_chamfer,
        contact_volume: r.outcome.contact_volume,
        volume_per_interaction: r.outcome.volume_per_interaction,
        chamfer_by_iteration: r.iterations.iter().map(|i| i.chamfer_truth).collect(),
    })
}

/// Report over every `*.jsonl` log in `dir`.
pub fn build_report(dir: impl AsRef<Path>) -> Result<Report> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "jsonl") {
            paths.push(path);
        }
    }
    build_report_from_paths(&paths, dir)
}

/// Report over the given logs; `dir` only names the source in errors. The
/// result does not depend on the order of `paths`.
pub fn build_report_from_paths(paths: &[PathBuf], dir: &Path) -> Result<Report> {
    if paths.is_empty() {
        return Err(Error::NoEpisodeLogs {
            path: dir.to_path_buf(),
        });
    }
    let mut episodes = paths
        .iter()
        .map(|p| summarize(p))
        .collect::<Result<Vec<_>>>()?;
    episodes.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

    let mut modes: Vec<ModeKind> = episodes.iter().map(|e| e.mode).collect();
    modes.sort();
    modes.dedup();
    let all: Vec<&EpisodeSummary> = episodes.iter().collect();

    let mut rows: Vec<ReportRow> = Vec::new();
    for e in &episodes {
        if rows.last().is_none_or(|r| r.object != e.object) {
            let sel: Vec<&EpisodeSummary> = all
                .iter()
                .copied()
                .filter(|x| x.object == e.object)
                .collect();
            rows.push(ReportRow {
                object: e.object.clone(),
                category: e.category,
                variation: e.variation,
                modes: per_mode(&modes, &sel),
            });
        }
    }
    let category_means = ShapeKind::ALL
        .into_iter()
        .filter_map(|c| {
            let sel: Vec<&EpisodeSummary> =
                all.iter().copied().filter(|e| e.category == c).collect();
            (!sel.is_empty()).then(|| CategoryStats {
                category: c,
                modes: per_mode(&modes, &sel),
            })
        })
        .collect();

    let mut progression = Vec::new();
    let mut soft_checks = Vec::new();
    for &m in &modes {
        let sel: Vec<&EpisodeSummary> = all.iter().copied().filter(|e| e.mode == m).collect();
        let longest = sel
            .iter()
            .map(|e| e.chamfer_by_iteration.len())
            .max()
            .unwrap_or(0);
        for k in 1..=longest {
            let at: Vec<f64> = sel
                .iter()
                .filter_map(|e| {
                    let upto = k.min(e.chamfer_by_iteration.len());
                    e.chamfer_by_iteration[..upto].iter().rev().find_map(|c| *c)
                })
                .collect();
            progression.push(ProgressionPoint {
                mode: m,
                iteration: k,
                episodes: at.len(),
                mean_chamfer: mean(at.into_iter()),
            });
        }
        let balls: Vec<&&EpisodeSummary> = sel
            .iter()
            .filter(|e| e.category == ShapeKind::Ball && e.converged)
            .collect();
        let share = mean(
            balls
                .iter()
                .map(|e| if e.settles_monotonically() { 1.0 } else { 0.0 }),
        );
        soft_checks.push(SoftCheck {
            mode: m,
            episodes: balls.len(),
            share,
            target: SOFT_TARGET,
            met: share.map(|s| s >= SOFT_TARGET),
        });
    }

    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        mode_means: per_mode(&modes, &all),
        rows,
        category_means,
        progression,
        soft_checks,
        episodes,
    })
}

fn opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.decimals$}"))
}

fn csv_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn stats_csv(out: &mut String, object: &str, category: &str, variation: &str, s: &ModeStats) {
    writeln!(
        out,
        "{object},{category},{variation},{},{},{},{},{},{},{}",
        s.mode.short_name(),
        s.trials,
        s.converged,
        csv_opt(s.mean_chamfer),
        csv_opt(s.mean_interactions),
        csv_opt(s.mean_contact_volume),
        csv_opt(s.mean_volume_per_interaction)
    )
    .expect("writing to a string");
}

/// Per-object rows, then category and grid means. Empty fields mark means
/// with no contributing trial.
pub fn report_csv(report: &Report) -> String {
    let mut out = String::from(
        "object,category,variation,mode,trials,converged,mean_chamfer,mean_interactions,mean_contact_volume,mean_volume_per_interaction\n",
    );
    for r in &report.rows {
        for s in &r.modes {
            stats_csv(
                &mut out,
                &r.object,
                r.category.name(),
                r.variation.name(),
                s,
            );
        }
    }
    for c in &report.category_means {
        for s in &c.modes {
            stats_csv(&mut out, "*", c.category.name(), "*", s);
        }
    }
    for s in &report.mode_means {
        stats_csv(&mut out, "*", "*", "*", s);
    }
    out
}

pub fn progression_csv(report: &Report) -> String {
    let mut out = String::from("mode,iteration,episodes,mean_chamfer\n");
    for p in &report.progression {
        writeln!(
            out,
            "{},{},{},{}",
            p.mode.short_name(),
            p.iteration,
            p.episodes,
            csv_opt(p.mean_chamfer)
        )
        .expect("writing to a string");
    }
    out
}

fn render(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c < 2 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn stat_cells(s: &ModeStats) -> [String; 5] {
    [
        format!("{}/{}", s.converged, s.trials),
        opt(s.mean_chamfer, 3),
        opt(s.mean_interactions, 1),
        opt(s.mean_contact_volume, 0),
        opt(s.mean_volume_per_interaction, 1),
    ]
}

/// Rows by shape and variation, one column group per mode.
pub fn report_table(report: &Report) -> String {
    let modes: Vec<ModeKind> = report.mode_means.iter().map(|m| m.mode).collect();
    let mut head = vec!["Shape".to_string(), "Variation".to_string()];
    let mut sub = vec![String::new(), String::new()];
    for m in &modes {
        for (i, label) in ["conv", "Chamfer", "#Int", "Vol", "Vol/Int"]
            .iter()
            .enumerate()
        {
            head.push(if i == 0 {
                m.short_name().to_string()
            } else {
                String::new()
            });
            sub.push(label.to_string());
        }
    }
    let mut lines = vec![head, sub];
    for r in &report.rows {
        let mut line = vec![
            r.category.name().to_string(),
            r.variation.name().to_string(),
        ];
        line.extend(r.modes.iter().flat_map(stat_cells));
        lines.push(line);
    }
    for c in &report.category_means {
        let mut line = vec![c.category.name().to_string(), "all".to_string()];
        line.extend(c.modes.iter().flat_map(stat_cells));
        lines.push(line);
    }
    let mut line = vec!["All".to_string(), "all".to_string()];
    line.extend(report.mode_means.iter().flat_map(stat_cells));
    lines.push(line);

    let mut out = render(&lines);
    out.push_str(
        "\nChamfer is dimensionless, volumes are mm³; conv counts converged/completed trials.\n",
    );
    for s in &report.soft_checks {
        writeln!(
            out,
            "{}: Chamfer non-increasing after iteration {SETTLING_ITERATIONS} in {} of {} converged ball runs (target {:.0}%)",
            s.mode.short_name(),
            s.share.map_or_else(|| "-".to_string(), |v| format!("{:.0}%", 100.0 * v)),
            s.episodes,
            100.0 * s.target
        )
        .expect("writing to a string");
    }
    out
}

/// Writes `report.json`, `report.csv`, `progression.csv` and `table.txt`.
pub fn write_report(report: &Report, out: impl AsRef<Path>) -> Result<()> {
    let out = out.as_ref();
    files::create_dir(out)?;
    files::write_json(&out.join("report.json"), report)?;
    files::write_atomic(&out.join("report.csv"), report_csv(report).as_bytes())?;
    files::write_atomic(
        &out.join("progression.csv"),
        progression_csv(report).as_bytes(),
    )?;
    files::write_atomic(&out.join("table.txt"), report_table(report).as_bytes())
}
