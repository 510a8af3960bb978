//! Pipeline orchestration behind the `locrobust` binary.
//!
//! `simulate` writes the world map and dataset, `localise` replays the
//! requested strategies over them, `metrics` computes PAU curves, the VPT
//! profile and the robustness margin (CSV + SVG), `report` condenses the
//! artifacts into one table, and `verify` cross-checks the optimised paths
//! against the brute-force oracles.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::filter::{run_strategy, confidence_bound, StrategyMode, UpdateSource};
use crate::manifest::{LoadedManifest, RunManifest};
use crate::matcher::rigid_align;
use crate::metrics::{
    pau_area, pau_cutoff, pau_curve, robustness_margin, vpt_profile, PauCurve, VptBoundary,
};
use crate::oracle::{brute_pau, brute_rigid_align};
use crate::pose::{Point2, Pose2D};
use crate::sim::{generate_world, simulate_run};
use crate::world::FeatureClass;
use crate::{io, metrics, plot};

#[derive(Parser)]
#[command(
    name = "locrobust",
    version,
    about = "Localisation robustness metrics over a simulated 2D landmark pipeline"
)]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory (falls back to the manifest, then $LOCROBUST_OUT).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override the manifest seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate the world map and simulated sensor dataset.
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Replay the dataset under each strategy, writing state/event logs.
    Localise {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Compute PAU curves, the VPT profile and robustness margins.
    Metrics {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Summarise a finished run into report.txt.
    Report {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Run the brute-force oracle comparisons and print a pass/fail table.
    Verify {
        /// Random instances per comparison.
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // may already be initialised when called twice in-process; that is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Simulate { manifest } => {
            let loaded = load(manifest, cli.seed)?;
            let out = out_dir(&cli.out, &loaded);
            cmd_simulate(&loaded, &out)
        }
        Command::Localise { manifest } => {
            let loaded = load(manifest, cli.seed)?;
            let out = out_dir(&cli.out, &loaded);
            cmd_localise(&loaded, &out)
        }
        Command::Metrics { manifest } => {
            let loaded = load(manifest, cli.seed)?;
            let out = out_dir(&cli.out, &loaded);
            cmd_metrics(&loaded, &out)
        }
        Command::Report { manifest } => {
            let loaded = load(manifest, cli.seed)?;
            let out = out_dir(&cli.out, &loaded);
            cmd_report(&loaded, &out)
        }
        Command::Verify { instances } => cmd_verify(*instances),
    }
}

fn load(path: &Path, seed_override: Option<u64>) -> Result<LoadedManifest> {
    let mut loaded = RunManifest::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = seed_override {
        loaded.manifest.seed = seed;
        loaded.world.seed = seed;
    }
    Ok(loaded)
}

fn out_dir(cli_out: &Option<PathBuf>, loaded: &LoadedManifest) -> PathBuf {
    if let Some(dir) = cli_out {
        return dir.clone();
    }
    if let Some(dir) = &loaded.manifest.out_dir {
        return loaded.base_dir.join(dir);
    }
    if let Ok(dir) = std::env::var("LOCROBUST_OUT") {
        return PathBuf::from(dir);
    }
    PathBuf::from("locrobust_out")
}

pub fn cmd_simulate(loaded: &LoadedManifest, out: &Path) -> Result<()> {
    let seed = loaded.manifest.seed;
    let (map, route) = generate_world(&loaded.world)?;
    let dataset = simulate_run(
        &map,
        &route,
        &loaded.sensors,
        loaded.manifest.speed,
        seed,
        &loaded.world.gps_dropout_zones,
    )?;

    io::write_map_csv(&out.join("map.csv"), &map, seed)?;
    io::write_dataset_records(&out.join("dataset.jsonl"), &dataset, seed)?;

    println!(
        "world: {} poles, {} corners; route length {:.3} m",
        map.count_class(FeatureClass::Pole),
        map.count_class(FeatureClass::Corner),
        route.total_length()
    );
    println!(
        "dataset: {} odometry, {} gps, {} frames over {:.1} s (seed {seed})",
        dataset.odometry.len(),
        dataset.gps.len(),
        dataset.frames.len(),
        dataset.ground_truth.last().timestamp
    );
    println!("wrote {}", out.join("map.csv").display());
    println!("wrote {}", out.join("dataset.jsonl").display());
    Ok(())
}

pub fn cmd_localise(loaded: &LoadedManifest, out: &Path) -> Result<()> {
    let seed = loaded.manifest.seed;
    let map = io::read_map_csv(&out.join("map.csv"))?;
    let (dataset, _) = io::read_dataset_records(&out.join("dataset.jsonl"))?;

    let strategies = &loaded.manifest.strategies;
    let results: Vec<_> = strategies
        .par_iter()
        .map(|mode| {
            let cfg = loaded.manifest.strategy.config_for(*mode);
            (*mode, run_strategy(&dataset, &map, &cfg, &loaded.manifest.icp))
        })
        .collect();

    let mut failures = Vec::new();
    for (mode, result) in &results {
        match result {
            Ok(run) => {
                io::write_state_log_csv(&out.join(format!("{mode}.state.csv")), &run.states, seed)?;
                io::write_event_log_csv(&out.join(format!("{mode}.events.csv")), &run.events, seed)?;
                let last = run.states.last().expect("non-empty state log");
                let truth = dataset.ground_truth.pose_at_time(last.timestamp);
                let bounds = confidence_bound(&run.states);
                let mean_pos_bound = bounds
                    .iter()
                    .map(|b| b.easting.max(b.northing))
                    .sum::<f64>()
                    / bounds.len() as f64;
                let accepted = run.events.iter().filter(|e| e.accepted).count();
                println!(
                    "{mode:<15} final error {:8.3} m | mean 95% bound {:7.3} m | {} states, {}/{} updates accepted",
                    last.pose.position_distance(&truth),
                    mean_pos_bound,
                    run.states.len(),
                    accepted,
                    run.events.len()
                );
            }
            Err(e) => {
                eprintln!("{mode}: {e}");
                failures.push(*mode);
            }
        }
    }
    if !failures.is_empty() {
        bail!(
            "strategies failed: {}",
            failures
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    Ok(())
}

/// Arc positions of accepted events feeding the PAU curve. Feature modes
/// count map-matching updates, the GPS mode counts GPS updates; plain
/// dead-reckoning has no global updates at all.
fn pau_event_arcs(mode: StrategyMode, events: &[crate::filter::UpdateEvent]) -> Vec<f64> {
    let wanted: Option<UpdateSource> = match mode {
        StrategyMode::DeadReckoning => None,
        StrategyMode::Gps => Some(UpdateSource::Gps),
        StrategyMode::Pole | StrategyMode::PoleCorner => Some(UpdateSource::Icp),
    };
    events
        .iter()
        .filter(|e| e.accepted && Some(e.source) == wanted)
        .map(|e| e.arc_length)
        .collect()
}

pub fn cmd_metrics(loaded: &LoadedManifest, out: &Path) -> Result<()> {
    let seed = loaded.manifest.seed;
    let cfg = &loaded.manifest.metrics;
    let map = io::read_map_csv(&out.join("map.csv"))?;
    let (dataset, _) = io::read_dataset_records(&out.join("dataset.jsonl"))?;

    // --- PAU per strategy ---
    let mut pau_chart = plot::Chart::new("Probability of absence of updates", "l [m]", "P(AU_l)");
    let lengths = cfg.pau_lengths();
    let mut curves: Vec<(StrategyMode, PauCurve)> = Vec::new();
    for mode in &loaded.manifest.strategies {
        let state_path = out.join(format!("{mode}.state.csv"));
        let event_path = out.join(format!("{mode}.events.csv"));
        if !state_path.exists() || !event_path.exists() {
            eprintln!("warning: logs for {mode} missing, skipping its metrics");
            continue;
        }
        let states = io::read_state_log_csv(&state_path)?;
        let events = io::read_event_log_csv(&event_path)?;
        let trajectory_length = states.last().map(|s| s.arc_length).unwrap_or(0.0);
        if trajectory_length < cfg.pau_max_length {
            eprintln!("warning: {mode} trajectory shorter than the PAU grid, skipping");
            continue;
        }
        let arcs = pau_event_arcs(*mode, &events);
        let curve = pau_curve(&arcs, trajectory_length, &lengths, cfg.pau_stride)?;
        io::write_pau_csv(&out.join(format!("{mode}.pau.csv")), &curve, seed)?;
        pau_chart.add_series(
            mode.name(),
            curve
                .lengths
                .iter()
                .zip(&curve.probabilities)
                .map(|(&l, &p)| (l, p))
                .collect(),
        );
        curves.push((*mode, curve));
    }
    std::fs::write(out.join("pau.svg"), pau_chart.render())?;

    // --- VPT profile over the dataset frames ---
    let have_truth = dataset.frames.iter().all(|f| f.true_pose.is_some());
    if !have_truth || dataset.frames.is_empty() {
        eprintln!("warning: frames carry no ground-truth poses; VPT and margin skipped");
        return Ok(());
    }
    let mut locations: Vec<(f64, &crate::world::FeatureFrame)> = Vec::new();
    let mut next_arc = 0.0;
    for frame in &dataset.frames {
        let arc = dataset.ground_truth.arc_at_time(frame.timestamp);
        if arc + 1e-9 >= next_arc {
            locations.push((arc, frame));
            next_arc = arc + cfg.profile_stride;
        }
    }
    let profile = vpt_profile(
        &locations,
        &map,
        &cfg.grid,
        &loaded.manifest.icp,
        &cfg.validity_tol,
        cfg.theta_slice,
        cfg.window,
    )?;
    for arc in &profile.zero_offset_failures {
        eprintln!(
            "note: frame at arc {arc:.1} m failed to match even with the exact prior \
             (insufficient or ambiguous features)"
        );
    }
    io::write_vpt_profile_csv(&out.join("vpt_profile.csv"), &profile.radii, seed)?;

    let mut profile_chart = plot::Chart::new("VPT boundary radius", "arc length [m]", "radius [m]");
    profile_chart.add_series("radius", profile.radii.clone());
    profile_chart.add_series(
        "window median",
        profile
            .windows
            .iter()
            .map(|w| (0.5 * (w.start + w.end), w.median_nonzero))
            .collect(),
    );
    std::fs::write(out.join("vpt_profile.svg"), profile_chart.render())?;

    // lattice dumps and panels for three sample locations
    if locations.len() >= 3 {
        let picks = [
            locations.len() / 4,
            locations.len() / 2,
            3 * locations.len() / 4,
        ];
        let mut boundaries: Vec<VptBoundary> = Vec::new();
        for &i in &picks {
            let (arc, frame) = &locations[i];
            let mut b = metrics::vpt_evaluate(
                frame,
                &map,
                &frame.true_pose.unwrap(),
                &cfg.grid,
                &loaded.manifest.icp,
                &cfg.validity_tol,
            )?;
            b.arc_length = *arc;
            boundaries.push(b);
        }
        io::write_vpt_lattice_csv(&out.join("vpt_lattice.csv"), &boundaries, seed)?;
        let labelled: Vec<(String, &VptBoundary)> = boundaries
            .iter()
            .map(|b| (format!("arc {:.0} m", b.arc_length), b))
            .collect();
        std::fs::write(out.join("vpt_boundaries.svg"), plot::render_vpt_panels(&labelled))?;
    }

    // --- robustness margin per strategy ---
    let mut margin_chart = plot::Chart::new(
        "VPT radius vs 95% confidence bounds",
        "arc length [m]",
        "meters",
    );
    margin_chart.add_series("vpt radius", profile.radii.clone());
    let feature_mode = loaded
        .manifest
        .strategies
        .iter()
        .copied()
        .find(|m| *m == StrategyMode::PoleCorner)
        .or_else(|| loaded.manifest.strategies.first().copied());
    for mode in &loaded.manifest.strategies {
        let state_path = out.join(format!("{mode}.state.csv"));
        if !state_path.exists() {
            continue;
        }
        let states = io::read_state_log_csv(&state_path)?;
        let bounds = confidence_bound(&states);
        let series: Vec<(f64, f64)> = states
            .iter()
            .zip(&bounds)
            .map(|(s, b)| (s.arc_length, b.easting.max(b.northing)))
            .collect();
        let report = robustness_margin(&profile.radii, &series, cfg.margin_step)?;
        io::write_margin_csv(&out.join(format!("{mode}.margin.csv")), &report, seed)?;
        margin_chart.add_series(&format!("{mode} bound"), series);
        if Some(*mode) == feature_mode {
            for (from, to) in &report.flagged_intervals {
                margin_chart.add_band(*from, *to);
            }
        }
    }
    std::fs::write(out.join("margin.svg"), margin_chart.render())?;

    for (mode, curve) in &curves {
        let area = pau_area(curve)?;
        let cutoff = pau_cutoff(curve, 0.05)?;
        match cutoff {
            Some(l) => println!("{mode:<15} pau area {area:7.3} | P<=0.05 at l = {l} m"),
            None => println!("{mode:<15} pau area {area:7.3} | never reaches P<=0.05"),
        }
    }
    println!("metrics written to {}", out.display());
    Ok(())
}

pub fn cmd_report(loaded: &LoadedManifest, out: &Path) -> Result<()> {
    let seed = loaded.manifest.seed;
    let mut lines = Vec::new();
    lines.push(format!(
        "locrobust v{} run report (seed {seed})",
        io::TOOL_VERSION
    ));
    lines.push(format!(
        "{:<15} {:>12} {:>12} {:>14} {:>10} {:>18}",
        "strategy", "final_err_m", "mean95_m", "pau_area", "cutoff05", "flagged_intervals"
    ));

    let (dataset, _) = io::read_dataset_records(&out.join("dataset.jsonl"))?;
    for mode in &loaded.manifest.strategies {
        let state_path = out.join(format!("{mode}.state.csv"));
        if !state_path.exists() {
            lines.push(format!("{:<15} (no logs)", mode.name()));
            continue;
        }
        let states = io::read_state_log_csv(&state_path)?;
        let last = states.last().unwrap();
        let truth = dataset.ground_truth.pose_at_time(last.timestamp);
        let bounds = confidence_bound(&states);
        let mean95 = bounds.iter().map(|b| b.easting.max(b.northing)).sum::<f64>()
            / bounds.len() as f64;

        let pau_path = out.join(format!("{mode}.pau.csv"));
        let (area_s, cutoff_s) = if pau_path.exists() {
            let text = std::fs::read_to_string(&pau_path)?;
            let mut lengths = Vec::new();
            let mut probs = Vec::new();
            for line in text.lines().skip(2) {
                let mut parts = line.split(',');
                if let (Some(l), Some(p)) = (parts.next(), parts.next()) {
                    lengths.push(l.parse::<f64>()?);
                    probs.push(p.parse::<f64>()?);
                }
            }
            let curve = PauCurve {
                lengths,
                probabilities: probs,
                window_stride: loaded.manifest.metrics.pau_stride,
                trajectory_length: last.arc_length,
            };
            let area = pau_area(&curve)?;
            let cutoff = pau_cutoff(&curve, 0.05)?
                .map(|l| format!("{l} m"))
                .unwrap_or_else(|| "never".to_string());
            (format!("{area:.3}"), cutoff)
        } else {
            ("-".into(), "-".into())
        };

        let margin_path = out.join(format!("{mode}.margin.csv"));
        let flagged = if margin_path.exists() {
            let text = std::fs::read_to_string(&margin_path)?;
            let mut count = 0;
            let mut prev_flagged = false;
            for line in text.lines().skip(2) {
                let flagged_now = line.ends_with("true");
                if flagged_now && !prev_flagged {
                    count += 1;
                }
                prev_flagged = flagged_now;
            }
            count.to_string()
        } else {
            "-".into()
        };

        lines.push(format!(
            "{:<15} {:>12.3} {:>12.3} {:>14} {:>10} {:>18}",
            mode.name(),
            last.pose.position_distance(&truth),
            mean95,
            area_s,
            cutoff_s,
            flagged
        ));
    }

    let text = lines.join("\n") + "\n";
    std::fs::write(out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn cmd_verify(instances: usize) -> Result<()> {
    let mut all_ok = true;
    println!("{:<40} {:>8} {:>8}", "check", "cases", "status");

    // rigid_align vs exhaustive grid search
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..instances {
        let planted = Pose2D::new(
            rng.random_range(-4.0..4.0),
            rng.random_range(-4.0..4.0),
            rng.random_range(-2.0..2.0),
        );
        let n = rng.random_range(2..=8);
        let pairs: Vec<(Point2, Point2)> = (0..n)
            .map(|_| {
                let p = Point2::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
                (p, planted.transform_point(&p))
            })
            .collect();
        if let Ok(exact) = rigid_align(&pairs) {
            let brute = brute_rigid_align(&pairs, 1e-3);
            let err = (exact.easting - brute.pose.easting)
                .abs()
                .max((exact.northing - brute.pose.northing).abs())
                .max((exact.heading - brute.pose.heading).abs());
            worst = worst.max(err);
            if err > 2e-3 {
                ok = false;
            }
        }
    }
    println!(
        "{:<40} {:>8} {:>8} (max dev {:.2e})",
        "rigid_align vs brute grid search",
        instances,
        if ok { "PASS" } else { "FAIL" },
        worst
    );
    all_ok &= ok;

    // pau_curve vs literal enumeration
    let mut ok = true;
    let mut rng = ChaCha12Rng::seed_from_u64(4048);
    for _ in 0..200 {
        let traj: f64 = rng.random_range(20.0..60.0);
        let n_events = rng.random_range(0..25);
        let events: Vec<f64> = (0..n_events).map(|_| rng.random_range(0.0..traj)).collect();
        let lengths: Vec<f64> = (1..=12).map(|k| k as f64 * traj / 15.0).collect();
        let stride = rng.random_range(0.25..1.0);
        let fast = pau_curve(&events, traj, &lengths, stride)?;
        let brute = brute_pau(&events, traj, &lengths, stride)?;
        if fast != brute {
            ok = false;
        }
    }
    println!(
        "{:<40} {:>8} {:>8}",
        "pau_curve vs window enumeration",
        200,
        if ok { "PASS" } else { "FAIL" }
    );
    all_ok &= ok;

    if !all_ok {
        bail!("oracle verification failed");
    }
    Ok(())
}
