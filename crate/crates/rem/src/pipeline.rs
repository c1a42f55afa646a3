//! Stage functions shared by the subcommands, and the end-to-end
//! `reproduce` run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rem_core::eval::{evaluate, grid_search, GridResult};
use rem_core::grid::{predict_grid, RemGrid};
use rem_core::mission::{assign, estimate_time, generate_lattice, simulate_mission, MissionOutput, Route};
use rem_core::preprocess::{filter_rare_macs, split, FeatureMatrix, Layout, Split};
use rem_core::regress::{fit, Family, KnnSpec, RegressorSpec, TrainedModel};
use rem_core::rf::RfEnvironment;
use rem_core::stats::{compute_stats, mac_coverage, StatsReport};
use rem_core::{Dataset, MacAddr, VolumeSpec, Warning};
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    plot_tsv, text_table, to_json_string, write_json, write_sidecar, write_text, GridDocument, Provenance,
};
use crate::config::RunConfig;
use crate::formats::{write_samples, Format};
use crate::scenario::load_scenario;

/// A failed stage, reported on stderr as `{stage, kind, message}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{stage}: {message}")]
pub struct StageError {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

impl StageError {
    pub fn new(stage: &str, kind: &str, message: impl Into<String>) -> Self {
        Self {
            stage: stage.to_string(),
            kind: kind.to_string(),
            message: message.into(),
        }
    }
}

/// Wraps any error for `stage`; the kind is the error's variant name in
/// snake case.
pub fn at<E: fmt::Debug + fmt::Display>(stage: &'static str) -> impl Fn(E) -> StageError {
    move |e| {
        let debug = format!("{e:?}");
        let variant: String = debug.chars().take_while(|c| c.is_ascii_alphanumeric()).collect();
        StageError::new(stage, &snake_case(&variant), e.to_string())
    }
}

fn snake_case(s: &str) -> String {
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if c.is_ascii_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
        } else {
            out.push(c);
        }
    }
    if out.is_empty() {
        out.push_str("error");
    }
    out
}

/// Lattice, routes and the flown mission.
pub struct Simulation {
    pub environment: RfEnvironment,
    pub routes: Vec<Route>,
    pub output: MissionOutput,
}

pub fn plan_routes(config: &RunConfig) -> Result<Vec<Route>, StageError> {
    let waypoints = generate_lattice(&VolumeSpec::default(), &config.mission.lattice).map_err(at("plan"))?;
    if config.mission.drones == 0 {
        return Err(StageError::new("plan", "drones", "at least one drone is required"));
    }
    Ok(assign(&waypoints, config.mission.drones))
}

pub fn simulate(config: &RunConfig) -> Result<Simulation, StageError> {
    let environment = load_scenario(config.mission.scenario.as_deref()).map_err(at("simulate"))?;
    let routes = plan_routes(config)?;
    let output = simulate_mission(
        &routes,
        &config.mission.timing,
        &environment,
        &config.mission.hover,
        config.seed,
        &config.mission_options(),
    )
    .map_err(at("simulate"))?;
    Ok(Simulation {
        environment,
        routes,
        output,
    })
}

/// Filtered, split and encoded data ready for the regressors.
pub struct Prepared {
    pub filtered: Dataset,
    pub dropped: usize,
    pub split: Split,
    pub layout: Layout,
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
}

pub fn prepare(dataset: &Dataset, config: &RunConfig) -> Result<Prepared, StageError> {
    let (filtered, dropped) = filter_rare_macs(dataset, config.preprocess.min_count);
    let split = split(&filtered, &config.split_config()).map_err(at("preprocess"))?;
    let layout = Layout::fit(&split.train, config.preprocess.encoding).map_err(at("preprocess"))?;
    let train = layout.transform(&split.train);
    let test = layout.transform(&split.test);
    Ok(Prepared {
        filtered,
        dropped,
        split,
        layout,
        train,
        test,
    })
}

/// MAC with the most training rows (lowest address on ties).
pub fn busiest_mac(train: &FeatureMatrix) -> Option<MacAddr> {
    let mut counts: BTreeMap<MacAddr, usize> = BTreeMap::new();
    for mac in train.macs() {
        *counts.entry(*mac).or_default() += 1;
    }
    let mut best: Option<(MacAddr, usize)> = None;
    for (mac, n) in counts {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((mac, n));
        }
    }
    best.map(|(m, _)| m)
}

pub fn describe_spec(spec: &RegressorSpec) -> String {
    match spec {
        RegressorSpec::GlobalMean | RegressorSpec::PerMacMean => "-".to_string(),
        RegressorSpec::Knn(s) => format!("k={} {} mac_scale={}", s.k, s.weighting, s.mac_scale),
        RegressorSpec::PerMacKnn(s) => format!("k={} {}", s.k, s.weighting),
        RegressorSpec::Mlp(s) => format!("hidden={} epochs={}", s.hidden_units, s.epochs),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub params: String,
    pub test_rmse: f64,
    /// Mean cross-validated RMSE of the chosen point, for tuned rows.
    pub cv_rmse: Option<f64>,
    /// Relative change against the per-MAC mean baseline, percent (positive
    /// is better).
    pub gain_vs_per_mac_mean: f64,
    pub flagged_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub access_points: usize,
    pub shadow_sigma: f64,
    pub waypoints: usize,
    pub drones: usize,
    pub route_seconds: Vec<f64>,
    pub scanned_positions: usize,
    pub macs_seen: usize,
    /// MACs heard at 90% or more of the scanned positions.
    pub macs_near_everywhere: usize,
    /// MACs heard at 25% or fewer of the scanned positions.
    pub macs_sparse: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceReport {
    pub seed: u64,
    pub scenario: ScenarioSummary,
    pub stats: StatsReport,
    pub min_count: usize,
    pub retained: usize,
    pub dropped: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub rows: Vec<ComparisonRow>,
    pub best_knn: RegressorSpec,
    /// global mean > per-MAC mean >= tuned kNN on the test set.
    pub ordering_holds: bool,
    pub map_mac: MacAddr,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

pub struct Reproduction {
    pub report: ReproduceReport,
    pub simulation: Simulation,
    pub grid: RemGrid,
    pub knn_search: GridResult,
}

/// Fits `spec`, scores it on the test rows and returns the model too.
fn score(spec: &RegressorSpec, prepared: &Prepared) -> Result<(TrainedModel, f64, usize), StageError> {
    let model = fit(spec, &prepared.train).map_err(at("train"))?;
    let report = evaluate(&model, &prepared.test).map_err(at("evaluate"))?;
    Ok((model, report.rmse, report.flagged_rows))
}

/// simulate -> preprocess -> train every family -> grid search -> evaluate
/// -> map, all from `config.seed`.
pub fn reproduce(config: &RunConfig) -> Result<Reproduction, StageError> {
    let simulation = simulate(config)?;
    let dataset = &simulation.output.dataset;
    let stats = compute_stats(dataset).map_err(at("stats"))?;
    let prepared = prepare(dataset, config)?;
    let mut warnings: Vec<Warning> = simulation.output.warnings.clone();
    warnings.extend(prepared.split.warnings.iter().cloned());

    let knn_search = grid_search(&config.grid_spec(Family::Knn), &prepared.train, &config.cv_config())
        .map_err(at("grid-search"))?;
    warnings.extend(knn_search.warnings.iter().cloned());
    let best_knn = knn_search.best_row().spec;
    let tuned = match best_knn {
        RegressorSpec::Knn(s) => s,
        _ => KnnSpec::default(),
    };

    let mut candidates: Vec<(&str, RegressorSpec, Option<f64>)> = vec![
        ("global_mean", RegressorSpec::GlobalMean, None),
        ("per_mac_mean", RegressorSpec::PerMacMean, None),
        ("knn", config.regressor(Family::Knn), None),
        ("knn_tuned", best_knn, Some(knn_search.best_row().mean_rmse)),
    ];
    // per-MAC regressors reuse the tuned k and weighting; MAC columns play no part
    candidates.push((
        "per_mac_knn",
        RegressorSpec::PerMacKnn(KnnSpec {
            mac_scale: 1.0,
            ..tuned
        }),
        None,
    ));
    candidates.push(("mlp", config.regressor(Family::Mlp), None));

    let mut scored = Vec::new();
    let mut tuned_model = None;
    for (name, spec, cv) in candidates {
        let (model, rmse, flagged) = score(&spec, &prepared)?;
        if name == "knn_tuned" {
            tuned_model = Some(model);
        }
        scored.push((name, spec, cv, rmse, flagged));
    }
    let baseline = scored[1].3;
    let rows: Vec<ComparisonRow> = scored
        .iter()
        .map(|(name, spec, cv, rmse, flagged)| ComparisonRow {
            model: name.to_string(),
            params: describe_spec(spec),
            test_rmse: *rmse,
            cv_rmse: *cv,
            gain_vs_per_mac_mean: 100.0 * (baseline - rmse) / baseline,
            flagged_rows: *flagged,
        })
        .collect();
    let ordering_holds = rows[0].test_rmse > rows[1].test_rmse && rows[1].test_rmse >= rows[3].test_rmse;

    let map_mac = busiest_mac(&prepared.train).ok_or_else(|| StageError::new("export-map", "empty", "no training rows"))?;
    let model = tuned_model.expect("tuned kNN scored");
    let grid = predict_grid(&model, &VolumeSpec::default(), config.map.resolution, map_mac).map_err(at("export-map"))?;

    let positions = rem_core::stats::distinct_positions(dataset);
    let coverage = mac_coverage(dataset);
    let share = |c: &rem_core::stats::MacCoverage| c.distinct_positions as f64 / positions as f64;
    let scenario = ScenarioSummary {
        access_points: simulation.environment.aps.len(),
        shadow_sigma: simulation.environment.shadow_sigma,
        waypoints: simulation.routes.iter().map(|r| r.waypoints.len()).sum(),
        drones: simulation.routes.len(),
        route_seconds: simulation
            .routes
            .iter()
            .map(|r| estimate_time(r, &config.mission.timing).seconds)
            .collect(),
        scanned_positions: positions,
        macs_seen: coverage.len(),
        macs_near_everywhere: coverage.iter().filter(|c| share(c) >= 0.9).count(),
        macs_sparse: coverage.iter().filter(|c| share(c) <= 0.25).count(),
    };

    let report = ReproduceReport {
        seed: config.seed,
        scenario,
        stats,
        min_count: config.preprocess.min_count,
        retained: prepared.filtered.len(),
        dropped: prepared.dropped,
        n_train: prepared.train.n_rows(),
        n_test: prepared.test.n_rows(),
        rows,
        best_knn,
        ordering_holds,
        map_mac,
        warnings: warnings.iter().map(ToString::to_string).collect(),
        provenance: Provenance::new("reproduce", config, &[]),
    };
    Ok(Reproduction {
        report,
        simulation,
        grid,
        knn_search,
    })
}

fn fmt_rmse(v: f64) -> String {
    format!("{v:.4}")
}

/// The comparison as a plain-text report.
pub fn render_comparison(report: &ReproduceReport) -> String {
    let s = &report.scenario;
    let mut out = String::new();
    out.push_str(&format!("seed {}\n", report.seed));
    out.push_str(&format!(
        "scenario: {} access points, shadow sigma {} dB, {} waypoints, {} drones, route seconds {:?}\n",
        s.access_points, s.shadow_sigma, s.waypoints, s.drones, s.route_seconds
    ));
    out.push_str(&format!(
        "samples: {} from {} positions, {} macs ({} at >=90% of positions, {} at <=25%), {} ssids, {} channels\n",
        report.stats.n_samples,
        s.scanned_positions,
        report.stats.distinct_macs,
        s.macs_near_everywhere,
        s.macs_sparse,
        report.stats.distinct_ssids,
        report.stats.distinct_channels
    ));
    out.push_str(&format!(
        "rssi: mean {:.2} dBm, median {} dBm\n",
        report.stats.mean_rssi, report.stats.median_rssi
    ));
    out.push_str(&format!(
        "preprocess: min_count {}, retained {}, dropped {}, train {}, test {}\n\n",
        report.min_count, report.retained, report.dropped, report.n_train, report.n_test
    ));
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.params.clone(),
                fmt_rmse(r.test_rmse),
                r.cv_rmse.map_or("-".to_string(), fmt_rmse),
                format!("{:+.2}%", r.gain_vs_per_mac_mean),
                r.flagged_rows.to_string(),
            ]
        })
        .collect();
    out.push_str(&text_table(
        &["model", "params", "test_rmse_dbm", "cv_rmse_dbm", "vs_per_mac_mean", "flagged"],
        &rows,
    ));
    out.push_str(&format!(
        "\nordering global_mean > per_mac_mean >= knn_tuned: {}\n",
        if report.ordering_holds { "holds" } else { "violated" }
    ));
    out.push_str(&format!("map: {}\n", report.map_mac));
    for w in &report.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}

/// `model<TAB>test_rmse` for bar charts.
pub fn comparison_tsv(report: &ReproduceReport) -> String {
    plot_tsv(
        ("model", "test_rmse_dbm"),
        report.rows.iter().map(|r| (r.model.as_str(), fmt_rmse(r.test_rmse))),
    )
}

/// Writes every artifact of a reproduction under `dir`.
pub fn write_reproduction(dir: &Path, repro: &Reproduction, config: &RunConfig) -> Result<(), StageError> {
    let samples = dir.join("samples.csv");
    let mut buf = Vec::new();
    write_samples(&mut buf, &repro.simulation.output.dataset, Format::Csv).map_err(at("write"))?;
    write_text(&samples, std::str::from_utf8(&buf).expect("csv is utf-8")).map_err(at("write"))?;
    write_sidecar(&samples, &Provenance::new("reproduce", config, &[])).map_err(at("write"))?;

    #[derive(Serialize)]
    struct LogDocument<'a> {
        log: &'a rem_core::mission::MissionLog,
        routes: &'a [Route],
        provenance: Provenance,
    }
    write_json(
        &dir.join("mission_log.json"),
        &LogDocument {
            log: &repro.simulation.output.log,
            routes: &repro.simulation.routes,
            provenance: Provenance::new("reproduce", config, &[]),
        },
    )
    .map_err(at("write"))?;
    write_json(
        &dir.join("map.json"),
        &GridDocument {
            grid: repro.grid.clone(),
            provenance: Provenance::new("reproduce", config, &[]),
        },
    )
    .map_err(at("write"))?;
    write_json(&dir.join("knn_grid_search.json"), &repro.knn_search).map_err(at("write"))?;
    write_text(&dir.join("comparison.txt"), &render_comparison(&repro.report)).map_err(at("write"))?;
    write_text(&dir.join("comparison.json"), &to_json_string(&repro.report)).map_err(at("write"))?;
    write_text(&dir.join("comparison.tsv"), &comparison_tsv(&repro.report)).map_err(at("write"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_are_snake_case() {
        assert_eq!(snake_case("EmptyDataset"), "empty_dataset");
        assert_eq!(snake_case("Io"), "io");
        let e = at("stats")(rem_core::stats::StatsError::EmptyDataset);
        assert_eq!(e.kind, "empty_dataset");
        assert_eq!(e.stage, "stats");
    }
}
