//! Command-line interface. Every flag also reads a `REM_*` environment
//! variable; both override values from `--config`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rem_core::eval::{evaluate, grid_search};
use rem_core::grid::predict_grid;
use rem_core::mission::{estimate_time, Feedback};
use rem_core::regress::{fit, Family, Weighting};
use rem_core::stats::{compute_stats, histogram, mac_coverage, Axis, HistogramKey, Histogram};
use rem_core::{Dataset, MacAddr, VolumeSpec};
use serde::Serialize;

use crate::artifacts::{
    grid_slice_tsv, plot_tsv, text_table, to_json_string, write_feature_csv, write_grid_csv, write_json,
    write_sidecar, write_text, FeatureSidecar, GridDocument, ModelDocument, Provenance,
};
use crate::config::RunConfig;
use crate::formats::{read_path, write_samples, Format, ParseMode};
use crate::pipeline::{self, at, StageError};

#[derive(Debug, Parser)]
#[command(name = "rem", version, about = "Indoor 3D radio environment maps from drone WiFi scans")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, env = "REM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Drives the split, CV folds, MLP initialisation and mission noise [default: 0].
    #[arg(long, global = true, env = "REM_SEED")]
    pub seed: Option<u64>,
    /// Sample file (csv or jsonl).
    #[arg(long, global = true, env = "REM_INPUT")]
    pub input: Option<PathBuf>,
    /// Input format; guessed from the extension when absent.
    #[arg(long, global = true, env = "REM_FORMAT")]
    pub format: Option<Format>,
    /// Skip malformed records instead of failing.
    #[arg(long, global = true, env = "REM_LENIENT")]
    pub lenient: bool,
    /// Drop MACs with fewer samples than this [default: 16].
    #[arg(long, global = true, env = "REM_MIN_COUNT")]
    pub min_count: Option<usize>,
    /// Share of samples in the training split [default: 0.75].
    #[arg(long, global = true, env = "REM_TRAIN_FRACTION")]
    pub train_fraction: Option<f64>,
    /// global_mean, per_mac_mean, knn, per_mac_knn or mlp.
    #[arg(long, global = true, env = "REM_FAMILY")]
    pub family: Option<Family>,
    /// Neighbours for the kNN families [default: 5].
    #[arg(long, global = true, env = "REM_K")]
    pub k: Option<usize>,
    /// uniform or inverse_distance.
    #[arg(long, global = true, env = "REM_WEIGHTING")]
    pub weighting: Option<Weighting>,
    /// Weight of the one-hot MAC columns in kNN distances [default: 1].
    #[arg(long, global = true, env = "REM_MAC_SCALE")]
    pub mac_scale: Option<f64>,
    /// Add one-hot channel columns to the features.
    #[arg(long, global = true, env = "REM_CHANNEL_ONEHOT")]
    pub channel_onehot: bool,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true, env = "REM_OUT")]
    pub out: Option<PathBuf>,
    /// Print JSON on stdout instead of text.
    #[arg(long, global = true, env = "REM_JSON")]
    pub json: bool,
    /// Also write a TSV suitable for plotting.
    #[arg(long, global = true, env = "REM_PLOT_DATA")]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HistogramArg {
    Mac,
    Channel,
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeedbackArg {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a sample file and optionally rewrite it canonically.
    Ingest,
    /// Summary statistics and histograms.
    Stats {
        #[arg(long, value_enum)]
        histogram: Vec<HistogramArg>,
        /// Bin width for coordinate histograms, metres.
        #[arg(long, default_value_t = 0.5)]
        bin_width: f64,
        /// Per-MAC sample counts next to distinct scan positions.
        #[arg(long)]
        coverage: bool,
    },
    /// Filter rare MACs, split, and write encoded feature matrices.
    Preprocess,
    /// Fit one family on the training split and save the model.
    Train,
    /// Score a saved model on the test split (or every row with `--all`).
    Evaluate {
        #[arg(long, default_value = "model.json")]
        model: PathBuf,
        #[arg(long)]
        all: bool,
    },
    /// Cross-validated hyperparameter search on the training split.
    GridSearch {
        /// Number of rows to print.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Waypoint lattice, routes per drone and time estimates.
    Plan {
        #[arg(long)]
        drones: Option<usize>,
    },
    /// Fly the planned mission over a synthetic environment.
    Simulate {
        #[arg(long)]
        drones: Option<usize>,
        /// Environment JSON; the bundled scenario by default.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum)]
        feedback: Option<FeedbackArg>,
        /// Fly routes longer than the endurance budget.
        #[arg(long)]
        force: bool,
    },
    /// Predicted RSSI lattice for one MAC from a saved model.
    ExportMap {
        #[arg(long, default_value = "model.json")]
        model: PathBuf,
        /// Defaults to the first MAC the model knows.
        #[arg(long)]
        mac: Option<MacAddr>,
        #[arg(long)]
        resolution: Option<f64>,
        /// Defaults from the `--out` extension, else json.
        #[arg(long = "map-format", value_enum)]
        map_format: Option<MapFormat>,
        /// Also print a heatmap table of one layer, e.g. `z=1.0`.
        #[arg(long)]
        slice: Option<String>,
    },
    /// The whole pipeline on a simulated dataset with a comparison table.
    Reproduce {
        #[arg(long)]
        drones: Option<usize>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Stats { .. } => "stats",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::GridSearch { .. } => "grid-search",
            Command::Plan { .. } => "plan",
            Command::Simulate { .. } => "simulate",
            Command::ExportMap { .. } => "export-map",
            Command::Reproduce { .. } => "reproduce",
        }
    }
}

impl GlobalArgs {
    /// Defaults, then the config file, then these flags (which already
    /// include their environment variables).
    pub fn effective_config(&self) -> Result<RunConfig, StageError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).map_err(at("config"))?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.input {
            cfg.data.input = Some(v.clone());
        }
        if let Some(v) = self.format {
            cfg.data.format = Some(v);
        }
        if self.lenient {
            cfg.data.lenient = true;
        }
        if let Some(v) = self.min_count {
            cfg.preprocess.min_count = v;
        }
        if let Some(v) = self.train_fraction {
            cfg.preprocess.train_fraction = v;
        }
        if self.channel_onehot {
            cfg.preprocess.encoding.use_channel_onehot = true;
        }
        if let Some(v) = self.family {
            cfg.model.family = v;
        }
        if let Some(v) = self.k {
            cfg.model.knn.k = v;
        }
        if let Some(v) = self.weighting {
            cfg.model.knn.weighting = v;
        }
        if let Some(v) = self.mac_scale {
            cfg.model.knn.mac_scale = v;
        }
        Ok(cfg)
    }
}

struct Ctx<'a> {
    args: &'a GlobalArgs,
    cfg: RunConfig,
    command: &'static str,
}

impl Ctx<'_> {
    fn provenance(&self, inputs: &[&Path]) -> Provenance {
        Provenance::new(self.command, &self.cfg, inputs)
    }

    fn input(&self) -> Result<&Path, StageError> {
        self.cfg
            .data
            .input
            .as_deref()
            .ok_or_else(|| StageError::new("ingest", "missing_input", "no input file (use --input or REM_INPUT)"))
    }

    fn load(&self) -> Result<(Dataset, usize), StageError> {
        let mode = if self.cfg.data.lenient { ParseMode::Lenient } else { ParseMode::Strict };
        let outcome = read_path(self.input()?, self.cfg.data.format, mode).map_err(at("ingest"))?;
        for e in &outcome.skipped {
            eprintln!("skipped: {e}");
        }
        Ok((outcome.dataset, outcome.skipped.len()))
    }

    /// Prints `value` as JSON, or `text` otherwise.
    fn emit(&self, value: &impl Serialize, text: &str) {
        if self.args.json {
            print!("{}", to_json_string(value));
        } else {
            print!("{text}");
        }
    }

    fn plot(&self, tsv: &str) -> Result<(), StageError> {
        if let Some(p) = &self.args.plot_data {
            write_text(p, tsv).map_err(at("write"))?;
        }
        Ok(())
    }
}

/// Writes a sample file plus its provenance sidecar.
fn save_samples(path: &Path, dataset: &Dataset, provenance: &Provenance) -> Result<(), StageError> {
    let mut buf = Vec::new();
    write_samples(&mut buf, dataset, Format::from_path(path)).map_err(at("write"))?;
    write_text(path, std::str::from_utf8(&buf).expect("utf-8 output")).map_err(at("write"))?;
    write_sidecar(path, provenance).map_err(at("write"))?;
    Ok(())
}

/// Parses `z=1.25`.
fn parse_slice(s: &str) -> Result<f64, StageError> {
    let bad = || StageError::new("export-map", "slice", format!("expected z=<metres>, got {s:?}"));
    let v = s.strip_prefix("z=").ok_or_else(bad)?;
    v.parse::<f64>().ok().filter(|z| z.is_finite()).ok_or_else(bad)
}

/// Runs a parsed command line; results go to stdout and artifact files.
pub fn run(cli: &Cli) -> Result<(), StageError> {
    let ctx = Ctx {
        args: &cli.global,
        cfg: cli.global.effective_config()?,
        command: cli.command.name(),
    };
    match &cli.command {
        Command::Ingest => ingest(&ctx),
        Command::Stats {
            histogram,
            bin_width,
            coverage,
        } => stats(&ctx, histogram, *bin_width, *coverage),
        Command::Preprocess => preprocess(&ctx),
        Command::Train => train(&ctx),
        Command::Evaluate { model, all } => evaluate_cmd(&ctx, model, *all),
        Command::GridSearch { top } => grid_search_cmd(&ctx, *top),
        Command::Plan { drones } => {
            let mut ctx = ctx;
            if let Some(d) = drones {
                ctx.cfg.mission.drones = *d;
            }
            plan(&ctx)
        }
        Command::Simulate {
            drones,
            scenario,
            feedback,
            force,
        } => {
            let mut ctx = ctx;
            if let Some(d) = drones {
                ctx.cfg.mission.drones = *d;
            }
            if let Some(s) = scenario {
                ctx.cfg.mission.scenario = Some(s.clone());
            }
            if let Some(f) = feedback {
                ctx.cfg.mission.options.feedback = match f {
                    FeedbackArg::On => Feedback::On,
                    FeedbackArg::Off => Feedback::Off,
                };
            }
            if *force {
                ctx.cfg.mission.options.force = true;
            }
            simulate(&ctx)
        }
        Command::ExportMap {
            model,
            mac,
            resolution,
            map_format,
            slice,
        } => {
            let mut ctx = ctx;
            if let Some(r) = resolution {
                ctx.cfg.map.resolution = *r;
            }
            export_map(&ctx, model, *mac, *map_format, slice.as_deref())
        }
        Command::Reproduce { drones, scenario } => {
            let mut ctx = ctx;
            if let Some(d) = drones {
                ctx.cfg.mission.drones = *d;
            }
            if let Some(s) = scenario {
                ctx.cfg.mission.scenario = Some(s.clone());
            }
            reproduce(&ctx)
        }
    }
}

#[derive(Serialize)]
struct IngestSummary {
    input: String,
    samples: usize,
    skipped: usize,
}

fn ingest(ctx: &Ctx) -> Result<(), StageError> {
    let (dataset, skipped) = ctx.load()?;
    let input = ctx.input()?;
    if let Some(out) = &ctx.args.out {
        save_samples(out, &dataset, &ctx.provenance(&[input]))?;
    }
    let summary = IngestSummary {
        input: input.display().to_string(),
        samples: dataset.len(),
        skipped,
    };
    ctx.emit(&summary, &format!("{}: {} valid samples, {} skipped\n", summary.input, summary.samples, skipped));
    Ok(())
}

#[derive(Serialize)]
struct StatsOutput {
    stats: rem_core::stats::StatsReport,
    distinct_positions: usize,
    histograms: Vec<Histogram>,
    coverage: Option<Vec<rem_core::stats::MacCoverage>>,
    provenance: Provenance,
}

fn histogram_key(h: HistogramArg, bin_width: f64) -> HistogramKey {
    let axis = |axis| HistogramKey::AxisBin { axis, bin_width };
    match h {
        HistogramArg::Mac => HistogramKey::Mac,
        HistogramArg::Channel => HistogramKey::Channel,
        HistogramArg::X => axis(Axis::X),
        HistogramArg::Y => axis(Axis::Y),
        HistogramArg::Z => axis(Axis::Z),
    }
}

fn stats(ctx: &Ctx, requested: &[HistogramArg], bin_width: f64, coverage: bool) -> Result<(), StageError> {
    let (dataset, _) = ctx.load()?;
    let report = compute_stats(&dataset).map_err(at("stats"))?;
    let histograms = requested
        .iter()
        .map(|h| histogram(&dataset, histogram_key(*h, bin_width)).map_err(at("stats")))
        .collect::<Result<Vec<_>, _>>()?;
    let out = StatsOutput {
        stats: report.clone(),
        distinct_positions: rem_core::stats::distinct_positions(&dataset),
        histograms,
        coverage: coverage.then(|| mac_coverage(&dataset)),
        provenance: ctx.provenance(&[ctx.input()?]),
    };

    let mut text = text_table(
        &["statistic", "value"],
        &[
            vec!["samples".into(), report.n_samples.to_string()],
            vec!["distinct MACs".into(), report.distinct_macs.to_string()],
            vec!["distinct SSIDs".into(), report.distinct_ssids.to_string()],
            vec!["distinct channels".into(), report.distinct_channels.to_string()],
            vec!["mean RSSI (dBm)".into(), format!("{:.2}", report.mean_rssi)],
            vec!["median RSSI (dBm)".into(), report.median_rssi.to_string()],
            vec!["scan positions".into(), out.distinct_positions.to_string()],
        ],
    );
    let mut tsv = String::new();
    for h in &out.histograms {
        let rows: Vec<Vec<String>> = h.bins.iter().map(|b| vec![b.label.clone(), b.count.to_string()]).collect();
        text.push('\n');
        text.push_str(&text_table(&["bin", "samples"], &rows));
        tsv.push_str(&plot_tsv(("bin", "samples"), h.bins.iter().map(|b| (b.label.as_str(), b.count.to_string()))));
    }
    if let Some(cov) = &out.coverage {
        let rows: Vec<Vec<String>> = cov
            .iter()
            .map(|c| vec![c.mac.to_string(), c.samples.to_string(), c.distinct_positions.to_string()])
            .collect();
        text.push('\n');
        text.push_str(&text_table(&["mac", "samples", "positions"], &rows));
    }
    if let Some(path) = &ctx.args.out {
        write_json(path, &out).map_err(at("write"))?;
    }
    ctx.plot(&tsv)?;
    ctx.emit(&out, &text);
    Ok(())
}

fn preprocess(ctx: &Ctx) -> Result<(), StageError> {
    let (dataset, _) = ctx.load()?;
    let input = ctx.input()?;
    let prepared = pipeline::prepare(&dataset, &ctx.cfg)?;
    let dir = ctx.args.out.clone().unwrap_or_else(|| PathBuf::from("preprocessed"));
    let prov = ctx.provenance(&[input]);
    save_samples(&dir.join("train.csv"), &prepared.split.train, &prov)?;
    save_samples(&dir.join("test.csv"), &prepared.split.test, &prov)?;
    for (name, matrix) in [("train_features.csv", &prepared.train), ("test_features.csv", &prepared.test)] {
        let path = dir.join(name);
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, matrix).map_err(at("write"))?;
        write_text(&path, std::str::from_utf8(&buf).expect("utf-8 output")).map_err(at("write"))?;
        write_sidecar(&path, &prov).map_err(at("write"))?;
    }
    let sidecar = FeatureSidecar {
        layout: prepared.layout.clone(),
        columns: prepared.layout.columns(),
        min_count: ctx.cfg.preprocess.min_count,
        dropped: prepared.dropped,
        seed: ctx.cfg.seed,
        train_fraction: ctx.cfg.preprocess.train_fraction,
        train_indices: prepared.split.train_indices.clone(),
        test_indices: prepared.split.test_indices.clone(),
        warnings: prepared.split.warnings.clone(),
        provenance: prov,
    };
    write_json(&dir.join("features.json"), &sidecar).map_err(at("write"))?;
    for w in &sidecar.warnings {
        eprintln!("warning: {w}");
    }
    let text = format!(
        "retained {} of {} samples ({} dropped below {}), train {}, test {}, {} feature columns -> {}\n",
        prepared.filtered.len(),
        dataset.len(),
        prepared.dropped,
        ctx.cfg.preprocess.min_count,
        prepared.train.n_rows(),
        prepared.test.n_rows(),
        prepared.layout.width(),
        dir.display()
    );
    ctx.emit(&sidecar, &text);
    Ok(())
}

fn train(ctx: &Ctx) -> Result<(), StageError> {
    let (dataset, _) = ctx.load()?;
    let input = ctx.input()?;
    let prepared = pipeline::prepare(&dataset, &ctx.cfg)?;
    let spec = ctx.cfg.regressor(ctx.cfg.model.family);
    let model = fit(&spec, &prepared.train).map_err(at("train"))?;
    let doc = ModelDocument::new(model, ctx.provenance(&[input]));
    let path = ctx.args.out.clone().unwrap_or_else(|| PathBuf::from("model.json"));
    doc.save(&path).map_err(at("write"))?;
    let text = format!(
        "trained {} ({}) on {} rows -> {}\n",
        doc.family,
        pipeline::describe_spec(&spec),
        prepared.train.n_rows(),
        path.display()
    );
    #[derive(Serialize)]
    struct TrainSummary<'a> {
        family: Family,
        spec: &'a rem_core::regress::RegressorSpec,
        train_rows: usize,
        model: String,
    }
    let summary = TrainSummary {
        family: doc.family,
        spec: &spec,
        train_rows: prepared.train.n_rows(),
        model: path.display().to_string(),
    };
    ctx.emit(&summary, &text);
    Ok(())
}

fn evaluate_cmd(ctx: &Ctx, model_path: &Path, all: bool) -> Result<(), StageError> {
    let doc = ModelDocument::load(model_path).map_err(at("evaluate"))?;
    let (dataset, _) = ctx.load()?;
    let input = ctx.input()?;
    let test = if all {
        doc.model.layout.transform(&dataset)
    } else {
        let prepared = pipeline::prepare(&dataset, &ctx.cfg)?;
        doc.model.layout.transform(&prepared.split.test)
    };
    let report = evaluate(&doc.model, &test).map_err(at("evaluate"))?;
    if let Some(out) = &ctx.args.out {
        #[derive(Serialize)]
        struct EvalDocument<'a> {
            report: &'a rem_core::eval::EvalReport,
            provenance: Provenance,
        }
        let prov = ctx.provenance(&[input, model_path]);
        write_json(out, &EvalDocument { report: &report, provenance: prov }).map_err(at("write"))?;
    }
    let rows: Vec<Vec<String>> = report
        .per_mac
        .iter()
        .map(|m| vec![m.mac.to_string(), m.n.to_string(), format!("{:.4}", m.rmse)])
        .collect();
    let labels: Vec<String> = report.per_mac.iter().map(|m| m.mac.to_string()).collect();
    ctx.plot(&plot_tsv(
        ("mac", "rmse_dbm"),
        labels.iter().zip(&report.per_mac).map(|(l, m)| (l.as_str(), format!("{:.4}", m.rmse))),
    ))?;
    let text = format!(
        "{} test RMSE {:.4} dBm over {} rows ({} flagged)\n\n{}",
        report.family,
        report.rmse,
        report.n,
        report.flagged_rows,
        text_table(&["mac", "n", "rmse_dbm"], &rows)
    );
    ctx.emit(&report, &text);
    Ok(())
}

fn grid_search_cmd(ctx: &Ctx, top: usize) -> Result<(), StageError> {
    let (dataset, _) = ctx.load()?;
    let input = ctx.input()?;
    let prepared = pipeline::prepare(&dataset, &ctx.cfg)?;
    let grid = ctx.cfg.grid_spec(ctx.cfg.model.family);
    let result = grid_search(&grid, &prepared.train, &ctx.cfg.cv_config()).map_err(at("grid-search"))?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = &ctx.args.out {
        #[derive(Serialize)]
        struct GridSearchDocument<'a> {
            result: &'a rem_core::eval::GridResult,
            provenance: Provenance,
        }
        write_json(out, &GridSearchDocument { result: &result, provenance: ctx.provenance(&[input]) }).map_err(at("write"))?;
    }
    let mut order: Vec<usize> = (0..result.table.len()).collect();
    order.sort_by(|&a, &b| result.table[a].mean_rmse.total_cmp(&result.table[b].mean_rmse).then(a.cmp(&b)));
    let rows: Vec<Vec<String>> = order
        .iter()
        .take(top)
        .map(|&i| {
            let r = &result.table[i];
            vec![r.index.to_string(), pipeline::describe_spec(&r.spec), format!("{:.4}", r.mean_rmse)]
        })
        .collect();
    let best = result.best_row();
    let text = format!(
        "{} grid points, best #{}: {} (cv rmse {:.4} dBm)\n\n{}",
        result.table.len(),
        best.index,
        pipeline::describe_spec(&best.spec),
        best.mean_rmse,
        text_table(&["point", "params", "cv_rmse_dbm"], &rows)
    );
    ctx.emit(&result, &text);
    Ok(())
}

fn plan(ctx: &Ctx) -> Result<(), StageError> {
    let routes = pipeline::plan_routes(&ctx.cfg)?;
    #[derive(Serialize)]
    struct PlanDocument {
        routes: Vec<rem_core::mission::Route>,
        estimates: Vec<rem_core::mission::TimeEstimate>,
        provenance: Provenance,
    }
    let estimates: Vec<_> = routes.iter().map(|r| estimate_time(r, &ctx.cfg.mission.timing)).collect();
    let rows: Vec<Vec<String>> = routes
        .iter()
        .zip(&estimates)
        .map(|(r, e)| {
            vec![
                rem_core::mission::drone_label(r.drone_id),
                r.waypoints.len().to_string(),
                format!("{:.1}", e.seconds),
                e.warning.as_ref().map_or("-".to_string(), ToString::to_string),
            ]
        })
        .collect();
    let doc = PlanDocument {
        routes,
        estimates,
        provenance: ctx.provenance(&[]),
    };
    if let Some(out) = &ctx.args.out {
        write_json(out, &doc).map_err(at("write"))?;
    }
    for e in &doc.estimates {
        if let Some(w) = &e.warning {
            eprintln!("warning: {w}");
        }
    }
    ctx.emit(&doc, &text_table(&["drone", "waypoints", "seconds", "warning"], &rows));
    Ok(())
}

fn simulate(ctx: &Ctx) -> Result<(), StageError> {
    let sim = pipeline::simulate(&ctx.cfg)?;
    let dir = ctx.args.out.clone().unwrap_or_else(|| PathBuf::from("simulation"));
    let scenario: Vec<&Path> = ctx.cfg.mission.scenario.as_deref().into_iter().collect();
    let prov = ctx.provenance(&scenario);
    save_samples(&dir.join("samples.csv"), &sim.output.dataset, &prov)?;
    #[derive(Serialize)]
    struct LogDocument<'a> {
        log: &'a rem_core::mission::MissionLog,
        routes: &'a [rem_core::mission::Route],
        warnings: &'a [rem_core::Warning],
        provenance: Provenance,
    }
    let doc = LogDocument {
        log: &sim.output.log,
        routes: &sim.routes,
        warnings: &sim.output.warnings,
        provenance: prov,
    };
    write_json(&dir.join("mission_log.json"), &doc).map_err(at("write"))?;
    for w in &sim.output.warnings {
        eprintln!("warning: {w}");
    }
    let text = format!(
        "{} drones, {} samples from {} access points -> {}\n",
        sim.routes.len(),
        sim.output.dataset.len(),
        sim.environment.aps.len(),
        dir.display()
    );
    ctx.emit(&doc, &text);
    Ok(())
}

fn export_map(
    ctx: &Ctx,
    model_path: &Path,
    mac: Option<MacAddr>,
    format: Option<MapFormat>,
    slice: Option<&str>,
) -> Result<(), StageError> {
    let doc = ModelDocument::load(model_path).map_err(at("export-map"))?;
    let mac = match mac {
        Some(m) => m,
        None => *doc
            .model
            .layout
            .macs
            .first()
            .ok_or_else(|| StageError::new("export-map", "no_mac", "model knows no MAC; pass --mac"))?,
    };
    let grid =
        predict_grid(&doc.model, &VolumeSpec::default(), ctx.cfg.map.resolution, mac).map_err(at("export-map"))?;
    let format = format.unwrap_or_else(|| match ctx.args.out.as_deref().and_then(Path::extension) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => MapFormat::Csv,
        _ => MapFormat::Json,
    });
    let prov = ctx.provenance(&[model_path]);
    let body = match format {
        MapFormat::Json => to_json_string(&GridDocument { grid: grid.clone(), provenance: prov.clone() }),
        MapFormat::Csv => {
            let mut buf = Vec::new();
            write_grid_csv(&mut buf, &grid).map_err(at("write"))?;
            String::from_utf8(buf).expect("utf-8 output")
        }
    };
    match &ctx.args.out {
        Some(out) => {
            write_text(out, &body).map_err(at("write"))?;
            if format == MapFormat::Csv {
                write_sidecar(out, &prov).map_err(at("write"))?;
            }
        }
        None if slice.is_none() => print!("{body}"),
        None => {}
    }
    if let Some(s) = slice {
        let table = grid_slice_tsv(&grid, parse_slice(s)?);
        ctx.plot(&table)?;
        print!("{table}");
    }
    Ok(())
}

fn reproduce(ctx: &Ctx) -> Result<(), StageError> {
    let repro = pipeline::reproduce(&ctx.cfg)?;
    let dir = ctx.args.out.clone().unwrap_or_else(|| PathBuf::from("reproduce"));
    pipeline::write_reproduction(&dir, &repro, &ctx.cfg)?;
    ctx.plot(&pipeline::comparison_tsv(&repro.report))?;
    ctx.emit(&repro.report, &pipeline::render_comparison(&repro.report));
    Ok(())
}
