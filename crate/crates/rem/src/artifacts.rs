//! Files the tool writes besides sample files: model documents, feature
//! matrices, map grids, provenance blocks and plain-text tables.

use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rem_core::grid::RemGrid;
use rem_core::preprocess::{FeatureMatrix, Layout};
use rem_core::regress::{Family, TrainedModel};
use rem_core::MacAddr;
use serde::{Deserialize, Serialize};

pub const TOOL: &str = "rem";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Which command produced an artifact and with what effective settings.
/// Deliberately free of wall-clock time so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
}

impl Provenance {
    pub fn new(command: &str, config: &impl Serialize, inputs: &[&Path]) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: invalid json: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

pub fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<io::BufWriter<std::fs::File>, ArtifactError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ArtifactError> {
    write_text(path, &to_json_string(value))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ArtifactError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ArtifactError> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ArtifactError::Json { path: path.to_path_buf(), source })
}

/// `data.csv` -> `data.csv.provenance.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    path.with_file_name(name)
}

pub fn write_sidecar(path: &Path, provenance: &Provenance) -> Result<PathBuf, ArtifactError> {
    let side = sidecar_path(path);
    write_json(&side, provenance)?;
    Ok(side)
}

/// A trained model on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub family: Family,
    pub columns: Vec<String>,
    pub model: TrainedModel,
    pub provenance: Provenance,
}

impl ModelDocument {
    pub fn new(model: TrainedModel, provenance: Provenance) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            family: model.family(),
            columns: model.columns(),
            model,
            provenance,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        write_json(path, self)
    }

    /// Loads and cross-checks the header fields against the model body.
    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        let doc: ModelDocument = read_json(path)?;
        let invalid = |message: String| ArtifactError::Invalid { path: path.to_path_buf(), message };
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(invalid(format!(
                "unsupported model format_version {} (this build reads {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.family != doc.model.family() {
            return Err(invalid(format!("family {} does not match model body {}", doc.family, doc.model.family())));
        }
        if doc.columns != doc.model.columns() {
            return Err(invalid("column labels do not match the model layout".to_string()));
        }
        Ok(doc)
    }
}

/// Labeled feature matrix: the encoded columns, then `target` and `mac`.
pub fn write_feature_csv<W: Write>(out: W, matrix: &FeatureMatrix) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = matrix.columns();
    header.push("target".into());
    header.push("mac".into());
    w.write_record(&header)?;
    for (i, row) in matrix.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
        rec.push(matrix.targets()[i].to_string());
        rec.push(matrix.macs()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()
}

/// Sidecar for a preprocessing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub layout: Layout,
    pub columns: Vec<String>,
    pub min_count: usize,
    pub dropped: usize,
    pub seed: u64,
    pub train_fraction: f64,
    /// Indices into the filtered dataset.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub warnings: Vec<rem_core::Warning>,
    pub provenance: Provenance,
}

/// Grid on disk: the lattice plus where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDocument {
    pub grid: RemGrid,
    pub provenance: Provenance,
}

/// One CSV row per lattice point in storage order: `x,y,z,mac,rssi_pred`.
pub fn write_grid_csv<W: Write>(out: W, grid: &RemGrid) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "z", "mac", "rssi_pred"])?;
    let mac = grid.mac.to_string();
    for (p, v) in grid.positions().iter().zip(&grid.values) {
        w.write_record([p.x.to_string(), p.y.to_string(), p.z.to_string(), mac.clone(), v.to_string()])?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCsvRow {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub mac: MacAddr,
    pub rssi_pred: f64,
}

pub fn read_grid_csv<R: Read>(input: R) -> Result<Vec<GridCsvRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Heatmap of one z layer (the lattice layer nearest `z`): a header of x
/// values, then one line per y with the predicted dBm.
pub fn grid_slice_tsv(grid: &RemGrid, z: f64) -> String {
    let iz = ((z / grid.resolution).round().max(0.0) as usize).min(grid.dims[2] - 1);
    let mut out = format!("# z={}\ny\\x", iz as f64 * grid.resolution);
    for ix in 0..grid.dims[0] {
        out.push_str(&format!("\t{}", ix as f64 * grid.resolution));
    }
    out.push('\n');
    for iy in 0..grid.dims[1] {
        out.push_str(&format!("{}", iy as f64 * grid.resolution));
        for ix in 0..grid.dims[0] {
            out.push_str(&format!("\t{:.3}", grid.get(ix, iy, iz)));
        }
        out.push('\n');
    }
    out
}

/// Left-aligned first column, right-aligned others, two spaces apart.
pub fn text_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.zip(&widths).enumerate() {
            if i == 0 {
                s.push_str(&format!("{cell:<w$}"));
            } else {
                s.push_str(&format!("  {cell:>w$}"));
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(&mut headers.iter().copied());
    out.push('\n');
    out.push_str(&line(&mut widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}

/// Two-column TSV for plotting: `label<TAB>value`.
pub fn plot_tsv<'a>(header: (&str, &str), rows: impl IntoIterator<Item = (&'a str, String)>) -> String {
    let mut out = format!("{}\t{}\n", header.0, header.1);
    for (label, value) in rows {
        out.push_str(&format!("{label}\t{value}\n"));
    }
    out
}
