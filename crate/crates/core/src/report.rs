//! CSV tables, run manifests and output directories.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::harness::{Experiment, SweepReport, SweepRow};

pub const SCHEMA_VERSION: u32 = 1;
pub const OUT_ROOT_ENV: &str = "PDLAB_OUT_ROOT";
pub const DEFAULT_OUT_ROOT: &str = "runs";

pub const PAIRS_HEADER: [&str; 10] = [
    "pair_index",
    "log2_z",
    "init_mode",
    "activation",
    "arch",
    "optimizer",
    "excess_loss_a",
    "excess_loss_b",
    "relative_pd",
    "diff_cosine",
];

pub const SWEEP_HEADER: [&str; 6] = ["variant", "log2_z", "mean_pd", "se_pd", "mean_loss", "se_loss"];

/// Ten significant digits in scientific notation.
pub fn num(v: f64) -> String {
    format!("{v:.9e}")
}

fn flush<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io("<csv>", e.into_error()))?
        .flush()
        .map_err(|e| Error::io("<csv>", e))
}

pub fn write_pairs_csv<W: Write>(experiments: &[Experiment], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PAIRS_HEADER)?;
    for exp in experiments {
        let c = &exp.config;
        for p in &exp.pairs {
            w.write_record([
                p.pair_index.to_string(),
                c.stream.log2_z.to_string(),
                c.init_mode.as_str().to_string(),
                c.architecture.activation.to_string(),
                c.architecture.kind.descriptor(),
                c.optimizer.label(),
                num(p.excess_loss_a),
                num(p.excess_loss_b),
                num(p.relative_pd),
                p.diff_cosine.map(num).unwrap_or_default(),
            ])?;
        }
    }
    flush(w)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.variant.clone(),
            r.log2_z.to_string(),
            num(r.mean_pd),
            num(r.se_pd),
            num(r.mean_loss),
            num(r.se_loss),
        ])?;
    }
    flush(w)
}

/// Reads a sweep table back. Counts of completed and stuck pairs are not
/// part of the table and come back as zero.
pub fn read_sweep_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(SWEEP_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected sweep header {}", SWEEP_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| -> Result<f64> {
            rec[k].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad number `{}` in column {}", &rec[k], SWEEP_HEADER[k]),
            })
        };
        rows.push(SweepRow {
            variant: rec[0].to_string(),
            log2_z: rec[1].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad log2_z `{}`", &rec[1]),
            })?,
            mean_pd: field(2)?,
            se_pd: field(3)?,
            mean_loss: field(4)?,
            se_loss: field(5)?,
            completed: 0,
            stuck: 0,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PairStatus {
    Completed { stuck: bool },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairEntry {
    pub variant: String,
    pub log2_z: u32,
    pub pair_index: usize,
    pub status: PairStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub pairs: Vec<PairEntry>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(config_hash: &str, master_seed: u64) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash.to_string(),
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: unix_now(),
            finished_unix: 0,
            pairs: Vec::new(),
        }
    }

    pub fn record(&mut self, experiments: &[Experiment]) {
        for exp in experiments {
            let variant = exp.row.variant.clone();
            let z = exp.config.stream.log2_z;
            let mut entries: Vec<PairEntry> = exp
                .pairs
                .iter()
                .map(|p| PairEntry {
                    variant: variant.clone(),
                    log2_z: z,
                    pair_index: p.pair_index,
                    status: PairStatus::Completed { stuck: p.stuck },
                })
                .chain(exp.failures.iter().map(|(k, msg)| PairEntry {
                    variant: variant.clone(),
                    log2_z: z,
                    pair_index: *k,
                    status: PairStatus::Failed(msg.clone()),
                }))
                .collect();
            entries.sort_by_key(|e| e.pair_index);
            self.pairs.extend(entries);
        }
    }

    pub fn finish(&mut self) {
        self.finished_unix = unix_now();
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "schema_version = {}\nconfig_hash = {}\nmaster_seed = {}\ntool_version = {}\nstarted_unix = {}\nfinished_unix = {}\n",
            self.schema_version,
            self.config_hash,
            self.master_seed,
            self.tool_version,
            self.started_unix,
            self.finished_unix
        );
        for e in &self.pairs {
            let status = match &e.status {
                PairStatus::Completed { stuck: false } => "ok".to_string(),
                PairStatus::Completed { stuck: true } => "stuck".to_string(),
                PairStatus::Failed(m) => format!("failed: {}", m.replace('\n', " ")),
            };
            s.push_str(&format!(
                "pair = {}\t{}\t{}\t{}\n",
                e.variant, e.log2_z, e.pair_index, status
            ));
        }
        s
    }
}

/// `<root>/<hash>-s<seed>`, where root is `explicit`, else the environment
/// variable, else `runs`.
pub fn run_dir(explicit: Option<&Path>, config_hash: &str, seed: u64) -> PathBuf {
    let root = explicit.map(Path::to_path_buf).unwrap_or_else(|| {
        std::env::var_os(OUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
    });
    root.join(format!("{config_hash}-s{seed}"))
}

pub fn create_file(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create_file(path)?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

/// Writes `pairs.csv`, `sweep.csv` and `manifest.txt` into `dir`.
pub fn write_report(dir: &Path, report: &SweepReport, manifest: &RunManifest) -> Result<()> {
    write_pairs_csv(&report.experiments, create_file(&dir.join("pairs.csv"))?)?;
    write_sweep_csv(&report.rows, create_file(&dir.join("sweep.csv"))?)?;
    write_text(&dir.join("manifest.txt"), &manifest.to_text())
}
