//! Per-episode and per-evaluation-step records, and their CSV form.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const TRAIN_COLUMNS: [&str; 9] = [
    "seed",
    "episode",
    "return",
    "epsilon",
    "wm_rec_loss",
    "wm_rew_loss",
    "wm_cons_loss",
    "q_loss",
    "wall_ms",
];

pub const EVAL_COLUMNS: [&str; 5] = ["seed", "episode", "step", "real_reward", "predicted_reward"];

/// One training episode. Losses are means over the episode's gradient
/// steps and are absent when no step trained that component.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRow {
    pub seed: u64,
    pub episode: usize,
    pub ret: f64,
    /// exploration rate at the episode's first step
    pub epsilon: f64,
    pub wm_rec_loss: Option<f64>,
    pub wm_rew_loss: Option<f64>,
    pub wm_cons_loss: Option<f64>,
    pub q_loss: Option<f64>,
    pub wall_ms: Option<f64>,
}

/// One greedy evaluation step. `episode` is the number of training
/// episodes completed when the evaluation ran; `step` counts across the
/// evaluation's episodes, `eval_episode · T + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub seed: u64,
    pub episode: usize,
    pub step: usize,
    pub real_reward: f64,
    pub predicted_reward: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub train: Vec<EpisodeRow>,
    pub eval: Vec<EvalRow>,
}

impl MetricsLog {
    /// Concatenates logs and orders rows by seed, then episode, then step.
    pub fn merge(logs: impl IntoIterator<Item = MetricsLog>) -> Self {
        let mut out = MetricsLog::default();
        for log in logs {
            out.train.extend(log.train);
            out.eval.extend(log.eval);
        }
        out.train.sort_by_key(|r| (r.seed, r.episode));
        out.eval.sort_by_key(|r| (r.seed, r.episode, r.step));
        out
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.train.iter().map(|r| r.seed).collect();
        s.dedup();
        s
    }

    /// Training returns of one seed in episode order.
    pub fn returns(&self, seed: u64) -> Vec<f64> {
        self.train.iter().filter(|r| r.seed == seed).map(|r| r.ret).collect()
    }
}

/// 17 significant digits: enough to read back the identical `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `train.csv` and `eval.csv` into `dir`, creating it if needed.
pub fn write_metrics_csv(log: &MetricsLog, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let train = dir.join("train.csv");
    write_rows(
        &train,
        &TRAIN_COLUMNS,
        log.train.iter().map(|r| {
            vec![
                r.seed.to_string(),
                r.episode.to_string(),
                format_float(r.ret),
                format_float(r.epsilon),
                opt(r.wm_rec_loss),
                opt(r.wm_rew_loss),
                opt(r.wm_cons_loss),
                opt(r.q_loss),
                opt(r.wall_ms),
            ]
        }),
    )?;
    let eval = dir.join("eval.csv");
    write_rows(
        &eval,
        &EVAL_COLUMNS,
        log.eval.iter().map(|r| {
            vec![
                r.seed.to_string(),
                r.episode.to_string(),
                r.step.to_string(),
                format_float(r.real_reward),
                opt(r.predicted_reward),
            ]
        }),
    )?;
    Ok((train, eval))
}

fn read_records(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new().from_path(path).map_err(csv_err(path))?;
    let found = r.headers().map_err(csv_err(path))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Unsupported(format!(
            "{}: unexpected header {:?}",
            path.display(),
            found.iter().collect::<Vec<_>>()
        )));
    }
    r.records().map(|rec| rec.map_err(csv_err(path))).collect()
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec[i].parse().map_err(|_| {
        Error::Unsupported(format!("{}: bad value `{}` in column {}", path.display(), &rec[i], i + 1))
    })
}

fn opt_field(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<Option<f64>> {
    if rec[i].is_empty() {
        Ok(None)
    } else {
        field(path, rec, i).map(Some)
    }
}

/// Parses the files written by [`write_metrics_csv`].
pub fn read_metrics_csv(dir: &Path) -> Result<MetricsLog> {
    let train_path = dir.join("train.csv");
    let mut train = Vec::new();
    for rec in read_records(&train_path, &TRAIN_COLUMNS)? {
        let p = &train_path;
        train.push(EpisodeRow {
            seed: field(p, &rec, 0)?,
            episode: field(p, &rec, 1)?,
            ret: field(p, &rec, 2)?,
            epsilon: field(p, &rec, 3)?,
            wm_rec_loss: opt_field(p, &rec, 4)?,
            wm_rew_loss: opt_field(p, &rec, 5)?,
            wm_cons_loss: opt_field(p, &rec, 6)?,
            q_loss: opt_field(p, &rec, 7)?,
            wall_ms: opt_field(p, &rec, 8)?,
        });
    }
    let eval_path = dir.join("eval.csv");
    let mut eval = Vec::new();
    for rec in read_records(&eval_path, &EVAL_COLUMNS)? {
        let p = &eval_path;
        eval.push(EvalRow {
            seed: field(p, &rec, 0)?,
            episode: field(p, &rec, 1)?,
            step: field(p, &rec, 2)?,
            real_reward: field(p, &rec, 3)?,
            predicted_reward: opt_field(p, &rec, 4)?,
        });
    }
    Ok(MetricsLog { train, eval })
}

/// `out[i]` is the mean of `series[max(0, i − window + 1) ..= i]`.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "moving-average window must be at least 1");
    (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            series[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}
