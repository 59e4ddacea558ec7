//! Transfer reports: nested JSON (metadata plus per-cell repetition counts)
//! and a flat CSV table. Serialization is fully deterministic — ordered
//! structs and vectors only — so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RepResult {
    pub successes: usize,
    pub total: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Cell {
    pub surrogate: String,
    pub victim: String,
    pub loss: String,
    pub checkpoint: usize,
    /// True when the victim is one of the attacking surrogates.
    pub white_box: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rank: Option<usize>,
    pub successes: usize,
    pub total: usize,
    pub per_rep: Vec<RepResult>,
    /// Mean of the per-repetition rates.
    pub mean_rate: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TransferReport {
    pub schema: u32,
    pub kind: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub repetitions: usize,
    pub images_per_cell: usize,
    /// Per-repetition seeds, derived as base seed + repetition index.
    pub repetition_seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_weights: Option<Vec<f64>>,
    pub cells: Vec<Cell>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_CSV_HEADER: &str =
    "surrogate,victim,loss,checkpoint,white_box,target_rank,successes,total,mean_rate";

impl TransferReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            let rank = c
                .target_rank
                .map(|r| r.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.surrogate,
                c.victim,
                c.loss,
                c.checkpoint,
                c.white_box,
                rank,
                c.successes,
                c.total,
                c.mean_rate
            );
        }
        out
    }

    pub fn write(&self, out_dir: &Path, stem: &str) -> anyhow::Result<()> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join(format!("{stem}.json")), self.to_json())?;
        fs::write(out_dir.join(format!("{stem}.csv")), self.to_csv())?;
        Ok(())
    }

    /// Every rate must equal successes / total recomputed from the stored
    /// counts; the mean must equal the mean of the per-rep rates.
    pub fn check_consistency(&self) -> anyhow::Result<()> {
        for c in &self.cells {
            let sum: usize = c.per_rep.iter().map(|r| r.successes).sum();
            let tot: usize = c.per_rep.iter().map(|r| r.total).sum();
            if sum != c.successes || tot != c.total {
                anyhow::bail!(
                    "cell {}/{}/{}/{}: totals disagree with repetition counts",
                    c.surrogate,
                    c.victim,
                    c.loss,
                    c.checkpoint
                );
            }
            for r in &c.per_rep {
                let expect = if r.total == 0 {
                    0.0
                } else {
                    r.successes as f64 / r.total as f64
                };
                if (r.rate - expect).abs() > 1e-12 {
                    anyhow::bail!("stored rate {} != recomputed {expect}", r.rate);
                }
            }
            let mean = if c.per_rep.is_empty() {
                0.0
            } else {
                c.per_rep.iter().map(|r| r.rate).sum::<f64>() / c.per_rep.len() as f64
            };
            if (c.mean_rate - mean).abs() > 1e-12 {
                anyhow::bail!("stored mean {} != recomputed {mean}", c.mean_rate);
            }
        }
        Ok(())
    }

    /// Mean rate of a cell by coordinates.
    pub fn mean_rate(&self, victim: &str, loss: &str, checkpoint: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.victim == victim && c.loss == loss && c.checkpoint == checkpoint)
            .map(|c| c.mean_rate)
    }

    /// Mean of `mean_rate` over all black-box cells of one loss at one
    /// checkpoint.
    pub fn mean_black_box_rate(&self, loss: &str, checkpoint: usize) -> Option<f64> {
        let rates: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.loss == loss && c.checkpoint == checkpoint && !c.white_box)
            .map(|c| c.mean_rate)
            .collect();
        if rates.is_empty() {
            None
        } else {
            Some(rates.iter().sum::<f64>() / rates.len() as f64)
        }
    }
}

/// FNV-1a over arbitrary bytes; used to fingerprint plan files in reports.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
