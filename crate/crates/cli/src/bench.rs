use std::io::Write;

use anyhow::Result;
use ksubmax::dcg::{format_bounds, format_gap, solve, SolveConfig, SolveStatus};
use ksubmax::instances::{
    sample_instance, synthetic_readings, tenth_bounds, InstanceSpec, RawReadings, SyntheticConfig,
};
use ksubmax::oracle::LogBase;
use ksubmax::verify::exhaustive_max;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct BenchPlan {
    pub ns: Vec<usize>,
    pub ts: Vec<usize>,
    /// Fixed bound vectors; empty means one tenth of n per type.
    pub bounds: Vec<Vec<usize>>,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    pub bins: Vec<u32>,
    pub es: bool,
    pub es_budget: Option<u64>,
    pub solve: SolveConfig,
    pub base: LogBase,
}

#[derive(Clone, Debug)]
struct Cell {
    n: usize,
    t: usize,
    b: Vec<usize>,
    trial: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub t: usize,
    #[serde(rename = "B")]
    pub b: String,
    pub trial: usize,
    pub seed: u64,
    pub time_s: String,
    pub cuts: String,
    pub nodes: String,
    pub end_gap: String,
    pub es_time_s: String,
}

impl BenchPlan {
    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &n in &self.ns {
            for &t in &self.ts {
                let bounds = if self.bounds.is_empty() {
                    vec![tenth_bounds(n, self.k)]
                } else {
                    self.bounds.clone()
                };
                for b in bounds {
                    for trial in 0..self.trials {
                        cells.push(Cell {
                            n,
                            t,
                            b: b.clone(),
                            trial,
                            seed: self.seed.wrapping_add(trial as u64),
                        });
                    }
                }
            }
        }
        cells
    }

    fn run_cell(&self, raw: &RawReadings, cell: &Cell) -> BenchRow {
        let mut row = BenchRow {
            n: cell.n,
            t: cell.t,
            b: format_bounds(Some(&cell.b)),
            trial: cell.trial,
            seed: cell.seed,
            time_s: String::new(),
            cuts: String::new(),
            nodes: String::new(),
            end_gap: String::new(),
            es_time_s: String::new(),
        };
        if let Err(e) = self.fill_row(raw, cell, &mut row) {
            log::error!("cell n={} t={} B={} trial={}: {e:#}", cell.n, cell.t, row.b, cell.trial);
            row.end_gap = format!("error: {e}");
        }
        row
    }

    fn fill_row(&self, raw: &RawReadings, cell: &Cell, row: &mut BenchRow) -> Result<()> {
        let spec = InstanceSpec::new(cell.n, cell.t, cell.b.clone(), self.bins.clone(), cell.seed);
        let inst = sample_instance(raw, &spec)?;
        let oracle = inst.oracle(self.base)?;
        let region = inst.region();
        let report = solve(&oracle, &region, &self.solve)?;
        let time = if report.status == SolveStatus::TimeLimit {
            self.solve.time_limit_s
        } else {
            report.wall_time_s
        };
        row.time_s = format!("{time:.3}");
        row.cuts = report.cuts_added.to_string();
        row.nodes = report.total_bb_nodes.to_string();
        row.end_gap = format_gap(report.gap);
        if self.es {
            let es = exhaustive_max(&oracle, &region, self.es_budget)?;
            row.es_time_s = if es.complete {
                format!("{:.3}", es.wall_time_s)
            } else {
                format!(">{:.3}", es.wall_time_s)
            };
        }
        Ok(())
    }
}

/// Runs every (cell, trial) pair, in parallel when `threads != 1`, and writes
/// the rows in cell order.
pub fn run_bench<W: Write>(plan: &BenchPlan, raw: Option<RawReadings>, threads: usize, out: W) -> Result<Vec<BenchRow>> {
    let raw = match raw {
        Some(raw) => raw,
        None => synthetic_readings(&SyntheticConfig {
            locations: plan.ns.iter().copied().max().unwrap_or(0).max(54),
            samples: plan.ts.iter().copied().max().unwrap_or(0).max(200),
            features: plan.k,
            seed: plan.seed,
            ..Default::default()
        })?,
    };
    let cells = plan.cells();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let rows: Vec<BenchRow> = pool.install(|| cells.par_iter().map(|c| plan.run_cell(&raw, c)).collect());
    let mut writer = csv::Writer::from_writer(out);
    for row in &rows {
        writer.serialize(row)?;
    }
    if rows.is_empty() {
        writer.write_record(["n", "t", "B", "trial", "seed", "time_s", "cuts", "nodes", "end_gap", "es_time_s"])?;
    }
    writer.flush()?;
    Ok(rows)
}
