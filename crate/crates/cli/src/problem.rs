use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use ksubmax::dcg::FeasibleRegion;
use ksubmax::instances::load_instance;
use ksubmax::oracle::{CoverageOracle, LogBase, ModularOracle, TableOracle, ValueOracle};
use ksubmax::GroundSet;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Entropy,
    Modular,
    Coverage,
    Table,
}

/// Non-entropy oracle files. The `oracle` tag names the family.
#[derive(Debug, Deserialize)]
#[serde(tag = "oracle", rename_all = "lowercase", deny_unknown_fields)]
enum OracleFile {
    Modular {
        weights: Vec<Vec<f64>>,
        #[serde(default)]
        region: Option<FeasibleRegion>,
    },
    Coverage {
        universe: usize,
        covers: Vec<Vec<Vec<usize>>>,
        #[serde(default)]
        item_weights: Option<Vec<f64>>,
        #[serde(default)]
        region: Option<FeasibleRegion>,
    },
    /// Values listed by k-set rank: labels read as base-(k+1) digits,
    /// element 1 most significant.
    Table {
        n: usize,
        k: usize,
        values: Vec<f64>,
        #[serde(default)]
        region: Option<FeasibleRegion>,
    },
}

pub struct Problem {
    pub oracle: Box<dyn ValueOracle>,
    /// Region stored with the problem, if any.
    pub region: Option<FeasibleRegion>,
    /// Sample count of an entropy instance.
    pub t: Option<usize>,
}

pub fn load_problem(kind: OracleKind, path: &Path, base: LogBase) -> Result<Problem> {
    if kind == OracleKind::Entropy {
        let inst = load_instance(path).with_context(|| format!("reading instance {}", path.display()))?;
        return Ok(Problem {
            oracle: Box::new(inst.oracle(base)?),
            region: Some(inst.region()),
            t: Some(inst.spec.t),
        });
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: OracleFile =
        serde_json::from_str(&text).with_context(|| format!("parsing oracle file {}", path.display()))?;
    let (found, oracle, region): (OracleKind, Box<dyn ValueOracle>, _) = match file {
        OracleFile::Modular { weights, region } => {
            (OracleKind::Modular, Box::new(ModularOracle::new(&weights)?), region)
        }
        OracleFile::Coverage {
            universe,
            covers,
            item_weights,
            region,
        } => {
            let weights = item_weights.unwrap_or_else(|| vec![1.0; universe]);
            (OracleKind::Coverage, Box::new(CoverageOracle::new(universe, covers, weights)?), region)
        }
        OracleFile::Table { n, k, values, region } => {
            let ground = GroundSet::new(n, k)?;
            (OracleKind::Table, Box::new(TableOracle::from_values(ground, values)?), region)
        }
    };
    if found != kind {
        bail!("{} holds a {:?} oracle but --oracle asked for {:?}", path.display(), found, kind);
    }
    Ok(Problem { oracle, region, t: None })
}

/// Command-line bounds take precedence over the region stored in the file.
pub fn resolve_region(
    stored: Option<FeasibleRegion>,
    bounds: Option<Vec<usize>>,
    total: Option<usize>,
) -> FeasibleRegion {
    let mut region = match bounds {
        Some(b) => FeasibleRegion::per_type(b),
        None => stored.unwrap_or_else(FeasibleRegion::unconstrained),
    };
    if let Some(total) = total {
        region = region.with_total(total);
    }
    region
}
