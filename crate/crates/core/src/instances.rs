//! Sensor-placement instances: raw readings, equal-width discretization,
//! seeded sub-sampling of locations and samples, and instance files.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dcg::FeasibleRegion;
use crate::error::{Error, Result};
use crate::oracle::{csv_error, EntropyOracle, LogBase, ObservationMatrix};

/// Real-valued readings `values[feature][location][sample]` with the
/// original location and sample identifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct RawReadings {
    feature_names: Vec<String>,
    location_ids: Vec<String>,
    sample_ids: Vec<String>,
    values: Vec<f64>,
}

impl RawReadings {
    pub fn new(
        feature_names: Vec<String>,
        location_ids: Vec<String>,
        sample_ids: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let (k, n, t) = (feature_names.len(), location_ids.len(), sample_ids.len());
        if k == 0 || n == 0 || t == 0 {
            return Err(Error::InsufficientData(format!(
                "{k} features, {n} locations, {t} samples"
            )));
        }
        if values.len() != k * n * t {
            return Err(Error::DimensionMismatch {
                expected: format!("{} readings", k * n * t),
                found: format!("{} readings", values.len()),
            });
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            let (f, rest) = (idx / (n * t), idx % (n * t));
            return Err(Error::NonFinite(format!(
                "feature `{}` at location {} sample {}",
                feature_names[f],
                location_ids[rest / t],
                sample_ids[rest % t]
            )));
        }
        Ok(RawReadings {
            feature_names,
            location_ids,
            sample_ids,
            values,
        })
    }

    /// Builds readings from `[feature][location][sample]` nested vectors
    /// with identifiers `1..`.
    pub fn from_nested(names: &[&str], readings: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n = readings.first().map_or(0, Vec::len);
        let t = readings.first().and_then(|f| f.first()).map_or(0, Vec::len);
        if names.len() != readings.len()
            || readings.iter().any(|f| f.len() != n || f.iter().any(|l| l.len() != t))
        {
            return Err(Error::DimensionMismatch {
                expected: format!("{} features of {n} x {t}", names.len()),
                found: "ragged readings".into(),
            });
        }
        RawReadings::new(
            names.iter().map(|s| s.to_string()).collect(),
            (1..=n).map(|i| i.to_string()).collect(),
            (1..=t).map(|i| i.to_string()).collect(),
            readings.iter().flatten().flatten().copied().collect(),
        )
    }

    pub fn k_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_locations(&self) -> usize {
        self.location_ids.len()
    }

    pub fn t_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn location_ids(&self) -> &[String] {
        &self.location_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn get(&self, feature: usize, location: usize, sample: usize) -> f64 {
        let (n, t) = (self.n_locations(), self.t_samples());
        self.values[(feature * n + location) * t + sample]
    }

    /// All readings of one feature.
    pub fn feature(&self, feature: usize) -> &[f64] {
        let len = self.n_locations() * self.t_samples();
        &self.values[feature * len..(feature + 1) * len]
    }

    /// Reads either the long form `location,sample,feature,value` or the
    /// wide form `location,sample,<feature>,<feature>,...`. Identifiers are
    /// kept verbatim in order of first appearance; every (location, sample,
    /// feature) combination must be present exactly once.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = reader.headers().map_err(csv_error)?.clone();
        if header.len() < 3 || &header[0] != "location" || &header[1] != "sample" {
            return Err(Error::parse(
                Some(1),
                None,
                "header must start with `location,sample`",
            ));
        }
        let long = header.len() == 4 && &header[2] == "feature" && &header[3] == "value";
        let mut features = Index::default();
        if !long {
            for name in header.iter().skip(2) {
                features.id(name);
            }
        }
        let (mut locations, mut samples) = (Index::default(), Index::default());
        let mut cells: HashMap<(usize, usize, usize), f64> = HashMap::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record.map_err(csv_error)?;
            let parse = |j: usize| -> Result<f64> {
                record[j]
                    .parse::<f64>()
                    .map_err(|e| Error::parse(Some(line), Some(&header[j]), e.to_string()))
            };
            let l = locations.id(&record[0]);
            let s = samples.id(&record[1]);
            let mut put = |f: usize, v: f64| -> Result<()> {
                if cells.insert((f, l, s), v).is_some() {
                    return Err(Error::parse(Some(line), None, "duplicate reading"));
                }
                Ok(())
            };
            if long {
                let f = features.id(&record[2]);
                put(f, parse(3)?)?;
            } else {
                for j in 2..header.len() {
                    put(j - 2, parse(j)?)?;
                }
            }
        }
        let (k, n, t) = (features.len(), locations.len(), samples.len());
        let mut values = Vec::with_capacity(k * n * t);
        for f in 0..k {
            for l in 0..n {
                for s in 0..t {
                    let v = cells.get(&(f, l, s)).ok_or_else(|| {
                        Error::InsufficientData(format!(
                            "missing reading for feature `{}` at location {} sample {}",
                            features.names[f], locations.names[l], samples.names[s]
                        ))
                    })?;
                    values.push(*v);
                }
            }
        }
        RawReadings::new(features.names, locations.names, samples.names, values)
    }

    /// Writes the long CSV form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["location", "sample", "feature", "value"])
            .map_err(csv_error)?;
        for (l, loc) in self.location_ids.iter().enumerate() {
            for (s, sample) in self.sample_ids.iter().enumerate() {
                for (f, name) in self.feature_names.iter().enumerate() {
                    let v = self.get(f, l, s).to_string();
                    w.write_record([loc.as_str(), sample.as_str(), name.as_str(), v.as_str()])
                        .map_err(csv_error)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Default)]
struct Index {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl Index {
    fn id(&mut self, name: &str) -> usize {
        if let Some(&i) = self.lookup.get(name) {
            return i;
        }
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }

    fn len(&self) -> usize {
        self.names.len()
    }
}

/// Equal-width bin of `v` within `[min, max]`. Values on an interior edge go
/// to the upper bin; `max` goes to the top bin; a degenerate range maps
/// everything to bin 0.
pub fn bin_index(v: f64, min: f64, max: f64, bins: u32) -> u32 {
    if max <= min {
        return 0;
    }
    let scaled = ((v - min) * bins as f64 / (max - min)).floor();
    scaled.clamp(0.0, (bins - 1) as f64) as u32
}

/// Bins every value of a slice using the slice's own min and max.
pub fn discretize_values(values: &[f64], bins: u32) -> Result<Vec<u32>> {
    if bins == 0 {
        return Err(Error::InvalidRegion("at least one bin is required".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reading".into()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(values.iter().map(|&v| bin_index(v, min, max, bins)).collect())
}

/// Equal-width discretization of every feature with that feature's global
/// min and max.
pub fn discretize(raw: &RawReadings, bins: &[u32]) -> Result<ObservationMatrix> {
    if bins.len() != raw.k_features() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} bin counts", raw.k_features()),
            found: format!("{} bin counts", bins.len()),
        });
    }
    let mut values = Vec::with_capacity(raw.values.len());
    for (f, &b) in bins.iter().enumerate() {
        values.extend(discretize_values(raw.feature(f), b)?);
    }
    ObservationMatrix::new(
        raw.n_locations(),
        raw.k_features(),
        raw.t_samples(),
        bins.to_vec(),
        values,
    )
}

/// The per-type bound `⌊n/10⌋` for each of `k` types.
pub fn tenth_bounds(n: usize, k: usize) -> Vec<usize> {
    vec![n / 10; k]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    #[serde(rename = "B")]
    pub b: Vec<usize>,
    pub bins: Vec<u32>,
    pub rng_seed: u64,
    /// Indices into the raw readings; empty before sampling.
    #[serde(default)]
    pub selected_locations: Vec<usize>,
    #[serde(default)]
    pub selected_samples: Vec<usize>,
    /// Original identifiers of the selected locations.
    #[serde(default)]
    pub location_ids: Vec<String>,
}

impl InstanceSpec {
    /// A spec to be filled in by [`sample_instance`].
    pub fn new(n: usize, t: usize, b: Vec<usize>, bins: Vec<u32>, rng_seed: u64) -> Self {
        InstanceSpec {
            n,
            t,
            k: b.len(),
            b,
            bins,
            rng_seed,
            selected_locations: Vec::new(),
            selected_samples: Vec::new(),
            location_ids: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.b.len() != self.k || self.bins.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bounds and bin counts", self.k),
                found: format!("{} bounds, {} bin counts", self.b.len(), self.bins.len()),
            });
        }
        Ok(())
    }
}

/// A sampled instance: the entropy oracle's data and the bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub spec: InstanceSpec,
    pub observations: ObservationMatrix,
}

impl Instance {
    pub fn region(&self) -> FeasibleRegion {
        FeasibleRegion::per_type(self.spec.b.clone())
    }

    pub fn oracle(&self, base: LogBase) -> Result<EntropyOracle> {
        EntropyOracle::with_base(self.observations.clone(), base)
    }
}

/// Discretizes the whole data set, then keeps `spec.n` locations and
/// `spec.t` samples drawn uniformly without replacement (sorted). If the
/// spec already lists its selections they are reused instead.
pub fn sample_instance(raw: &RawReadings, spec: &InstanceSpec) -> Result<Instance> {
    spec.validate()?;
    if spec.k != raw.k_features() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} features", spec.k),
            found: format!("{} features in the readings", raw.k_features()),
        });
    }
    if spec.n > raw.n_locations() || spec.t > raw.t_samples() {
        return Err(Error::InsufficientData(format!(
            "asked for {} locations x {} samples, data has {} x {}",
            spec.n,
            spec.t,
            raw.n_locations(),
            raw.t_samples()
        )));
    }
    let full = discretize(raw, &spec.bins)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut pick = |given: &[usize], len: usize, amount: usize| -> Vec<usize> {
        if given.is_empty() {
            let mut v = sample(&mut rng, len, amount).into_vec();
            v.sort_unstable();
            v
        } else {
            given.to_vec()
        }
    };
    let locations = pick(&spec.selected_locations, raw.n_locations(), spec.n);
    let samples = pick(&spec.selected_samples, raw.t_samples(), spec.t);
    if locations.len() != spec.n || samples.len() != spec.t {
        return Err(Error::DimensionMismatch {
            expected: format!("{} locations and {} samples", spec.n, spec.t),
            found: format!("{} and {}", locations.len(), samples.len()),
        });
    }
    let observations = full.select(&locations, &samples)?;
    let mut spec = spec.clone();
    spec.location_ids = locations.iter().map(|&l| raw.location_ids[l].clone()).collect();
    spec.selected_locations = locations;
    spec.selected_samples = samples;
    let region = FeasibleRegion::per_type(spec.b.clone());
    region.validate(crate::kset::GroundSet::new(spec.n, spec.k)?)?;
    Ok(Instance { spec, observations })
}

#[derive(Serialize, Deserialize)]
struct ObservationsJson {
    /// `[features, locations, samples]`.
    dims: [usize; 3],
    bins: Vec<u32>,
    values: Vec<u32>,
}

#[derive(Serialize)]
struct InstanceFileOut<'a> {
    spec: &'a InstanceSpec,
    observations: ObservationsJson,
}

const SECTIONS: [&str; 2] = ["spec", "observations"];

/// The canonical JSON text of an instance.
pub fn instance_to_json(inst: &Instance) -> Result<String> {
    let obs = &inst.observations;
    let file = InstanceFileOut {
        spec: &inst.spec,
        observations: ObservationsJson {
            dims: [obs.k_features(), obs.n_locations(), obs.t_samples()],
            bins: obs.bins().to_vec(),
            values: obs.values().to_vec(),
        },
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::parse(None, None, e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn instance_from_json(text: &str) -> Result<Instance> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| {
        let missing = SECTIONS.iter().find(|s| !text.contains(&format!("\"{s}\"")));
        let msg = match (e.is_eof(), missing) {
            (true, Some(s)) => format!("file ends early: missing section `{s}`"),
            (true, None) => {
                let last = SECTIONS
                    .iter()
                    .max_by_key(|s| text.rfind(&format!("\"{s}\"")))
                    .expect("non-empty");
                format!("file ends early inside section `{last}`")
            }
            _ => e.to_string(),
        };
        Error::parse(Some(e.line()), None, msg)
    })?;
    let section = |name: &str| {
        doc.get(name)
            .cloned()
            .ok_or_else(|| Error::parse(None, Some(name), format!("missing section `{name}`")))
    };
    let spec: InstanceSpec = serde_json::from_value(section("spec")?)
        .map_err(|e| Error::parse(None, Some("spec"), e.to_string()))?;
    let obs: ObservationsJson = serde_json::from_value(section("observations")?)
        .map_err(|e| Error::parse(None, Some("observations"), e.to_string()))?;
    let [k, n, t] = obs.dims;
    let observations = ObservationMatrix::new(n, k, t, obs.bins, obs.values)?;
    if (n, k) != (spec.n, spec.k) {
        return Err(Error::DimensionMismatch {
            expected: format!("n = {}, k = {}", spec.n, spec.k),
            found: format!("observations with n = {n}, k = {k}"),
        });
    }
    Ok(Instance { spec, observations })
}

pub fn save_instance(path: impl AsRef<Path>, inst: &Instance) -> Result<()> {
    std::fs::write(path, instance_to_json(inst)?)?;
    Ok(())
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

/// Parameters of the synthetic sensor data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub locations: usize,
    pub samples: usize,
    pub features: usize,
    /// Mixture components per location.
    pub components: usize,
    /// Probability that a location follows the shared regime of a sample.
    pub follow: f64,
    /// Standard deviation of the per-reading noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            locations: 54,
            samples: 200,
            features: 2,
            components: 3,
            follow: 0.95,
            noise: 0.3,
            seed: 0,
        }
    }
}

const FEATURE_NAMES: [&str; 3] = ["light", "temperature", "humidity"];

/// Equal-width bin counts used for light, temperature and humidity.
pub const DEFAULT_BINS: [u32; 3] = [2, 3, 2];

/// Seeded synthetic readings. Every sample belongs to a regime shared by
/// all locations (think time of day); a location follows the regime with
/// probability `follow` and otherwise draws its own. Readings are the regime's
/// mean, plus a per-location offset that drifts along the location index,
/// plus Gaussian noise, so each location sees a Gaussian mixture.
pub fn synthetic_readings(cfg: &SyntheticConfig) -> Result<RawReadings> {
    if cfg.components == 0 {
        return Err(Error::InsufficientData("at least one mixture component".into()));
    }
    if !(0.0..=1.0).contains(&cfg.follow) || cfg.noise.is_nan() || cfg.noise < 0.0 {
        return Err(Error::InvalidRegion(format!(
            "follow probability {} and noise {} out of range",
            cfg.follow, cfg.noise
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (k, n, t, m) = (cfg.features, cfg.locations, cfg.samples, cfg.components);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..m).map(|_| 10.0 * unit.sample(&mut rng)).collect())
        .collect();
    let mut drift = vec![0.0; k];
    let offsets: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            drift
                .iter_mut()
                .map(|d| {
                    *d = 0.8 * *d + 2.0 * unit.sample(&mut rng);
                    *d
                })
                .collect()
        })
        .collect();
    let regimes: Vec<usize> = (0..t).map(|_| rng.random_range(0..m)).collect();
    let mut values = vec![0.0; k * n * t];
    for l in 0..n {
        for (s, &regime) in regimes.iter().enumerate() {
            let c = if rng.random_bool(cfg.follow) {
                regime
            } else {
                rng.random_range(0..m)
            };
            for f in 0..k {
                values[(f * n + l) * t + s] =
                    means[f][c] + offsets[l][f] + cfg.noise * unit.sample(&mut rng);
            }
        }
    }
    let names = (0..k)
        .map(|f| FEATURE_NAMES.get(f).map_or(format!("f{}", f + 1), |s| s.to_string()))
        .collect();
    RawReadings::new(
        names,
        (1..=n).map(|i| i.to_string()).collect(),
        (1..=t).map(|i| i.to_string()).collect(),
        values,
    )
}

/// Bin counts for `k` features: [`DEFAULT_BINS`], then 2 for any further
/// feature.
pub fn default_bins(k: usize) -> Vec<u32> {
    (0..k).map(|f| DEFAULT_BINS.get(f).copied().unwrap_or(2)).collect()
}

/// Synthetic readings over 54 locations and at least 200 samples, sampled
/// into an instance with `B_q = ⌊n/10⌋` and [`default_bins`].
pub fn synthetic_instance(n: usize, t: usize, k: usize, seed: u64) -> Result<Instance> {
    let raw = synthetic_readings(&SyntheticConfig {
        locations: n.max(54),
        samples: t.max(200),
        features: k,
        seed,
        ..SyntheticConfig::default()
    })?;
    let spec = InstanceSpec::new(n, t, tenth_bounds(n, k), default_bins(k), seed);
    sample_instance(&raw, &spec)
}
